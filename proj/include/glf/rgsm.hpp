#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "glf/tensor.hpp"

namespace glf::rgsm {

enum class PenaltyKind { None, Lasso, GroupLasso };

enum class OptimMode { Gd, Adam };

std::string penalty_name(PenaltyKind k);
std::string mode_name(OptimMode m);

struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::None;
    double lambda = 0.0;
};

/// Sum of column Euclidean norms of one grouped matrix (columns are groups).
double gl_norm(const Tensor& w);
double gl_norm(const std::vector<Tensor>& grouped);

double l1_norm(const Tensor& w);

/// lambda * ||u||_GL, lambda * ||u||_1, or 0 depending on kind.
double penalty_value(const PenaltySpec& penalty, const std::vector<Tensor>& u);

/// Group soft threshold: w_g * max(||w_g|| - lambda, 0)/||w_g||, the closed
/// form minimizer of lambda*||v|| + (1/2)||v - w_g||^2. Zero input maps to
/// zero (the 0/0 case is guarded).
std::vector<double> prox_gl(const std::vector<double>& w_g, double lambda);

/// Elementwise soft threshold sign(w)*max(|w| - lambda, 0).
std::vector<double> prox_lasso(const std::vector<double>& w, double lambda);

/// prox applied per column (GroupLasso), per element (Lasso), or identity.
Tensor prox_apply(const Tensor& w, const PenaltySpec& penalty);

/// L_beta = f + penalty(u) + (beta/2)*sum_i ||w_i - u_i||^2.
double relaxed_loss(double f_val, const std::vector<Tensor>& w,
                    const std::vector<Tensor>& u, const PenaltySpec& penalty,
                    double beta);

/// Optimizer state over live parameter tensors. theta and w alias the model's
/// tensors (shared storage); u is owned here. The iteration refreshes every
/// u_i from the current w_i first, then moves (theta, w), so the relaxation
/// pull beta*(w - u) always uses the pre-step w.
struct RgsmState {
    std::vector<Tensor> theta;
    std::vector<Tensor> w;
    std::vector<Tensor> u;
    PenaltySpec penalty;
    double beta = 0.9;
    double eta = 1e-4;
    OptimMode mode = OptimMode::Gd;
    std::size_t step_count = 0;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // first/second moments, theta tensors first then w tensors
    std::vector<std::vector<double>> adam_m, adam_v;

    static RgsmState make(std::vector<Tensor> theta, std::vector<Tensor> w,
                          PenaltySpec penalty, double beta, double eta, OptimMode mode);
};

/// u_i = prox(w_i) for every grouped tensor. Idempotent for fixed w; called
/// by rgsm_step, and callable beforehand by a caller that wants to evaluate
/// L_beta(v_t, u_t) prior to the move.
void refresh_split(RgsmState& s);

/// One iteration. Gradients of f are read from the tensors' grad slots (the
/// caller runs backward first and zeroes grads afterwards). In adam mode the
/// gradient term is replaced by the Adam-preconditioned direction; the
/// eta*beta*(w - u) relaxation term is applied unmodified. Returns
/// ||v_next - v||^2 over all of (theta, w) for the descent monitor. With
/// lambda = 0 and beta arbitrary the update is bit-identical to a plain
/// gradient (or Adam) step, since u == w makes the pull exactly zero.
double rgsm_step(RgsmState& s);

struct DescentRecord {
    std::size_t step = 0;
    double l_before = 0.0;      // L_beta(v_t, u_t)
    double l_after = 0.0;       // L_beta(v_{t+1}, u_t)
    double slack = 0.0;         // bound rhs minus lhs; nonnegative = inequality holds
    double step_norm_sq = 0.0;
    double eta = 0.0;
    OptimMode mode = OptimMode::Gd;
};

/// Accumulates per-step descent records. Each record's slack is the bound
/// rhs minus lhs of L_after <= L_before + (L_ip/2 + beta/2 - 1/eta) *
/// step_norm_sq. Monotone decrease of L_before across consecutive gd-mode
/// steps is tallied in monotonicity_breaks(); whether a break is a hard
/// failure depends on compliant(eta), which the caller checks (adam-mode
/// records are logged, never asserted).
class DescentMonitor {
public:
    DescentMonitor(double beta, double l_ip) : beta_(beta), l_ip_(l_ip) {}

    void set_lipschitz(double l_ip) { l_ip_ = l_ip; }
    double lipschitz() const { return l_ip_; }
    double eta_bound() const { return 2.0 / (beta_ + l_ip_); }
    bool compliant(double eta) const { return eta < eta_bound(); }

    DescentRecord observe(std::size_t step, double l_before, double l_after,
                          double step_norm_sq, double eta, OptimMode mode);

    std::size_t monotonicity_breaks() const { return breaks_; }
    const std::vector<DescentRecord>& records() const { return records_; }

    /// CSV schema: step,L_beta_before,L_beta_after,slack,step_norm_sq,eta,mode
    void write_csv(std::ostream& os) const;

private:
    double beta_;
    double l_ip_;
    std::size_t breaks_ = 0;
    bool have_prev_ = false;
    double prev_l_before_ = 0.0;
    std::vector<DescentRecord> records_;
};

/// Max over `samples` random point pairs inside a ball of the given radius
/// around the current parameter values of ||grad f(v1) - grad f(v2)|| /
/// ||v1 - v2||. grad_eval must recompute gradients (into the grad slots) for
/// the current tensor values. Parameter values and grads are restored on
/// return.
double estimate_lipschitz(const std::function<void()>& grad_eval,
                          const std::vector<Tensor>& params, std::size_t samples,
                          double radius, Rng& rng);

/// eta0 * decay^floor(epoch/every); defaults follow the training recipe
/// (1e-4, times 0.8 every 10 epochs).
double lr_schedule(std::size_t epoch, double eta0 = 1e-4, double decay = 0.8,
                   std::size_t every = 10);

}  // namespace glf::rgsm
