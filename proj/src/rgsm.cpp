#include "glf/rgsm.hpp"

#include <cmath>
#include <cstdio>

#include "glf/errors.hpp"
#include "glf/kernels.hpp"

namespace glf::rgsm {

std::string penalty_name(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::None: return "none";
        case PenaltyKind::Lasso: return "lasso";
        case PenaltyKind::GroupLasso: return "glasso";
    }
    return "?";
}

std::string mode_name(OptimMode m) { return m == OptimMode::Gd ? "gd" : "adam"; }

double gl_norm(const Tensor& w) {
    if (w.ndim() != 2) throw ShapeError("gl_norm: grouped weights must be 2-d");
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    double total = 0.0;
    for (std::size_t g = 0; g < cols; ++g) {
        double s = 0.0;
        for (std::size_t d = 0; d < rows; ++d) {
            const double v = w.at(d, g);
            s += v * v;
        }
        total += std::sqrt(s);
    }
    return total;
}

double gl_norm(const std::vector<Tensor>& grouped) {
    double total = 0.0;
    for (const Tensor& w : grouped) total += gl_norm(w);
    return total;
}

double l1_norm(const Tensor& w) {
    double total = 0.0;
    for (double v : w.data()) total += std::fabs(v);
    return total;
}

double penalty_value(const PenaltySpec& penalty, const std::vector<Tensor>& u) {
    if (penalty.lambda < 0.0) throw ConfigError("penalty strength must be nonnegative");
    switch (penalty.kind) {
        case PenaltyKind::None:
            return 0.0;
        case PenaltyKind::Lasso: {
            double s = 0.0;
            for (const Tensor& t : u) s += l1_norm(t);
            return penalty.lambda * s;
        }
        case PenaltyKind::GroupLasso:
            return penalty.lambda * gl_norm(u);
    }
    return 0.0;
}

std::vector<double> prox_gl(const std::vector<double>& w_g, double lambda) {
    if (lambda < 0.0) throw ConfigError("prox_gl: lambda must be nonnegative");
    double nrm = std::sqrt(kernels::ops().sq_norm(w_g.data(), w_g.size()));
    std::vector<double> out(w_g.size(), 0.0);
    if (nrm <= lambda || nrm == 0.0) return out;
    const double factor = (nrm - lambda) / nrm;
    for (std::size_t i = 0; i < w_g.size(); ++i) out[i] = w_g[i] * factor;
    return out;
}

std::vector<double> prox_lasso(const std::vector<double>& w, double lambda) {
    if (lambda < 0.0) throw ConfigError("prox_lasso: lambda must be nonnegative");
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double mag = std::fabs(w[i]) - lambda;
        out[i] = mag > 0.0 ? (w[i] > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

Tensor prox_apply(const Tensor& w, const PenaltySpec& penalty) {
    Tensor out = w.clone();
    switch (penalty.kind) {
        case PenaltyKind::None:
            break;
        case PenaltyKind::Lasso: {
            auto shrunk = prox_lasso(w.data(), penalty.lambda);
            out.data() = std::move(shrunk);
            break;
        }
        case PenaltyKind::GroupLasso: {
            if (w.ndim() != 2) throw ShapeError("prox_apply: grouped weights must be 2-d");
            const std::size_t rows = w.dim(0), cols = w.dim(1);
            for (std::size_t g = 0; g < cols; ++g) {
                double s = 0.0;
                for (std::size_t d = 0; d < rows; ++d) {
                    const double v = w.at(d, g);
                    s += v * v;
                }
                const double nrm = std::sqrt(s);
                const double factor =
                    (nrm <= penalty.lambda || nrm == 0.0) ? 0.0 : (nrm - penalty.lambda) / nrm;
                for (std::size_t d = 0; d < rows; ++d) out.at(d, g) = w.at(d, g) * factor;
            }
            break;
        }
    }
    return out;
}

double relaxed_loss(double f_val, const std::vector<Tensor>& w, const std::vector<Tensor>& u,
                    const PenaltySpec& penalty, double beta) {
    if (w.size() != u.size()) throw ShapeError("relaxed_loss: w and u tensor counts differ");
    double split = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i].shape() != u[i].shape())
            throw ShapeError("relaxed_loss: w/u shape mismatch at tensor " + std::to_string(i));
        const std::size_t n = w[i].size();
        std::vector<double> diff(n);
        kernels::ops().vsub(w[i].data().data(), u[i].data().data(), diff.data(), n);
        split += kernels::ops().sq_norm(diff.data(), n);
    }
    return f_val + penalty_value(penalty, u) + 0.5 * beta * split;
}

RgsmState RgsmState::make(std::vector<Tensor> theta, std::vector<Tensor> w,
                          PenaltySpec penalty, double beta, double eta, OptimMode mode) {
    if (penalty.lambda < 0.0) throw ConfigError("penalty strength must be nonnegative");
    if (eta <= 0.0) throw ConfigError("learning rate must be positive");
    if (beta < 0.0) throw ConfigError("relaxation strength must be nonnegative");
    RgsmState s;
    s.theta = std::move(theta);
    s.w = std::move(w);
    s.penalty = penalty;
    s.beta = beta;
    s.eta = eta;
    s.mode = mode;
    for (const Tensor& t : s.w) s.u.push_back(t.clone());
    for (Tensor& t : s.u) t.data().assign(t.size(), 0.0);
    const std::size_t count = s.theta.size() + s.w.size();
    s.adam_m.resize(count);
    s.adam_v.resize(count);
    return s;
}

namespace {

void require_grad_finite(const Tensor& t, const char* what) {
    if (!t.requires_grad()) throw Error(std::string(what) + ": tensor has no grad slot");
    for (double g : t.grad())
        if (!std::isfinite(g)) throw NumericError(std::string(what) + ": non-finite gradient");
}

// One tensor's share of the update. dir receives the effective descent
// direction (plain gradient or Adam-preconditioned gradient).
void fill_direction(RgsmState& s, std::size_t moment_idx, const Tensor& t,
                    std::vector<double>& dir) {
    const std::vector<double>& g = t.grad();
    const std::size_t n = g.size();
    dir.resize(n);
    if (s.mode == OptimMode::Gd) {
        std::copy(g.begin(), g.end(), dir.begin());
        return;
    }
    auto& m = s.adam_m[moment_idx];
    auto& v = s.adam_v[moment_idx];
    if (m.empty()) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
    const double b1 = s.adam_beta1, b2 = s.adam_beta2;
    const double t_next = static_cast<double>(s.step_count + 1);
    const double c1 = 1.0 - std::pow(b1, t_next);
    const double c2 = 1.0 - std::pow(b2, t_next);
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        dir[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + s.adam_eps);
    }
}

}  // namespace

void refresh_split(RgsmState& s) {
    for (std::size_t i = 0; i < s.w.size(); ++i) {
        Tensor fresh = prox_apply(s.w[i], s.penalty);
        s.u[i].data() = fresh.data();
    }
}

double rgsm_step(RgsmState& s) {
    // (i) refresh the split variable from the pre-step w, all groups first
    refresh_split(s);

    double step_norm_sq = 0.0;
    std::vector<double> dir, pull;

    // (ii) theta update: plain descent on f
    for (std::size_t i = 0; i < s.theta.size(); ++i) {
        Tensor& t = s.theta[i];
        require_grad_finite(t, "rgsm_step");
        fill_direction(s, i, t, dir);
        kernels::ops().axpy(-s.eta, dir.data(), t.data().data(), dir.size());
        step_norm_sq += s.eta * s.eta * kernels::ops().sq_norm(dir.data(), dir.size());
    }

    // (ii) w update: descent on f plus the relaxation pull toward u. The
    // gradient part is the identical axpy a plain step would issue, so with
    // lambda = 0 (u == w, pull == 0) the trajectory matches one exactly.
    for (std::size_t i = 0; i < s.w.size(); ++i) {
        Tensor& t = s.w[i];
        require_grad_finite(t, "rgsm_step");
        fill_direction(s, s.theta.size() + i, t, dir);
        const std::size_t n = dir.size();
        pull.resize(n);
        kernels::ops().vsub(t.data().data(), s.u[i].data().data(), pull.data(), n);
        kernels::ops().axpy(-s.eta, dir.data(), t.data().data(), n);
        kernels::ops().axpy(-s.eta * s.beta, pull.data(), t.data().data(), n);
        for (std::size_t j = 0; j < n; ++j) {
            const double mv = s.eta * dir[j] + s.eta * s.beta * pull[j];
            step_norm_sq += mv * mv;
        }
    }

    for (Tensor& t : s.theta) check_finite(t, "rgsm_step");
    for (Tensor& t : s.w) check_finite(t, "rgsm_step");
    ++s.step_count;
    return step_norm_sq;
}

DescentRecord DescentMonitor::observe(std::size_t step, double l_before, double l_after,
                                      double step_norm_sq, double eta, OptimMode mode) {
    DescentRecord r;
    r.step = step;
    r.l_before = l_before;
    r.l_after = l_after;
    r.step_norm_sq = step_norm_sq;
    r.eta = eta;
    r.mode = mode;
    const double coeff = 0.5 * l_ip_ + 0.5 * beta_ - 1.0 / eta;
    r.slack = (l_before + coeff * step_norm_sq) - l_after;

    if (mode == OptimMode::Gd) {
        const double tol = 1e-12 * std::max(1.0, std::fabs(l_before));
        if (have_prev_ && l_before > prev_l_before_ + tol) ++breaks_;
    }
    prev_l_before_ = l_before;
    have_prev_ = true;
    records_.push_back(r);
    return r;
}

void DescentMonitor::write_csv(std::ostream& os) const {
    os << "step,L_beta_before,L_beta_after,slack,step_norm_sq,eta,mode\n";
    char buf[256];
    for (const DescentRecord& r : records_) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", r.step,
                      r.l_before, r.l_after, r.slack, r.step_norm_sq, r.eta,
                      mode_name(r.mode).c_str());
        os << buf;
    }
}

double estimate_lipschitz(const std::function<void()>& grad_eval,
                          const std::vector<Tensor>& params, std::size_t samples,
                          double radius, Rng& rng) {
    if (samples < 2) throw ConfigError("estimate_lipschitz: need at least 2 samples");
    if (radius <= 0.0) throw ConfigError("estimate_lipschitz: radius must be positive");

    // tensors are shared-storage handles: copies alias the same data
    std::vector<Tensor> handles(params.begin(), params.end());
    std::vector<std::vector<double>> center;
    for (const Tensor& t : handles) center.push_back(t.data());

    auto set_point = [&](const std::vector<std::vector<double>>& vals) {
        for (std::size_t i = 0; i < handles.size(); ++i) handles[i].data() = vals[i];
    };
    auto sample_point = [&]() {
        std::vector<std::vector<double>> p = center;
        for (auto& block : p)
            for (double& v : block) v += rng.normal(0.0, radius);
        return p;
    };
    auto grads_at = [&](const std::vector<std::vector<double>>& point) {
        set_point(point);
        for (Tensor& t : handles) t.zero_grad();
        grad_eval();
        std::vector<std::vector<double>> g;
        for (const Tensor& t : handles) g.push_back(t.grad());
        return g;
    };

    double best = 0.0;
    for (std::size_t sidx = 0; sidx < samples; ++sidx) {
        auto p1 = sample_point();
        auto p2 = sample_point();
        auto g1 = grads_at(p1);
        auto g2 = grads_at(p2);
        double dg = 0.0, dp = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < p1[i].size(); ++j) {
                const double dgj = g1[i][j] - g2[i][j];
                const double dpj = p1[i][j] - p2[i][j];
                dg += dgj * dgj;
                dp += dpj * dpj;
            }
        if (dp > 0.0) best = std::max(best, std::sqrt(dg / dp));
    }

    set_point(center);
    for (Tensor& t : handles) t.zero_grad();
    return best;
}

double lr_schedule(std::size_t epoch, double eta0, double decay, std::size_t every) {
    if (every == 0) throw ConfigError("lr_schedule: decay interval must be positive");
    return eta0 * std::pow(decay, static_cast<double>(epoch / every));
}

}  // namespace glf::rgsm
