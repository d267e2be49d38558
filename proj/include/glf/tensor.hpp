#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "glf/rng.hpp"

namespace glf {

/// Dense row-major tensor of 64-bit floats with an optional gradient slot.
///
/// A Tensor is a cheap handle onto shared storage: copying it aliases the
/// same data, which is what lets tape closures hold onto operands. Shapes are
/// explicit everywhere; there is no broadcasting beyond scalar-tensor ops.
/// Every operation checks its output for NaN/Inf and throws NumericError on
/// violation, so finite inputs plus finite parameters always yield finite
/// values or a hard error.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0);

    bool defined() const { return static_cast<bool>(node_); }

    const std::vector<std::size_t>& shape() const;
    std::size_t ndim() const;
    std::size_t dim(std::size_t i) const;
    std::size_t size() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;

    double& at(std::size_t i);
    double& at(std::size_t i, std::size_t j);
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    /// Value of a one-element tensor.
    double value() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool enable);
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Deep copy (fresh storage, gradient slot not copied).
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        bool requires_grad = false;
        std::vector<double> grad;
    };

    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    Node& node();
    const Node& node() const;

    std::shared_ptr<Node> node_;
};

/// Ordered record of the primitive ops of one forward pass.
///
/// backward() visits the recorded ops in exact reverse order and accumulates
/// into the grad slots of every requires_grad tensor reachable from the loss.
/// Gradients accumulate across calls; the caller zeroes them between steps.
/// A tape is single-threaded; independent tapes may live on distinct threads.
class Tape {
public:
    void record(std::function<void()> backward_fn);
    void backward(const Tensor& loss);
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

// ---- primitive operations ----
// Passing tape == nullptr runs the op value-only (inference).

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor transpose(const Tensor& a, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double s, Tape* tape = nullptr);
Tensor sum(const Tensor& a, Tape* tape = nullptr);
Tensor mean(const Tensor& a, Tape* tape = nullptr);
Tensor elu(const Tensor& a, Tape* tape = nullptr);
Tensor abs_val(const Tensor& a, Tape* tape = nullptr);

/// Row-wise softmax with row-max subtraction; each output row sums to 1.
Tensor softmax_rows(const Tensor& a, Tape* tape = nullptr);

/// Causal temporal convolution. x is C_in x L, kernels C_out x C_in x K;
/// K-1 zeros are placed before the sequence so output at t depends only on
/// inputs at times <= t. Output length stays L. bias (C_out) is optional:
/// pass an undefined Tensor to omit it.
Tensor conv1d_causal(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                     Tape* tape = nullptr);

/// Adds bias[c] to every element of row c (x is C x L).
Tensor add_row_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);

/// Stacks b below a along dim 0; trailing dims must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

/// Copying reshape to the same element count.
Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape, Tape* tape = nullptr);

/// Mean squared error against a constant target (no gradient into target).
Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape = nullptr);

/// Max over coordinates of |analytic - central difference| / max(1, |central|)
/// for a scalar-valued taped function f at x. The analytic side comes from
/// the tape; the numeric side from two-sided differences with step h.
double check_gradient(const std::function<Tensor(const Tensor&, Tape&)>& f,
                      const Tensor& x, double h = 1e-5);

/// Throws NumericError if any entry of t is NaN or Inf.
void check_finite(const Tensor& t, const char* op_name);

/// "m x n" rendering for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace glf
