#include "glf/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "glf/errors.hpp"
#include "glf/kernels.hpp"

namespace glf {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void transpose_raw(std::size_t m, std::size_t n, const double* src, double* dst) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    if (shape.empty()) os << "scalar";
    return os.str();
}

void check_finite(const Tensor& t, const char* op_name) {
    for (double v : t.data())
        if (!std::isfinite(v))
            throw NumericError(std::string(op_name) + ": non-finite value in result");
}

// ---- Tensor ----

Tensor::Node& Tensor::node() {
    if (!node_) throw Error("use of undefined tensor");
    return *node_;
}
const Tensor::Node& Tensor::node() const {
    if (!node_) throw Error("use of undefined tensor");
    return *node_;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    auto n = std::make_shared<Node>();
    n->data.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    auto n = std::make_shared<Node>();
    n->data.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("from: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    auto n = std::make_shared<Node>();
    n->data.resize(shape_numel(shape));
    for (double& v : n->data) v = rng.normal(0.0, stddev);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
}

const std::vector<std::size_t>& Tensor::shape() const { return node().shape; }
std::size_t Tensor::ndim() const { return node().shape.size(); }
std::size_t Tensor::dim(std::size_t i) const { return node().shape.at(i); }
std::size_t Tensor::size() const { return node().data.size(); }

std::vector<double>& Tensor::data() { return node().data; }
const std::vector<double>& Tensor::data() const { return node().data; }

double& Tensor::at(std::size_t i) { return node().data[i]; }
double& Tensor::at(std::size_t i, std::size_t j) {
    return node().data[i * node().shape[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    const auto& s = node().shape;
    return node().data[(i * s[1] + j) * s[2] + k];
}
double Tensor::at(std::size_t i) const { return node().data[i]; }
double Tensor::at(std::size_t i, std::size_t j) const {
    return node().data[i * node().shape[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& s = node().shape;
    return node().data[(i * s[1] + j) * s[2] + k];
}

double Tensor::value() const {
    if (size() != 1) throw ShapeError("value(): tensor has " + std::to_string(size()) + " elements");
    return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

Tensor& Tensor::set_requires_grad(bool enable) {
    Node& n = node();
    n.requires_grad = enable;
    if (enable)
        n.grad.assign(n.data.size(), 0.0);
    else
        n.grad.clear();
    return *this;
}

std::vector<double>& Tensor::grad() {
    Node& n = node();
    if (!n.requires_grad) throw Error("grad(): tensor does not require grad");
    return n.grad;
}
const std::vector<double>& Tensor::grad() const {
    const Node& n = node();
    if (!n.requires_grad) throw Error("grad(): tensor does not require grad");
    return n.grad;
}

void Tensor::zero_grad() {
    Node& n = node();
    if (n.requires_grad) n.grad.assign(n.data.size(), 0.0);
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<Node>();
    n->shape = node().shape;
    n->data = node().data;
    return Tensor(std::move(n));
}

// ---- Tape ----

void Tape::record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw Error("backward: loss does not require grad (no parameters on the tape)");
    Tensor l = loss;
    l.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- op helpers ----

namespace {

bool track(const Tape* tape, std::initializer_list<const Tensor*> ins) {
    if (!tape) return false;
    for (const Tensor* t : ins)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

Tensor make_out(std::vector<std::size_t> shape, bool needs_grad) {
    Tensor out = Tensor::zeros(std::move(shape));
    if (needs_grad) out.set_requires_grad(true);
    return out;
}

}  // namespace

// ---- primitive ops ----

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool g = track(tape, {&a, &b});
    Tensor out = make_out({m, n}, g);
    kernels::ops().matmul_acc(m, k, n, a.data().data(), b.data().data(), out.data().data());
    check_finite(out, "matmul");
    if (g) {
        Tensor av = a, bv = b, ov = out;
        tape->record([av, bv, ov, m, k, n]() mutable {
            const auto& go = ov.grad();
            if (av.requires_grad()) {
                // dA += dC * B^T
                std::vector<double> bt(k * n);
                transpose_raw(k, n, bv.data().data(), bt.data());
                kernels::ops().matmul_acc(m, n, k, go.data(), bt.data(), av.grad().data());
            }
            if (bv.requires_grad()) {
                // dB += A^T * dC
                std::vector<double> at(m * k);
                transpose_raw(m, k, av.data().data(), at.data());
                kernels::ops().matmul_acc(k, m, n, at.data(), go.data(), bv.grad().data());
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a, Tape* tape) {
    if (a.ndim() != 2) throw ShapeError("transpose: need 2-d tensor, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool g = track(tape, {&a});
    Tensor out = make_out({n, m}, g);
    transpose_raw(m, n, a.data().data(), out.data().data());
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, m, n]() mutable {
            if (!av.requires_grad()) return;
            std::vector<double> tmp(m * n);
            transpose_raw(n, m, ov.grad().data(), tmp.data());
            kernels::ops().axpy(1.0, tmp.data(), av.grad().data(), m * n);
        });
    }
    return out;
}

namespace {

enum class Ew { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, Ew op, const char* name, Tape* tape) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = a.size();
    const bool g = track(tape, {&a, &b});
    Tensor out = make_out(a.shape(), g);
    const auto& k = kernels::ops();
    switch (op) {
        case Ew::Add: k.vadd(a.data().data(), b.data().data(), out.data().data(), n); break;
        case Ew::Sub: k.vsub(a.data().data(), b.data().data(), out.data().data(), n); break;
        case Ew::Mul: k.vmul(a.data().data(), b.data().data(), out.data().data(), n); break;
    }
    check_finite(out, name);
    if (g) {
        Tensor av = a, bv = b, ov = out;
        tape->record([av, bv, ov, op, n]() mutable {
            const auto& go = ov.grad();
            const auto& k = kernels::ops();
            switch (op) {
                case Ew::Add:
                    if (av.requires_grad()) k.axpy(1.0, go.data(), av.grad().data(), n);
                    if (bv.requires_grad()) k.axpy(1.0, go.data(), bv.grad().data(), n);
                    break;
                case Ew::Sub:
                    if (av.requires_grad()) k.axpy(1.0, go.data(), av.grad().data(), n);
                    if (bv.requires_grad()) k.axpy(-1.0, go.data(), bv.grad().data(), n);
                    break;
                case Ew::Mul:
                    if (av.requires_grad()) {
                        std::vector<double> tmp(n);
                        k.vmul(go.data(), bv.data().data(), tmp.data(), n);
                        k.axpy(1.0, tmp.data(), av.grad().data(), n);
                    }
                    if (bv.requires_grad()) {
                        std::vector<double> tmp(n);
                        k.vmul(go.data(), av.data().data(), tmp.data(), n);
                        k.axpy(1.0, tmp.data(), bv.grad().data(), n);
                    }
                    break;
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) { return elementwise(a, b, Ew::Add, "add", tape); }
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) { return elementwise(a, b, Ew::Sub, "sub", tape); }
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) { return elementwise(a, b, Ew::Mul, "mul", tape); }

Tensor scale(const Tensor& a, double s, Tape* tape) {
    const std::size_t n = a.size();
    const bool g = track(tape, {&a});
    Tensor out = make_out(a.shape(), g);
    out.data() = a.data();
    kernels::ops().scal(s, out.data().data(), n);
    check_finite(out, "scale");
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, s, n]() mutable {
            if (av.requires_grad()) kernels::ops().axpy(s, ov.grad().data(), av.grad().data(), n);
        });
    }
    return out;
}

Tensor sum(const Tensor& a, Tape* tape) {
    const std::size_t n = a.size();
    const bool g = track(tape, {&a});
    Tensor out = make_out({1}, g);
    out.at(0) = kernels::ops().reduce_sum(a.data().data(), n);
    check_finite(out, "sum");
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, n]() mutable {
            if (!av.requires_grad()) return;
            const double go = ov.grad()[0];
            auto& ga = av.grad();
            for (std::size_t i = 0; i < n; ++i) ga[i] += go;
        });
    }
    return out;
}

Tensor mean(const Tensor& a, Tape* tape) {
    Tensor s = sum(a, tape);
    return scale(s, 1.0 / static_cast<double>(a.size()), tape);
}

Tensor elu(const Tensor& a, Tape* tape) {
    const std::size_t n = a.size();
    const bool g = track(tape, {&a});
    Tensor out = make_out(a.shape(), g);
    const auto& x = a.data();
    auto& y = out.data();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : std::exp(x[i]) - 1.0;
    check_finite(out, "elu");
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, n]() mutable {
            if (!av.requires_grad()) return;
            const auto& x = av.data();
            const auto& y = ov.data();
            const auto& go = ov.grad();
            auto& ga = av.grad();
            // derivative: 1 for x >= 0 (incl. 0), exp(x) = y + 1 for x < 0
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * (x[i] >= 0.0 ? 1.0 : y[i] + 1.0);
        });
    }
    return out;
}

Tensor abs_val(const Tensor& a, Tape* tape) {
    const std::size_t n = a.size();
    const bool g = track(tape, {&a});
    Tensor out = make_out(a.shape(), g);
    const auto& x = a.data();
    auto& y = out.data();
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fabs(x[i]);
    check_finite(out, "abs");
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, n]() mutable {
            if (!av.requires_grad()) return;
            const auto& x = av.data();
            const auto& go = ov.grad();
            auto& ga = av.grad();
            for (std::size_t i = 0; i < n; ++i)
                ga[i] += go[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& a, Tape* tape) {
    if (a.ndim() != 2) throw ShapeError("softmax_rows: need 2-d tensor, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool g = track(tape, {&a});
    Tensor out = make_out({m, n}, g);
    const auto& k = kernels::ops();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = a.data().data() + i * n;
        double* yr = out.data().data() + i * n;
        const double mx = k.reduce_max(xr, n);
        for (std::size_t j = 0; j < n; ++j) yr[j] = std::exp(xr[j] - mx);
        const double s = k.reduce_sum(yr, n);
        k.scal(1.0 / s, yr, n);
    }
    check_finite(out, "softmax_rows");
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, m, n]() mutable {
            if (!av.requires_grad()) return;
            const auto& k = kernels::ops();
            for (std::size_t i = 0; i < m; ++i) {
                const double* yr = ov.data().data() + i * n;
                const double* gr = ov.grad().data() + i * n;
                double* gx = av.grad().data() + i * n;
                const double dot = k.dot(gr, yr, n);
                for (std::size_t j = 0; j < n; ++j) gx[j] += yr[j] * (gr[j] - dot);
            }
        });
    }
    return out;
}

Tensor conv1d_causal(const Tensor& x, const Tensor& kernels_t, const Tensor& bias, Tape* tape) {
    if (x.ndim() != 2 || kernels_t.ndim() != 3)
        throw ShapeError("conv1d: need x C_in x L and kernels C_out x C_in x K, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernels_t.shape()));
    const std::size_t c_in = x.dim(0), len = x.dim(1);
    const std::size_t c_out = kernels_t.dim(0), kc_in = kernels_t.dim(1), kw = kernels_t.dim(2);
    if (kc_in != c_in)
        throw ShapeError("conv1d: channel mismatch, x has " + std::to_string(c_in) +
                         " channels, kernels expect " + std::to_string(kc_in));
    if (len == 0 || kw == 0)
        throw ShapeError("conv1d: empty sequence or kernel");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c_out))
        throw ShapeError("conv1d: bias must have shape " + std::to_string(c_out));

    const bool g = track(tape, {&x, &kernels_t, &bias});
    Tensor out = make_out({c_out, len}, g);
    const auto& k = kernels::ops();
    // out[co][t] += w[co][ci][kk] * x[ci][t + d] with d = kk - (K-1) <= 0
    for (std::size_t co = 0; co < c_out; ++co) {
        double* orow = out.data().data() + co * len;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* xrow = x.data().data() + ci * len;
            const double* wrow = kernels_t.data().data() + (co * c_in + ci) * kw;
            for (std::size_t kk = 0; kk < kw; ++kk) {
                const std::size_t shift = (kw - 1) - kk;  // = -d
                if (shift >= len) continue;
                k.axpy(wrow[kk], xrow, orow + shift, len - shift);
            }
        }
        if (bias.defined()) {
            const double b = bias.at(co);
            for (std::size_t t = 0; t < len; ++t) orow[t] += b;
        }
    }
    check_finite(out, "conv1d");
    if (g) {
        Tensor xv = x, wv = kernels_t, bv = bias, ov = out;
        tape->record([xv, wv, bv, ov, c_in, c_out, len, kw]() mutable {
            const auto& k = kernels::ops();
            const auto& go = ov.grad();
            for (std::size_t co = 0; co < c_out; ++co) {
                const double* grow = go.data() + co * len;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* xrow = xv.data().data() + ci * len;
                    const double* wrow = wv.data().data() + (co * c_in + ci) * kw;
                    for (std::size_t kk = 0; kk < kw; ++kk) {
                        const std::size_t shift = (kw - 1) - kk;
                        if (shift >= len) continue;
                        const std::size_t span = len - shift;
                        if (xv.requires_grad())
                            k.axpy(wrow[kk], grow + shift, xv.grad().data() + ci * len, span);
                        if (wv.requires_grad())
                            wv.grad()[(co * c_in + ci) * kw + kk] += k.dot(grow + shift, xrow, span);
                    }
                }
                if (bv.defined() && bv.requires_grad())
                    bv.grad()[co] += k.reduce_sum(grow, len);
            }
        });
    }
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
    if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(0))
        throw ShapeError("add_row_bias: x " + shape_str(x.shape()) + " vs bias " +
                         shape_str(bias.shape()));
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    const bool g = track(tape, {&x, &bias});
    Tensor out = make_out(x.shape(), g);
    for (std::size_t r = 0; r < rows; ++r) {
        const double b = bias.at(r);
        const double* xr = x.data().data() + r * cols;
        double* yr = out.data().data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] + b;
    }
    check_finite(out, "add_row_bias");
    if (g) {
        Tensor xv = x, bv = bias, ov = out;
        tape->record([xv, bv, ov, rows, cols]() mutable {
            const auto& k = kernels::ops();
            const auto& go = ov.grad();
            if (xv.requires_grad()) k.axpy(1.0, go.data(), xv.grad().data(), rows * cols);
            if (bv.requires_grad())
                for (std::size_t r = 0; r < rows; ++r)
                    bv.grad()[r] += k.reduce_sum(go.data() + r * cols, cols);
        });
    }
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("concat_rows: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t ra = a.dim(0), rb = b.dim(0), cols = a.dim(1);
    const bool g = track(tape, {&a, &b});
    Tensor out = make_out({ra + rb, cols}, g);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + ra * cols);
    if (g) {
        Tensor av = a, bv = b, ov = out;
        tape->record([av, bv, ov, ra, rb, cols]() mutable {
            const auto& k = kernels::ops();
            const auto& go = ov.grad();
            if (av.requires_grad()) k.axpy(1.0, go.data(), av.grad().data(), ra * cols);
            if (bv.requires_grad()) k.axpy(1.0, go.data() + ra * cols, bv.grad().data(), rb * cols);
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape, Tape* tape) {
    std::size_t n = 1;
    for (std::size_t d : new_shape) n *= d;
    if (n != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape) +
                         " changes element count");
    const bool g = track(tape, {&a});
    Tensor out = make_out(std::move(new_shape), g);
    out.data() = a.data();
    if (g) {
        Tensor av = a, ov = out;
        tape->record([av, ov, n]() mutable {
            if (av.requires_grad()) kernels::ops().axpy(1.0, ov.grad().data(), av.grad().data(), n);
        });
    }
    return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const std::size_t n = pred.size();
    const bool g = track(tape, {&pred});
    Tensor out = make_out({1}, g);
    std::vector<double> diff(n);
    kernels::ops().vsub(pred.data().data(), target.data().data(), diff.data(), n);
    out.at(0) = kernels::ops().sq_norm(diff.data(), n) / static_cast<double>(n);
    check_finite(out, "mse_loss");
    if (g) {
        Tensor pv = pred, tv = target, ov = out;
        tape->record([pv, tv, ov, n]() mutable {
            if (!pv.requires_grad()) return;
            const double c = 2.0 * ov.grad()[0] / static_cast<double>(n);
            std::vector<double> diff(n);
            kernels::ops().vsub(pv.data().data(), tv.data().data(), diff.data(), n);
            kernels::ops().axpy(c, diff.data(), pv.grad().data(), n);
        });
    }
    return out;
}

double check_gradient(const std::function<Tensor(const Tensor&, Tape&)>& f,
                      const Tensor& x, double h) {
    Tensor xp = x.clone();
    xp.set_requires_grad(true);
    Tape tape;
    Tensor y = f(xp, tape);
    if (y.size() != 1) throw ShapeError("check_gradient: f must be scalar-valued");
    tape.backward(y);
    const std::vector<double> analytic = xp.grad();

    auto eval = [&](const Tensor& at) {
        Tape t;
        return f(at, t).value();
    };

    Tensor xw = x.clone();
    double max_rel = 0.0;
    for (std::size_t i = 0; i < xw.size(); ++i) {
        const double orig = xw.data()[i];
        xw.data()[i] = orig + h;
        const double fp = eval(xw);
        xw.data()[i] = orig - h;
        const double fm = eval(xw);
        xw.data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

}  // namespace glf
