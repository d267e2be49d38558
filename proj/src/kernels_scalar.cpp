// Scalar reference kernels. These define the semantics; vector variants are
// checked against them.

#include "glf/kernels.hpp"

namespace glf::kernels {
namespace {

double k_dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double k_reduce_sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double k_reduce_max(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

double k_sq_norm(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void k_axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void k_scal(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void k_vadd(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void k_vsub(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

void k_vmul(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

// ikj order: the inner loop is an axpy over a row of b, unit stride.
void k_matmul_acc(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            const double* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

}  // namespace

const Ops scalar_ops = {
    k_dot, k_reduce_sum, k_reduce_max, k_sq_norm,
    k_axpy, k_scal, k_vadd, k_vsub, k_vmul, k_matmul_acc,
};

}  // namespace glf::kernels
