// AVX2/FMA kernels. Compiled with -mavx2 -mfma and only reachable through the
// dispatch table after a runtime cpuid check, so the rest of the binary stays
// baseline-ISA clean.

#include "glf/kernels.hpp"

#ifdef GLF_WITH_AVX2

#include <immintrin.h>

namespace glf::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

double k_dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double k_reduce_sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double k_reduce_max(const double* x, std::size_t n) {
    std::size_t i = 0;
    double m;
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        i = 4;
        for (; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        m = hmax(vm);
    } else {
        m = x[0];
        i = 1;
    }
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

double k_sq_norm(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

void k_axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void k_scal(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void k_vadd(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] + y[i];
}

void k_vsub(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] - y[i];
}

void k_vmul(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] * y[i];
}

// Same ikj structure as the scalar reference: for each (i,j) the k-loop
// accumulates in ascending order, so gathering a subset of a's rows yields
// bit-identical rows (the sparse attention path relies on this).
void k_matmul_acc(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const __m256d aik = _mm256_set1_pd(ai[kk]);
            const double* bk = b + kk * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256d c0 = _mm256_loadu_pd(ci + j);
                __m256d c1 = _mm256_loadu_pd(ci + j + 4);
                c0 = _mm256_fmadd_pd(aik, _mm256_loadu_pd(bk + j), c0);
                c1 = _mm256_fmadd_pd(aik, _mm256_loadu_pd(bk + j + 4), c1);
                _mm256_storeu_pd(ci + j, c0);
                _mm256_storeu_pd(ci + j + 4, c1);
            }
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(ci + j);
                c0 = _mm256_fmadd_pd(aik, _mm256_loadu_pd(bk + j), c0);
                _mm256_storeu_pd(ci + j, c0);
            }
            const double s = ai[kk];
            for (; j < n; ++j) ci[j] += s * bk[j];
        }
    }
}

}  // namespace

const Ops avx2_ops = {
    k_dot, k_reduce_sum, k_reduce_max, k_sq_norm,
    k_axpy, k_scal, k_vadd, k_vsub, k_vmul, k_matmul_acc,
};

}  // namespace glf::kernels

#endif  // GLF_WITH_AVX2
