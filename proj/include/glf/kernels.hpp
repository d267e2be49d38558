#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace glf::kernels {

enum class Backend { Scalar, Avx2 };

/// Table of the data-parallel inner loops everything above is built on.
/// One scalar reference implementation always exists; vectorized variants are
/// selected at runtime when the CPU supports them. All variants must agree
/// with the scalar reference to tight floating-point tolerance (see
/// tests/test_kernels.cpp); they need not be bit-identical to it because
/// accumulation order differs.
struct Ops {
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*reduce_sum)(const double* x, std::size_t n);
    double (*reduce_max)(const double* x, std::size_t n);
    double (*sq_norm)(const double* x, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // x *= a
    void (*scal)(double a, double* x, std::size_t n);
    void (*vadd)(const double* x, const double* y, double* z, std::size_t n);
    void (*vsub)(const double* x, const double* y, double* z, std::size_t n);
    void (*vmul)(const double* x, const double* y, double* z, std::size_t n);
    // c += a * b for row-major a (m x k), b (k x n), c (m x n)
    void (*matmul_acc)(std::size_t m, std::size_t k, std::size_t n,
                       const double* a, const double* b, double* c);
};

extern const Ops scalar_ops;
#ifdef GLF_WITH_AVX2
extern const Ops avx2_ops;
#endif

/// The active table. Chosen once on first use: AVX2+FMA when the CPU has it,
/// scalar otherwise; the GLF_KERNELS environment variable (scalar|avx2)
/// overrides. Selection is stable for the lifetime of the process, which is
/// what makes repeated runs bit-identical on one machine.
const Ops& ops();

Backend active_backend();
bool avx2_available();
std::string backend_name(Backend b);

/// Force a backend (tests). Throws glf::ConfigError if unavailable.
void select(Backend b);

/// Backends compiled into this binary and usable on this CPU.
std::vector<Backend> available_backends();

}  // namespace glf::kernels
