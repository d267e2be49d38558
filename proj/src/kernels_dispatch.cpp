#include "glf/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "glf/errors.hpp"

namespace glf::kernels {
namespace {

Backend g_backend = Backend::Scalar;
const Ops* g_ops = &scalar_ops;
bool g_initialized = false;

bool cpu_has_avx2() {
#if defined(GLF_WITH_AVX2) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void set_backend(Backend b) {
    switch (b) {
        case Backend::Scalar:
            g_ops = &scalar_ops;
            break;
        case Backend::Avx2:
#ifdef GLF_WITH_AVX2
            g_ops = &avx2_ops;
            break;
#else
            throw ConfigError("avx2 kernels not compiled into this binary");
#endif
    }
    g_backend = b;
}

void init_once() {
    if (g_initialized) return;
    g_initialized = true;
    Backend pick = cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
    if (const char* env = std::getenv("GLF_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0)
            pick = Backend::Scalar;
        else if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2()) throw ConfigError("GLF_KERNELS=avx2 but avx2 is unavailable");
            pick = Backend::Avx2;
        } else {
            throw ConfigError(std::string("unknown GLF_KERNELS value: ") + env);
        }
    }
    set_backend(pick);
}

}  // namespace

const Ops& ops() {
    init_once();
    return *g_ops;
}

Backend active_backend() {
    init_once();
    return g_backend;
}

bool avx2_available() { return cpu_has_avx2(); }

std::string backend_name(Backend b) {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

void select(Backend b) {
    init_once();
    if (b == Backend::Avx2 && !cpu_has_avx2())
        throw ConfigError("avx2 kernels unavailable on this CPU/build");
    set_backend(b);
}

std::vector<Backend> available_backends() {
    std::vector<Backend> v{Backend::Scalar};
    if (cpu_has_avx2()) v.push_back(Backend::Avx2);
    return v;
}

}  // namespace glf::kernels
