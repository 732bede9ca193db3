#include "dagan/kernels/api.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "dagan/kernels/avx2.hpp"
#include "dagan/kernels/scalar.hpp"

namespace dagan::kern {

namespace {

bool avx2_usable() {
#if defined(__x86_64__) || defined(_M_X64)
    return avx2::compiled_in() && __builtin_cpu_supports("avx2") &&
           __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_backend() {
    if (const char* env = std::getenv("DAGAN_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!avx2_usable())
                throw std::runtime_error("DAGAN_KERNELS=avx2 but AVX2+FMA is unavailable");
            return Backend::avx2;
        }
        throw std::runtime_error(std::string("unknown DAGAN_KERNELS value: ") + env);
    }
    return avx2_usable() ? Backend::avx2 : Backend::scalar;
}

// Resolved once; set_backend (tests) may override later.
Backend g_backend = pick_backend();

}  // namespace

Backend active_backend() { return g_backend; }

const char* backend_name() {
    return g_backend == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_usable())
        throw std::runtime_error("set_backend: AVX2+FMA is unavailable on this host");
    g_backend = b;
}

void add_f32(const float* a, const float* b, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::add(a, b, y, n);
    else scalar::add(a, b, y, n);
}

void sub_f32(const float* a, const float* b, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::sub(a, b, y, n);
    else scalar::sub(a, b, y, n);
}

void mul_f32(const float* a, const float* b, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::mul(a, b, y, n);
    else scalar::mul(a, b, y, n);
}

void relu_f32(const float* x, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::relu(x, y, n);
    else scalar::relu(x, y, n);
}

void relu_bwd_f32(const float* x, const float* gy, float* gx, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::relu_bwd(x, gy, gx, n);
    else scalar::relu_bwd(x, gy, gx, n);
}

void fmacc_f32(const float* a, const float* b, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::fmacc(a, b, y, n);
    else scalar::fmacc(a, b, y, n);
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::axpy(alpha, x, y, n);
    else scalar::axpy(alpha, x, y, n);
}

void scale_f32(float alpha, const float* x, float* y, std::size_t n) {
    if (g_backend == Backend::avx2) avx2::scale(alpha, x, y, n);
    else scalar::scale(alpha, x, y, n);
}

float sum_f32(const float* x, std::size_t n) {
    if (g_backend == Backend::avx2) return avx2::sum(x, n);
    return scalar::sum(x, n);
}

void adam_f32(float* p, const float* g, float* m, float* v, std::size_t n,
              double lr, double b1, double b2, double eps, double bc1, double bc2) {
    if (g_backend == Backend::avx2) avx2::adam(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
    else scalar::adam(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}

void gemm_f32(bool ta, bool tb, int m, int n, int k, float alpha,
              const float* A, const float* B, float beta, float* C) {
    if (g_backend == Backend::avx2) avx2::gemm(ta, tb, m, n, k, alpha, A, B, beta, C);
    else scalar::gemm(ta, tb, m, n, k, alpha, A, B, beta, C);
}

}  // namespace dagan::kern
