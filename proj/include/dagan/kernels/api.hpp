#pragma once

// Dispatched float32 kernel entry points. Each kernel has a scalar reference
// implementation (kernels/scalar.hpp) and, on x86-64 with AVX2+FMA, a SIMD
// variant selected once at startup. The double-precision path used by the
// gradient checker always runs the scalar reference kernels.
//
// Equivalence contract between backends, checked in tests/test_kernels.cpp:
//   - elementwise kernels (add/sub/mul/relu/relu_bwd/fmacc/axpy/scale/adam):
//     bit-identical to scalar (SIMD variants avoid FMA contraction)
//   - reassociating kernels (gemm, sum): lane-parallel accumulation order
//     differs, so outputs agree with scalar within 1e-5 of the reduction
//     magnitude (sum of |addends|) per element

#include <cstddef>

namespace dagan::kern {

enum class Backend { scalar, avx2 };

/// Backend picked at startup: AVX2 when the CPU supports it, unless the
/// DAGAN_KERNELS environment variable ("scalar" | "avx2") overrides.
Backend active_backend();
const char* backend_name();

/// Force a backend (tests only). Throws if the backend is unavailable.
void set_backend(Backend b);

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

void add_f32(const float* a, const float* b, float* y, std::size_t n);
void sub_f32(const float* a, const float* b, float* y, std::size_t n);
void mul_f32(const float* a, const float* b, float* y, std::size_t n);
void relu_f32(const float* x, float* y, std::size_t n);
// gx[i] += gy[i] * (x[i] > 0)
void relu_bwd_f32(const float* x, const float* gy, float* gx, std::size_t n);
// y[i] += a[i] * b[i]
void fmacc_f32(const float* a, const float* b, float* y, std::size_t n);
// y[i] += alpha * x[i]
void axpy_f32(float alpha, const float* x, float* y, std::size_t n);
// y[i] = alpha * x[i]
void scale_f32(float alpha, const float* x, float* y, std::size_t n);

float sum_f32(const float* x, std::size_t n);

// Fused Adam update: m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g*g;
// p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)  with bc = bias corrections.
// Hyperparameters stay double all the way down: rounding b2=0.999 to float
// perturbs (1-b2) by 1e-5 relative, visibly skewing the first steps.
// Arithmetic is double-precision internally (f32 storage only loses the final
// rounding), and both backends share one rounding sequence bit-for-bit.
void adam_f32(float* p, const float* g, float* m, float* v, std::size_t n,
              double lr, double b1, double b2, double eps, double bc1, double bc2);

// ---------------------------------------------------------------------------
// GEMM, row-major: C[M,N] = alpha * op(A) * op(B) + beta * C
//   ta == false: A is [M,K];  ta == true: A is [K,M] and op(A) = A^T
//   tb == false: B is [K,N];  tb == true: B is [N,K] and op(B) = B^T
// ---------------------------------------------------------------------------

void gemm_f32(bool ta, bool tb, int m, int n, int k, float alpha,
              const float* A, const float* B, float beta, float* C);

}  // namespace dagan::kern
