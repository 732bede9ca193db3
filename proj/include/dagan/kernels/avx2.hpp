#pragma once

// AVX2+FMA kernel variants. Declarations are always visible; definitions are
// compiled only on x86-64 (src/kernels/avx2.cpp, built with -mavx2 -mfma) and
// must not be called unless kern::avx2::available() is true.

#include <cstddef>

namespace dagan::kern::avx2 {

bool compiled_in();

void add(const float* a, const float* b, float* y, std::size_t n);
void sub(const float* a, const float* b, float* y, std::size_t n);
void mul(const float* a, const float* b, float* y, std::size_t n);
void relu(const float* x, float* y, std::size_t n);
void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n);
void fmacc(const float* a, const float* b, float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void scale(float alpha, const float* x, float* y, std::size_t n);
float sum(const float* x, std::size_t n);
void adam(float* p, const float* g, float* m, float* v, std::size_t n,
          double lr, double b1, double b2, double eps, double bc1, double bc2);
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          const float* B, float beta, float* C);

}  // namespace dagan::kern::avx2
