#pragma once

// Scalar reference kernels. These define the semantics every SIMD variant is
// tested against, and they are the only implementation used for the
// double-precision gradient-check path.

#include <cmath>
#include <cstddef>

namespace dagan::kern::scalar {

template <typename T>
inline void add(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
inline void sub(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
inline void mul(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
inline void relu(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
inline void relu_bwd(const T* x, const T* gy, T* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

template <typename T>
inline void fmacc(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline void scale(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
inline T sum(const T* x, std::size_t n) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

// Hyperparameters and per-element arithmetic are double regardless of the
// storage type T: with f32 state the only loss per step is the final rounding
// of p/m/v, which keeps a multi-step trajectory within ~1e-7 of an
// exact-arithmetic oracle. The AVX2 variant widens to f64 lanes with the same
// operation order, so the two stay bit-identical.
template <typename T>
inline void adam(T* p, const T* g, T* m, T* v, std::size_t n, double lr,
                 double b1, double b2, double eps, double bc1, double bc2) {
    const double ob1 = 1.0 - b1, ob2 = 1.0 - b2;
    for (std::size_t i = 0; i < n; ++i) {
        const double gd = (double)g[i];
        const double mn = b1 * (double)m[i] + ob1 * gd;
        const double vn = b2 * (double)v[i] + ob2 * (gd * gd);
        m[i] = (T)mn;
        v[i] = (T)vn;
        const double mhat = mn / bc1;
        const double vhat = vn / bc2;
        p[i] = (T)((double)p[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

// Canonical triple loop. Accumulation over k is in increasing order per
// output element; SIMD variants keep the same k order but may fuse
// multiply-add, hence the tolerance-based equivalence class.
template <typename T>
inline void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* A,
                 const T* B, T beta, T* C) {
    auto a_at = [&](int i, int p) { return ta ? A[(std::size_t)p * m + i] : A[(std::size_t)i * k + p]; };
    auto b_at = [&](int p, int j) { return tb ? B[(std::size_t)j * k + p] : B[(std::size_t)p * n + j]; };
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += a_at(i, p) * b_at(p, j);
            T* c = &C[(std::size_t)i * n + j];
            *c = alpha * acc + (beta == T(0) ? T(0) : beta * *c);
        }
    }
}

}  // namespace dagan::kern::scalar
