// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers must check availability via the dispatcher.
//
// Elementwise kernels deliberately use separate mul/add (no FMA contraction)
// so they are bit-identical to the scalar reference. GEMM and sum use FMA and
// lane-parallel accumulation and are held to a relative tolerance instead.

#include "dagan/kernels/avx2.hpp"

#include <cmath>
#include <cstdlib>

#if defined(__x86_64__) || defined(_M_X64)
#define DAGAN_AVX2_COMPILED 1
#include <immintrin.h>
#else
#define DAGAN_AVX2_COMPILED 0
#endif

namespace dagan::kern::avx2 {

bool compiled_in() { return DAGAN_AVX2_COMPILED != 0; }

#if DAGAN_AVX2_COMPILED

void add(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void relu(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(_mm256_loadu_ps(gy + i), mask);
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void fmacc(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 prod = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

static inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

float sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

// f32 storage, f64 lanes: widen 4 floats at a time and mirror the scalar
// reference's double-precision operation order exactly (no fma), so the two
// backends produce bit-identical state.
void adam(float* p, const float* g, float* m, float* v, std::size_t n,
          double lr, double b1, double b2, double eps, double bc1, double bc2) {
    const __m256d b1v = _mm256_set1_pd(b1), ob1 = _mm256_set1_pd(1.0 - b1);
    const __m256d b2v = _mm256_set1_pd(b2), ob2 = _mm256_set1_pd(1.0 - b2);
    const __m256d lrv = _mm256_set1_pd(lr), epsv = _mm256_set1_pd(eps);
    const __m256d bc1v = _mm256_set1_pd(bc1), bc2v = _mm256_set1_pd(bc2);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gd = _mm256_cvtps_pd(_mm_loadu_ps(g + i));
        __m256d md = _mm256_cvtps_pd(_mm_loadu_ps(m + i));
        __m256d vd = _mm256_cvtps_pd(_mm_loadu_ps(v + i));
        md = _mm256_add_pd(_mm256_mul_pd(b1v, md), _mm256_mul_pd(ob1, gd));
        vd = _mm256_add_pd(_mm256_mul_pd(b2v, vd), _mm256_mul_pd(ob2, _mm256_mul_pd(gd, gd)));
        _mm_storeu_ps(m + i, _mm256_cvtpd_ps(md));
        _mm_storeu_ps(v + i, _mm256_cvtpd_ps(vd));
        const __m256d mhat = _mm256_div_pd(md, bc1v);
        const __m256d vhat = _mm256_div_pd(vd, bc2v);
        const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), den);
        const __m256d pd = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(p + i)), step);
        _mm_storeu_ps(p + i, _mm256_cvtpd_ps(pd));
    }
    const double ob1d = 1.0 - b1, ob2d = 1.0 - b2;
    for (; i < n; ++i) {
        const double gs = (double)g[i];
        const double mn = b1 * (double)m[i] + ob1d * gs;
        const double vn = b2 * (double)v[i] + ob2d * (gs * gs);
        m[i] = (float)mn;
        v[i] = (float)vn;
        const double mh = mn / bc1;
        const double vh = vn / bc2;
        p[i] = (float)((double)p[i] - lr * mh / (std::sqrt(vh) + eps));
    }
}

// ---------------------------------------------------------------------------
// GEMM
// ---------------------------------------------------------------------------

namespace {

inline const float* a_ptr(const float* A, bool ta, int m, int k, int i, int p) {
    return ta ? A + (std::size_t)p * m + i : A + (std::size_t)i * k + p;
}

inline void store_block(float* c, __m256 acc, float alpha, float beta) {
    __m256 r = _mm256_mul_ps(_mm256_set1_ps(alpha), acc);
    if (beta != 0.0f)
        r = _mm256_add_ps(r, _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(c)));
    _mm256_storeu_ps(c, r);
}

// op(B) untransposed: stream B rows, broadcast op(A)(i,p). 4x16 blocking.
void gemm_bn(bool ta, int m, int n, int k, float alpha, const float* A,
             const float* B, float beta, float* C) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        int j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256 acc[4][2];
            for (int r = 0; r < 4; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_ps();
            for (int p = 0; p < k; ++p) {
                const float* brow = B + (std::size_t)p * n + j;
                const __m256 b0 = _mm256_loadu_ps(brow);
                const __m256 b1 = _mm256_loadu_ps(brow + 8);
                for (int r = 0; r < 4; ++r) {
                    const __m256 a = _mm256_set1_ps(*a_ptr(A, ta, m, k, i + r, p));
                    acc[r][0] = _mm256_fmadd_ps(a, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_ps(a, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                store_block(C + (std::size_t)(i + r) * n + j, acc[r][0], alpha, beta);
                store_block(C + (std::size_t)(i + r) * n + j + 8, acc[r][1], alpha, beta);
            }
        }
        for (; j + 8 <= n; j += 8) {
            __m256 acc[4];
            for (int r = 0; r < 4; ++r) acc[r] = _mm256_setzero_ps();
            for (int p = 0; p < k; ++p) {
                const __m256 b0 = _mm256_loadu_ps(B + (std::size_t)p * n + j);
                for (int r = 0; r < 4; ++r)
                    acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(*a_ptr(A, ta, m, k, i + r, p)), b0, acc[r]);
            }
            for (int r = 0; r < 4; ++r)
                store_block(C + (std::size_t)(i + r) * n + j, acc[r], alpha, beta);
        }
        for (; j < n; ++j) {
            for (int r = 0; r < 4; ++r) {
                float acc = 0.0f;
                for (int p = 0; p < k; ++p)
                    acc = std::fma(*a_ptr(A, ta, m, k, i + r, p), B[(std::size_t)p * n + j], acc);
                float* c = &C[(std::size_t)(i + r) * n + j];
                *c = alpha * acc + (beta == 0.0f ? 0.0f : beta * *c);
            }
        }
    }
    for (; i < m; ++i) {
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 acc = _mm256_setzero_ps();
            for (int p = 0; p < k; ++p)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(*a_ptr(A, ta, m, k, i, p)),
                                      _mm256_loadu_ps(B + (std::size_t)p * n + j), acc);
            store_block(C + (std::size_t)i * n + j, acc, alpha, beta);
        }
        for (; j < n; ++j) {
            float acc = 0.0f;
            for (int p = 0; p < k; ++p)
                acc = std::fma(*a_ptr(A, ta, m, k, i, p), B[(std::size_t)p * n + j], acc);
            float* c = &C[(std::size_t)i * n + j];
            *c = alpha * acc + (beta == 0.0f ? 0.0f : beta * *c);
        }
    }
}

// op(B) transposed (B is [N,K]): per-element dot products over contiguous rows.
void gemm_bt(bool ta, int m, int n, int k, float alpha, const float* A,
             const float* B, float beta, float* C) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const float* brow = B + (std::size_t)j * k;
            float acc;
            if (!ta) {
                const float* arow = A + (std::size_t)i * k;
                __m256 vacc = _mm256_setzero_ps();
                int p = 0;
                for (; p + 8 <= k; p += 8)
                    vacc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), vacc);
                acc = hsum8(vacc);
                for (; p < k; ++p) acc = std::fma(arow[p], brow[p], acc);
            } else {
                acc = 0.0f;
                for (int p = 0; p < k; ++p)
                    acc = std::fma(A[(std::size_t)p * m + i], brow[p], acc);
            }
            float* c = &C[(std::size_t)i * n + j];
            *c = alpha * acc + (beta == 0.0f ? 0.0f : beta * *c);
        }
    }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
          const float* B, float beta, float* C) {
    if (tb)
        gemm_bt(ta, m, n, k, alpha, A, B, beta, C);
    else
        gemm_bn(ta, m, n, k, alpha, A, B, beta, C);
}

#else  // !DAGAN_AVX2_COMPILED

namespace {
[[noreturn]] void unavailable() { std::abort(); }
}  // namespace

void add(const float*, const float*, float*, std::size_t) { unavailable(); }
void sub(const float*, const float*, float*, std::size_t) { unavailable(); }
void mul(const float*, const float*, float*, std::size_t) { unavailable(); }
void relu(const float*, float*, std::size_t) { unavailable(); }
void relu_bwd(const float*, const float*, float*, std::size_t) { unavailable(); }
void fmacc(const float*, const float*, float*, std::size_t) { unavailable(); }
void axpy(float, const float*, float*, std::size_t) { unavailable(); }
void scale(float, const float*, float*, std::size_t) { unavailable(); }
float sum(const float*, std::size_t) { unavailable(); }
void adam(float*, const float*, float*, float*, std::size_t, double, double,
          double, double, double, double) { unavailable(); }
void gemm(bool, bool, int, int, int, float, const float*, const float*, float,
          float*) { unavailable(); }

#endif

}  // namespace dagan::kern::avx2
