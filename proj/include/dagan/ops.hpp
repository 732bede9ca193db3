#pragma once

// Reverse-mode autodiff over TensorT<T>. A TapeT<T> records one node per op
// application; backward() walks the ancestry of a scalar loss in reverse tape
// order. Accumulation order is fixed by tape order, so results are
// bit-reproducible at thread count 1.
//
// T = float runs through the dispatched kernels (kernels/api.hpp); any other T
// (double, for gradient checking) runs the scalar reference kernels.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagan/kernels/api.hpp"
#include "dagan/kernels/scalar.hpp"
#include "dagan/tensor.hpp"

namespace dagan {

enum class OpId {
    add,
    sub,
    mul,
    matmul,
    conv2d,
    nearest_upsample2x,
    relu,
    sigmoid,
    tanh,
    batchnorm2d,
    concat_channels,
    mean,
    sum,
    bce_with_logits,
    softmax_cross_entropy,
    square,
    l2_distance,
    // plumbing ops beyond the base inventory (all finite-diff checked)
    reshape,
    slice_cols,
    soft_rect_mask,
    crop_mask,
};

inline const char* op_name(OpId op) {
    switch (op) {
        case OpId::add: return "add";
        case OpId::sub: return "sub";
        case OpId::mul: return "mul";
        case OpId::matmul: return "matmul";
        case OpId::conv2d: return "conv2d";
        case OpId::nearest_upsample2x: return "nearest_upsample2x";
        case OpId::relu: return "relu";
        case OpId::sigmoid: return "sigmoid";
        case OpId::tanh: return "tanh";
        case OpId::batchnorm2d: return "batchnorm2d";
        case OpId::concat_channels: return "concat_channels";
        case OpId::mean: return "mean";
        case OpId::sum: return "sum";
        case OpId::bce_with_logits: return "bce_with_logits";
        case OpId::softmax_cross_entropy: return "softmax_cross_entropy";
        case OpId::square: return "square";
        case OpId::l2_distance: return "l2_distance";
        case OpId::reshape: return "reshape";
        case OpId::slice_cols: return "slice_cols";
        case OpId::soft_rect_mask: return "soft_rect_mask";
        case OpId::crop_mask: return "crop_mask";
    }
    return "?";
}

constexpr OpId kAllOps[] = {
    OpId::add,
    OpId::sub,
    OpId::mul,
    OpId::matmul,
    OpId::conv2d,
    OpId::nearest_upsample2x,
    OpId::relu,
    OpId::sigmoid,
    OpId::tanh,
    OpId::batchnorm2d,
    OpId::concat_channels,
    OpId::mean,
    OpId::sum,
    OpId::bce_with_logits,
    OpId::softmax_cross_entropy,
    OpId::square,
    OpId::l2_distance,
    OpId::reshape,
    OpId::slice_cols,
    OpId::soft_rect_mask,
    OpId::crop_mask,
};

// ---------------------------------------------------------------------------
// kernel bridge: float -> dispatched, anything else -> scalar reference
// ---------------------------------------------------------------------------

template <typename T>
struct Kern {
    static void add(const T* a, const T* b, T* y, std::size_t n) { kern::scalar::add(a, b, y, n); }
    static void sub(const T* a, const T* b, T* y, std::size_t n) { kern::scalar::sub(a, b, y, n); }
    static void mul(const T* a, const T* b, T* y, std::size_t n) { kern::scalar::mul(a, b, y, n); }
    static void relu(const T* x, T* y, std::size_t n) { kern::scalar::relu(x, y, n); }
    static void relu_bwd(const T* x, const T* gy, T* gx, std::size_t n) {
        kern::scalar::relu_bwd(x, gy, gx, n);
    }
    static void fmacc(const T* a, const T* b, T* y, std::size_t n) { kern::scalar::fmacc(a, b, y, n); }
    static void axpy(T alpha, const T* x, T* y, std::size_t n) { kern::scalar::axpy(alpha, x, y, n); }
    static void scale(T alpha, const T* x, T* y, std::size_t n) { kern::scalar::scale(alpha, x, y, n); }
    static T sum(const T* x, std::size_t n) { return kern::scalar::sum(x, n); }
    static void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* A, const T* B, T beta,
                     T* C) {
        kern::scalar::gemm(ta, tb, m, n, k, alpha, A, B, beta, C);
    }
};

template <>
struct Kern<float> {
    static void add(const float* a, const float* b, float* y, std::size_t n) { kern::add_f32(a, b, y, n); }
    static void sub(const float* a, const float* b, float* y, std::size_t n) { kern::sub_f32(a, b, y, n); }
    static void mul(const float* a, const float* b, float* y, std::size_t n) { kern::mul_f32(a, b, y, n); }
    static void relu(const float* x, float* y, std::size_t n) { kern::relu_f32(x, y, n); }
    static void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n) {
        kern::relu_bwd_f32(x, gy, gx, n);
    }
    static void fmacc(const float* a, const float* b, float* y, std::size_t n) {
        kern::fmacc_f32(a, b, y, n);
    }
    static void axpy(float alpha, const float* x, float* y, std::size_t n) {
        kern::axpy_f32(alpha, x, y, n);
    }
    static void scale(float alpha, const float* x, float* y, std::size_t n) {
        kern::scale_f32(alpha, x, y, n);
    }
    static float sum(const float* x, std::size_t n) { return kern::sum_f32(x, n); }
    static void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
                     const float* B, float beta, float* C) {
        kern::gemm_f32(ta, tb, m, n, k, alpha, A, B, beta, C);
    }
};

// ---------------------------------------------------------------------------
// attrs / tape
// ---------------------------------------------------------------------------

enum class Reduce { all, spatial };

template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;  // one per channel
    std::vector<T> running_var;
    explicit BatchNormState(int channels = 0)
        : running_mean((std::size_t)channels, T(0)), running_var((std::size_t)channels, T(1)) {}
};

template <typename T>
struct AttrsT {
    int stride = 1;                      // conv2d
    bool training = true;                // batchnorm2d
    BatchNormState<T>* bn = nullptr;     // batchnorm2d running stats
    T momentum = T(0.9);                 // batchnorm2d
    T eps = T(1e-5);                     // batchnorm2d
    Reduce reduce = Reduce::all;         // mean / sum
    Shape target_shape;                  // reshape
    int col_start = 0, col_len = 0;      // slice_cols
    T k = T(10);                         // soft_rect_mask sharpness
    int mask_h = 0, mask_w = 0;          // soft_rect_mask grid
};

template <typename T>
struct NodeT {
    OpId op;
    std::vector<TensorPtr<T>> inputs;
    TensorPtr<T> output;
    AttrsT<T> attrs;
    std::vector<std::vector<T>> saved;  // op-specific forward intermediates
};

template <typename T>
struct TapeT {
    std::vector<NodeT<T>> nodes;
    std::unordered_map<const TensorT<T>*, int> producer;
    bool recording = true;

    void clear() {
        nodes.clear();
        producer.clear();
    }
};

using Tape = TapeT<float>;

namespace detail {

template <typename T>
[[noreturn]] void op_fail(OpId op, const std::string& what) {
    throw std::invalid_argument(std::string("op ") + op_name(op) + ": " + what);
}

template <typename T>
void require_same_shape(OpId op, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape != b.shape)
        op_fail<T>(op, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// conv2d geometry: 3x3 kernel, pad 1, stride 1 or 2
inline int conv_out_dim(int in, int stride) { return (in + 2 - 3) / stride + 1; }

template <typename T>
void im2col_3x3(const T* x, int C, int H, int W, int stride, T* col) {
    const int HO = conv_out_dim(H, stride), WO = conv_out_dim(W, stride);
    const std::size_t hw = (std::size_t)HO * WO;
    for (int c = 0; c < C; ++c) {
        const T* xc = x + (std::size_t)c * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + ((std::size_t)(c * 3 + ky) * 3 + kx) * hw;
                for (int oy = 0; oy < HO; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    T* dst = row + (std::size_t)oy * WO;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < WO; ++ox) dst[ox] = T(0);
                        continue;
                    }
                    const T* src = xc + (std::size_t)iy * W;
                    for (int ox = 0; ox < WO; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_3x3_acc(const T* col, int C, int H, int W, int stride, T* gx) {
    const int HO = conv_out_dim(H, stride), WO = conv_out_dim(W, stride);
    const std::size_t hw = (std::size_t)HO * WO;
    for (int c = 0; c < C; ++c) {
        T* gc = gx + (std::size_t)c * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + ((std::size_t)(c * 3 + ky) * 3 + kx) * hw;
                for (int oy = 0; oy < HO; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const T* src = row + (std::size_t)oy * WO;
                    T* dst = gc + (std::size_t)iy * W;
                    for (int ox = 0; ox < WO; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> forward(TapeT<T>& tape, OpId op, std::vector<TensorPtr<T>> inputs,
                     AttrsT<T> attrs = {}) {
    using detail::op_fail;
    if (inputs.empty()) op_fail<T>(op, "no inputs");
    for (const auto& in : inputs)
        if (!in) op_fail<T>(op, "null input");

    NodeT<T> node;
    node.op = op;
    node.attrs = attrs;
    TensorPtr<T> out;

    switch (op) {
        case OpId::add:
        case OpId::sub:
        case OpId::mul: {
            if (inputs.size() != 2) op_fail<T>(op, "expects 2 inputs");
            const auto &a = *inputs[0], &b = *inputs[1];
            // broadcasting: scalar-with-tensor only
            if (a.shape != b.shape && !a.is_scalar() && !b.is_scalar())
                op_fail<T>(op, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
            const bool as = a.is_scalar() && !b.is_scalar();
            const bool bs = b.is_scalar() && !a.is_scalar();
            out = make_tensor<T>(as ? b.shape : a.shape);
            const std::size_t n = out->size();
            T* y = out->data.data();
            if (!as && !bs) {
                if (op == OpId::add) Kern<T>::add(a.data.data(), b.data.data(), y, n);
                else if (op == OpId::sub) Kern<T>::sub(a.data.data(), b.data.data(), y, n);
                else Kern<T>::mul(a.data.data(), b.data.data(), y, n);
            } else {
                const T s = as ? a.data[0] : b.data[0];
                const T* v = as ? b.data.data() : a.data.data();
                if (op == OpId::add)
                    for (std::size_t i = 0; i < n; ++i) y[i] = v[i] + s;
                else if (op == OpId::mul)
                    for (std::size_t i = 0; i < n; ++i) y[i] = v[i] * s;
                else if (as)  // scalar - tensor
                    for (std::size_t i = 0; i < n; ++i) y[i] = s - v[i];
                else  // tensor - scalar
                    for (std::size_t i = 0; i < n; ++i) y[i] = v[i] - s;
            }
            break;
        }

        case OpId::matmul: {
            if (inputs.size() != 2 && inputs.size() != 3) op_fail<T>(op, "expects A, B[, bias]");
            const auto &A = *inputs[0], &B = *inputs[1];
            if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
                op_fail<T>(op, "shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
            const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
            out = make_tensor<T>({m, n});
            Kern<T>::gemm(false, false, m, n, k, T(1), A.data.data(), B.data.data(), T(0),
                          out->data.data());
            if (inputs.size() == 3) {
                const auto& bias = *inputs[2];
                if ((int)bias.size() != n)
                    op_fail<T>(op, "bias shape " + shape_str(bias.shape) + " vs n=" + std::to_string(n));
                for (int i = 0; i < m; ++i)
                    Kern<T>::add(out->data.data() + (std::size_t)i * n, bias.data.data(),
                                 out->data.data() + (std::size_t)i * n, (std::size_t)n);
            }
            break;
        }

        case OpId::conv2d: {
            if (inputs.size() != 2 && inputs.size() != 3) op_fail<T>(op, "expects X, W[, bias]");
            const auto &X = *inputs[0], &Wt = *inputs[1];
            const int stride = attrs.stride;
            if (stride != 1 && stride != 2) op_fail<T>(op, "stride must be 1 or 2");
            if (X.rank() != 4 || Wt.rank() != 4 || Wt.dim(2) != 3 || Wt.dim(3) != 3 ||
                Wt.dim(1) != X.dim(1))
                op_fail<T>(op, "shape mismatch " + shape_str(X.shape) + " vs " + shape_str(Wt.shape));
            const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3), F = Wt.dim(0);
            const int HO = detail::conv_out_dim(H, stride), WO = detail::conv_out_dim(W, stride);
            if (inputs.size() == 3 && (int)inputs[2]->size() != F)
                op_fail<T>(op, "bias shape " + shape_str(inputs[2]->shape) + " vs F=" + std::to_string(F));
            out = make_tensor<T>({N, F, HO, WO});
            const std::size_t hw = (std::size_t)HO * WO, csz = (std::size_t)C * 9 * hw;
            std::vector<T> col(csz);
            for (int s = 0; s < N; ++s) {
                detail::im2col_3x3(X.data.data() + (std::size_t)s * C * H * W, C, H, W, stride,
                                   col.data());
                T* y = out->data.data() + (std::size_t)s * F * hw;
                Kern<T>::gemm(false, false, F, (int)hw, C * 9, T(1), Wt.data.data(), col.data(),
                              T(0), y);
                if (inputs.size() == 3)
                    for (int f = 0; f < F; ++f) {
                        const T b = inputs[2]->data[(std::size_t)f];
                        T* yf = y + (std::size_t)f * hw;
                        for (std::size_t i = 0; i < hw; ++i) yf[i] += b;
                    }
            }
            break;
        }

        case OpId::nearest_upsample2x: {
            const auto& X = *inputs[0];
            if (X.rank() != 4) op_fail<T>(op, "expects [N,C,H,W], got " + shape_str(X.shape));
            const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
            out = make_tensor<T>({N, C, 2 * H, 2 * W});
            for (int nc = 0; nc < N * C; ++nc) {
                const T* src = X.data.data() + (std::size_t)nc * H * W;
                T* dst = out->data.data() + (std::size_t)nc * 4 * H * W;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        const T v = src[(std::size_t)i * W + j];
                        T* d = dst + (std::size_t)(2 * i) * 2 * W + 2 * j;
                        d[0] = v;
                        d[1] = v;
                        d[2 * W] = v;
                        d[2 * W + 1] = v;
                    }
            }
            break;
        }

        case OpId::relu: {
            const auto& X = *inputs[0];
            out = make_tensor<T>(X.shape);
            Kern<T>::relu(X.data.data(), out->data.data(), X.size());
            break;
        }

        case OpId::sigmoid: {
            const auto& X = *inputs[0];
            out = make_tensor<T>(X.shape);
            for (std::size_t i = 0; i < X.size(); ++i)
                out->data[i] = detail::stable_sigmoid(X.data[i]);
            break;
        }

        case OpId::tanh: {
            const auto& X = *inputs[0];
            out = make_tensor<T>(X.shape);
            for (std::size_t i = 0; i < X.size(); ++i) out->data[i] = std::tanh(X.data[i]);
            break;
        }

        case OpId::batchnorm2d: {
            if (inputs.size() != 3) op_fail<T>(op, "expects X, gamma, beta");
            const auto &X = *inputs[0], &gamma = *inputs[1], &beta = *inputs[2];
            if (X.rank() != 4) op_fail<T>(op, "expects [N,C,H,W], got " + shape_str(X.shape));
            const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
            if ((int)gamma.size() != C || (int)beta.size() != C)
                op_fail<T>(op, "gamma/beta must have C=" + std::to_string(C) + " entries");
            if (!attrs.bn) op_fail<T>(op, "missing BatchNormState");
            if ((int)attrs.bn->running_mean.size() != C)
                op_fail<T>(op, "BatchNormState channels " +
                                   std::to_string(attrs.bn->running_mean.size()) +
                                   " vs C=" + std::to_string(C));
            out = make_tensor<T>(X.shape);
            const std::size_t plane = (std::size_t)H * W;
            const T m = T(N) * T(plane);
            std::vector<T> mu(C), invstd(C);
            if (attrs.training) {
                for (int c = 0; c < C; ++c) {
                    T s = T(0);
                    for (int n = 0; n < N; ++n)
                        s += Kern<T>::sum(X.data.data() + ((std::size_t)n * C + c) * plane, plane);
                    mu[(std::size_t)c] = s / m;
                    T v = T(0);
                    for (int n = 0; n < N; ++n) {
                        const T* x = X.data.data() + ((std::size_t)n * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            const T d = x[i] - mu[(std::size_t)c];
                            v += d * d;
                        }
                    }
                    v /= m;  // biased batch variance
                    invstd[(std::size_t)c] = T(1) / std::sqrt(v + attrs.eps);
                    attrs.bn->running_mean[(std::size_t)c] =
                        attrs.momentum * attrs.bn->running_mean[(std::size_t)c] +
                        (T(1) - attrs.momentum) * mu[(std::size_t)c];
                    attrs.bn->running_var[(std::size_t)c] =
                        attrs.momentum * attrs.bn->running_var[(std::size_t)c] +
                        (T(1) - attrs.momentum) * v;
                }
            } else {
                for (int c = 0; c < C; ++c) {
                    mu[(std::size_t)c] = attrs.bn->running_mean[(std::size_t)c];
                    invstd[(std::size_t)c] =
                        T(1) / std::sqrt(attrs.bn->running_var[(std::size_t)c] + attrs.eps);
                }
            }
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* x = X.data.data() + ((std::size_t)n * C + c) * plane;
                    T* y = out->data.data() + ((std::size_t)n * C + c) * plane;
                    const T g = gamma.data[(std::size_t)c], b = beta.data[(std::size_t)c];
                    const T mc = mu[(std::size_t)c], is = invstd[(std::size_t)c];
                    for (std::size_t i = 0; i < plane; ++i) y[i] = g * (x[i] - mc) * is + b;
                }
            node.saved.push_back(std::move(mu));
            node.saved.push_back(std::move(invstd));
            break;
        }

        case OpId::concat_channels: {
            const auto& X0 = *inputs[0];
            if (X0.rank() != 4) op_fail<T>(op, "expects [N,C,H,W] inputs");
            const int N = X0.dim(0), H = X0.dim(2), W = X0.dim(3);
            int Ct = 0;
            for (const auto& in : inputs) {
                if (in->rank() != 4 || in->dim(0) != N || in->dim(2) != H || in->dim(3) != W)
                    op_fail<T>(op, "shape mismatch " + shape_str(X0.shape) + " vs " +
                                       shape_str(in->shape));
                Ct += in->dim(1);
            }
            out = make_tensor<T>({N, Ct, H, W});
            const std::size_t plane = (std::size_t)H * W;
            for (int n = 0; n < N; ++n) {
                std::size_t coff = 0;
                for (const auto& in : inputs) {
                    const int Ci = in->dim(1);
                    std::copy_n(in->data.data() + (std::size_t)n * Ci * plane, (std::size_t)Ci * plane,
                                out->data.data() + ((std::size_t)n * Ct + coff) * plane);
                    coff += (std::size_t)Ci;
                }
            }
            break;
        }

        case OpId::mean:
        case OpId::sum: {
            const auto& X = *inputs[0];
            if (attrs.reduce == Reduce::all) {
                out = make_tensor<T>({1});
                const T s = Kern<T>::sum(X.data.data(), X.size());
                out->data[0] = (op == OpId::mean) ? s / T(X.size()) : s;
            } else {
                if (X.rank() != 4) op_fail<T>(op, "spatial reduce expects [N,C,H,W]");
                const int N = X.dim(0), C = X.dim(1);
                const std::size_t plane = (std::size_t)X.dim(2) * X.dim(3);
                out = make_tensor<T>({N, C});
                for (int i = 0; i < N * C; ++i) {
                    const T s = Kern<T>::sum(X.data.data() + (std::size_t)i * plane, plane);
                    out->data[(std::size_t)i] = (op == OpId::mean) ? s / T(plane) : s;
                }
            }
            break;
        }

        case OpId::bce_with_logits: {
            if (inputs.size() != 2) op_fail<T>(op, "expects logits, targets");
            const auto &Z = *inputs[0], &Y = *inputs[1];
            detail::require_same_shape(op, Z, Y);
            out = make_tensor<T>({1});
            T s = T(0);
            for (std::size_t i = 0; i < Z.size(); ++i) {
                const T z = Z.data[i], y = Y.data[i];
                s += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
            }
            out->data[0] = s / T(Z.size());
            break;
        }

        case OpId::softmax_cross_entropy: {
            if (inputs.size() != 2) op_fail<T>(op, "expects logits [N,C], labels [N]");
            const auto &Z = *inputs[0], &L = *inputs[1];
            if (Z.rank() != 2) op_fail<T>(op, "logits must be [N,C], got " + shape_str(Z.shape));
            const int N = Z.dim(0), C = Z.dim(1);
            if ((int)L.size() != N)
                op_fail<T>(op, "labels size " + std::to_string(L.size()) + " vs N=" + std::to_string(N));
            std::vector<T> probs((std::size_t)N * C);
            T loss = T(0);
            for (int n = 0; n < N; ++n) {
                const T* z = Z.data.data() + (std::size_t)n * C;
                const int lab = (int)std::lround((double)L.data[(std::size_t)n]);
                if (lab < 0 || lab >= C)
                    op_fail<T>(op, "label out of range: " + std::to_string(lab) + " for C=" +
                                       std::to_string(C));
                T zmax = z[0];
                for (int c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
                T se = T(0);
                for (int c = 0; c < C; ++c) se += std::exp(z[c] - zmax);
                const T lse = zmax + std::log(se);
                for (int c = 0; c < C; ++c)
                    probs[(std::size_t)n * C + c] = std::exp(z[c] - lse);
                loss += lse - z[lab];
            }
            out = make_tensor<T>({1});
            out->data[0] = loss / T(N);
            node.saved.push_back(std::move(probs));
            break;
        }

        case OpId::square: {
            const auto& X = *inputs[0];
            out = make_tensor<T>(X.shape);
            Kern<T>::mul(X.data.data(), X.data.data(), out->data.data(), X.size());
            break;
        }

        case OpId::l2_distance: {
            if (inputs.size() != 2) op_fail<T>(op, "expects 2 inputs");
            const auto &A = *inputs[0], &B = *inputs[1];
            detail::require_same_shape(op, A, B);
            out = make_tensor<T>({1});
            T s = T(0);
            for (std::size_t i = 0; i < A.size(); ++i) {
                const T d = A.data[i] - B.data[i];
                s += d * d;
            }
            out->data[0] = s / T(A.size());
            break;
        }

        case OpId::reshape: {
            const auto& X = *inputs[0];
            if (numel(attrs.target_shape) != X.size())
                op_fail<T>(op, "cannot reshape " + shape_str(X.shape) + " to " +
                                   shape_str(attrs.target_shape));
            out = make_tensor<T>(attrs.target_shape);
            out->data = X.data;
            break;
        }

        case OpId::slice_cols: {
            const auto& X = *inputs[0];
            if (X.rank() != 2) op_fail<T>(op, "expects [N,M], got " + shape_str(X.shape));
            const int N = X.dim(0), M = X.dim(1);
            const int s0 = attrs.col_start, len = attrs.col_len;
            if (s0 < 0 || len <= 0 || s0 + len > M)
                op_fail<T>(op, "slice [" + std::to_string(s0) + "," + std::to_string(s0 + len) +
                                   ") out of " + std::to_string(M) + " cols");
            out = make_tensor<T>({N, len});
            for (int n = 0; n < N; ++n)
                std::copy_n(X.data.data() + (std::size_t)n * M + s0, (std::size_t)len,
                            out->data.data() + (std::size_t)n * len);
            break;
        }

        case OpId::soft_rect_mask: {
            if (inputs.size() != 4) op_fail<T>(op, "expects left, right, top, bottom");
            if (attrs.k <= T(0)) op_fail<T>(op, "k must be positive");
            if (attrs.mask_h <= 0 || attrs.mask_w <= 0) op_fail<T>(op, "grid dims must be positive");
            const std::size_t N = inputs[0]->size();
            for (int i = 1; i < 4; ++i)
                if (inputs[(std::size_t)i]->size() != N)
                    op_fail<T>(op, "bound tensors must agree in size");
            const int H = attrs.mask_h, W = attrs.mask_w;
            const T k = attrs.k;
            out = make_tensor<T>({(int)N, H, W});
            std::vector<T> sl(N * (std::size_t)W), sr(N * (std::size_t)W);
            std::vector<T> st(N * (std::size_t)H), sb(N * (std::size_t)H);
            for (std::size_t n = 0; n < N; ++n) {
                const T l = inputs[0]->data[n], r = inputs[1]->data[n];
                const T t = inputs[2]->data[n], b = inputs[3]->data[n];
                for (int x = 0; x < W; ++x) {
                    sl[n * W + x] = detail::stable_sigmoid(k * (T(x) - l));
                    sr[n * W + x] = detail::stable_sigmoid(k * (T(x) - r));
                }
                for (int y = 0; y < H; ++y) {
                    st[n * H + y] = detail::stable_sigmoid(k * (T(y) - t));
                    sb[n * H + y] = detail::stable_sigmoid(k * (T(y) - b));
                }
                T* m = out->data.data() + n * (std::size_t)H * W;
                for (int y = 0; y < H; ++y) {
                    const T fy = st[n * H + y] - sb[n * H + y];
                    for (int x = 0; x < W; ++x)
                        m[(std::size_t)y * W + x] = (sl[n * W + x] - sr[n * W + x]) * fy;
                }
            }
            node.saved.push_back(std::move(sl));
            node.saved.push_back(std::move(sr));
            node.saved.push_back(std::move(st));
            node.saved.push_back(std::move(sb));
            break;
        }

        case OpId::crop_mask: {
            if (inputs.size() != 2) op_fail<T>(op, "expects image, mask");
            const auto &X = *inputs[0], &M = *inputs[1];
            if (X.rank() != 4 || M.rank() != 3 || M.dim(0) != X.dim(0) || M.dim(1) != X.dim(2) ||
                M.dim(2) != X.dim(3))
                op_fail<T>(op, "spatial mismatch " + shape_str(X.shape) + " vs " + shape_str(M.shape));
            const int N = X.dim(0), C = X.dim(1);
            const std::size_t plane = (std::size_t)X.dim(2) * X.dim(3);
            out = make_tensor<T>(X.shape);
            for (int n = 0; n < N; ++n) {
                const T* m = M.data.data() + (std::size_t)n * plane;
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = ((std::size_t)n * C + c) * plane;
                    Kern<T>::mul(X.data.data() + off, m, out->data.data() + off, plane);
                }
            }
            break;
        }
    }

    bool rg = false;
    for (const auto& in : inputs) rg = rg || in->requires_grad;
    out->requires_grad = rg;
    if (rg && tape.recording) {
        node.inputs = std::move(inputs);
        node.output = out;
        tape.producer[out.get()] = (int)tape.nodes.size();
        tape.nodes.push_back(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace detail {

// accumulate gy into ga, reducing to scalar if a is scalar-broadcast
template <typename T>
void acc_maybe_scalar(TensorT<T>& a, const T* gy, std::size_t n, T sign) {
    a.ensure_grad();
    if (a.size() == n) {
        if (sign > T(0))
            Kern<T>::axpy(T(1), gy, a.grad.data(), n);
        else
            Kern<T>::axpy(T(-1), gy, a.grad.data(), n);
    } else {
        a.grad[0] += sign * Kern<T>::sum(gy, n);
    }
}

template <typename T>
void backward_node(NodeT<T>& node) {
    auto& out = *node.output;
    const T* gy = out.grad.data();
    const std::size_t n = out.size();
    auto rg = [&](int i) { return node.inputs[(std::size_t)i]->requires_grad; };

    switch (node.op) {
        case OpId::add: {
            if (rg(0)) acc_maybe_scalar(*node.inputs[0], gy, n, T(1));
            if (rg(1)) acc_maybe_scalar(*node.inputs[1], gy, n, T(1));
            break;
        }
        case OpId::sub: {
            if (rg(0)) acc_maybe_scalar(*node.inputs[0], gy, n, T(1));
            if (rg(1)) acc_maybe_scalar(*node.inputs[1], gy, n, T(-1));
            break;
        }
        case OpId::mul: {
            auto &a = *node.inputs[0], &b = *node.inputs[1];
            if (a.shape == b.shape) {
                if (rg(0)) {
                    a.ensure_grad();
                    Kern<T>::fmacc(gy, b.data.data(), a.grad.data(), n);
                }
                if (rg(1)) {
                    b.ensure_grad();
                    Kern<T>::fmacc(gy, a.data.data(), b.grad.data(), n);
                }
            } else {
                auto& sc = a.is_scalar() ? a : b;   // scalar side
                auto& vec = a.is_scalar() ? b : a;  // tensor side
                if (vec.requires_grad) {
                    vec.ensure_grad();
                    Kern<T>::axpy(sc.data[0], gy, vec.grad.data(), n);
                }
                if (sc.requires_grad) {
                    sc.ensure_grad();
                    T s = T(0);
                    for (std::size_t i = 0; i < n; ++i) s += gy[i] * vec.data[i];
                    sc.grad[0] += s;
                }
            }
            break;
        }

        case OpId::matmul: {
            auto &A = *node.inputs[0], &B = *node.inputs[1];
            const int m = A.dim(0), k = A.dim(1), nn = B.dim(1);
            if (rg(0)) {
                A.ensure_grad();
                Kern<T>::gemm(false, true, m, k, nn, T(1), gy, B.data.data(), T(1), A.grad.data());
            }
            if (rg(1)) {
                B.ensure_grad();
                Kern<T>::gemm(true, false, k, nn, m, T(1), A.data.data(), gy, T(1), B.grad.data());
            }
            if (node.inputs.size() == 3 && rg(2)) {
                auto& bias = *node.inputs[2];
                bias.ensure_grad();
                for (int i = 0; i < m; ++i)
                    Kern<T>::add(bias.grad.data(), gy + (std::size_t)i * nn, bias.grad.data(),
                                 (std::size_t)nn);
            }
            break;
        }

        case OpId::conv2d: {
            auto &X = *node.inputs[0], &Wt = *node.inputs[1];
            const int stride = node.attrs.stride;
            const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3), F = Wt.dim(0);
            const int HO = conv_out_dim(H, stride), WO = conv_out_dim(W, stride);
            const std::size_t hw = (std::size_t)HO * WO;
            const int c9 = C * 9;
            std::vector<T> col((std::size_t)c9 * hw), gcol((std::size_t)c9 * hw);
            if (rg(0)) X.ensure_grad();
            if (rg(1)) Wt.ensure_grad();
            for (int s = 0; s < N; ++s) {
                const T* gys = gy + (std::size_t)s * F * hw;
                if (rg(1)) {
                    im2col_3x3(X.data.data() + (std::size_t)s * C * H * W, C, H, W, stride,
                               col.data());
                    Kern<T>::gemm(false, true, F, c9, (int)hw, T(1), gys, col.data(), T(1),
                                  Wt.grad.data());
                }
                if (rg(0)) {
                    Kern<T>::gemm(true, false, c9, (int)hw, F, T(1), Wt.data.data(), gys, T(0),
                                  gcol.data());
                    col2im_3x3_acc(gcol.data(), C, H, W, stride,
                                   X.grad.data() + (std::size_t)s * C * H * W);
                }
            }
            if (node.inputs.size() == 3 && rg(2)) {
                auto& bias = *node.inputs[2];
                bias.ensure_grad();
                for (int s = 0; s < N; ++s)
                    for (int f = 0; f < F; ++f)
                        bias.grad[(std::size_t)f] +=
                            Kern<T>::sum(gy + ((std::size_t)s * F + f) * hw, hw);
            }
            break;
        }

        case OpId::nearest_upsample2x: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            const int NC = X.dim(0) * X.dim(1), H = X.dim(2), W = X.dim(3);
            for (int nc = 0; nc < NC; ++nc) {
                T* gx = X.grad.data() + (std::size_t)nc * H * W;
                const T* g = gy + (std::size_t)nc * 4 * H * W;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        const T* s = g + (std::size_t)(2 * i) * 2 * W + 2 * j;
                        gx[(std::size_t)i * W + j] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
                    }
            }
            break;
        }

        case OpId::relu: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            Kern<T>::relu_bwd(X.data.data(), gy, X.grad.data(), n);
            break;
        }

        case OpId::sigmoid: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            const T* y = out.data.data();
            for (std::size_t i = 0; i < n; ++i) X.grad[i] += gy[i] * y[i] * (T(1) - y[i]);
            break;
        }

        case OpId::tanh: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            const T* y = out.data.data();
            for (std::size_t i = 0; i < n; ++i) X.grad[i] += gy[i] * (T(1) - y[i] * y[i]);
            break;
        }

        case OpId::batchnorm2d: {
            auto &X = *node.inputs[0], &gamma = *node.inputs[1], &beta = *node.inputs[2];
            const int N = X.dim(0), C = X.dim(1);
            const std::size_t plane = (std::size_t)X.dim(2) * X.dim(3);
            const T m = T(N) * T(plane);
            const auto &mu = node.saved[0], &invstd = node.saved[1];
            for (int c = 0; c < C; ++c) {
                const T mc = mu[(std::size_t)c], is = invstd[(std::size_t)c];
                const T g = gamma.data[(std::size_t)c];
                // per-channel reductions over the batch
                T sum_gy = T(0), sum_gy_xhat = T(0);
                for (int s = 0; s < N; ++s) {
                    const std::size_t off = ((std::size_t)s * C + c) * plane;
                    const T* gyp = gy + off;
                    const T* xp = X.data.data() + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_gy += gyp[i];
                        sum_gy_xhat += gyp[i] * (xp[i] - mc) * is;
                    }
                }
                if (gamma.requires_grad) {
                    gamma.ensure_grad();
                    gamma.grad[(std::size_t)c] += sum_gy_xhat;
                }
                if (beta.requires_grad) {
                    beta.ensure_grad();
                    beta.grad[(std::size_t)c] += sum_gy;
                }
                if (X.requires_grad) {
                    X.ensure_grad();
                    if (node.attrs.training) {
                        const T k1 = sum_gy / m, k2 = sum_gy_xhat / m;
                        for (int s = 0; s < N; ++s) {
                            const std::size_t off = ((std::size_t)s * C + c) * plane;
                            const T* gyp = gy + off;
                            const T* xp = X.data.data() + off;
                            T* gxp = X.grad.data() + off;
                            for (std::size_t i = 0; i < plane; ++i) {
                                const T xhat = (xp[i] - mc) * is;
                                gxp[i] += g * is * (gyp[i] - k1 - xhat * k2);
                            }
                        }
                    } else {
                        const T gis = g * is;
                        for (int s = 0; s < N; ++s) {
                            const std::size_t off = ((std::size_t)s * C + c) * plane;
                            Kern<T>::axpy(gis, gy + off, X.grad.data() + off, plane);
                        }
                    }
                }
            }
            break;
        }

        case OpId::concat_channels: {
            const int N = out.dim(0), Ct = out.dim(1);
            const std::size_t plane = (std::size_t)out.dim(2) * out.dim(3);
            std::size_t coff = 0;
            for (auto& inp : node.inputs) {
                const int Ci = inp->dim(1);
                if (inp->requires_grad) {
                    inp->ensure_grad();
                    for (int s = 0; s < N; ++s)
                        Kern<T>::axpy(T(1), gy + ((std::size_t)s * Ct + coff) * plane,
                                      inp->grad.data() + (std::size_t)s * Ci * plane,
                                      (std::size_t)Ci * plane);
                }
                coff += (std::size_t)Ci;
            }
            break;
        }

        case OpId::mean:
        case OpId::sum: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            if (node.attrs.reduce == Reduce::all) {
                const T g = (node.op == OpId::mean) ? gy[0] / T(X.size()) : gy[0];
                for (std::size_t i = 0; i < X.size(); ++i) X.grad[i] += g;
            } else {
                const int NC = X.dim(0) * X.dim(1);
                const std::size_t plane = (std::size_t)X.dim(2) * X.dim(3);
                for (int i = 0; i < NC; ++i) {
                    const T g = (node.op == OpId::mean) ? gy[(std::size_t)i] / T(plane)
                                                        : gy[(std::size_t)i];
                    T* gx = X.grad.data() + (std::size_t)i * plane;
                    for (std::size_t j = 0; j < plane; ++j) gx[j] += g;
                }
            }
            break;
        }

        case OpId::bce_with_logits: {
            if (!rg(0)) break;
            auto &Z = *node.inputs[0], &Y = *node.inputs[1];
            Z.ensure_grad();
            const T g = gy[0] / T(Z.size());
            for (std::size_t i = 0; i < Z.size(); ++i)
                Z.grad[i] += g * (stable_sigmoid(Z.data[i]) - Y.data[i]);
            break;
        }

        case OpId::softmax_cross_entropy: {
            if (!rg(0)) break;
            auto &Z = *node.inputs[0], &L = *node.inputs[1];
            Z.ensure_grad();
            const int N = Z.dim(0), C = Z.dim(1);
            const auto& probs = node.saved[0];
            const T g = gy[0] / T(N);
            for (int s = 0; s < N; ++s) {
                const int lab = (int)std::lround((double)L.data[(std::size_t)s]);
                for (int c = 0; c < C; ++c) {
                    T p = probs[(std::size_t)s * C + c];
                    if (c == lab) p -= T(1);
                    Z.grad[(std::size_t)s * C + c] += g * p;
                }
            }
            break;
        }

        case OpId::square: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) X.grad[i] += gy[i] * T(2) * X.data[i];
            break;
        }

        case OpId::l2_distance: {
            auto &A = *node.inputs[0], &B = *node.inputs[1];
            const T g = gy[0] * T(2) / T(A.size());
            if (rg(0)) A.ensure_grad();
            if (rg(1)) B.ensure_grad();
            for (std::size_t i = 0; i < A.size(); ++i) {
                const T d = g * (A.data[i] - B.data[i]);
                if (A.requires_grad) A.grad[i] += d;
                if (B.requires_grad) B.grad[i] -= d;
            }
            break;
        }

        case OpId::reshape: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            Kern<T>::axpy(T(1), gy, X.grad.data(), n);
            break;
        }

        case OpId::slice_cols: {
            if (!rg(0)) break;
            auto& X = *node.inputs[0];
            X.ensure_grad();
            const int N = X.dim(0), M = X.dim(1);
            const int s0 = node.attrs.col_start, len = node.attrs.col_len;
            for (int s = 0; s < N; ++s)
                for (int j = 0; j < len; ++j)
                    X.grad[(std::size_t)s * M + s0 + j] += gy[(std::size_t)s * len + j];
            break;
        }

        case OpId::soft_rect_mask: {
            const std::size_t N = node.inputs[0]->size();
            const int H = node.attrs.mask_h, W = node.attrs.mask_w;
            const T k = node.attrs.k;
            const auto &sl = node.saved[0], &sr = node.saved[1];
            const auto &st = node.saved[2], &sb = node.saved[3];
            for (int i = 0; i < 4; ++i)
                if (node.inputs[(std::size_t)i]->requires_grad)
                    node.inputs[(std::size_t)i]->ensure_grad();
            for (std::size_t s = 0; s < N; ++s) {
                const T* g = gy + s * (std::size_t)H * W;
                // row/column marginals of the incoming grad, weighted by the
                // other axis's factor
                T gl = T(0), gr = T(0), gt = T(0), gb = T(0);
                for (int y = 0; y < H; ++y) {
                    const T fy = st[s * H + y] - sb[s * H + y];
                    const T dty = st[s * H + y] * (T(1) - st[s * H + y]);
                    const T dby = sb[s * H + y] * (T(1) - sb[s * H + y]);
                    for (int x = 0; x < W; ++x) {
                        const T fx = sl[s * W + x] - sr[s * W + x];
                        const T gv = g[(std::size_t)y * W + x];
                        // d mask / d l = -k*sl'(x)*fy ; d/d r = +k*sr'(x)*fy
                        gl -= gv * k * sl[s * W + x] * (T(1) - sl[s * W + x]) * fy;
                        gr += gv * k * sr[s * W + x] * (T(1) - sr[s * W + x]) * fy;
                        gt -= gv * k * dty * fx;
                        gb += gv * k * dby * fx;
                    }
                }
                if (node.inputs[0]->requires_grad) node.inputs[0]->grad[s] += gl;
                if (node.inputs[1]->requires_grad) node.inputs[1]->grad[s] += gr;
                if (node.inputs[2]->requires_grad) node.inputs[2]->grad[s] += gt;
                if (node.inputs[3]->requires_grad) node.inputs[3]->grad[s] += gb;
            }
            break;
        }

        case OpId::crop_mask: {
            auto &X = *node.inputs[0], &M = *node.inputs[1];
            const int N = X.dim(0), C = X.dim(1);
            const std::size_t plane = (std::size_t)X.dim(2) * X.dim(3);
            if (rg(0)) X.ensure_grad();
            if (rg(1)) M.ensure_grad();
            for (int s = 0; s < N; ++s) {
                const T* m = M.data.data() + (std::size_t)s * plane;
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = ((std::size_t)s * C + c) * plane;
                    if (X.requires_grad) Kern<T>::fmacc(gy + off, m, X.grad.data() + off, plane);
                    if (M.requires_grad)
                        Kern<T>::fmacc(gy + off, X.data.data() + off,
                                       M.grad.data() + (std::size_t)s * plane, plane);
                }
            }
            break;
        }
    }
}

}  // namespace detail

/// Reverse sweep over the ancestry of `loss` (which must be scalar). Grads of
/// every tensor in the ancestry are zeroed first, so repeated backward calls
/// on one tape do not leak stale gradients between phases.
template <typename T>
void backward(TapeT<T>& tape, const TensorPtr<T>& loss) {
    if (!loss || loss->size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    (loss ? shape_str(loss->shape) : std::string("null")));
    auto it = tape.producer.find(loss.get());
    if (it == tape.producer.end()) {
        // a leaf "loss": gradient of itself is 1, nothing else reachable
        if (loss->requires_grad) {
            loss->ensure_grad();
            loss->grad[0] = T(1);
        }
        return;
    }

    // mark ancestry by reverse scan (inputs always precede their node)
    std::vector<char> marked(tape.nodes.size(), 0);
    marked[(std::size_t)it->second] = 1;
    for (int i = it->second; i >= 0; --i) {
        if (!marked[(std::size_t)i]) continue;
        for (const auto& in : tape.nodes[(std::size_t)i].inputs) {
            auto p = tape.producer.find(in.get());
            if (p != tape.producer.end()) marked[(std::size_t)p->second] = 1;
        }
    }

    // zero grads across the marked subgraph before accumulating
    for (std::size_t i = 0; i < tape.nodes.size(); ++i) {
        if (!marked[i]) continue;
        auto& nd = tape.nodes[i];
        nd.output->ensure_grad();
        nd.output->zero_grad();
        for (const auto& in : nd.inputs)
            if (in->requires_grad) {
                in->ensure_grad();
                in->zero_grad();
            }
    }

    loss->grad[0] = T(1);
    for (int i = it->second; i >= 0; --i)
        if (marked[(std::size_t)i]) detail::backward_node(tape.nodes[(std::size_t)i]);
}

// ---------------------------------------------------------------------------
// convenience wrappers
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(TapeT<T>& tp, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return forward(tp, OpId::add, {a, b});
}
template <typename T>
TensorPtr<T> sub(TapeT<T>& tp, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return forward(tp, OpId::sub, {a, b});
}
template <typename T>
TensorPtr<T> mul(TapeT<T>& tp, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return forward(tp, OpId::mul, {a, b});
}
template <typename T>
TensorPtr<T> matmul(TapeT<T>& tp, const TensorPtr<T>& a, const TensorPtr<T>& b,
                    const TensorPtr<T>& bias = nullptr) {
    return bias ? forward(tp, OpId::matmul, {a, b, bias}) : forward(tp, OpId::matmul, {a, b});
}
template <typename T>
TensorPtr<T> conv2d(TapeT<T>& tp, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias = nullptr, int stride = 1) {
    AttrsT<T> at;
    at.stride = stride;
    return bias ? forward(tp, OpId::conv2d, {x, w, bias}, at)
                : forward(tp, OpId::conv2d, {x, w}, at);
}
template <typename T>
TensorPtr<T> conv2d(TapeT<T>& tp, const TensorPtr<T>& x, const TensorPtr<T>& w, int stride) {
    return conv2d(tp, x, w, TensorPtr<T>(), stride);
}
template <typename T>
TensorPtr<T> nearest_upsample2x(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::nearest_upsample2x, {x});
}
template <typename T>
TensorPtr<T> relu(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::relu, {x});
}
template <typename T>
TensorPtr<T> sigmoid(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::sigmoid, {x});
}
template <typename T>
TensorPtr<T> tanh(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::tanh, {x});
}
template <typename T>
TensorPtr<T> batchnorm2d(TapeT<T>& tp, const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                         const TensorPtr<T>& beta, BatchNormState<T>& state, bool training,
                         T momentum = T(0.9), T eps = T(1e-5)) {
    AttrsT<T> at;
    at.training = training;
    at.bn = &state;
    at.momentum = momentum;
    at.eps = eps;
    return forward(tp, OpId::batchnorm2d, {x, gamma, beta}, at);
}
template <typename T>
TensorPtr<T> concat_channels(TapeT<T>& tp, std::vector<TensorPtr<T>> xs) {
    return forward(tp, OpId::concat_channels, std::move(xs));
}
template <typename T>
TensorPtr<T> mean_all(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::mean, {x});
}
template <typename T>
TensorPtr<T> mean_spatial(TapeT<T>& tp, const TensorPtr<T>& x) {
    AttrsT<T> at;
    at.reduce = Reduce::spatial;
    return forward(tp, OpId::mean, {x}, at);
}
template <typename T>
TensorPtr<T> sum_all(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::sum, {x});
}
template <typename T>
TensorPtr<T> bce_with_logits(TapeT<T>& tp, const TensorPtr<T>& z, const TensorPtr<T>& target) {
    return forward(tp, OpId::bce_with_logits, {z, target});
}
template <typename T>
TensorPtr<T> softmax_cross_entropy(TapeT<T>& tp, const TensorPtr<T>& logits,
                                   const TensorPtr<T>& labels) {
    return forward(tp, OpId::softmax_cross_entropy, {logits, labels});
}
template <typename T>
TensorPtr<T> square(TapeT<T>& tp, const TensorPtr<T>& x) {
    return forward(tp, OpId::square, {x});
}
template <typename T>
TensorPtr<T> l2_distance(TapeT<T>& tp, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return forward(tp, OpId::l2_distance, {a, b});
}
template <typename T>
TensorPtr<T> reshape(TapeT<T>& tp, const TensorPtr<T>& x, Shape target) {
    AttrsT<T> at;
    at.target_shape = std::move(target);
    return forward(tp, OpId::reshape, {x}, at);
}
template <typename T>
TensorPtr<T> slice_cols(TapeT<T>& tp, const TensorPtr<T>& x, int start, int len) {
    AttrsT<T> at;
    at.col_start = start;
    at.col_len = len;
    return forward(tp, OpId::slice_cols, {x}, at);
}
template <typename T>
TensorPtr<T> soft_rect_mask(TapeT<T>& tp, const TensorPtr<T>& left, const TensorPtr<T>& right,
                            const TensorPtr<T>& top, const TensorPtr<T>& bottom, int H, int W,
                            T k) {
    AttrsT<T> at;
    at.k = k;
    at.mask_h = H;
    at.mask_w = W;
    return forward(tp, OpId::soft_rect_mask, {left, right, top, bottom}, at);
}
template <typename T>
TensorPtr<T> crop_mask(TapeT<T>& tp, const TensorPtr<T>& image, const TensorPtr<T>& mask) {
    return forward(tp, OpId::crop_mask, {image, mask});
}

}  // namespace dagan
