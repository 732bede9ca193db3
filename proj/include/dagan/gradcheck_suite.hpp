#pragma once

// Miniature finite-difference cases, one per OpId (dims <= 8), all in double.
// Shared by tests/test_diffcore.cpp, the `dagan gradcheck` subcommand and the
// acceptance gate.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dagan/attention.hpp"
#include "dagan/gradcheck.hpp"
#include "dagan/ops.hpp"
#include "dagan/rng.hpp"

namespace dagan {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool passed = false;
};

namespace detail {

inline TensorPtr<double> rand_param(Rng& rng, Shape s, double lo = -1.5, double hi = 1.5,
                                    double keepout = 0.0) {
    auto t = make_param<double>(std::move(s));
    for (auto& v : t->data) {
        do {
            v = rng.uniform(lo, hi);
        } while (keepout > 0.0 && std::abs(v) < keepout);
    }
    return t;
}

// random projection so the loss has distinct sensitivity to every element
inline TensorPtr<double> project(TapeT<double>& tp, const TensorPtr<double>& x, Rng& rng) {
    auto r = make_tensor<double>(x->shape);
    Rng local(rng.state());  // frozen: the projection must not advance between calls
    for (auto& v : r->data) v = local.uniform(-1.0, 1.0);
    return sum_all(tp, mul(tp, x, r));
}

}  // namespace detail

inline std::vector<GradCheckCase> run_op_gradchecks(std::uint64_t seed = 7) {
    using detail::rand_param;
    std::vector<GradCheckCase> out;

    auto run = [&](const std::string& name, const ScalarFn& f,
                   const std::vector<TensorPtr<double>>& params, double tol = 1e-4) {
        GradCheckCase c;
        c.name = name;
        c.tolerance = tol;
        auto rep = finite_diff_check(f, params, 1e-4, tol);
        c.max_rel_err = rep.worst;
        c.passed = rep.pass(tol);
        out.push_back(std::move(c));
    };

    {
        Rng rng(derive_seed(seed, "add"));
        auto a = rand_param(rng, {2, 3}), b = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "add.p"));
        run("add", [&](TapeT<double>& tp) { return detail::project(tp, add(tp, a, b), pr); },
            {a, b});
    }
    {
        Rng rng(derive_seed(seed, "add_scalar"));
        auto a = rand_param(rng, {2, 3}), s = rand_param(rng, {1});
        Rng pr(derive_seed(seed, "add_scalar.p"));
        run("add (scalar broadcast)",
            [&](TapeT<double>& tp) { return detail::project(tp, add(tp, a, s), pr); }, {a, s});
    }
    {
        Rng rng(derive_seed(seed, "sub"));
        auto a = rand_param(rng, {2, 3}), b = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "sub.p"));
        run("sub", [&](TapeT<double>& tp) { return detail::project(tp, sub(tp, a, b), pr); },
            {a, b});
    }
    {
        Rng rng(derive_seed(seed, "sub_scalar"));
        auto s = rand_param(rng, {1}), b = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "sub_scalar.p"));
        run("sub (scalar minuend)",
            [&](TapeT<double>& tp) { return detail::project(tp, sub(tp, s, b), pr); }, {s, b});
    }
    {
        Rng rng(derive_seed(seed, "mul"));
        auto a = rand_param(rng, {2, 3}), b = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "mul.p"));
        run("mul", [&](TapeT<double>& tp) { return detail::project(tp, mul(tp, a, b), pr); },
            {a, b});
    }
    {
        Rng rng(derive_seed(seed, "mul_scalar"));
        auto a = rand_param(rng, {2, 3}), s = rand_param(rng, {1});
        Rng pr(derive_seed(seed, "mul_scalar.p"));
        run("mul (scalar broadcast)",
            [&](TapeT<double>& tp) { return detail::project(tp, mul(tp, a, s), pr); }, {a, s});
    }
    {
        Rng rng(derive_seed(seed, "matmul"));
        auto A = rand_param(rng, {3, 4}), B = rand_param(rng, {4, 2}), bias = rand_param(rng, {2});
        Rng pr(derive_seed(seed, "matmul.p"));
        run("matmul (with bias)",
            [&](TapeT<double>& tp) { return detail::project(tp, matmul(tp, A, B, bias), pr); },
            {A, B, bias});
    }
    {
        Rng rng(derive_seed(seed, "conv1"));
        auto X = rand_param(rng, {2, 3, 6, 5}), W = rand_param(rng, {4, 3, 3, 3});
        auto b = rand_param(rng, {4});
        Rng pr(derive_seed(seed, "conv1.p"));
        run("conv2d (stride 1)",
            [&](TapeT<double>& tp) { return detail::project(tp, conv2d(tp, X, W, b, 1), pr); },
            {X, W, b});
    }
    {
        Rng rng(derive_seed(seed, "conv2"));
        auto X = rand_param(rng, {2, 2, 6, 6}), W = rand_param(rng, {3, 2, 3, 3});
        auto b = rand_param(rng, {3});
        Rng pr(derive_seed(seed, "conv2.p"));
        run("conv2d (stride 2)",
            [&](TapeT<double>& tp) { return detail::project(tp, conv2d(tp, X, W, b, 2), pr); },
            {X, W, b});
    }
    {
        Rng rng(derive_seed(seed, "ups"));
        auto X = rand_param(rng, {1, 2, 3, 3});
        Rng pr(derive_seed(seed, "ups.p"));
        run("nearest_upsample2x",
            [&](TapeT<double>& tp) { return detail::project(tp, nearest_upsample2x(tp, X), pr); },
            {X});
    }
    {
        Rng rng(derive_seed(seed, "relu"));
        // keep values away from the kink: central differences straddle it
        auto X = rand_param(rng, {2, 4}, -2.0, 2.0, 0.1);
        Rng pr(derive_seed(seed, "relu.p"));
        run("relu", [&](TapeT<double>& tp) { return detail::project(tp, relu(tp, X), pr); }, {X});
    }
    {
        Rng rng(derive_seed(seed, "sigmoid"));
        auto X = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "sigmoid.p"));
        run("sigmoid", [&](TapeT<double>& tp) { return detail::project(tp, sigmoid(tp, X), pr); },
            {X});
    }
    {
        Rng rng(derive_seed(seed, "tanh"));
        auto X = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "tanh.p"));
        run("tanh", [&](TapeT<double>& tp) { return detail::project(tp, tanh(tp, X), pr); }, {X});
    }
    {
        Rng rng(derive_seed(seed, "bn"));
        auto X = rand_param(rng, {3, 2, 2, 2});
        auto gamma = rand_param(rng, {2}, 0.5, 1.5), beta = rand_param(rng, {2});
        Rng pr(derive_seed(seed, "bn.p"));
        run("batchnorm2d (training)",
            [&](TapeT<double>& tp) {
                BatchNormState<double> st(2);
                return detail::project(tp, batchnorm2d(tp, X, gamma, beta, st, true), pr);
            },
            {X, gamma, beta});
    }
    {
        Rng rng(derive_seed(seed, "bn_inf"));
        auto X = rand_param(rng, {2, 2, 3, 3});
        auto gamma = rand_param(rng, {2}, 0.5, 1.5), beta = rand_param(rng, {2});
        BatchNormState<double> st(2);
        st.running_mean = {0.2, -0.4};
        st.running_var = {1.3, 0.8};
        Rng pr(derive_seed(seed, "bn_inf.p"));
        run("batchnorm2d (inference)",
            [&](TapeT<double>& tp) {
                return detail::project(tp, batchnorm2d(tp, X, gamma, beta, st, false), pr);
            },
            {X, gamma, beta});
    }
    {
        Rng rng(derive_seed(seed, "concat"));
        auto a = rand_param(rng, {2, 1, 3, 3}), b = rand_param(rng, {2, 2, 3, 3});
        auto c = rand_param(rng, {2, 3, 3, 3});
        Rng pr(derive_seed(seed, "concat.p"));
        run("concat_channels",
            [&](TapeT<double>& tp) {
                return detail::project(tp, concat_channels<double>(tp, {a, b, c}), pr);
            },
            {a, b, c});
    }
    {
        Rng rng(derive_seed(seed, "mean"));
        auto X = rand_param(rng, {2, 3, 2, 2});
        run("mean (all)", [&](TapeT<double>& tp) { return mean_all(tp, X); }, {X});
        Rng pr(derive_seed(seed, "mean.p"));
        run("mean (spatial)",
            [&](TapeT<double>& tp) { return detail::project(tp, mean_spatial(tp, X), pr); }, {X});
    }
    {
        Rng rng(derive_seed(seed, "sum"));
        auto X = rand_param(rng, {2, 3});
        run("sum", [&](TapeT<double>& tp) { return sum_all(tp, X); }, {X});
    }
    {
        Rng rng(derive_seed(seed, "bce"));
        auto Z = rand_param(rng, {2, 3});
        auto Y = make_tensor<double>({2, 3});
        for (auto& v : Y->data) v = rng.uniform(0.0, 1.0);
        run("bce_with_logits", [&](TapeT<double>& tp) { return bce_with_logits(tp, Z, Y); }, {Z});
    }
    {
        Rng rng(derive_seed(seed, "sxe"));
        auto Z = rand_param(rng, {3, 4});
        auto L = make_tensor<double>({3});
        L->data = {0.0, 3.0, 1.0};
        run("softmax_cross_entropy",
            [&](TapeT<double>& tp) { return softmax_cross_entropy(tp, Z, L); }, {Z});
    }
    {
        Rng rng(derive_seed(seed, "square"));
        auto X = rand_param(rng, {2, 3});
        Rng pr(derive_seed(seed, "square.p"));
        run("square", [&](TapeT<double>& tp) { return detail::project(tp, square(tp, X), pr); },
            {X});
    }
    {
        Rng rng(derive_seed(seed, "l2d"));
        auto A = rand_param(rng, {2, 3}), B = rand_param(rng, {2, 3});
        run("l2_distance", [&](TapeT<double>& tp) { return l2_distance(tp, A, B); }, {A, B});
    }
    {
        Rng rng(derive_seed(seed, "reshape"));
        auto X = rand_param(rng, {2, 6});
        Rng pr(derive_seed(seed, "reshape.p"));
        run("reshape",
            [&](TapeT<double>& tp) { return detail::project(tp, reshape(tp, X, {3, 4}), pr); },
            {X});
    }
    {
        Rng rng(derive_seed(seed, "slice"));
        auto X = rand_param(rng, {3, 5});
        Rng pr(derive_seed(seed, "slice.p"));
        run("slice_cols",
            [&](TapeT<double>& tp) { return detail::project(tp, slice_cols(tp, X, 1, 3), pr); },
            {X});
    }
    {
        Rng rng(derive_seed(seed, "mask"));
        auto l = make_param<double>({2}), r = make_param<double>({2});
        auto t = make_param<double>({2}), b = make_param<double>({2});
        l->data = {1.2, 2.1};
        r->data = {4.9, 5.6};
        t->data = {1.8, 0.9};
        b->data = {5.2, 6.1};
        Rng pr(derive_seed(seed, "mask.p"));
        run("soft_rect_mask (k=10)",
            [&](TapeT<double>& tp) {
                return detail::project(tp, soft_rect_mask(tp, l, r, t, b, 8, 7, 10.0), pr);
            },
            {l, r, t, b});
    }
    {
        Rng rng(derive_seed(seed, "crop"));
        auto X = rand_param(rng, {2, 2, 4, 4});
        auto M = rand_param(rng, {2, 4, 4}, 0.05, 0.95);
        Rng pr(derive_seed(seed, "crop.p"));
        run("crop_mask",
            [&](TapeT<double>& tp) { return detail::project(tp, crop_mask(tp, X, M), pr); },
            {X, M});
    }
    return out;
}

/// end-to-end checks through the attention stack: localize -> bounds -> mask
/// -> crop -> encode, differentiated against every DAE parameter. The encoder
/// runs in inference mode (fixed running stats) so repeated evaluations are
/// pure; the training-mode batchnorm path has its own per-op case above.
inline std::vector<GradCheckCase> run_attention_gradchecks(std::uint64_t seed = 7) {
    using detail::rand_param;
    std::vector<GradCheckCase> out;

    NetworkConfig net;
    net.image_h = net.image_w = 8;
    net.channels = 2;
    net.classes = 3;
    net.n_regions = 2;
    net.enc1 = 3;
    net.enc2 = 4;
    net.floc_hidden = 5;

    auto build = [&](double k) {
        AttentionConfig att;
        att.k = k;
        Rng rng(derive_seed(seed, "att_e2e"));
        auto m = std::make_shared<DAEModel<double>>();
        m->init(rng, net, att);
        // nudge running stats off the init values so the affine path is generic
        Rng brng(derive_seed(seed, "att_bn"));
        NamedBuffers<double> bufs;
        m->collect_buffers(bufs, "m");
        for (auto& [name, buf] : bufs)
            for (auto& v : *buf) v += brng.uniform(0.05, 0.3);
        return m;
    };

    auto run = [&](const std::string& name, const ScalarFn& f,
                   const std::vector<TensorPtr<double>>& params) {
        GradCheckCase c;
        c.name = name;
        auto rep = finite_diff_check(f, params, 1e-4, c.tolerance);
        c.max_rel_err = rep.worst;
        c.passed = rep.pass(c.tolerance);
        out.push_back(std::move(c));
    };

    for (double k : {5.0, 20.0}) {
        auto m = build(k);
        Rng xr(derive_seed(seed, "att_x"));
        auto X = rand_param(xr, {2, 2, 8, 8}, -0.9, 0.9);
        NamedParams<double> named;
        m->collect(named, "m");
        std::vector<TensorPtr<double>> params;
        params.reserve(named.size() + 1);
        for (auto& [n, p] : named) params.push_back(p);
        // Input-pixel gradients are only checkable at moderate sharpness: at
        // k=20 pixels in the mask tails have true gradients around 1e-12..1e-8,
        // where the central difference is pure ulp noise and the fixed 1e-8
        // denominator floor can no longer absorb it. Parameter gradients
        // aggregate over pixels and stay well above that band at any k.
        if (k <= 5.0) params.push_back(X);

        Rng pr(derive_seed(seed, "att_proj"));
        run("encode_instances e2e (k=" + std::to_string((int)k) + ")",
            [m, X, &pr](TapeT<double>& tp) {
                auto enc = encode_instances(tp, *m, X, /*training=*/false);
                TensorPtr<double> acc;
                for (const auto& inst : enc.instances) {
                    auto p = detail::project(tp, inst, pr);
                    acc = acc ? add(tp, acc, p) : p;
                }
                // keep the mask path in the loss even where crops saturate
                for (const auto& mask : enc.masks)
                    acc = add(tp, acc, detail::project(tp, mask, pr));
                return acc;
            },
            params);
    }

    {
        auto m = build(10.0);
        Rng xr(derive_seed(seed, "att_geo_x"));
        auto X = rand_param(xr, {3, 2, 8, 8}, -0.9, 0.9);
        auto labels = make_tensor<double>({3});
        labels->data = {0.0, 2.0, 1.0};
        NamedParams<double> named;
        m->collect(named, "m");
        std::vector<TensorPtr<double>> params;
        for (auto& [n, p] : named) params.push_back(p);
        run("geo_regularizer e2e (k=10)",
            [m, X, labels](TapeT<double>& tp) {
                auto enc = encode_instances(tp, *m, X, false);
                return geo_regularizer(tp, *m, enc.instances, labels);
            },
            params);
    }

    return out;
}

}  // namespace dagan
