#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dagan/gradcheck.hpp"
#include "dagan/gradcheck_suite.hpp"
#include "dagan/ops.hpp"
#include "dagan/rng.hpp"

using namespace dagan;

namespace {

template <typename T>
TensorPtr<T> rand_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    auto t = make_tensor<T>(std::move(s));
    for (auto& v : t->data) v = (T)rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("forward examples: sigmoid, conv2d, mul-sum") {
    Tape tp;
    auto z = constant(0.0f);
    CHECK(sigmoid(tp, z)->data[0] == doctest::Approx(0.5));

    // all-ones 5x5 input, all-ones 3x3 kernel: interior 9, corner 4, edge 6
    auto X = make_tensor<float>({1, 1, 5, 5}, 1.0f);
    auto W = make_tensor<float>({1, 1, 3, 3}, 1.0f);
    auto Y = conv2d(tp, X, W);
    REQUIRE(Y->shape == Shape{1, 1, 5, 5});
    CHECK(Y->data[2 * 5 + 2] == doctest::Approx(9.0));
    CHECK(Y->data[0] == doctest::Approx(4.0));
    CHECK(Y->data[1] == doctest::Approx(6.0));

    auto x = make_tensor<float>({3}, {1.0f, 2.0f, 3.0f});
    CHECK(sum_all(tp, mul(tp, x, x))->data[0] == doctest::Approx(14.0));
}

TEST_CASE("backward examples: square-sum, sigmoid, bce") {
    {
        TapeT<double> tp;
        auto x = make_param<double>({3});
        x->data = {1.0, -2.0, 3.0};
        backward(tp, sum_all(tp, square(tp, x)));
        CHECK(x->grad[0] == doctest::Approx(2.0));
        CHECK(x->grad[1] == doctest::Approx(-4.0));
        CHECK(x->grad[2] == doctest::Approx(6.0));
    }
    {
        TapeT<double> tp;
        auto x = make_param<double>({1});
        backward(tp, sigmoid(tp, x));
        CHECK(x->grad[0] == doctest::Approx(0.25));
    }
    {
        TapeT<double> tp;
        auto z = make_param<double>({1});
        auto y = constant(1.0);
        auto loss = bce_with_logits(tp, z, y);
        CHECK(loss->data[0] == doctest::Approx(0.6931471805599453));
        backward(tp, loss);
        CHECK(z->grad[0] == doctest::Approx(-0.5));
    }
}

TEST_CASE("conv2d agrees with quadruple-loop oracle") {
    Rng rng(21);
    const int N = 2, C = 3, H = 8, W = 8, F = 4;
    for (int stride : {1, 2}) {
        auto X = rand_tensor<float>(rng, {N, C, H, W});
        auto Wt = rand_tensor<float>(rng, {F, C, 3, 3});
        auto b = rand_tensor<float>(rng, {F});
        Tape tp;
        auto Y = conv2d(tp, X, Wt, b, stride);
        const int HO = (H + 2 - 3) / stride + 1, WO = (W + 2 - 3) / stride + 1;
        REQUIRE(Y->shape == Shape{N, F, HO, WO});
        for (int n = 0; n < N; ++n)
            for (int f = 0; f < F; ++f)
                for (int oy = 0; oy < HO; ++oy)
                    for (int ox = 0; ox < WO; ++ox) {
                        double acc = b->data[f];
                        for (int c = 0; c < C; ++c)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int iy = oy * stride + ky - 1;
                                    const int ix = ox * stride + kx - 1;
                                    if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                    acc += (double)X->data[((n * C + c) * H + iy) * W + ix] *
                                           Wt->data[((f * C + c) * 3 + ky) * 3 + kx];
                                }
                        const double got = Y->data[((n * F + f) * HO + oy) * WO + ox];
                        CHECK(std::abs(got - acc) <= 1e-6);
                    }
    }
}

TEST_CASE("forward is pure: bit-identical repeat evaluation") {
    Rng rng(22);
    auto X = rand_tensor<float>(rng, {2, 3, 8, 8});
    auto W = rand_tensor<float>(rng, {4, 3, 3, 3});
    Tape tp;
    auto a = conv2d(tp, X, W, 2);
    auto b = conv2d(tp, X, W, 2);
    CHECK(std::memcmp(a->data.data(), b->data.data(), a->size() * sizeof(float)) == 0);
}

TEST_CASE("batchnorm2d normalizes batches and tracks running stats") {
    Rng rng(23);
    const int N = 4, C = 3, H = 5, W = 5;
    auto X = rand_tensor<float>(rng, {N, C, H, W}, -3.0, 2.0);
    auto gamma = make_tensor<float>({C}, 1.0f);
    auto beta = make_tensor<float>({C}, 0.0f);
    BatchNormState<float> st(C);
    Tape tp;
    auto Y = batchnorm2d(tp, X, gamma, beta, st, true);

    const std::size_t plane = H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0, var = 0;
        for (int n = 0; n < N; ++n)
            for (std::size_t i = 0; i < plane; ++i)
                mean += Y->data[((std::size_t)n * C + c) * plane + i];
        mean /= N * plane;
        for (int n = 0; n < N; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = Y->data[((std::size_t)n * C + c) * plane + i] - mean;
                var += d * d;
            }
        var /= N * plane;
        CHECK(std::abs(mean) <= 1e-5);
        CHECK(std::abs(var - 1.0) <= 1e-4);

        // running = 0.9*old + 0.1*batch, from (0, 1) init
        double bmean = 0;
        for (int n = 0; n < N; ++n)
            for (std::size_t i = 0; i < plane; ++i)
                bmean += X->data[((std::size_t)n * C + c) * plane + i];
        bmean /= N * plane;
        CHECK(st.running_mean[c] == doctest::Approx(0.1 * bmean).epsilon(1e-4));
    }

    // inference mode applies the affine running-stat transform
    BatchNormState<float> st2(1);
    st2.running_mean = {2.0f};
    st2.running_var = {4.0f};
    auto X2 = make_tensor<float>({1, 1, 1, 2}, {4.0f, 0.0f});
    auto g2 = make_tensor<float>({1}, 3.0f);
    auto b2 = make_tensor<float>({1}, 1.0f);
    auto Y2 = batchnorm2d(tp, X2, g2, b2, st2, false);
    CHECK(Y2->data[0] == doctest::Approx(3.0 * (4.0 - 2.0) / std::sqrt(4.0 + 1e-5) + 1.0));
    CHECK(Y2->data[1] == doctest::Approx(3.0 * (0.0 - 2.0) / std::sqrt(4.0 + 1e-5) + 1.0));
    // inference must not touch the running stats
    CHECK(st2.running_mean[0] == 2.0f);
    CHECK(st2.running_var[0] == 4.0f);
}

TEST_CASE("elementwise broadcast and simple op values") {
    Tape tp;
    auto x = make_tensor<float>({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto s = constant(10.0f);
    CHECK(add(tp, x, s)->data[3] == doctest::Approx(14.0));
    CHECK(sub(tp, s, x)->data[0] == doctest::Approx(9.0));
    CHECK(mul(tp, x, s)->data[2] == doctest::Approx(30.0));

    auto up = nearest_upsample2x(tp, reshape(tp, x, {1, 1, 2, 2}));
    REQUIRE(up->shape == Shape{1, 1, 4, 4});
    // [[1,2],[3,4]] -> each value fills its 2x2 block
    CHECK(up->data[0] == 1.0f);
    CHECK(up->data[1] == 1.0f);
    CHECK(up->data[2] == 2.0f);
    CHECK(up->data[5] == 1.0f);
    CHECK(up->data[8] == 3.0f);
    CHECK(up->data[10] == 4.0f);
    CHECK(up->data[15] == 4.0f);

    auto a = make_tensor<float>({2}, {1.0f, 2.0f});
    auto b = make_tensor<float>({2}, {1.5f, 2.5f});
    CHECK(l2_distance(tp, a, b)->data[0] == doctest::Approx(0.25));

    auto m = mean_spatial(tp, reshape(tp, x, {1, 1, 2, 2}));
    REQUIRE(m->shape == Shape{1, 1});
    CHECK(m->data[0] == doctest::Approx(2.5));

    auto sl = slice_cols(tp, x, 1, 1);
    REQUIRE(sl->shape == Shape{2, 1});
    CHECK(sl->data[0] == 2.0f);
    CHECK(sl->data[1] == 4.0f);
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln C") {
    TapeT<double> tp;
    auto z = make_tensor<double>({2, 10}, 0.3);  // any constant row
    auto lab = make_tensor<double>({2});
    lab->data = {4.0, 9.0};
    CHECK(softmax_cross_entropy(tp, z, lab)->data[0] ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("concat_channels layout and backward routing") {
    TapeT<double> tp;
    auto a = make_param<double>({1, 1, 2, 2});
    a->data = {1, 2, 3, 4};
    auto b = make_param<double>({1, 2, 2, 2});
    b->data = {5, 6, 7, 8, 9, 10, 11, 12};
    auto y = concat_channels<double>(tp, {a, b});
    REQUIRE(y->shape == Shape{1, 3, 2, 2});
    CHECK(y->data[0] == 1);
    CHECK(y->data[4] == 5);
    CHECK(y->data[11] == 12);

    // weight the concat so each slot has a distinct gradient
    auto w = make_tensor<double>({1, 3, 2, 2});
    for (std::size_t i = 0; i < 12; ++i) w->data[i] = (double)i;
    backward(tp, sum_all(tp, mul(tp, y, w)));
    CHECK(a->grad[3] == doctest::Approx(3.0));
    CHECK(b->grad[0] == doctest::Approx(4.0));
    CHECK(b->grad[7] == doctest::Approx(11.0));
}

TEST_CASE("backward is ancestry-scoped: two losses on one tape") {
    TapeT<double> tp;
    auto x = make_param<double>({2});
    x->data = {3.0, -1.0};
    auto c = make_tensor<double>({2});
    c->data = {5.0, 7.0};

    auto l1 = sum_all(tp, square(tp, x));
    auto l2 = sum_all(tp, mul(tp, x, c));

    backward(tp, l1);
    CHECK(x->grad[0] == doctest::Approx(6.0));
    CHECK(x->grad[1] == doctest::Approx(-2.0));

    backward(tp, l2);  // must not retain the square-loss gradient
    CHECK(x->grad[0] == doctest::Approx(5.0));
    CHECK(x->grad[1] == doctest::Approx(7.0));
}

TEST_CASE("gradient routing: detach and frozen parameters") {
    TapeT<double> tp;
    auto x = make_param<double>({2});
    x->data = {1.0, 2.0};
    auto d = detach(x);
    CHECK_FALSE(d->requires_grad);
    auto w = make_param<double>({2});
    w->data = {0.5, 0.25};

    backward(tp, sum_all(tp, mul(tp, d, w)));
    CHECK_FALSE(x->has_grad());  // nothing flows through the detach
    CHECK(w->grad[0] == doctest::Approx(1.0));
    CHECK(w->grad[1] == doctest::Approx(2.0));

    // freezing: requires_grad off leaves the grad slot untouched by the sweep
    w->requires_grad = false;
    auto y = make_param<double>({2});
    y->data = {1.0, 1.0};
    backward(tp, sum_all(tp, mul(tp, y, w)));
    CHECK(y->grad[0] == doctest::Approx(0.5));
    CHECK(w->grad[0] == doctest::Approx(1.0));  // exactly as the first sweep left it
    CHECK(w->grad[1] == doctest::Approx(2.0));
}

TEST_CASE("recording=false keeps the tape empty") {
    Tape tp;
    tp.recording = false;
    auto x = make_param<float>({2, 2});
    auto y = relu(tp, x);
    CHECK(y->requires_grad);
    CHECK(tp.nodes.empty());
}

TEST_CASE("shape and argument rejections carry op names") {
    Tape tp;
    auto a = make_tensor<float>({2, 3});
    auto b = make_tensor<float>({3, 2});
    CHECK_THROWS_WITH_AS(add(tp, a, b), doctest::Contains("add"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(tp, a, b), doctest::Contains("[2,3]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(tp, a, b), doctest::Contains("[3,2]"), std::invalid_argument);

    CHECK_THROWS_AS(matmul(tp, a, a), std::invalid_argument);

    auto X = make_tensor<float>({1, 1, 4, 4});
    auto W = make_tensor<float>({1, 1, 3, 3});
    AttrsT<float> at;
    at.stride = 3;
    CHECK_THROWS_WITH_AS(forward(tp, OpId::conv2d, {X, W}, at), doctest::Contains("stride"),
                         std::invalid_argument);

    CHECK_THROWS_WITH_AS(reshape(tp, a, {4, 4}), doctest::Contains("reshape"),
                         std::invalid_argument);
    CHECK_THROWS_AS(slice_cols(tp, a, 2, 5), std::invalid_argument);

    auto z = make_tensor<float>({2, 3});
    auto lab = make_tensor<float>({2});
    lab->data = {0.0f, 3.0f};  // 3 out of range for C=3
    CHECK_THROWS_WITH_AS(softmax_cross_entropy(tp, z, lab), doctest::Contains("label out of range"),
                         std::invalid_argument);

    // non-scalar loss
    auto p = make_param<float>({2});
    auto out = relu(tp, p);
    CHECK_THROWS_WITH_AS(backward(tp, out), doctest::Contains("scalar"), std::invalid_argument);
}

TEST_CASE("finite_diff_check guards: epsilon range and determinism") {
    auto x = make_param<double>({2});
    x->data = {0.3, -0.4};
    ScalarFn f = [&](TapeT<double>& tp) { return sum_all(tp, square(tp, x)); };
    CHECK_THROWS_AS(finite_diff_check(f, {x}, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check(f, {x}, 0.5), std::invalid_argument);

    int calls = 0;
    ScalarFn bad = [&](TapeT<double>& tp) {
        auto c = constant((double)++calls);
        return sum_all(tp, mul(tp, x, c));
    };
    CHECK_THROWS_AS(finite_diff_check(bad, {x}), std::runtime_error);
}

TEST_CASE("finite_diff_check examples: linear matmul and constant") {
    Rng rng(31);
    auto W = make_param<double>({3, 3});
    for (auto& v : W->data) v = rng.uniform(-1.0, 1.0);
    auto x = make_tensor<double>({3, 1});
    for (auto& v : x->data) v = rng.uniform(-1.0, 1.0);
    ScalarFn f = [&](TapeT<double>& tp) { return sum_all(tp, matmul(tp, W, x)); };
    auto rep = finite_diff_check(f, {W});
    CHECK(rep.worst < 1e-5);  // exact for a linear map, up to rounding

    // constant function: analytic and numeric grads both zero
    auto p = make_param<double>({2});
    p->data = {1.0, 2.0};
    auto zero = make_tensor<double>({2}, 0.0);
    ScalarFn fc = [&](TapeT<double>& tp) { return sum_all(tp, mul(tp, p, zero)); };
    auto repc = finite_diff_check(fc, {p});
    CHECK(repc.worst == doctest::Approx(0.0));
}

TEST_CASE("every OpId passes finite differences at 1e-4 (64-bit mode)") {
    auto cases = run_op_gradchecks(7);
    CHECK(cases.size() >= 21);  // all ops incl. broadcast/stride/mode variants
    for (const auto& c : cases) {
        INFO(c.name, " max rel err ", c.max_rel_err);
        CHECK(c.passed);
    }
}
