#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dagan/attention.hpp"
#include "dagan/rng.hpp"

using namespace dagan;

namespace {

template <typename T>
TensorPtr<T> rand_input(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    auto t = make_tensor<T>(std::move(s));
    for (auto& v : t->data) v = (T)rng.uniform(lo, hi);
    return t;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Eq.-style direct evaluation at one integer pixel
double mask_oracle(double l, double r, double t, double b, double k, int x, int y) {
    return (sig(k * (x - l)) - sig(k * (x - r))) * (sig(k * (y - t)) - sig(k * (y - b)));
}

DAEModel<double> mini_dae(std::uint64_t seed, int n_regions = 2, int classes = 3) {
    NetworkConfig net;
    net.image_h = net.image_w = 16;
    net.channels = 2;
    net.classes = classes;
    net.n_regions = n_regions;
    net.enc1 = 3;
    net.enc2 = 4;
    net.floc_hidden = 5;
    AttentionConfig att;
    Rng rng(seed);
    DAEModel<double> m;
    m.init(rng, net, AttentionConfig::with_defaults(att, net.image_h, net.image_w));
    return m;
}

}  // namespace

TEST_CASE("attention config: validation and k anneal") {
    AttentionConfig c;
    c.half_width = c.half_height = 4.0;
    CHECK_NOTHROW(c.validate(16, 16));

    AttentionConfig bad_k = c;
    bad_k.k = 0.0;
    CHECK_THROWS_AS(bad_k.validate(16, 16), std::invalid_argument);

    AttentionConfig bad_r = c;
    bad_r.n_regions = 0;
    CHECK_THROWS_AS(bad_r.validate(16, 16), std::invalid_argument);

    AttentionConfig wide = c;
    wide.half_width = 9.0;
    CHECK_THROWS_AS(wide.validate(16, 16), std::invalid_argument);

    CHECK(c.effective_k(123) == 10.0);  // anneal off
    AttentionConfig ann = c;
    ann.k_anneal = true;
    ann.k_start = 10.0;
    ann.k_end = 50.0;
    ann.k_anneal_steps = 100;
    CHECK(ann.effective_k(0) == doctest::Approx(10.0));
    CHECK(ann.effective_k(50) == doctest::Approx(30.0));
    CHECK(ann.effective_k(100) == doctest::Approx(50.0));
    CHECK(ann.effective_k(5000) == doctest::Approx(50.0));

    // defaults derive quarter extents
    AttentionConfig d;
    auto filled = AttentionConfig::with_defaults(d, 16, 32);
    CHECK(filled.half_height == doctest::Approx(4.0));
    CHECK(filled.half_width == doctest::Approx(8.0));
}

TEST_CASE("region_bounds: direct substitution") {
    TapeT<double> tp;
    tp.recording = false;
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 2}, {16.0, 10.0});
    c.ys = make_tensor<double>({1, 2}, {10.0, 16.0});

    AttentionConfig cfg;
    cfg.half_width = 8.0;
    cfg.half_height = 10.0;
    auto b = region_bounds(tp, c, cfg);
    CHECK(b.left->data[0] == doctest::Approx(8.0));
    CHECK(b.right->data[0] == doctest::Approx(24.0));
    CHECK(b.top->data[0] == doctest::Approx(0.0));
    CHECK(b.bottom->data[0] == doctest::Approx(20.0));

    // extent invariant holds for every region
    for (int r = 0; r < 2; ++r) {
        CHECK(b.right->data[r] - b.left->data[r] == doctest::Approx(2 * cfg.half_width));
        CHECK(b.bottom->data[r] - b.top->data[r] == doctest::Approx(2 * cfg.half_height));
    }

    // w = h = 0.5 gives a 1x1-extent region around the center
    AttentionConfig tiny;
    tiny.half_width = tiny.half_height = 0.5;
    auto tb = region_bounds(tp, c, tiny);
    CHECK(tb.right->data[0] - tb.left->data[0] == doctest::Approx(1.0));
}

TEST_CASE("localize: zeroed head centers everything at the midpoint") {
    auto m = mini_dae(31);
    std::fill(m.floc_w2->data.begin(), m.floc_w2->data.end(), 0.0);
    std::fill(m.floc_b2->data.begin(), m.floc_b2->data.end(), 0.0);

    TapeT<double> tp;
    tp.recording = false;
    Rng rng(5);
    auto x = rand_input<double>(rng, {3, 2, 16, 16});
    auto enc = encode_instances(tp, m, x, false);
    for (double v : enc.centers.xs->data) CHECK(v == doctest::Approx(8.0));
    for (double v : enc.centers.ys->data) CHECK(v == doctest::Approx(8.0));
}

TEST_CASE("localize: centers stay inside the admissible box") {
    NetworkConfig net;
    net.image_h = net.image_w = 32;
    net.channels = 2;
    net.classes = 3;
    net.n_regions = 4;
    net.enc1 = 3;
    net.enc2 = 4;
    net.floc_hidden = 6;
    AttentionConfig att = AttentionConfig::with_defaults({}, 32, 32);  // w = h = 8
    Rng rng(32);
    DAEModel<double> m;
    m.init(rng, net, att);
    // exaggerate the head so tanh saturates and probes the box edges
    for (auto& v : m.floc_w2->data) v *= 400.0;

    TapeT<double> tp;
    tp.recording = false;
    auto x = rand_input<double>(rng, {4, 2, 32, 32});
    auto enc = encode_instances(tp, m, x, false);
    REQUIRE(enc.centers.xs->shape == Shape{4, 4});
    for (double v : enc.centers.xs->data) {
        CHECK(v >= 8.0);
        CHECK(v <= 24.0);
    }
    for (double v : enc.centers.ys->data) {
        CHECK(v >= 8.0);
        CHECK(v <= 24.0);
    }
}

TEST_CASE("localize: centers respond to f_loc weights") {
    auto m = mini_dae(33);
    TapeT<double> tp;
    Rng rng(6);
    auto x = rand_input<double>(rng, {2, 2, 16, 16});
    auto enc = encode_instances(tp, m, x, false);
    backward(tp, add(tp, sum_all(tp, enc.centers.xs), sum_all(tp, enc.centers.ys)));

    auto nonzero = [](const std::vector<double>& g) {
        for (double v : g)
            if (v != 0.0) return true;
        return false;
    };
    CHECK(nonzero(m.floc_w2->grad));
    CHECK(nonzero(m.floc_w1->grad));
}

TEST_CASE("make_mask: values match the per-pixel oracle and stay in [0,1]") {
    TapeT<double> tp;
    tp.recording = false;
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 2}, {5.5, 9.25});
    c.ys = make_tensor<double>({1, 2}, {7.0, 4.5});
    AttentionConfig cfg;
    cfg.half_width = 3.2;
    cfg.half_height = 2.7;

    auto b = region_bounds(tp, c, cfg);
    for (double k : {10.0, 50.0}) {
        auto masks = make_mask(tp, b, 16, 16, k);
        REQUIRE(masks.size() == 2);
        for (int r = 0; r < 2; ++r) {
            REQUIRE(masks[(std::size_t)r]->shape == Shape{1, 16, 16});
            double l = c.xs->data[r] - cfg.half_width, rr = c.xs->data[r] + cfg.half_width;
            double t = c.ys->data[r] - cfg.half_height, bo = c.ys->data[r] + cfg.half_height;
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    double got = masks[(std::size_t)r]->data[(std::size_t)y * 16 + x];
                    CHECK(std::fabs(got - mask_oracle(l, rr, t, bo, k, x, y)) <= 1e-6);
                    // difference form saturates: far field rounds to exact 0,
                    // deep interior to exact 1
                    CHECK(got >= 0.0);
                    CHECK(got <= 1.0);
                }
        }
    }
}

TEST_CASE("make_mask: k=50 step-function landmarks") {
    TapeT<double> tp;
    tp.recording = false;
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 1}, {8.0});
    c.ys = make_tensor<double>({1, 1}, {8.0});
    AttentionConfig cfg;
    cfg.half_width = cfg.half_height = 4.0;  // region [4,12] x [4,12]

    auto mask = make_mask(tp, region_bounds(tp, c, cfg), 16, 16, 50.0)[0];
    auto at = [&](int x, int y) { return mask->data[(std::size_t)y * 16 + x]; };
    CHECK(std::fabs(at(8, 8) - 1.0) <= 1e-3);   // center
    CHECK(at(3, 3) <= 1e-3);                    // one unit outside both axes
    CHECK(at(13, 13) <= 1e-3);
    CHECK(std::fabs(at(4, 8) - 0.5) <= 1e-3);   // exactly on the left edge, interior y
}

TEST_CASE("make_mask: step limit at k=50 beyond 0.2 px of a boundary") {
    TapeT<double> tp;
    tp.recording = false;
    // non-integer bounds so pixels land at assorted distances
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 1}, {6.75});
    c.ys = make_tensor<double>({1, 1}, {7.8});
    AttentionConfig cfg;
    cfg.half_width = 3.45;
    cfg.half_height = 5.2;

    auto mask = make_mask(tp, region_bounds(tp, c, cfg), 16, 16, 50.0)[0];
    double l = 6.75 - 3.45, r = 6.75 + 3.45, t = 7.8 - 5.2, b = 7.8 + 5.2;
    int checked = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            double dist = std::min(std::min(std::fabs(x - l), std::fabs(x - r)),
                                   std::min(std::fabs(y - t), std::fabs(y - b)));
            if (dist <= 0.2) continue;
            double ind = (x > l && x < r && y > t && y < b) ? 1.0 : 0.0;
            CHECK(std::fabs(mask->data[(std::size_t)y * 16 + x] - ind) <= 1e-3);
            ++checked;
        }
    CHECK(checked > 200);  // limit holds over nearly the whole grid
}

TEST_CASE("make_mask: separable rank-1 structure") {
    TapeT<double> tp;
    tp.recording = false;
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 1}, {9.3});
    c.ys = make_tensor<double>({1, 1}, {6.1});
    AttentionConfig cfg;
    cfg.half_width = 4.1;
    cfg.half_height = 3.6;
    auto mask = make_mask(tp, region_bounds(tp, c, cfg), 16, 16, 10.0)[0];

    // pivot at the max pixel, reconstruct m = row x col / pivot
    std::size_t pivot = 0;
    for (std::size_t i = 0; i < mask->data.size(); ++i)
        if (mask->data[i] > mask->data[pivot]) pivot = i;
    int py = (int)(pivot / 16), px = (int)(pivot % 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            double recon = mask->data[(std::size_t)y * 16 + px] *
                           mask->data[(std::size_t)py * 16 + x] / mask->data[pivot];
            CHECK(std::fabs(recon - mask->data[(std::size_t)y * 16 + x]) <= 1e-6);
        }
}

TEST_CASE("make_mask: monotone sharpness over the k ladder") {
    TapeT<double> tp;
    tp.recording = false;
    RegionCenters<double> c;
    c.xs = make_tensor<double>({1, 1}, {7.4});
    c.ys = make_tensor<double>({1, 1}, {8.6});
    AttentionConfig cfg;
    cfg.half_width = 3.3;
    cfg.half_height = 4.4;
    double l = 7.4 - 3.3, r = 7.4 + 3.3, t = 8.6 - 4.4, b = 8.6 + 4.4;

    std::vector<TensorPtr<double>> ladder;
    for (double k : {5.0, 10.0, 20.0, 50.0})
        ladder.push_back(make_mask(tp, region_bounds(tp, c, cfg), 16, 16, k)[0]);

    int interior = 0, exterior = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            bool in = x > l + 1 && x < r - 1 && y > t + 1 && y < b - 1;
            bool out = x < l - 1 || x > r + 1 || y < t - 1 || y > b + 1;
            for (std::size_t i = 1; i < ladder.size(); ++i) {
                double prev = ladder[i - 1]->data[(std::size_t)y * 16 + x];
                double cur = ladder[i]->data[(std::size_t)y * 16 + x];
                if (in) CHECK(cur >= prev);
                if (out) CHECK(cur <= prev);
            }
            interior += in;
            exterior += out;
        }
    CHECK(interior >= 9);
    CHECK(exterior >= 100);
}

TEST_CASE("crop: identity, annihilator, and per-pixel oracle") {
    TapeT<double> tp;
    tp.recording = false;
    Rng rng(41);
    auto img = rand_input<double>(rng, {2, 3, 4, 4});

    auto ones = make_tensor<double>({2, 4, 4}, 1.0);
    auto same = crop(tp, img, ones);
    CHECK(same->data == img->data);

    auto zeros = make_tensor<double>({2, 4, 4}, 0.0);
    auto blank = crop(tp, img, zeros);
    for (double v : blank->data) CHECK(v == 0.0);

    auto mask = rand_input<double>(rng, {2, 4, 4}, 0.0, 1.0);
    auto got = crop(tp, img, mask);
    for (int n = 0; n < 2; ++n)
        for (int ch = 0; ch < 3; ++ch)
            for (int p = 0; p < 16; ++p) {
                double want = img->data[((std::size_t)n * 3 + ch) * 16 + p] *
                              mask->data[(std::size_t)n * 16 + p];
                CHECK(std::fabs(got->data[((std::size_t)n * 3 + ch) * 16 + p] - want) <= 1e-6);
            }

    auto wrong = make_tensor<double>({2, 3, 3}, 1.0);
    CHECK_THROWS_AS(crop(tp, img, wrong), std::invalid_argument);
}

TEST_CASE("encode_instances: shapes, purity, batch-composition invariance") {
    auto m = mini_dae(51, /*n_regions=*/4);
    TapeT<double> tp;
    tp.recording = false;
    Rng rng(52);
    auto x = rand_input<double>(rng, {2, 2, 16, 16});

    auto enc = encode_instances(tp, m, x, false);
    REQUIRE(enc.instances.size() == 4);
    REQUIRE(enc.masks.size() == 4);
    for (auto& inst : enc.instances) CHECK(inst->shape == Shape{2, 4, 4, 4});
    for (auto& mask : enc.masks) CHECK(mask->shape == Shape{2, 16, 16});

    // purity: same input, same features
    auto enc2 = encode_instances(tp, m, x, false);
    for (std::size_t i = 0; i < enc.instances.size(); ++i)
        CHECK(enc2.instances[i]->data == enc.instances[i]->data);

    // inference-mode features of a sample do not depend on its batch peers
    auto y = rand_input<double>(rng, {2, 2, 16, 16});
    std::copy(x->data.begin(), x->data.begin() + (std::ptrdiff_t)x->size() / 2, y->data.begin());
    auto enc3 = encode_instances(tp, m, y, false);
    const std::size_t half = enc.instances[0]->size() / 2;
    for (std::size_t i = 0; i < enc.instances.size(); ++i)
        for (std::size_t j = 0; j < half; ++j)
            CHECK(enc3.instances[i]->data[j] == enc.instances[i]->data[j]);

    CHECK_THROWS_AS(encode_instances(tp, m, rand_input<double>(rng, {1, 2, 8, 8}), false),
                    std::invalid_argument);
}

TEST_CASE("encode: identity mask reduces to plain encoding") {
    auto m = mini_dae(61, /*n_regions=*/1);
    TapeT<double> tp;
    tp.recording = false;
    Rng rng(62);
    auto x = rand_input<double>(rng, {2, 2, 16, 16});

    // E(image) = encoder applied to the DAE's [0,1]-normalized input
    auto ones = make_tensor<double>({2, 16, 16}, 1.0);
    auto inst =
        encoder_forward(tp, m.encoder, crop(tp, dae_input_norm(tp, x), ones), false);
    auto plain = encoder_forward(tp, m.encoder, dae_input_norm(tp, x), false);
    CHECK(inst->data == plain->data);

    // the no_dae path is exactly the plain encoding
    auto whole = encode_whole_image(tp, m, x, false);
    REQUIRE(whole.instances.size() == 1);
    CHECK(whole.instances[0]->data == plain->data);
}

TEST_CASE("geo_regularizer: zeroed head emits ln C") {
    auto m = mini_dae(71, 2, /*classes=*/10);
    std::fill(m.geo_w->data.begin(), m.geo_w->data.end(), 0.0);
    std::fill(m.geo_b->data.begin(), m.geo_b->data.end(), 0.0);

    TapeT<double> tp;
    tp.recording = false;
    Rng rng(72);
    auto x = rand_input<double>(rng, {3, 2, 16, 16});
    auto labels = make_tensor<double>({3}, {0.0, 4.0, 9.0});
    auto enc = encode_instances(tp, m, x, false);
    auto loss = geo_regularizer(tp, m, enc.instances, labels);
    CHECK(std::fabs(loss->data[0] - std::log(10.0)) <= 1e-9);
}

TEST_CASE("geo_regularizer: matches a direct cross-entropy oracle") {
    auto m = mini_dae(81);
    TapeT<double> tp;
    tp.recording = false;
    Rng rng(82);
    auto x = rand_input<double>(rng, {3, 2, 16, 16});
    auto labels = make_tensor<double>({3}, {2.0, 0.0, 1.0});
    auto enc = encode_instances(tp, m, x, false);
    auto loss = geo_regularizer(tp, m, enc.instances, labels);

    // oracle: pool each instance by hand, concat, linear head, stable log-softmax
    const int N = 3, Ce = 4, R = 2, C = 3, hw = 16;
    std::vector<double> feats((std::size_t)N * R * Ce);
    for (int r = 0; r < R; ++r)
        for (int n = 0; n < N; ++n)
            for (int ch = 0; ch < Ce; ++ch) {
                double s = 0;
                for (int p = 0; p < hw; ++p)
                    s += enc.instances[(std::size_t)r]->data[((std::size_t)n * Ce + ch) * hw + p];
                feats[((std::size_t)n * R + r) * Ce + ch] = s / hw;
            }
    double total = 0;
    for (int n = 0; n < N; ++n) {
        double z[3];
        for (int c = 0; c < C; ++c) {
            z[c] = m.geo_b->data[(std::size_t)c];
            for (int f = 0; f < R * Ce; ++f)
                z[c] += feats[(std::size_t)n * R * Ce + f] * m.geo_w->data[(std::size_t)f * C + c];
        }
        double zmax = std::max({z[0], z[1], z[2]});
        double lse = std::log(std::exp(z[0] - zmax) + std::exp(z[1] - zmax) + std::exp(z[2] - zmax)) + zmax;
        total += lse - z[(int)labels->data[(std::size_t)n]];
    }
    CHECK(std::fabs(loss->data[0] - total / N) <= 1e-6);
}

TEST_CASE("geo_regularizer: label out of range is rejected") {
    auto m = mini_dae(91);
    TapeT<double> tp;
    tp.recording = false;
    Rng rng(92);
    auto x = rand_input<double>(rng, {2, 2, 16, 16});
    auto enc = encode_instances(tp, m, x, false);
    auto bad = make_tensor<double>({2}, {0.0, 3.0});  // classes = 3
    CHECK_THROWS_AS(geo_regularizer(tp, m, enc.instances, bad), std::invalid_argument);
}
