#pragma once

// Deep Attention Encoder: localization, region parameterization, soft
// rectangular masks, elementwise cropping, instance encoding, and the
// geometric regularizer. Region centers are squashed into the admissible box
// [w, W-w] x [h, H-h] with a tanh, so masks stay well-defined and
// differentiable no matter what f_loc emits.

#include <stdexcept>
#include <string>
#include <vector>

#include "dagan/networks.hpp"
#include "dagan/ops.hpp"
#include "dagan/rng.hpp"

namespace dagan {

struct AttentionConfig {
    int n_regions = 1;
    double k = 10.0;          // sigmoid sharpness during training
    double half_width = 0.0;  // (w, h); 0 = derive the W/4, H/4 default
    double half_height = 0.0;
    // optional linear anneal of k
    bool k_anneal = false;
    double k_start = 10.0, k_end = 50.0;
    int k_anneal_steps = 0;

    void validate(int image_h, int image_w) const {
        if (n_regions < 1) throw std::invalid_argument("attention: n_regions must be >= 1");
        if (k <= 0.0) throw std::invalid_argument("attention: k must be positive");
        const double w = half_width, h = half_height;
        if (w <= 0.0 || h <= 0.0)
            throw std::invalid_argument("attention: half extents must be positive");
        if (2.0 * w > image_w || 2.0 * h > image_h)
            throw std::invalid_argument("attention: half extents exceed half the grid");
        if (k_anneal && (k_anneal_steps <= 0 || k_start <= 0.0 || k_end <= 0.0))
            throw std::invalid_argument("attention: bad k anneal range");
    }

    double effective_k(int step) const {
        if (!k_anneal) return k;
        const double t = std::min(1.0, std::max(0.0, (double)step / (double)k_anneal_steps));
        return k_start + (k_end - k_start) * t;
    }

    static AttentionConfig with_defaults(AttentionConfig c, int image_h, int image_w) {
        if (c.half_width <= 0.0) c.half_width = image_w / 4.0;
        if (c.half_height <= 0.0) c.half_height = image_h / 4.0;
        c.validate(image_h, image_w);
        return c;
    }
};

/// centers as tape tensors, each [N, n_regions]
template <typename T>
struct RegionCenters {
    TensorPtr<T> xs, ys;
};

/// four [N, n_regions] tensors; right-left == 2w, bottom-top == 2h
template <typename T>
struct RegionBounds {
    TensorPtr<T> left, right, top, bottom;
};

/// everything encode_instances produces (instances drive the losses; centers
/// and masks are exposed for diagnostics and tests)
template <typename T>
struct InstanceEncoding {
    std::vector<TensorPtr<T>> instances;  // n_regions tensors [N, Ce, H/4, W/4]
    RegionCenters<T> centers;
    std::vector<TensorPtr<T>> masks;      // n_regions tensors [N, H, W]
};

template <typename T>
struct DAEModel {
    EncoderModel<T> encoder;
    TensorPtr<T> floc_w1, floc_b1, floc_w2, floc_b2;
    TensorPtr<T> geo_w, geo_b;  // auxiliary classifier over pooled instances
    AttentionConfig att;
    int image_h = 0, image_w = 0, classes = 0;

    void init(Rng& rng, const NetworkConfig& net, AttentionConfig att_cfg) {
        net.validate();
        att = AttentionConfig::with_defaults(att_cfg, net.image_h, net.image_w);
        att.n_regions = net.n_regions;
        image_h = net.image_h;
        image_w = net.image_w;
        classes = net.classes;
        encoder.init(rng, net.channels, net.enc1, net.enc2);
        floc_w1 = make_param<T>({net.enc2, net.floc_hidden});
        detail::he_init(rng, *floc_w1, net.enc2);
        floc_b1 = make_param<T>({net.floc_hidden});
        floc_w2 = make_param<T>({net.floc_hidden, 2 * net.n_regions});
        // near-zero head: centers start at the image midpoint
        detail::normal_init(rng, *floc_w2, 0.01);
        floc_b2 = make_param<T>({2 * net.n_regions});
        geo_w = make_param<T>({net.n_regions * net.enc2, net.classes});
        detail::out_init(rng, *geo_w, net.n_regions * net.enc2);
        geo_b = make_param<T>({net.classes});
    }

    void collect(NamedParams<T>& out, const std::string& pre) const {
        encoder.collect(out, pre + ".enc");
        out.emplace_back(pre + ".floc.w1", floc_w1);
        out.emplace_back(pre + ".floc.b1", floc_b1);
        out.emplace_back(pre + ".floc.w2", floc_w2);
        out.emplace_back(pre + ".floc.b2", floc_b2);
        out.emplace_back(pre + ".geo.w", geo_w);
        out.emplace_back(pre + ".geo.b", geo_b);
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        encoder.collect_buffers(out, pre + ".enc");
    }
};

// ---------------------------------------------------------------------------
// localization: f_loc over pooled encoder features, tanh-squashed into the
// admissible box
// ---------------------------------------------------------------------------

template <typename T>
RegionCenters<T> localize(TapeT<T>& tp, DAEModel<T>& m, const TensorPtr<T>& feature_map) {
    const int R = m.att.n_regions;
    auto pooled = mean_spatial(tp, feature_map);  // [N, Ce]
    auto h = relu(tp, matmul(tp, pooled, m.floc_w1, m.floc_b1));
    auto u = tanh(tp, matmul(tp, h, m.floc_w2, m.floc_b2));  // [N, 2R] in (-1,1)
    auto ux = slice_cols(tp, u, 0, R);
    auto uy = slice_cols(tp, u, R, R);
    const T cx = T(m.image_w) / T(2), rx = T(m.image_w) / T(2) - T(m.att.half_width);
    const T cy = T(m.image_h) / T(2), ry = T(m.image_h) / T(2) - T(m.att.half_height);
    RegionCenters<T> c;
    c.xs = add(tp, mul(tp, ux, constant(rx)), constant(cx));
    c.ys = add(tp, mul(tp, uy, constant(ry)), constant(cy));
    return c;
}

/// left = x - w, right = x + w, top = y - h, bottom = y + h
template <typename T>
RegionBounds<T> region_bounds(TapeT<T>& tp, const RegionCenters<T>& c, const AttentionConfig& cfg) {
    RegionBounds<T> b;
    b.left = sub(tp, c.xs, constant(T(cfg.half_width)));
    b.right = add(tp, c.xs, constant(T(cfg.half_width)));
    b.top = sub(tp, c.ys, constant(T(cfg.half_height)));
    b.bottom = add(tp, c.ys, constant(T(cfg.half_height)));
    return b;
}

/// per-region soft rectangular masks, each [N, H, W]
template <typename T>
std::vector<TensorPtr<T>> make_mask(TapeT<T>& tp, const RegionBounds<T>& b, int H, int W, T k) {
    const int R = b.left->dim(1);
    std::vector<TensorPtr<T>> masks;
    masks.reserve((std::size_t)R);
    for (int r = 0; r < R; ++r) {
        auto l = slice_cols(tp, b.left, r, 1);
        auto rr = slice_cols(tp, b.right, r, 1);
        auto t = slice_cols(tp, b.top, r, 1);
        auto bo = slice_cols(tp, b.bottom, r, 1);
        masks.push_back(soft_rect_mask(tp, l, rr, t, bo, H, W, k));
    }
    return masks;
}

/// R_i = X ∘ M_i (mask broadcast across channels)
template <typename T>
TensorPtr<T> crop(TapeT<T>& tp, const TensorPtr<T>& image, const TensorPtr<T>& mask) {
    return crop_mask(tp, image, mask);
}

/// Fixed input stage of E: rescale [-1,1] pixels to [0,1] so the background
/// sits at exactly 0. The crop multiplies by a mask that is ~0 outside the
/// region; with a -1 background that fill value is half-intensity gray, and
/// the window imprints itself on the features as a large constant structure
/// that swamps the per-sample content (and batchnorm statistics). With the
/// background at 0, "masked out" and "empty" coincide and the imprint
/// vanishes. E is defined as encoder ∘ this normalization throughout.
template <typename T>
TensorPtr<T> dae_input_norm(TapeT<T>& tp, const TensorPtr<T>& image) {
    return add(tp, mul(tp, image, constant(T(0.5))), constant(T(0.5)));
}

/// Eqs. 1 -> 2 -> 4 -> crop -> E, all on the tape.
template <typename T>
InstanceEncoding<T> encode_instances(TapeT<T>& tp, DAEModel<T>& m, const TensorPtr<T>& image,
                                     bool training, double k_override = 0.0) {
    if (image->rank() != 4 || image->dim(2) != m.image_h || image->dim(3) != m.image_w)
        throw std::invalid_argument("encode_instances: expected [N,C," + std::to_string(m.image_h) +
                                    "," + std::to_string(m.image_w) + "], got " +
                                    shape_str(image->shape));
    const T k = T(k_override > 0.0 ? k_override : m.att.k);
    InstanceEncoding<T> enc;
    auto x01 = dae_input_norm(tp, image);
    auto feat = encoder_forward(tp, m.encoder, x01, training);
    enc.centers = localize(tp, m, feat);
    auto bounds = region_bounds(tp, enc.centers, m.att);
    enc.masks = make_mask(tp, bounds, m.image_h, m.image_w, k);
    for (const auto& mask : enc.masks)
        enc.instances.push_back(
            encoder_forward(tp, m.encoder, crop(tp, x01, mask), training));
    return enc;
}

/// no_dae ablation: one identity "region" covering the whole image
template <typename T>
InstanceEncoding<T> encode_whole_image(TapeT<T>& tp, DAEModel<T>& m, const TensorPtr<T>& image,
                                       bool training) {
    InstanceEncoding<T> enc;
    enc.instances.push_back(
        encoder_forward(tp, m.encoder, dae_input_norm(tp, image), training));
    return enc;
}

// ---------------------------------------------------------------------------
// geometric regularizer: softmax cross-entropy of the auxiliary classifier
// over pooled, concatenated instance features
// ---------------------------------------------------------------------------

/// pooled [N, n_regions * Ce] hidden features (also the classifier-feature
/// distance representation used by the losses module)
template <typename T>
TensorPtr<T> geo_features(TapeT<T>& tp, const std::vector<TensorPtr<T>>& instances) {
    if (instances.empty()) throw std::invalid_argument("geo_features: no instances");
    std::vector<TensorPtr<T>> pooled;
    pooled.reserve(instances.size());
    const int N = instances[0]->dim(0);
    for (const auto& inst : instances) {
        auto p = mean_spatial(tp, inst);  // [N, Ce]
        pooled.push_back(reshape(tp, p, {N, inst->dim(1), 1, 1}));
    }
    auto cat = pooled.size() == 1 ? pooled[0] : concat_channels(tp, pooled);
    return reshape(tp, cat, {N, cat->dim(1)});
}

template <typename T>
TensorPtr<T> geo_regularizer(TapeT<T>& tp, DAEModel<T>& m,
                             const std::vector<TensorPtr<T>>& instances,
                             const TensorPtr<T>& labels) {
    auto feats = geo_features(tp, instances);
    if (feats->dim(1) != m.geo_w->dim(0))
        throw std::invalid_argument("geo_regularizer: pooled width " +
                                    std::to_string(feats->dim(1)) + " vs head " +
                                    shape_str(m.geo_w->shape));
    auto logits = matmul(tp, feats, m.geo_w, m.geo_b);
    return softmax_cross_entropy(tp, logits, labels);
}

}  // namespace dagan
