#pragma once

// Desk-scale network definitions: encoder E, generator G, discriminators
// D1/D2, and the oracle classifier used by evaluation. Everything is
// templated on the scalar type so the gradient checker can instantiate
// miniature models in double.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dagan/ops.hpp"
#include "dagan/rng.hpp"
#include "dagan/tensor.hpp"

namespace dagan {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, TensorPtr<T>>>;

template <typename T>
using NamedBuffers = std::vector<std::pair<std::string, std::vector<T>*>>;

template <typename T>
void set_requires_grad(const NamedParams<T>& ps, bool rg) {
    for (const auto& [name, p] : ps) p->requires_grad = rg;
}

struct NetworkConfig {
    int image_h = 16, image_w = 16, channels = 3;
    int classes = 8;
    int n_regions = 1;
    int enc1 = 16, enc2 = 32;            // encoder widths (enc2 = instance-feature channels)
    int gen_entry = 32, gen_up1 = 16, gen_up2 = 8;
    int d1 = 16, d2 = 32, d3 = 64;       // discriminator widths
    int oc1 = 16, oc2 = 32;              // oracle widths
    int floc_hidden = 32;

    void validate() const {
        if (image_h % 4 != 0 || image_w % 4 != 0)
            throw std::invalid_argument("network config: image dims must be divisible by 4");
        if (image_h < 8 || image_w < 8)
            throw std::invalid_argument("network config: image dims must be >= 8");
        if (channels < 1 || classes < 2 || n_regions < 1)
            throw std::invalid_argument("network config: bad channels/classes/n_regions");
    }
};

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void normal_init(Rng& rng, TensorT<T>& w, double stddev) {
    for (auto& v : w.data) v = (T)rng.normal(0.0, stddev);
}

// He init for relu-followed layers, Xavier-ish for linear outputs
template <typename T>
void he_init(Rng& rng, TensorT<T>& w, int fan_in) {
    normal_init(rng, w, std::sqrt(2.0 / fan_in));
}
template <typename T>
void out_init(Rng& rng, TensorT<T>& w, int fan_in) {
    normal_init(rng, w, std::sqrt(1.0 / fan_in));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv + batchnorm (+ relu) block
// ---------------------------------------------------------------------------

template <typename T>
struct ConvBN {
    TensorPtr<T> w, gamma, beta;
    BatchNormState<T> st;
    int stride = 1;

    void init(Rng& rng, int cin, int cout, int stride_) {
        stride = stride_;
        w = make_param<T>({cout, cin, 3, 3});
        detail::he_init(rng, *w, cin * 9);
        gamma = make_param<T>({cout});
        std::fill(gamma->data.begin(), gamma->data.end(), T(1));
        beta = make_param<T>({cout});
        st = BatchNormState<T>(cout);
    }

    // conv -> bn (no activation)
    TensorPtr<T> fwd_linear(TapeT<T>& tp, const TensorPtr<T>& x, bool training) {
        auto y = conv2d(tp, x, w, stride);
        return batchnorm2d(tp, y, gamma, beta, st, training);
    }
    // conv -> bn -> relu
    TensorPtr<T> fwd(TapeT<T>& tp, const TensorPtr<T>& x, bool training) {
        return relu(tp, fwd_linear(tp, x, training));
    }

    void collect(NamedParams<T>& out, const std::string& pre) const {
        out.emplace_back(pre + ".w", w);
        out.emplace_back(pre + ".gamma", gamma);
        out.emplace_back(pre + ".beta", beta);
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        out.emplace_back(pre + ".running_mean", &st.running_mean);
        out.emplace_back(pre + ".running_var", &st.running_var);
    }
};

// ---------------------------------------------------------------------------
// encoder E: two stride-2 conv blocks, output spatial dims = input / 4
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderModel {
    ConvBN<T> b1, b2;
    int in_channels = 0, out_channels = 0;

    void init(Rng& rng, int channels, int e1, int e2) {
        in_channels = channels;
        out_channels = e2;
        b1.init(rng, channels, e1, 2);
        b2.init(rng, e1, e2, 2);
    }
    void collect(NamedParams<T>& out, const std::string& pre) const {
        b1.collect(out, pre + ".b1");
        b2.collect(out, pre + ".b2");
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        b1.collect_buffers(out, pre + ".b1");
        b2.collect_buffers(out, pre + ".b2");
    }
};

template <typename T>
TensorPtr<T> encoder_forward(TapeT<T>& tp, EncoderModel<T>& m, const TensorPtr<T>& image,
                             bool training) {
    if (image->rank() != 4 || image->dim(1) != m.in_channels)
        throw std::invalid_argument("encoder: expected [N," + std::to_string(m.in_channels) +
                                    ",H,W], got " + shape_str(image->shape));
    auto x = m.b1.fwd(tp, image, training);
    return m.b2.fwd(tp, x, training);
}

// ---------------------------------------------------------------------------
// generator G: concat instances -> entry conv -> residual blocks ->
// two nearest-upsample blocks -> output conv -> tanh
// ---------------------------------------------------------------------------

template <typename T>
struct ResBlock {
    ConvBN<T> c1, c2;
    void init(Rng& rng, int ch) {
        c1.init(rng, ch, ch, 1);
        c2.init(rng, ch, ch, 1);
    }
    TensorPtr<T> fwd(TapeT<T>& tp, const TensorPtr<T>& x, bool training) {
        auto y = c1.fwd(tp, x, training);
        y = c2.fwd_linear(tp, y, training);
        return add(tp, x, y);  // no post-skip activation
    }
    void collect(NamedParams<T>& out, const std::string& pre) const {
        c1.collect(out, pre + ".c1");
        c2.collect(out, pre + ".c2");
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        c1.collect_buffers(out, pre + ".c1");
        c2.collect_buffers(out, pre + ".c2");
    }
};

template <typename T>
struct GeneratorModel {
    ConvBN<T> entry, up1, up2;
    ResBlock<T> res1, res2, res3;
    TensorPtr<T> out_w, out_b;
    int n_regions = 1, inst_channels = 0;

    void init(Rng& rng, const NetworkConfig& cfg) {
        n_regions = cfg.n_regions;
        inst_channels = cfg.enc2;
        entry.init(rng, cfg.n_regions * cfg.enc2, cfg.gen_entry, 1);
        res1.init(rng, cfg.gen_entry);
        res2.init(rng, cfg.gen_entry);
        res3.init(rng, cfg.gen_entry);
        up1.init(rng, cfg.gen_entry, cfg.gen_up1, 1);
        up2.init(rng, cfg.gen_up1, cfg.gen_up2, 1);
        out_w = make_param<T>({cfg.channels, cfg.gen_up2, 3, 3});
        detail::out_init(rng, *out_w, cfg.gen_up2 * 9);
        out_b = make_param<T>({cfg.channels});
    }
    void collect(NamedParams<T>& out, const std::string& pre) const {
        entry.collect(out, pre + ".entry");
        res1.collect(out, pre + ".res1");
        res2.collect(out, pre + ".res2");
        res3.collect(out, pre + ".res3");
        up1.collect(out, pre + ".up1");
        up2.collect(out, pre + ".up2");
        out.emplace_back(pre + ".out.w", out_w);
        out.emplace_back(pre + ".out.b", out_b);
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        entry.collect_buffers(out, pre + ".entry");
        res1.collect_buffers(out, pre + ".res1");
        res2.collect_buffers(out, pre + ".res2");
        res3.collect_buffers(out, pre + ".res3");
        up1.collect_buffers(out, pre + ".up1");
        up2.collect_buffers(out, pre + ".up2");
    }
};

template <typename T>
TensorPtr<T> generator_forward(TapeT<T>& tp, GeneratorModel<T>& m,
                               const std::vector<TensorPtr<T>>& instances, bool training) {
    if ((int)instances.size() != m.n_regions)
        throw std::invalid_argument("generator: expected " + std::to_string(m.n_regions) +
                                    " instances, got " + std::to_string(instances.size()));
    auto x = instances.size() == 1 ? instances[0] : concat_channels(tp, instances);
    if (x->dim(1) != m.n_regions * m.inst_channels)
        throw std::invalid_argument("generator: instance channels " + shape_str(x->shape) +
                                    " vs expected " +
                                    std::to_string(m.n_regions * m.inst_channels));
    x = m.entry.fwd(tp, x, training);
    x = m.res1.fwd(tp, x, training);
    x = m.res2.fwd(tp, x, training);
    x = m.res3.fwd(tp, x, training);
    x = nearest_upsample2x(tp, x);
    x = m.up1.fwd(tp, x, training);
    x = nearest_upsample2x(tp, x);
    x = m.up2.fwd(tp, x, training);
    x = conv2d(tp, x, m.out_w, m.out_b, 1);
    return tanh(tp, x);
}

// ---------------------------------------------------------------------------
// discriminator: three stride-2 conv blocks + fully-connected single logit
// ---------------------------------------------------------------------------

template <typename T>
struct DiscriminatorModel {
    ConvBN<T> b1, b2, b3;
    TensorPtr<T> fc_w, fc_b;
    int flat = 0;

    void init(Rng& rng, const NetworkConfig& cfg) {
        b1.init(rng, cfg.channels, cfg.d1, 2);
        b2.init(rng, cfg.d1, cfg.d2, 2);
        b3.init(rng, cfg.d2, cfg.d3, 2);
        // three ceil-halvings: ceil(ceil(ceil(H/2)/2)/2) == ceil(H/8)
        flat = cfg.d3 * ((cfg.image_h + 7) / 8) * ((cfg.image_w + 7) / 8);
        fc_w = make_param<T>({flat, 1});
        detail::out_init(rng, *fc_w, flat);
        fc_b = make_param<T>({1});
    }
    void collect(NamedParams<T>& out, const std::string& pre) const {
        b1.collect(out, pre + ".b1");
        b2.collect(out, pre + ".b2");
        b3.collect(out, pre + ".b3");
        out.emplace_back(pre + ".fc.w", fc_w);
        out.emplace_back(pre + ".fc.b", fc_b);
    }
    void collect_buffers(NamedBuffers<T>& out, const std::string& pre) {
        b1.collect_buffers(out, pre + ".b1");
        b2.collect_buffers(out, pre + ".b2");
        b3.collect_buffers(out, pre + ".b3");
    }
};

/// one logit per image, shape [N, 1]
template <typename T>
TensorPtr<T> discriminator_forward(TapeT<T>& tp, DiscriminatorModel<T>& m,
                                   const TensorPtr<T>& image, bool training) {
    auto x = m.b1.fwd(tp, image, training);
    x = m.b2.fwd(tp, x, training);
    x = m.b3.fwd(tp, x, training);
    const int n = x->dim(0);
    const int f = (int)(x->size() / (std::size_t)n);
    if (f != m.flat)
        throw std::invalid_argument("discriminator: flattened size " + std::to_string(f) +
                                    " vs expected " + std::to_string(m.flat) + " for input " +
                                    shape_str(image->shape));
    return matmul(tp, reshape(tp, x, {n, f}), m.fc_w, m.fc_b);
}

// ---------------------------------------------------------------------------
// oracle classifier: two biased stride-2 convs (no batchnorm, so single
// images evaluate identically to batches) + fully-connected logits
// ---------------------------------------------------------------------------

template <typename T>
struct OracleClassifier {
    TensorPtr<T> w1, b1, w2, b2, fc_w, fc_b;
    int classes = 0, flat = 0, feat_channels = 0;

    void init(Rng& rng, const NetworkConfig& cfg) {
        classes = cfg.classes;
        feat_channels = cfg.oc2;
        w1 = make_param<T>({cfg.oc1, cfg.channels, 3, 3});
        detail::he_init(rng, *w1, cfg.channels * 9);
        b1 = make_param<T>({cfg.oc1});
        w2 = make_param<T>({cfg.oc2, cfg.oc1, 3, 3});
        detail::he_init(rng, *w2, cfg.oc1 * 9);
        b2 = make_param<T>({cfg.oc2});
        flat = cfg.oc2 * (cfg.image_h / 4) * (cfg.image_w / 4);
        fc_w = make_param<T>({flat, cfg.classes});
        detail::out_init(rng, *fc_w, flat);
        fc_b = make_param<T>({cfg.classes});
    }
    void collect(NamedParams<T>& out, const std::string& pre) const {
        out.emplace_back(pre + ".w1", w1);
        out.emplace_back(pre + ".b1", b1);
        out.emplace_back(pre + ".w2", w2);
        out.emplace_back(pre + ".b2", b2);
        out.emplace_back(pre + ".fc.w", fc_w);
        out.emplace_back(pre + ".fc.b", fc_b);
    }
};

/// pre-softmax class scores [N, C]
template <typename T>
TensorPtr<T> oracle_logits(TapeT<T>& tp, OracleClassifier<T>& m, const TensorPtr<T>& image) {
    auto x = relu(tp, conv2d(tp, image, m.w1, m.b1, 2));
    x = relu(tp, conv2d(tp, x, m.w2, m.b2, 2));
    const int n = x->dim(0);
    return matmul(tp, reshape(tp, x, {n, m.flat}), m.fc_w, m.fc_b);
}

/// pooled penultimate features [N, oc2] (embedding source for scatter plots)
template <typename T>
TensorPtr<T> oracle_features(TapeT<T>& tp, OracleClassifier<T>& m, const TensorPtr<T>& image) {
    auto x = relu(tp, conv2d(tp, image, m.w1, m.b1, 2));
    x = relu(tp, conv2d(tp, x, m.w2, m.b2, 2));
    return mean_spatial(tp, x);
}

/// softmax probabilities [N, C]; rows sum to 1
template <typename T>
TensorPtr<T> classifier_forward(TapeT<T>& tp, OracleClassifier<T>& m, const TensorPtr<T>& image) {
    auto z = oracle_logits(tp, m, image);
    const int N = z->dim(0), C = z->dim(1);
    auto p = make_tensor<T>({N, C});
    for (int n = 0; n < N; ++n) {
        const T* zr = z->data.data() + (std::size_t)n * C;
        T zmax = zr[0];
        for (int c = 1; c < C; ++c) zmax = std::max(zmax, zr[c]);
        T se = T(0);
        for (int c = 0; c < C; ++c) se += std::exp(zr[c] - zmax);
        for (int c = 0; c < C; ++c) p->data[(std::size_t)n * C + c] = std::exp(zr[c] - zmax) / se;
    }
    return p;
}

}  // namespace dagan
