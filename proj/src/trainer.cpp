#include "dagan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dagan/kernels/api.hpp"
#include "json.hpp"

namespace dagan {

Ablation ablation_from_name(const std::string& name) {
    if (name == "full") return Ablation::full;
    if (name == "no_dae") return Ablation::no_dae;
    if (name == "no_cst") return Ablation::no_cst;
    if (name == "no_sym") return Ablation::no_sym;
    if (name == "no_d2") return Ablation::no_d2;
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (want full, no_dae, no_cst, no_sym, or no_d2)");
}

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_dae: return "no_dae";
        case Ablation::no_cst: return "no_cst";
        case Ablation::no_sym: return "no_sym";
        case Ablation::no_d2: return "no_d2";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (steps < 0) throw std::invalid_argument("train config: steps must be >= 0");
    if (checkpoint_every < 0) throw std::invalid_argument("train config: bad checkpoint cadence");
    for (double w : {alpha, beta, gamma})
        if (!std::isfinite(w) || w < 0)
            throw std::invalid_argument("train config: loss weights must be finite and >= 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
        throw std::invalid_argument("train config: adam betas must lie in [0,1)");
    if (!(adam_eps > 0)) throw std::invalid_argument("train config: adam_eps must be > 0");
    net.validate();
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void AdamState::init(const NamedParams<float>& params) {
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].second->size(), 0.0f);
        v[i].assign(params[i].second->size(), 0.0f);
    }
    t = 0;
    skipped = 0;
}

void adam_update(const NamedParams<float>& params, AdamState& st, double lr, double beta1,
                 double beta2, double eps) {
    if (st.m.size() != params.size() || st.v.size() != params.size())
        throw std::logic_error("adam_update: state does not match parameter group");
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1, (double)st.t);
    const double bc2 = 1.0 - std::pow(beta2, (double)st.t);
    std::vector<float> zeros;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i].second;
        if (st.m[i].size() != p.size())
            throw std::logic_error("adam_update: moment shape mismatch for " + params[i].first);
        const float* g;
        if (!p.has_grad()) {
            zeros.assign(p.size(), 0.0f);  // never reached by a backward: plain decay
            g = zeros.data();
        } else {
            bool finite = true;
            for (float gv : p.grad)
                if (!std::isfinite(gv)) { finite = false; break; }
            if (!finite) {
                ++st.skipped;
                continue;
            }
            g = p.grad.data();
        }
        kern::adam_f32(p.data.data(), g, st.m[i].data(), st.v[i].data(), p.size(), lr, beta1,
                       beta2, eps, bc1, bc2);
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

void Models::init(const TrainConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, "model_init"));
    dae.init(rng, cfg.net, cfg.attention);
    gen.init(rng, cfg.net);
    d1.init(rng, cfg.net);
    d2.init(rng, cfg.net);

    f_params.clear();
    d1_params.clear();
    d2_params.clear();
    buffers.clear();
    dae.collect(f_params, "f.dae");
    gen.collect(f_params, "f.gen");
    d1.collect(d1_params, "d1");
    d2.collect(d2_params, "d2");
    dae.collect_buffers(buffers, "f.dae");
    gen.collect_buffers(buffers, "f.gen");
    d1.collect_buffers(buffers, "d1");
    d2.collect_buffers(buffers, "d2");
}

NamedParams<float> Models::all_params() const {
    NamedParams<float> all = f_params;
    all.insert(all.end(), d1_params.begin(), d1_params.end());
    all.insert(all.end(), d2_params.begin(), d2_params.end());
    return all;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

TrainConfig normalized(TrainConfig cfg) {
    cfg.validate();
    // no_dae keeps shapes intact with a single whole-image "region"
    if (cfg.ablation == Ablation::no_dae) cfg.net.n_regions = 1;
    cfg.attention.n_regions = cfg.net.n_regions;
    return cfg;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, int n_source, int n_target)
    : cfg_(normalized(std::move(cfg))),
      it_s_(n_source, cfg_.batch_size, derive_seed(cfg_.seed, "batch_s")),
      it_t_(n_target, cfg_.batch_size, derive_seed(cfg_.seed, "batch_t")) {
    models_.init(cfg_);
    ad_f_.init(models_.f_params);
    ad_d1_.init(models_.d1_params);
    ad_d2_.init(models_.d2_params);
}

std::uint64_t Trainer::skipped_updates() const {
    return ad_f_.skipped + ad_d1_.skipped + ad_d2_.skipped;
}

LossValues Trainer::train_step(const TensorPtr<float>& xs, const TensorPtr<float>& ls,
                               const TensorPtr<float>& xt, const TensorPtr<float>& lt) {
    const bool no_dae = cfg_.ablation == Ablation::no_dae;
    const bool no_d2 = cfg_.ablation == Ablation::no_d2;
    const double k = models_.dae.att.effective_k(step_);
    const double lr = cfg_.learning_rate, b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2,
                 eps = cfg_.adam_eps;
    Tape tape;

    auto encode = [&](const TensorPtr<float>& img) {
        return no_dae ? encode_whole_image(tape, models_.dae, img, true)
                      : encode_instances(tape, models_.dae, img, true, k);
    };

    // shared generator-side forwards: s' = G(DAE(s)), t' = G(DAE(t))
    auto enc_s = encode(xs);
    auto enc_t = encode(xt);
    auto s1 = generator_forward(tape, models_.gen, enc_s.instances, true);
    auto t1 = generator_forward(tape, models_.gen, enc_t.instances, true);

    // (1) D1 on (t real, s' fake); the fake is detached so only D1 learns
    {
        auto real = discriminator_forward(tape, models_.d1, xt, true);
        auto fake = discriminator_forward(tape, models_.d1, detach(s1), true);
        auto loss = adv_source(tape, real, fake, AdvSide::discriminator);
        backward(tape, loss);
        adam_update(models_.d1_params, ad_d1_, lr, b1, b2, eps);
    }

    // (2) D2 on (t real, t' fake), skipped entirely under no_d2
    if (!no_d2) {
        auto real = discriminator_forward(tape, models_.d2, xt, true);
        auto fake = discriminator_forward(tape, models_.d2, detach(t1), true);
        auto loss = adv_target(tape, real, fake, AdvSide::discriminator);
        backward(tape, loss);
        adam_update(models_.d2_params, ad_d2_, lr, b1, b2, eps);
    }

    // (3) F = DAE∘G against the just-updated, frozen discriminators
    set_requires_grad(models_.d1_params, false);
    set_requires_grad(models_.d2_params, false);

    auto adv_s = adversarial_loss(tape, TensorPtr<float>{},
                                  discriminator_forward(tape, models_.d1, s1, true),
                                  AdvSide::generator);
    auto adv_t = no_d2 ? constant(0.0f)
                       : adversarial_loss(tape, TensorPtr<float>{},
                                          discriminator_forward(tape, models_.d2, t1, true),
                                          AdvSide::generator);
    auto enc_s1 = encode(s1);
    auto enc_t1 = encode(t1);
    auto cst = consistency_loss(tape, enc_s.instances, enc_s1.instances);
    auto sym = symmetry_loss(tape, enc_t.instances, enc_t1.instances);
    auto geo_s = geo_regularizer(tape, models_.dae, enc_s.instances, ls);
    auto geo_t = geo_regularizer(tape, models_.dae, enc_t.instances, lt);
    auto geo = mul(tape, add(tape, geo_s, geo_t), constant(0.5f));

    const float aw = cfg_.ablation == Ablation::no_cst ? 0.0f : (float)cfg_.alpha;
    const float bw = cfg_.ablation == Ablation::no_sym ? 0.0f : (float)cfg_.beta;
    auto bundle = full_objective(tape, adv_s, adv_t, cst, sym, geo, aw, bw, (float)cfg_.gamma);
    backward(tape, bundle.total);
    adam_update(models_.f_params, ad_f_, lr, b1, b2, eps);

    set_requires_grad(models_.d1_params, true);
    set_requires_grad(models_.d2_params, true);

    ++step_;
    LossValues lv;
    lv.step = step_;
    lv.adv_s = bundle.adv_s->data[0];
    lv.adv_t = bundle.adv_t->data[0];
    lv.cst = bundle.cst->data[0];
    lv.sym = bundle.sym->data[0];
    lv.geo = bundle.geo->data[0];
    lv.total = bundle.total->data[0];
    return lv;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

std::vector<float> net_fingerprint(const NetworkConfig& n) {
    return {(float)n.image_h, (float)n.image_w,  (float)n.channels, (float)n.classes,
            (float)n.n_regions, (float)n.enc1,   (float)n.enc2,     (float)n.gen_entry,
            (float)n.gen_up1,  (float)n.gen_up2, (float)n.d1,       (float)n.d2,
            (float)n.d3,       (float)n.oc1,     (float)n.oc2,      (float)n.floc_hidden};
}

std::vector<float> att_fingerprint(const AttentionConfig& a) {
    return {(float)a.n_regions, (float)a.k,     (float)a.half_width,
            (float)a.half_height, a.k_anneal ? 1.0f : 0.0f, (float)a.k_start,
            (float)a.k_end,     (float)a.k_anneal_steps};
}

std::vector<float> core_fingerprint(const TrainConfig& c) {
    return {(float)c.alpha,      (float)c.beta,       (float)c.gamma,
            (float)c.learning_rate, (float)c.batch_size, (float)c.adam_beta1,
            (float)c.adam_beta2, (float)c.adam_eps,   (float)(int)c.ablation};
}

void check_match(const Checkpoint& ck, const std::string& name, const std::vector<float>& want) {
    const auto& rec = ck.at(name);
    if (rec.data != want)
        throw std::runtime_error("checkpoint: config mismatch in " + name);
}

void load_array(const Checkpoint& ck, const std::string& name, std::vector<float>& dst,
                const std::vector<int>& dims) {
    const auto& rec = ck.at(name);
    if (rec.dims != dims || rec.data.size() != dst.size())
        throw std::runtime_error("checkpoint: config mismatch in shapes for '" + name + "'");
    dst = rec.data;
}

}  // namespace

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint ck;
    ck.add("cfg.core", {(int)core_fingerprint(cfg_).size()}, core_fingerprint(cfg_));
    ck.add("cfg.net", {(int)net_fingerprint(cfg_.net).size()}, net_fingerprint(cfg_.net));
    ck.add("cfg.att", {(int)att_fingerprint(models_.dae.att).size()},
           att_fingerprint(models_.dae.att));
    ck.add_scalar("state.step", step_);
    ck.add_u64("state.seed", cfg_.seed);

    auto add_iter = [&ck](const char* name, const BatchIter& it) {
        ck.add_u64(std::string(name) + ".state", it.epoch_rng_state());
        ck.add(std::string(name) + ".pos", {2}, {(float)it.cursor(), (float)it.epoch()});
    };
    add_iter("state.iter_s", it_s_);
    add_iter("state.iter_t", it_t_);

    auto add_group = [&ck](const char* gname, const NamedParams<float>& ps, const AdamState& st) {
        ck.add_u64(std::string(gname) + ".t", st.t);
        ck.add_u64(std::string(gname) + ".skipped", st.skipped);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            ck.add(ps[i].first, ps[i].second->shape, ps[i].second->data);
            ck.add("adam.m." + ps[i].first, ps[i].second->shape, st.m[i]);
            ck.add("adam.v." + ps[i].first, ps[i].second->shape, st.v[i]);
        }
    };
    add_group("adam.f", models_.f_params, ad_f_);
    add_group("adam.d1", models_.d1_params, ad_d1_);
    add_group("adam.d2", models_.d2_params, ad_d2_);

    for (const auto& [name, buf] : models_.buffers)
        ck.add(name, {(int)buf->size()}, *buf);
    return ck;
}

void Trainer::restore(const Checkpoint& ck) {
    check_match(ck, "cfg.core", core_fingerprint(cfg_));
    check_match(ck, "cfg.net", net_fingerprint(cfg_.net));
    check_match(ck, "cfg.att", att_fingerprint(models_.dae.att));
    step_ = (int)std::lround(ck.scalar("state.step"));
    if (ck.u64_at("state.seed") != cfg_.seed)
        throw std::runtime_error("checkpoint: config mismatch in seed");

    auto load_iter = [&ck](const char* name, BatchIter& it) {
        const auto& pos = ck.at(std::string(name) + ".pos");
        it.restore(ck.u64_at(std::string(name) + ".state"), (int)std::lround(pos.data[0]),
                   (std::uint64_t)std::llround(pos.data[1]));
    };
    load_iter("state.iter_s", it_s_);
    load_iter("state.iter_t", it_t_);

    auto load_group = [&ck](const char* gname, const NamedParams<float>& ps, AdamState& st) {
        st.t = ck.u64_at(std::string(gname) + ".t");
        st.skipped = ck.u64_at(std::string(gname) + ".skipped");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            load_array(ck, ps[i].first, ps[i].second->data, ps[i].second->shape);
            load_array(ck, "adam.m." + ps[i].first, st.m[i], ps[i].second->shape);
            load_array(ck, "adam.v." + ps[i].first, st.v[i], ps[i].second->shape);
        }
    };
    load_group("adam.f", models_.f_params, ad_f_);
    load_group("adam.d1", models_.d1_params, ad_d1_);
    load_group("adam.d2", models_.d2_params, ad_d2_);

    for (auto& [name, buf] : models_.buffers)
        load_array(ck, name, *buf, {(int)buf->size()});
}

// ---------------------------------------------------------------------------
// loops
// ---------------------------------------------------------------------------

namespace {

void check_dataset(const char* which, const Dataset& d, const NetworkConfig& net) {
    if (d.channels != net.channels || d.h != net.image_h || d.w != net.image_w)
        throw std::invalid_argument(std::string(which) + " dataset is " +
                                    std::to_string(d.channels) + "x" + std::to_string(d.h) + "x" +
                                    std::to_string(d.w) + ", config wants " +
                                    std::to_string(net.channels) + "x" +
                                    std::to_string(net.image_h) + "x" + std::to_string(net.image_w));
    if (d.classes > net.classes)
        throw std::invalid_argument(std::string(which) + " dataset has " +
                                    std::to_string(d.classes) + " classes, config allows " +
                                    std::to_string(net.classes));
}

}  // namespace

TrainResult train_loop(Trainer& tr, const Dataset& source, const Dataset& target,
                       const std::string& out_dir) {
    const auto& cfg = tr.config();
    check_dataset("source", source, cfg.net);
    check_dataset("target", target, cfg.net);

    std::ofstream metrics;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        metrics.open(out_dir + "/metrics.jsonl", std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot open metrics log in " + out_dir);
    }

    TrainResult res;
    res.history.reserve((std::size_t)cfg.steps);
    for (int s = 0; s < cfg.steps; ++s) {
        auto is = tr.source_iter().next();
        auto it = tr.target_iter().next();
        auto lv = tr.train_step(gather_images(source, is), gather_labels(source, is),
                                gather_images(target, it), gather_labels(target, it));
        res.history.push_back(lv);
        if (metrics.is_open()) {
            nlohmann::ordered_json j;
            j["step"] = lv.step;
            j["adv_s"] = lv.adv_s;
            j["adv_t"] = lv.adv_t;
            j["cst"] = lv.cst;
            j["sym"] = lv.sym;
            j["geo"] = lv.geo;
            j["total"] = lv.total;
            metrics << j.dump() << '\n';
        }
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0)
            checkpoint_save(out_dir + "/ckpt_" + std::to_string(s + 1) + ".bin",
                            tr.make_checkpoint());
    }
    if (!out_dir.empty()) checkpoint_save(out_dir + "/ckpt_final.bin", tr.make_checkpoint());
    res.skipped_updates = tr.skipped_updates();
    return res;
}

Dataset translate_dataset(Models& m, Ablation ablation, const Dataset& src, int batch_size,
                          double k_override) {
    if (src.n <= 0) throw std::invalid_argument("translate: empty dataset");
    Dataset out;
    out.n = src.n;
    out.channels = src.channels;
    out.h = src.h;
    out.w = src.w;
    out.classes = src.classes;
    out.labels = src.labels;
    out.pixels.resize(src.pixels.size());

    Tape tp;
    tp.recording = false;  // pure inference
    const std::size_t img = src.image_size();
    for (int start = 0; start < src.n; start += batch_size) {
        const int b = std::min(batch_size, src.n - start);
        std::vector<int> idx(b);
        for (int i = 0; i < b; ++i) idx[i] = start + i;
        auto x = gather_images(src, idx);
        auto enc = ablation == Ablation::no_dae
                       ? encode_whole_image(tp, m.dae, x, false)
                       : encode_instances(tp, m.dae, x, false, k_override);
        auto y = generator_forward(tp, m.gen, enc.instances, false);
        std::copy(y->data.begin(), y->data.end(), out.pixels.begin() + (std::size_t)start * img);
    }
    return out;
}

OracleClassifier<float> train_oracle(const Dataset& data, const NetworkConfig& net,
                                     std::uint64_t seed, int steps, int batch_size, double lr) {
    NetworkConfig cfg = net;
    cfg.channels = data.channels;
    cfg.classes = data.classes;
    cfg.image_h = data.h;
    cfg.image_w = data.w;
    cfg.validate();

    Rng rng(derive_seed(seed, "oracle_init"));
    OracleClassifier<float> oc;
    oc.init(rng, cfg);
    NamedParams<float> ps;
    oc.collect(ps, "oracle");
    AdamState ad;
    ad.init(ps);
    BatchIter it(data.n, std::min(batch_size, data.n), derive_seed(seed, "oracle_batch"));
    for (int s = 0; s < steps; ++s) {
        auto idx = it.next();
        Tape tp;
        auto loss = softmax_cross_entropy(tp, oracle_logits(tp, oc, gather_images(data, idx)),
                                          gather_labels(data, idx));
        backward(tp, loss);
        adam_update(ps, ad, lr, 0.9, 0.999, 1e-8);
    }
    return oc;
}

double oracle_accuracy(OracleClassifier<float>& oracle, const Dataset& data) {
    if (data.n == 0) return 0.0;
    Tape tp;
    tp.recording = false;
    int correct = 0;
    const int chunk = 256;
    for (int start = 0; start < data.n; start += chunk) {
        const int b = std::min(chunk, data.n - start);
        std::vector<int> idx(b);
        for (int i = 0; i < b; ++i) idx[i] = start + i;
        auto z = oracle_logits(tp, oracle, gather_images(data, idx));
        const int C = z->dim(1);
        for (int i = 0; i < b; ++i) {
            const float* row = z->data.data() + (std::size_t)i * C;
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (row[c] > row[best]) best = c;
            if (best == data.labels[start + i]) ++correct;
        }
    }
    return (double)correct / data.n;
}

}  // namespace dagan
