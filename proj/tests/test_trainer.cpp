#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dagan/checkpoint.hpp"
#include "dagan/data.hpp"
#include "dagan/trainer.hpp"

using namespace dagan;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dagan_trainer_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

TrainConfig mini_cfg(std::uint64_t seed = 5) {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.steps = 10;
    cfg.seed = seed;
    cfg.learning_rate = 1e-3;
    cfg.net.image_h = cfg.net.image_w = 16;
    cfg.net.channels = 3;
    cfg.net.classes = 8;
    cfg.net.n_regions = 2;
    cfg.net.enc1 = 4;
    cfg.net.enc2 = 6;
    cfg.net.gen_entry = 6;
    cfg.net.gen_up1 = 4;
    cfg.net.gen_up2 = 4;
    cfg.net.d1 = 4;
    cfg.net.d2 = 4;
    cfg.net.d3 = 6;
    cfg.net.floc_hidden = 8;
    return cfg;
}

Dataset source_data() {
    Shapes8Spec spec;
    return gen_shapes8(spec, 32, 100);
}

Dataset target_data() {
    Shapes8Spec spec;
    spec.glyph = Shapes8Spec::Glyph::disk;
    return gen_shapes8(spec, 32, 101);
}

std::vector<std::vector<float>> snapshot(const NamedParams<float>& ps) {
    std::vector<std::vector<float>> out;
    for (auto& [name, p] : ps) out.push_back(p->data);
    return out;
}

void step_n(Trainer& tr, const Dataset& src, const Dataset& tgt, int n) {
    for (int i = 0; i < n; ++i) {
        auto is = tr.source_iter().next();
        auto it = tr.target_iter().next();
        tr.train_step(gather_images(src, is), gather_labels(src, is), gather_images(tgt, it),
                      gather_labels(tgt, it));
    }
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("adam: three steps against the hand-rolled oracle") {
    auto p = make_param<float>({1});
    p->data = {1.0f};
    NamedParams<float> group{{"p", p}};
    AdamState st;
    st.init(group);

    const double expect[] = {0.9000000033333332, 0.9130756697947614, 0.8932309952580202};
    const float grads[] = {0.3f, -0.2f, 0.1f};
    for (int t = 0; t < 3; ++t) {
        p->grad = {grads[t]};
        adam_update(group, st, 0.1, 0.5, 0.999, 1e-8);
        CHECK(std::fabs((double)p->data[0] - expect[t]) <= 1e-7);
    }
    CHECK(st.t == 3);
    CHECK(st.skipped == 0);
}

TEST_CASE("adam: first step moves by about -lr * sign(grad)") {
    auto p = make_param<float>({3});
    p->data = {0.0f, 1.0f, -2.0f};
    p->grad = {0.25f, -0.003f, 4.0f};
    NamedParams<float> group{{"p", p}};
    AdamState st;
    st.init(group);
    adam_update(group, st, 0.05, 0.5, 0.999, 1e-8);
    CHECK(std::fabs(p->data[0] - (0.0f - 0.05f)) <= 1e-5);
    CHECK(std::fabs(p->data[1] - (1.0f + 0.05f)) <= 1e-5);
    CHECK(std::fabs(p->data[2] - (-2.0f - 0.05f)) <= 1e-5);
}

TEST_CASE("adam: zero gradient leaves the parameter untouched") {
    auto p = make_param<float>({2});
    p->data = {0.7f, -0.3f};
    p->grad = {0.0f, 0.0f};
    NamedParams<float> group{{"p", p}};
    AdamState st;
    st.init(group);
    adam_update(group, st, 0.1, 0.5, 0.999, 1e-8);
    CHECK(p->data == std::vector<float>{0.7f, -0.3f});
    CHECK(st.t == 1);
    for (float v : st.m[0]) CHECK(v == 0.0f);
    for (float v : st.v[0]) CHECK(v == 0.0f);
}

TEST_CASE("adam: non-finite gradient skips the parameter and counts it") {
    auto ok = make_param<float>({1});
    ok->data = {1.0f};
    ok->grad = {0.5f};
    auto bad = make_param<float>({2});
    bad->data = {2.0f, 3.0f};
    bad->grad = {0.1f, std::nanf("")};
    NamedParams<float> group{{"ok", ok}, {"bad", bad}};
    AdamState st;
    st.init(group);
    adam_update(group, st, 0.1, 0.5, 0.999, 1e-8);

    CHECK(st.skipped == 1);
    CHECK(bad->data == std::vector<float>{2.0f, 3.0f});  // untouched
    for (float v : st.m[1]) CHECK(v == 0.0f);             // moments untouched too
    CHECK(ok->data[0] < 1.0f);                            // healthy peer still updates
}

TEST_CASE("trainer: two runs with one seed are bit-identical after 10 steps") {
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg();

    Trainer a(cfg, src.n, tgt.n), b(cfg, src.n, tgt.n);
    auto ra = train_loop(a, src, tgt, "");
    auto rb = train_loop(b, src, tgt, "");
    CHECK(ra.history.size() == 10);

    auto pa = a.models().all_params();
    auto pb = b.models().all_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
    for (std::size_t i = 0; i < a.models().buffers.size(); ++i)
        CHECK(*a.models().buffers[i].second == *b.models().buffers[i].second);
    CHECK(ra.skipped_updates == 0);

    // losses were logged in lockstep too
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].total == rb.history[i].total);
        CHECK(ra.history[i].step == (int)i + 1);
    }
}

TEST_CASE("trainer: discriminator phase leaves F weights bit-unchanged") {
    auto cfg = mini_cfg(7);
    Models m;
    m.init(cfg);
    AdamState ad;
    ad.init(m.d1_params);

    Rng rng(9);
    auto real = make_tensor<float>({4, 3, 16, 16});
    for (auto& v : real->data) v = (float)rng.uniform(-1.0, 1.0);
    auto fake_src = make_tensor<float>({4, 3, 16, 16});
    for (auto& v : fake_src->data) v = (float)rng.uniform(-1.0, 1.0);

    auto before = snapshot(m.f_params);
    Tape tp;
    auto enc = encode_instances(tp, m.dae, fake_src, true);
    auto fake = generator_forward(tp, m.gen, enc.instances, true);
    auto rl = discriminator_forward(tp, m.d1, real, true);
    auto fl = discriminator_forward(tp, m.d1, detach(fake), true);
    backward(tp, adversarial_loss(tp, rl, fl, AdvSide::discriminator));
    adam_update(m.d1_params, ad, 1e-3, 0.5, 0.999, 1e-8);

    auto after = snapshot(m.f_params);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);

    bool d_moved = false;
    for (auto& [name, p] : m.d1_params)
        for (float v : p->grad) d_moved = d_moved || v != 0.0f;
    CHECK(d_moved);
}

TEST_CASE("trainer: full step updates F and leaves D2 alone under no_d2") {
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg(11);
    cfg.ablation = Ablation::no_d2;
    cfg.steps = 2;

    Trainer tr(cfg, src.n, tgt.n);
    auto d2_before = snapshot(tr.models().d2_params);
    auto f_before = snapshot(tr.models().f_params);
    auto res = train_loop(tr, src, tgt, "");

    auto d2_after = snapshot(tr.models().d2_params);
    for (std::size_t i = 0; i < d2_before.size(); ++i) CHECK(d2_before[i] == d2_after[i]);
    auto f_after = snapshot(tr.models().f_params);
    bool f_moved = false;
    for (std::size_t i = 0; i < f_before.size(); ++i) f_moved = f_moved || f_before[i] != f_after[i];
    CHECK(f_moved);
    for (auto& lv : res.history) CHECK(lv.adv_t == 0.0);
}

TEST_CASE("trainer: ablation switches report but exclude the zeroed term") {
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg(13);
    cfg.steps = 2;
    cfg.ablation = Ablation::no_cst;

    Trainer tr(cfg, src.n, tgt.n);
    auto res = train_loop(tr, src, tgt, "");
    for (auto& lv : res.history) {
        CHECK(lv.cst > 0.0);  // still measured and logged
        CHECK(std::isfinite(lv.total));
    }
}

TEST_CASE("trainer: checkpoint round-trips bit-identically and resumes exactly") {
    TempDir td;
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg(17);

    Trainer tr(cfg, src.n, tgt.n);
    step_n(tr, src, tgt, 5);
    auto ck = tr.make_checkpoint();
    checkpoint_save(td.file("a.bin"), ck);

    Trainer tr2(cfg, src.n, tgt.n);
    tr2.restore(checkpoint_load(td.file("a.bin")));
    CHECK(tr2.step() == 5);
    checkpoint_save(td.file("b.bin"), tr2.make_checkpoint());
    CHECK(slurp(td.file("a.bin")) == slurp(td.file("b.bin")));

    // both trainers continue and stay in lockstep
    step_n(tr, src, tgt, 3);
    step_n(tr2, src, tgt, 3);
    auto pa = tr.models().all_params();
    auto pb = tr2.models().all_params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
}

TEST_CASE("trainer: checkpoint rejects corruption and config mismatch") {
    TempDir td;
    auto cfg = mini_cfg(19);
    Trainer tr(cfg, 32, 32);
    checkpoint_save(td.file("ok.bin"), tr.make_checkpoint());

    auto bytes = slurp(td.file("ok.bin"));
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::ofstream(td.file("magic.bin"), std::ios::binary)
            .write(bad.data(), (std::streamsize)bad.size());
        CHECK_THROWS_WITH_AS(checkpoint_load(td.file("magic.bin")),
                             doctest::Contains("bad magic"), std::runtime_error);
    }
    {
        auto bad = bytes;
        bad[4] = 9;  // version field
        std::ofstream(td.file("ver.bin"), std::ios::binary)
            .write(bad.data(), (std::streamsize)bad.size());
        CHECK_THROWS_WITH_AS(checkpoint_load(td.file("ver.bin")),
                             doctest::Contains("unsupported version"), std::runtime_error);
    }
    {
        std::ofstream(td.file("trunc.bin"), std::ios::binary)
            .write(bytes.data(), (std::streamsize)bytes.size() / 2);
        CHECK_THROWS_WITH_AS(checkpoint_load(td.file("trunc.bin")),
                             doctest::Contains("truncated"), std::runtime_error);
    }
    {
        auto other = mini_cfg(19);
        other.net.n_regions = 3;
        Trainer tr3(other, 32, 32);
        CHECK_THROWS_WITH_AS(tr3.restore(checkpoint_load(td.file("ok.bin"))),
                             doctest::Contains("config mismatch"), std::runtime_error);
    }
}

TEST_CASE("trainer: steps=0 writes an init-only checkpoint") {
    TempDir td;
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg(23);
    cfg.steps = 0;

    Trainer tr(cfg, src.n, tgt.n);
    checkpoint_save(td.file("init.bin"), tr.make_checkpoint());
    auto res = train_loop(tr, src, tgt, td.file("out"));
    CHECK(res.history.empty());
    CHECK(slurp(td.file("out") + "/ckpt_final.bin") == slurp(td.file("init.bin")));

    std::ifstream metrics(td.file("out") + "/metrics.jsonl");
    REQUIRE(metrics.good());
    std::string line;
    CHECK(!std::getline(metrics, line));  // zero lines for zero steps
}

TEST_CASE("trainer: metrics log has one well-formed line per step") {
    TempDir td;
    auto src = source_data();
    auto tgt = target_data();
    auto cfg = mini_cfg(29);
    cfg.steps = 5;
    cfg.checkpoint_every = 2;

    Trainer tr(cfg, src.n, tgt.n);
    train_loop(tr, src, tgt, td.file("out"));

    std::ifstream metrics(td.file("out") + "/metrics.jsonl");
    REQUIRE(metrics.good());
    std::string line;
    int count = 0;
    while (std::getline(metrics, line)) {
        auto j = nlohmann::json::parse(line);
        ++count;
        CHECK(j["step"] == count);
        for (const char* key : {"adv_s", "adv_t", "cst", "sym", "geo", "total"}) {
            REQUIRE(j.contains(key));
            CHECK(std::isfinite(j[key].get<double>()));
        }
        CHECK(j.size() == 7);
    }
    CHECK(count == 5);

    CHECK(fs::exists(td.file("out") + "/ckpt_2.bin"));
    CHECK(fs::exists(td.file("out") + "/ckpt_4.bin"));
    CHECK(fs::exists(td.file("out") + "/ckpt_final.bin"));
}

TEST_CASE("translate_dataset: shape contract and value range") {
    auto src = source_data();
    auto cfg = mini_cfg(31);
    Trainer tr(cfg, src.n, src.n);

    auto out = translate_dataset(tr.models(), cfg.ablation, src, /*batch_size=*/8);
    CHECK(out.n == src.n);
    CHECK(out.channels == src.channels);
    CHECK(out.h == src.h);
    CHECK(out.w == src.w);
    CHECK(out.labels == src.labels);
    for (float v : out.pixels) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }

    // inference is per-sample: a partial final batch changes nothing
    auto out2 = translate_dataset(tr.models(), cfg.ablation, src, /*batch_size=*/5);
    CHECK(out2.pixels == out.pixels);
}
