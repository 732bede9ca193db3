// dagan: single binary, six subcommands (gradcheck | make-data | train |
// translate | eval | scatter). Reports go to stdout as JSON, logs and the
// resolved effective config go to stderr. Exit 0 iff no error path was taken.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dagan/checkpoint.hpp"
#include "dagan/config.hpp"
#include "dagan/eval.hpp"
#include "dagan/gradcheck_suite.hpp"
#include "dagan/kernels/api.hpp"
#include "dagan/trainer.hpp"

namespace {

using namespace dagan;

std::string default_out() {
    const char* env = std::getenv("DAGAN_OUT");
    return env ? env : "out";
}

void banner(const FullConfig& cfg, const std::string& command) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["kernel_backend"] = kern::backend_name();
    j["config"] = config_to_json(cfg);
    std::cerr << "effective-config " << j.dump() << "\n";
}

// flags that override the config file
struct Overrides {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string ablation;
    int steps = -1;
    std::string out;
};

FullConfig resolve(const Overrides& ov) {
    FullConfig cfg;
    if (!ov.config_path.empty()) cfg = config_from_file(ov.config_path);
    if (ov.seed_set) cfg.train.seed = ov.seed;
    if (!ov.ablation.empty()) cfg.train.ablation = ablation_from_name(ov.ablation);
    if (ov.steps >= 0) cfg.train.steps = ov.steps;
    cfg.train.net.image_h = cfg.train.net.image_w = cfg.task.resolution;
    cfg.train.net.channels = cfg.task.channels();
    cfg.train.net.classes = cfg.task.classes();
    cfg.train.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Overrides& ov, bool need_config) {
    auto* c = cmd->add_option("--config", ov.config_path, "JSON config file");
    if (need_config) c->required();
    cmd->add_option("--seed", ov.seed, "training seed override")
        ->each([&ov](const std::string&) { ov.seed_set = true; });
    cmd->add_option("--ablation", ov.ablation, "full|no_dae|no_cst|no_sym|no_d2");
    cmd->add_option("--steps", ov.steps, "step count override")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", ov.out, "output directory (default $DAGAN_OUT or ./out)");
}

Trainer restore_from_checkpoint(const FullConfig& cfg, const std::string& ckpt_path,
                                const Dataset& src, const Dataset& tgt) {
    Trainer tr(cfg.train, src.n, tgt.n);
    tr.restore(checkpoint_load(ckpt_path));
    return tr;
}

int cmd_gradcheck() {
    auto cases = run_op_gradchecks();
    auto e2e = run_attention_gradchecks();
    cases.insert(cases.end(), e2e.begin(), e2e.end());
    bool all = true;
    for (const auto& c : cases) {
        std::printf("%-38s max_rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), c.max_rel_err,
                    c.tolerance, c.passed ? "ok" : "FAIL");
        all = all && c.passed;
    }
    std::printf("%zu gradient checks, %s\n", cases.size(), all ? "all passed" : "FAILURES");
    return all ? 0 : 1;
}

int cmd_make_data(const Overrides& ov) {
    auto cfg = resolve(ov);
    banner(cfg, "make-data");
    const std::string out = ov.out.empty() ? default_out() : ov.out;
    std::filesystem::create_directories(out);
    auto dump = [&](const char* name, const Dataset& d) {
        write_idx(d, out + "/" + name + ".images.idx", out + "/" + name + ".labels.idx");
        std::cerr << name << ": " << d.n << " images " << d.channels << "x" << d.h << "x" << d.w
                  << ", " << d.classes << " classes\n";
    };
    dump("source_train", make_source(cfg.task));
    dump("target_train", make_target(cfg.task));
    dump("source_eval", make_eval_source(cfg.task));
    dump("target_eval", make_eval_target(cfg.task));
    std::cout << nlohmann::ordered_json{{"written", out}}.dump() << "\n";
    return 0;
}

int cmd_train(const Overrides& ov) {
    auto cfg = resolve(ov);
    banner(cfg, "train");
    const std::string out = ov.out.empty() ? default_out() : ov.out;
    auto src = make_source(cfg.task);
    auto tgt = make_target(cfg.task);
    Trainer tr(cfg.train, src.n, tgt.n);
    auto res = train_loop(tr, src, tgt, out);
    nlohmann::ordered_json j;
    j["steps"] = tr.step();
    j["checkpoint"] = out + "/ckpt_final.bin";
    j["skipped_updates"] = res.skipped_updates;
    if (!res.history.empty()) {
        const auto& lv = res.history.back();
        j["final"] = {{"adv_s", lv.adv_s}, {"adv_t", lv.adv_t}, {"cst", lv.cst},
                      {"sym", lv.sym},     {"geo", lv.geo},     {"total", lv.total}};
    }
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_translate(const Overrides& ov, const std::string& ckpt) {
    auto cfg = resolve(ov);
    banner(cfg, "translate");
    const std::string out = ov.out.empty() ? default_out() : ov.out;
    std::filesystem::create_directories(out);
    auto src = make_source(cfg.task);
    auto tgt = make_target(cfg.task);
    Trainer tr = restore_from_checkpoint(cfg, ckpt, src, tgt);
    auto eval_src = make_eval_source(cfg.task);
    auto translated = translate_dataset(tr.models(), cfg.train.ablation, eval_src,
                                        cfg.train.batch_size);
    write_idx(translated, out + "/translated.images.idx", out + "/translated.labels.idx");
    std::cout << nlohmann::ordered_json{{"translated", translated.n}, {"written", out}}.dump()
              << "\n";
    return 0;
}

int cmd_eval(const Overrides& ov, const std::string& ckpt, const std::string& samples_dir,
             double threshold, std::uint64_t oracle_seed) {
    auto cfg = resolve(ov);
    banner(cfg, "eval");
    Dataset translated;
    if (!samples_dir.empty()) {
        const std::string imgs = samples_dir + "/translated.images.idx";
        if (!std::filesystem::exists(imgs))
            throw std::runtime_error("empty batch: no samples found in " + samples_dir);
        translated = load_idx(imgs, samples_dir + "/translated.labels.idx");
    } else {
        auto src = make_source(cfg.task);
        auto tgt = make_target(cfg.task);
        Trainer tr = restore_from_checkpoint(cfg, ckpt, src, tgt);
        translated = translate_dataset(tr.models(), cfg.train.ablation, make_eval_source(cfg.task),
                                       cfg.train.batch_size);
    }
    auto oracle = train_oracle(make_target(cfg.task), cfg.train.net, oracle_seed);
    auto probs = oracle_probs(oracle, translated);
    nlohmann::ordered_json j;
    j["score"] = to_json(inception_score_from_probs(probs));
    j["modes"] = to_json(missing_modes_from_probs(probs, threshold));
    j["accuracy"] = to_json(adaptation_accuracy(oracle, translated));
    j["oracle_target_accuracy"] = oracle_accuracy(oracle, make_eval_target(cfg.task));
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_scatter(const Overrides& ov, const std::string& ckpt, const std::string& csv_path,
                std::uint64_t oracle_seed) {
    auto cfg = resolve(ov);
    banner(cfg, "scatter");
    auto src = make_source(cfg.task);
    auto tgt = make_target(cfg.task);
    Trainer tr = restore_from_checkpoint(cfg, ckpt, src, tgt);
    auto translated =
        translate_dataset(tr.models(), cfg.train.ablation, make_eval_source(cfg.task),
                          cfg.train.batch_size);
    auto real = make_eval_target(cfg.task);
    auto oracle = train_oracle(tgt, cfg.train.net, oracle_seed);
    Embedder emb = cfg.task.name == "shapes8" ? intensity_centroid_embedder()
                                              : feature_pca_embedder(oracle, real);
    emit_scatter(csv_path, real, translated, oracle, emb);
    std::cout << nlohmann::ordered_json{{"rows", real.n + translated.n}, {"csv", csv_path}}.dump()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"instance-level unsupervised image translation engine"};
    app.require_subcommand(1);

    auto* sc_grad = app.add_subcommand("gradcheck", "run the finite-difference suites");

    Overrides ov_data, ov_train, ov_translate, ov_eval, ov_scatter;
    auto* sc_data = app.add_subcommand("make-data", "write task datasets as IDX files");
    add_common(sc_data, ov_data, true);

    auto* sc_train = app.add_subcommand("train", "run the training loop");
    add_common(sc_train, ov_train, true);

    std::string ckpt_translate, ckpt_eval, ckpt_scatter;
    auto* sc_translate = app.add_subcommand("translate", "map the eval split through F");
    add_common(sc_translate, ov_translate, true);
    sc_translate->add_option("--checkpoint", ckpt_translate, "trained checkpoint")->required();

    std::string samples_dir;
    double threshold = 0.0;
    std::uint64_t oracle_seed_eval = 99, oracle_seed_scatter = 99;
    auto* sc_eval = app.add_subcommand("eval", "score translated samples");
    add_common(sc_eval, ov_eval, true);
    sc_eval->add_option("--checkpoint", ckpt_eval, "trained checkpoint");
    sc_eval->add_option("--samples", samples_dir, "directory with translated IDX files");
    sc_eval->add_option("--threshold", threshold, "mode-coverage confidence threshold");
    sc_eval->add_option("--oracle-seed", oracle_seed_eval, "oracle training seed");

    std::string csv_path;
    auto* sc_scatter = app.add_subcommand("scatter", "write the 2-D distribution CSV");
    add_common(sc_scatter, ov_scatter, true);
    sc_scatter->add_option("--checkpoint", ckpt_scatter, "trained checkpoint")->required();
    sc_scatter->add_option("--csv", csv_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc_grad->parsed()) return cmd_gradcheck();
        if (sc_data->parsed()) return cmd_make_data(ov_data);
        if (sc_train->parsed()) return cmd_train(ov_train);
        if (sc_translate->parsed()) return cmd_translate(ov_translate, ckpt_translate);
        if (sc_eval->parsed()) {
            if (ckpt_eval.empty() && samples_dir.empty())
                throw std::runtime_error("eval needs --checkpoint or --samples");
            return cmd_eval(ov_eval, ckpt_eval, samples_dir, threshold, oracle_seed_eval);
        }
        if (sc_scatter->parsed()) return cmd_scatter(ov_scatter, ckpt_scatter, csv_path,
                                                     oracle_seed_scatter);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no command\n";
    return 1;
}
