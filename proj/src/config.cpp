#include "dagan/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace dagan {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) fail("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).template get<T>();
}

}  // namespace

void TaskSpec::validate() const {
    if (name != "shapes8" && name != "digits")
        fail("unknown task '" + name + "' (want shapes8 or digits)");
    if (resolution < 8 || resolution % 4 != 0) fail("task resolution must be >= 8, divisible by 4");
    if (n_train < 8 || n_eval < 1) fail("task needs n_train >= 8 and n_eval >= 1");
    if (name == "shapes8") {
        Shapes8Spec s = shapes;
        s.resolution = resolution;
        s.validate();
    }
    if (name == "digits" && target_transforms.empty())
        fail("digits task needs at least one target transform");
}

namespace {

Dataset shapes_domain(const TaskSpec& t, Shapes8Spec::Glyph glyph, int n, std::uint64_t seed) {
    Shapes8Spec s = t.shapes;
    s.resolution = t.resolution;
    s.glyph = glyph;
    return gen_shapes8(s, n, seed);
}

Dataset digits_target(const TaskSpec& t, int n, std::uint64_t seed) {
    Dataset d = gen_digits(t.resolution, n, seed);
    for (Transform tr : t.target_transforms) d = transform_domain(d, tr, t.colorize_hue);
    if (d.channels != 1) fail("digits target transform chain must preserve 1 channel");
    return d;
}

}  // namespace

Dataset make_source(const TaskSpec& t) {
    t.validate();
    const auto seed = derive_seed(t.dataset_seed, "source_train");
    return t.name == "shapes8" ? shapes_domain(t, Shapes8Spec::Glyph::square, t.n_train, seed)
                               : gen_digits(t.resolution, t.n_train, seed);
}

Dataset make_target(const TaskSpec& t) {
    t.validate();
    const auto seed = derive_seed(t.dataset_seed, "target_train");
    return t.name == "shapes8" ? shapes_domain(t, Shapes8Spec::Glyph::disk, t.n_train, seed)
                               : digits_target(t, t.n_train, seed);
}

Dataset make_eval_source(const TaskSpec& t) {
    t.validate();
    const auto seed = derive_seed(t.dataset_seed, "source_eval");
    return t.name == "shapes8" ? shapes_domain(t, Shapes8Spec::Glyph::square, t.n_eval, seed)
                               : gen_digits(t.resolution, t.n_eval, seed);
}

Dataset make_eval_target(const TaskSpec& t) {
    t.validate();
    const auto seed = derive_seed(t.dataset_seed, "target_eval");
    return t.name == "shapes8" ? shapes_domain(t, Shapes8Spec::Glyph::disk, t.n_eval, seed)
                               : digits_target(t, t.n_eval, seed);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

TaskSpec task_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"name", "resolution", "n_train", "n_eval", "dataset_seed", "shapes8",
                         "target_transforms", "colorize_hue"},
                        "task");
    TaskSpec t;
    get_if(j, "name", t.name);
    get_if(j, "resolution", t.resolution);
    get_if(j, "n_train", t.n_train);
    get_if(j, "n_eval", t.n_eval);
    get_if(j, "dataset_seed", t.dataset_seed);
    get_if(j, "colorize_hue", t.colorize_hue);
    if (j.contains("shapes8")) {
        const auto& s = j.at("shapes8");
        reject_unknown_keys(s, {"ring_radius", "glyph_half", "sigma_pos", "sigma_color"},
                            "task.shapes8");
        get_if(s, "ring_radius", t.shapes.ring_radius);
        get_if(s, "glyph_half", t.shapes.glyph_half);
        get_if(s, "sigma_pos", t.shapes.sigma_pos);
        get_if(s, "sigma_color", t.shapes.sigma_color);
    }
    if (j.contains("target_transforms")) {
        t.target_transforms.clear();
        for (const auto& name : j.at("target_transforms"))
            t.target_transforms.push_back(transform_from_name(name.get<std::string>()));
    }
    t.validate();
    return t;
}

nlohmann::ordered_json task_to_json(const TaskSpec& t) {
    nlohmann::ordered_json j;
    j["name"] = t.name;
    j["resolution"] = t.resolution;
    j["n_train"] = t.n_train;
    j["n_eval"] = t.n_eval;
    j["dataset_seed"] = t.dataset_seed;
    j["shapes8"] = {{"ring_radius", t.shapes.ring_radius},
                    {"glyph_half", t.shapes.glyph_half},
                    {"sigma_pos", t.shapes.sigma_pos},
                    {"sigma_color", t.shapes.sigma_color}};
    auto names = nlohmann::ordered_json::array();
    for (Transform tr : t.target_transforms) names.push_back(transform_name(tr));
    j["target_transforms"] = names;
    j["colorize_hue"] = t.colorize_hue;
    return j;
}

FullConfig config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"task", "train"}, "config");
    FullConfig c;
    if (j.contains("task")) c.task = task_from_json(j.at("task"));

    // net defaults derive from the task; explicit overrides win below
    c.train.net.image_h = c.train.net.image_w = c.task.resolution;
    c.train.net.channels = c.task.channels();
    c.train.net.classes = c.task.classes();

    if (j.contains("train")) {
        const auto& tj = j.at("train");
        reject_unknown_keys(tj,
                            {"alpha", "beta", "gamma", "learning_rate", "batch_size", "adam_beta1",
                             "adam_beta2", "adam_eps", "steps", "seed", "ablation",
                             "checkpoint_every", "net", "attention"},
                            "train");
        auto& t = c.train;
        get_if(tj, "alpha", t.alpha);
        get_if(tj, "beta", t.beta);
        get_if(tj, "gamma", t.gamma);
        get_if(tj, "learning_rate", t.learning_rate);
        get_if(tj, "batch_size", t.batch_size);
        get_if(tj, "adam_beta1", t.adam_beta1);
        get_if(tj, "adam_beta2", t.adam_beta2);
        get_if(tj, "adam_eps", t.adam_eps);
        get_if(tj, "steps", t.steps);
        get_if(tj, "seed", t.seed);
        if (tj.contains("ablation")) t.ablation = ablation_from_name(tj.at("ablation"));
        get_if(tj, "checkpoint_every", t.checkpoint_every);
        if (tj.contains("net")) {
            const auto& nj = tj.at("net");
            // image_h/image_w/channels/classes are accepted so the resolved
            // echo written by config_to_json reloads as-is
            reject_unknown_keys(nj,
                                {"image_h", "image_w", "channels", "classes", "n_regions", "enc1",
                                 "enc2", "gen_entry", "gen_up1", "gen_up2", "d1", "d2", "d3",
                                 "oc1", "oc2", "floc_hidden"},
                                "train.net");
            get_if(nj, "image_h", t.net.image_h);
            get_if(nj, "image_w", t.net.image_w);
            get_if(nj, "channels", t.net.channels);
            get_if(nj, "classes", t.net.classes);
            get_if(nj, "n_regions", t.net.n_regions);
            get_if(nj, "enc1", t.net.enc1);
            get_if(nj, "enc2", t.net.enc2);
            get_if(nj, "gen_entry", t.net.gen_entry);
            get_if(nj, "gen_up1", t.net.gen_up1);
            get_if(nj, "gen_up2", t.net.gen_up2);
            get_if(nj, "d1", t.net.d1);
            get_if(nj, "d2", t.net.d2);
            get_if(nj, "d3", t.net.d3);
            get_if(nj, "oc1", t.net.oc1);
            get_if(nj, "oc2", t.net.oc2);
            get_if(nj, "floc_hidden", t.net.floc_hidden);
        }
        if (tj.contains("attention")) {
            const auto& aj = tj.at("attention");
            reject_unknown_keys(
                aj, {"k", "half_width", "half_height", "k_anneal", "k_start", "k_end",
                     "k_anneal_steps"},
                "train.attention");
            auto& a = t.attention;
            get_if(aj, "k", a.k);
            get_if(aj, "half_width", a.half_width);
            get_if(aj, "half_height", a.half_height);
            get_if(aj, "k_anneal", a.k_anneal);
            get_if(aj, "k_start", a.k_start);
            get_if(aj, "k_end", a.k_end);
            get_if(aj, "k_anneal_steps", a.k_anneal_steps);
        }
    }
    c.train.attention.n_regions = c.train.net.n_regions;
    c.train.validate();
    return c;
}

FullConfig config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot read '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("invalid JSON in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const FullConfig& c) {
    const auto att =
        AttentionConfig::with_defaults(c.train.attention, c.train.net.image_h, c.train.net.image_w);
    nlohmann::ordered_json j;
    j["task"] = task_to_json(c.task);
    j["train"] = {{"alpha", c.train.alpha},
                  {"beta", c.train.beta},
                  {"gamma", c.train.gamma},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"steps", c.train.steps},
                  {"seed", c.train.seed},
                  {"ablation", ablation_name(c.train.ablation)},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"net",
                   {{"image_h", c.train.net.image_h},
                    {"image_w", c.train.net.image_w},
                    {"channels", c.train.net.channels},
                    {"classes", c.train.net.classes},
                    {"n_regions", c.train.net.n_regions},
                    {"enc1", c.train.net.enc1},
                    {"enc2", c.train.net.enc2},
                    {"gen_entry", c.train.net.gen_entry},
                    {"gen_up1", c.train.net.gen_up1},
                    {"gen_up2", c.train.net.gen_up2},
                    {"d1", c.train.net.d1},
                    {"d2", c.train.net.d2},
                    {"d3", c.train.net.d3},
                    {"oc1", c.train.net.oc1},
                    {"oc2", c.train.net.oc2},
                    {"floc_hidden", c.train.net.floc_hidden}}},
                  {"attention",
                   {{"k", att.k},
                    {"half_width", att.half_width},
                    {"half_height", att.half_height},
                    {"k_anneal", att.k_anneal},
                    {"k_start", att.k_start},
                    {"k_end", att.k_end},
                    {"k_anneal_steps", att.k_anneal_steps}}}};
    return j;
}

}  // namespace dagan
