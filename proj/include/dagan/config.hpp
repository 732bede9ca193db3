#pragma once

// JSON configuration: task pairings (which datasets form the source/target
// domains) and trainer settings, with all defaults resolved and echoable.

#include <string>

#include "dagan/data.hpp"
#include "dagan/trainer.hpp"
#include "json.hpp"

namespace dagan {

/// a desk-scale task: shapes8 (squares -> disks) or digits (glyphs ->
/// transformed glyphs), each with an independent held-out evaluation split
struct TaskSpec {
    std::string name = "shapes8";  // "shapes8" | "digits"
    int resolution = 16;
    int n_train = 2048;
    int n_eval = 600;
    std::uint64_t dataset_seed = 7;
    Shapes8Spec shapes;                                          // shapes8 geometry
    std::vector<Transform> target_transforms = {Transform::invert};  // digits target chain
    double colorize_hue = 120.0;

    void validate() const;
    int channels() const { return name == "digits" ? 1 : 3; }
    int classes() const { return name == "digits" ? 10 : 8; }
};

Dataset make_source(const TaskSpec& t);       // training split, source domain
Dataset make_target(const TaskSpec& t);       // training split, target domain (independent draw)
Dataset make_eval_source(const TaskSpec& t);  // held-out source split
Dataset make_eval_target(const TaskSpec& t);  // held-out target split

TaskSpec task_from_json(const nlohmann::json& j);
nlohmann::ordered_json task_to_json(const TaskSpec& t);

/// unknown keys are rejected; net dimensions are derived from the task unless
/// overridden explicitly
struct FullConfig {
    TaskSpec task;
    TrainConfig train;
};

FullConfig config_from_json(const nlohmann::json& j);
FullConfig config_from_file(const std::string& path);
nlohmann::ordered_json config_to_json(const FullConfig& c);  // every field, resolved

}  // namespace dagan
