#pragma once

// Alternating minimax trainer: per step, D1 on (real t, translated s,
// detached), then D2 on (real t, reconstructed t, detached), then the
// generator side F = DAE∘G on the weighted compound objective. Adam for every
// group, deterministic seeding throughout, binary checkpoints.

#include <cstdint>
#include <string>
#include <vector>

#include "dagan/attention.hpp"
#include "dagan/checkpoint.hpp"
#include "dagan/data.hpp"
#include "dagan/losses.hpp"
#include "dagan/networks.hpp"

namespace dagan {

enum class Ablation { full, no_dae, no_cst, no_sym, no_d2 };

Ablation ablation_from_name(const std::string& name);
const char* ablation_name(Ablation a);

struct TrainConfig {
    double alpha = 1.0, beta = 1.0, gamma = 0.1;  // cst / sym / geo weights
    double learning_rate = 2e-4;
    int batch_size = 64;  // scalable down for desk runs
    double adam_beta1 = 0.5, adam_beta2 = 0.999, adam_eps = 1e-8;
    int steps = 2000;
    std::uint64_t seed = 1;
    Ablation ablation = Ablation::full;
    int checkpoint_every = 0;  // 0 = final checkpoint only
    NetworkConfig net;
    AttentionConfig attention;

    void validate() const;
};

struct AdamState {
    std::vector<std::vector<float>> m, v;  // parallel to the parameter group
    std::uint64_t t = 0;                   // completed updates
    std::uint64_t skipped = 0;             // parameters skipped on non-finite grads

    void init(const NamedParams<float>& params);
};

/// fused Adam step over one parameter group; a parameter whose gradient has
/// any non-finite entry is skipped (moments untouched) and counted
void adam_update(const NamedParams<float>& params, AdamState& st, double lr, double beta1,
                 double beta2, double eps);

/// the four networks plus cached parameter groups (F = DAE + G)
struct Models {
    DAEModel<float> dae;
    GeneratorModel<float> gen;
    DiscriminatorModel<float> d1, d2;

    NamedParams<float> f_params, d1_params, d2_params;
    NamedBuffers<float> buffers;

    void init(const TrainConfig& cfg);
    NamedParams<float> all_params() const;
};

class Trainer {
  public:
    /// n_source / n_target: dataset sizes for the two batch streams
    Trainer(TrainConfig cfg, int n_source, int n_target);

    /// one full D1 -> D2 -> F pass; returns the logged loss components
    LossValues train_step(const TensorPtr<float>& xs, const TensorPtr<float>& ls,
                          const TensorPtr<float>& xt, const TensorPtr<float>& lt);

    Checkpoint make_checkpoint() const;
    void restore(const Checkpoint& ck);

    const TrainConfig& config() const { return cfg_; }
    Models& models() { return models_; }
    int step() const { return step_; }
    std::uint64_t skipped_updates() const;
    BatchIter& source_iter() { return it_s_; }
    BatchIter& target_iter() { return it_t_; }

  private:
    TrainConfig cfg_;  // normalized (no_dae forces n_regions = 1)
    Models models_;
    AdamState ad_f_, ad_d1_, ad_d2_;
    BatchIter it_s_, it_t_;
    int step_ = 0;
};

struct TrainResult {
    std::vector<LossValues> history;  // one entry per step
    std::uint64_t skipped_updates = 0;
};

/// cfg.steps train_steps; one metrics line per step to out_dir/metrics.jsonl,
/// checkpoints at the configured cadence plus a final ckpt_final.bin.
/// Empty out_dir runs without touching the filesystem.
TrainResult train_loop(Trainer& tr, const Dataset& source, const Dataset& target,
                       const std::string& out_dir);

/// map a dataset through F = G(DAE(.)) in inference mode (labels carried over)
Dataset translate_dataset(Models& m, Ablation ablation, const Dataset& src, int batch_size = 64,
                          double k_override = 0.0);

/// supervised training of the evaluation oracle on one labeled domain
OracleClassifier<float> train_oracle(const Dataset& data, const NetworkConfig& net,
                                     std::uint64_t seed, int steps = 400, int batch_size = 32,
                                     double lr = 1e-3);

double oracle_accuracy(OracleClassifier<float>& oracle, const Dataset& data);

}  // namespace dagan
