#pragma once

// Quantitative metrics: inception-style score over oracle predictions,
// missing-mode counting, adaptation accuracy, and 2-D scatter data emission.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "dagan/data.hpp"
#include "dagan/networks.hpp"
#include "json.hpp"

namespace dagan {

struct ScoreReport {
    double inception_score = 1.0;
    std::vector<double> per_class_marginal;  // sums to 1
    int n_samples = 0;
};

struct ModeReport {
    std::vector<int> covered_modes;    // sorted class indices
    int missing_count = 0;             // C - |covered_modes|
    std::vector<int> per_mode_counts;  // argmax assignment counts, sum == n_samples
};

struct AccuracyReport {
    double top1 = 0.0;
    std::vector<std::vector<int>> confusion;  // [true][predicted]
};

/// row-stochastic oracle predictions for a whole dataset, in double
std::vector<std::vector<double>> oracle_probs(OracleClassifier<float>& oracle, const Dataset& d);

/// score = exp(mean_x KL(p(y|x) || p(y))), probabilities clamped at 1e-12
/// inside the logs; rows must be distributions
ScoreReport inception_score_from_probs(const std::vector<std::vector<double>>& probs);
ScoreReport inception_score(OracleClassifier<float>& oracle, const Dataset& samples);

/// a mode is covered iff some sample is argmax-assigned to it with confidence
/// >= threshold; per_mode_counts tallies every argmax assignment
ModeReport missing_modes_from_probs(const std::vector<std::vector<double>>& probs,
                                    double confidence_threshold = 0.0);
ModeReport missing_modes(OracleClassifier<float>& oracle, const Dataset& samples,
                         double confidence_threshold = 0.0);

/// top-1 accuracy of the oracle on translated images against carried labels
AccuracyReport adaptation_accuracy(OracleClassifier<float>& oracle, const Dataset& translated,
                                   const std::vector<int>& labels);
AccuracyReport adaptation_accuracy(OracleClassifier<float>& oracle, const Dataset& translated);

/// maps (dataset, index) to a 2-D point
using Embedder = std::function<std::array<double, 2>(const Dataset& d, int index)>;

/// brightness-weighted pixel centroid — the known generative coordinate for
/// the synthetic shape task
Embedder intensity_centroid_embedder();

/// projection onto the top-2 principal components of the oracle's pooled
/// features over a reference dataset
Embedder feature_pca_embedder(OracleClassifier<float>& oracle, const Dataset& reference);

/// CSV rows "x,y,mode,source" for real then generated samples (mode = oracle
/// argmax); header always written
void emit_scatter(const std::string& path, const Dataset& real, const Dataset& generated,
                  OracleClassifier<float>& oracle, const Embedder& embed);

nlohmann::ordered_json to_json(const ScoreReport& r);
nlohmann::ordered_json to_json(const ModeReport& r);
nlohmann::ordered_json to_json(const AccuracyReport& r);

}  // namespace dagan
