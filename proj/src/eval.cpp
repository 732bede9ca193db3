#include "dagan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "dagan/ops.hpp"

namespace dagan {

namespace {

constexpr double kProbFloor = 1e-12;

void check_rows(const std::vector<std::vector<double>>& probs, const char* who) {
    if (probs.empty()) throw std::invalid_argument(std::string(who) + ": empty batch");
    const std::size_t C = probs[0].size();
    if (C < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
    for (const auto& row : probs) {
        if (row.size() != C)
            throw std::invalid_argument(std::string(who) + ": ragged probability rows");
        double s = 0;
        for (double p : row) {
            if (!(p >= 0)) throw std::invalid_argument(std::string(who) + ": negative probability");
            s += p;
        }
        if (std::fabs(s - 1.0) > 1e-6)
            throw std::invalid_argument(std::string(who) + ": row sums to " + std::to_string(s));
    }
}

int argmax_row(const std::vector<double>& row) {
    int best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[(std::size_t)best]) best = (int)c;
    return best;
}

}  // namespace

std::vector<std::vector<double>> oracle_probs(OracleClassifier<float>& oracle, const Dataset& d) {
    if (d.n == 0) throw std::invalid_argument("oracle_probs: empty batch");
    std::vector<std::vector<double>> probs((std::size_t)d.n);
    Tape tp;
    tp.recording = false;
    const int chunk = 256;
    for (int start = 0; start < d.n; start += chunk) {
        const int b = std::min(chunk, d.n - start);
        std::vector<int> idx(b);
        for (int i = 0; i < b; ++i) idx[i] = start + i;
        auto z = oracle_logits(tp, oracle, gather_images(d, idx));
        const int C = z->dim(1);
        for (int i = 0; i < b; ++i) {
            const float* row = z->data.data() + (std::size_t)i * C;
            // softmax in double for stable downstream KL sums
            double zmax = row[0];
            for (int c = 1; c < C; ++c) zmax = std::max(zmax, (double)row[c]);
            double se = 0;
            std::vector<double> p(C);
            for (int c = 0; c < C; ++c) se += (p[c] = std::exp((double)row[c] - zmax));
            for (int c = 0; c < C; ++c) p[c] /= se;
            probs[(std::size_t)(start + i)] = std::move(p);
        }
    }
    return probs;
}

ScoreReport inception_score_from_probs(const std::vector<std::vector<double>>& probs) {
    check_rows(probs, "inception_score");
    const std::size_t N = probs.size(), C = probs[0].size();
    ScoreReport r;
    r.n_samples = (int)N;
    r.per_class_marginal.assign(C, 0.0);
    for (const auto& row : probs)
        for (std::size_t c = 0; c < C; ++c) r.per_class_marginal[c] += row[c] / (double)N;

    double mean_kl = 0;
    for (const auto& row : probs) {
        double kl = 0;
        for (std::size_t c = 0; c < C; ++c) {
            if (row[c] <= 0) continue;  // 0 * log 0 = 0
            const double p = std::max(row[c], kProbFloor);
            const double q = std::max(r.per_class_marginal[c], kProbFloor);
            kl += row[c] * (std::log(p) - std::log(q));
        }
        mean_kl += kl / (double)N;
    }
    r.inception_score = std::exp(mean_kl);
    return r;
}

ScoreReport inception_score(OracleClassifier<float>& oracle, const Dataset& samples) {
    return inception_score_from_probs(oracle_probs(oracle, samples));
}

ModeReport missing_modes_from_probs(const std::vector<std::vector<double>>& probs,
                                    double confidence_threshold) {
    if (!(confidence_threshold >= 0.0 && confidence_threshold < 1.0))
        throw std::invalid_argument("missing_modes: threshold must lie in [0,1)");
    check_rows(probs, "missing_modes");
    const std::size_t C = probs[0].size();
    ModeReport r;
    r.per_mode_counts.assign(C, 0);
    std::vector<bool> covered(C, false);
    for (const auto& row : probs) {
        const int m = argmax_row(row);
        ++r.per_mode_counts[(std::size_t)m];
        if (row[(std::size_t)m] >= confidence_threshold) covered[(std::size_t)m] = true;
    }
    for (std::size_t c = 0; c < C; ++c)
        if (covered[c]) r.covered_modes.push_back((int)c);
    r.missing_count = (int)C - (int)r.covered_modes.size();
    return r;
}

ModeReport missing_modes(OracleClassifier<float>& oracle, const Dataset& samples,
                         double confidence_threshold) {
    return missing_modes_from_probs(oracle_probs(oracle, samples), confidence_threshold);
}

AccuracyReport adaptation_accuracy(OracleClassifier<float>& oracle, const Dataset& translated,
                                   const std::vector<int>& labels) {
    if ((std::size_t)translated.n != labels.size())
        throw std::invalid_argument("adaptation_accuracy: " + std::to_string(translated.n) +
                                    " samples vs " + std::to_string(labels.size()) + " labels");
    if (translated.n == 0) throw std::invalid_argument("adaptation_accuracy: empty batch");
    const int C = oracle.classes;
    AccuracyReport r;
    r.confusion.assign((std::size_t)C, std::vector<int>((std::size_t)C, 0));

    auto probs = oracle_probs(oracle, translated);
    long correct = 0, total = 0;
    for (int i = 0; i < translated.n; ++i) {
        const int truth = labels[(std::size_t)i];
        if (truth < 0 || truth >= C)
            throw std::invalid_argument("adaptation_accuracy: label " + std::to_string(truth) +
                                        " out of range for C=" + std::to_string(C));
        const int pred = argmax_row(probs[(std::size_t)i]);
        ++r.confusion[(std::size_t)truth][(std::size_t)pred];
        correct += (pred == truth);
        ++total;
    }
    r.top1 = (double)correct / (double)total;
    return r;
}

AccuracyReport adaptation_accuracy(OracleClassifier<float>& oracle, const Dataset& translated) {
    return adaptation_accuracy(oracle, translated, translated.labels);
}

// ---------------------------------------------------------------------------
// embedders
// ---------------------------------------------------------------------------

Embedder intensity_centroid_embedder() {
    return [](const Dataset& d, int index) -> std::array<double, 2> {
        const float* img = d.image(index);
        const std::size_t plane = (std::size_t)d.h * d.w;
        double wx = 0, wy = 0, wsum = 0;
        for (int y = 0; y < d.h; ++y) {
            for (int x = 0; x < d.w; ++x) {
                double b = 0;  // brightness above the -1 background, averaged over channels
                for (int c = 0; c < d.channels; ++c)
                    b += (img[(std::size_t)c * plane + (std::size_t)y * d.w + x] + 1.0) * 0.5;
                b /= d.channels;
                wx += b * x;
                wy += b * y;
                wsum += b;
            }
        }
        if (wsum <= 0) return {d.w / 2.0, d.h / 2.0};
        return {wx / wsum, wy / wsum};
    };
}

Embedder feature_pca_embedder(OracleClassifier<float>& oracle, const Dataset& reference) {
    if (reference.n < 2) throw std::invalid_argument("pca embedder: need >= 2 reference samples");

    // pooled features of the reference set, mean-centered
    Tape tp;
    tp.recording = false;
    std::vector<int> idx(reference.n);
    for (int i = 0; i < reference.n; ++i) idx[i] = i;
    auto f = oracle_features(tp, oracle, gather_images(reference, idx));
    const int N = f->dim(0), D = f->dim(1);
    std::vector<double> mean(D, 0.0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) mean[j] += f->data[(std::size_t)i * D + j] / N;

    std::vector<double> cov((std::size_t)D * D, 0.0);
    for (int i = 0; i < N; ++i)
        for (int a = 0; a < D; ++a) {
            const double fa = f->data[(std::size_t)i * D + a] - mean[a];
            for (int b = 0; b < D; ++b)
                cov[(std::size_t)a * D + b] +=
                    fa * (f->data[(std::size_t)i * D + b] - mean[b]) / N;
        }

    // top-2 eigenvectors via deterministic power iteration with deflation
    auto power_iter = [&](const std::vector<double>& deflate) {
        std::vector<double> v(D);
        for (int j = 0; j < D; ++j) v[j] = 1.0 / std::sqrt((double)D);
        for (int iter = 0; iter < 200; ++iter) {
            if (!deflate.empty()) {
                double dot = 0;
                for (int j = 0; j < D; ++j) dot += v[j] * deflate[j];
                for (int j = 0; j < D; ++j) v[j] -= dot * deflate[j];
            }
            std::vector<double> w(D, 0.0);
            for (int a = 0; a < D; ++a)
                for (int b = 0; b < D; ++b) w[a] += cov[(std::size_t)a * D + b] * v[b];
            double norm = 0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-12) return v;  // degenerate covariance: keep current direction
            for (int j = 0; j < D; ++j) v[j] = w[j] / norm;
        }
        return v;
    };
    auto v1 = power_iter({});
    auto v2 = power_iter(v1);

    return [&oracle, mean, v1, v2](const Dataset& d, int index) -> std::array<double, 2> {
        Tape t2;
        t2.recording = false;
        auto fi = oracle_features(t2, oracle, gather_images(d, {index}));
        const int D2 = fi->dim(1);
        double x = 0, y = 0;
        for (int j = 0; j < D2; ++j) {
            const double c = fi->data[(std::size_t)j] - mean[(std::size_t)j];
            x += c * v1[(std::size_t)j];
            y += c * v2[(std::size_t)j];
        }
        return {x, y};
    };
}

void emit_scatter(const std::string& path, const Dataset& real, const Dataset& generated,
                  OracleClassifier<float>& oracle, const Embedder& embed) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("scatter: cannot open '" + path + "' for writing");
    out << "x,y,mode,source\n";
    out << std::setprecision(10);
    auto write_rows = [&](const Dataset& d, const char* source) {
        if (d.n == 0) return;
        auto probs = oracle_probs(oracle, d);
        for (int i = 0; i < d.n; ++i) {
            auto [x, y] = embed(d, i);
            out << x << ',' << y << ',' << argmax_row(probs[(std::size_t)i]) << ',' << source
                << '\n';
        }
    };
    write_rows(real, "real");
    write_rows(generated, "generated");
    if (!out) throw std::runtime_error("scatter: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const ScoreReport& r) {
    return {{"inception_score", r.inception_score},
            {"per_class_marginal", r.per_class_marginal},
            {"n_samples", r.n_samples}};
}

nlohmann::ordered_json to_json(const ModeReport& r) {
    return {{"covered_modes", r.covered_modes},
            {"missing_count", r.missing_count},
            {"per_mode_counts", r.per_mode_counts}};
}

nlohmann::ordered_json to_json(const AccuracyReport& r) {
    return {{"top1", r.top1}, {"confusion", r.confusion}};
}

}  // namespace dagan
