#pragma once

// Compound objective: consistency, symmetry, source/target adversarial terms,
// and the weighted full objective. Consistency and symmetry share one
// distance kernel; the adversarial terms share one BCE structure with the
// generator side in its non-saturating form.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagan/attention.hpp"
#include "dagan/ops.hpp"

namespace dagan {

enum class DistanceMetric { l2, classifier_feature };
enum class AdvSide { discriminator, generator };

namespace detail {

/// mean over instances of d(a_i, b_i)
template <typename T>
TensorPtr<T> instance_distance(TapeT<T>& tp, const std::vector<TensorPtr<T>>& a,
                               const std::vector<TensorPtr<T>>& b, DistanceMetric d,
                               const char* who) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument(std::string(who) + ": instance count mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                    ")");
    if (d == DistanceMetric::classifier_feature)
        return l2_distance(tp, geo_features(tp, a), geo_features(tp, b));
    TensorPtr<T> acc;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto di = l2_distance(tp, a[i], b[i]);
        acc = acc ? add(tp, acc, di) : di;
    }
    if (a.size() > 1) acc = mul(tp, acc, constant(T(1) / T(a.size())));
    return acc;
}

template <typename T>
TensorPtr<T> filled_like(const TensorPtr<T>& x, T v) {
    return make_tensor<T>(x->shape, v);
}

}  // namespace detail

/// d(DAE(s), DAE(F(s)))
template <typename T>
TensorPtr<T> consistency_loss(TapeT<T>& tp, const std::vector<TensorPtr<T>>& src_inst,
                              const std::vector<TensorPtr<T>>& translated_inst,
                              DistanceMetric d = DistanceMetric::l2) {
    return detail::instance_distance(tp, src_inst, translated_inst, d, "consistency_loss");
}

/// d(DAE(t), DAE(F(t))) — same kernel as consistency, target-side pairing
template <typename T>
TensorPtr<T> symmetry_loss(TapeT<T>& tp, const std::vector<TensorPtr<T>>& tgt_inst,
                           const std::vector<TensorPtr<T>>& reconstructed_inst,
                           DistanceMetric d = DistanceMetric::l2) {
    return detail::instance_distance(tp, tgt_inst, reconstructed_inst, d, "symmetry_loss");
}

/// discriminator side: BCE(real->1) + BCE(fake->0)
/// generator side: non-saturating BCE(fake->1)
template <typename T>
TensorPtr<T> adversarial_loss(TapeT<T>& tp, const TensorPtr<T>& real_logits,
                              const TensorPtr<T>& fake_logits, AdvSide side) {
    if (side == AdvSide::generator)
        return bce_with_logits(tp, fake_logits, detail::filled_like(fake_logits, T(1)));
    auto lr = bce_with_logits(tp, real_logits, detail::filled_like(real_logits, T(1)));
    auto lf = bce_with_logits(tp, fake_logits, detail::filled_like(fake_logits, T(0)));
    return add(tp, lr, lf);
}

/// Eq. 7 structure: D1 on real t vs F(s)
template <typename T>
TensorPtr<T> adv_source(TapeT<T>& tp, const TensorPtr<T>& real_t_logits,
                        const TensorPtr<T>& fake_s_logits, AdvSide side) {
    return adversarial_loss(tp, real_t_logits, fake_s_logits, side);
}

/// Eq. 8 structure: D2 on real t vs F(t)
template <typename T>
TensorPtr<T> adv_target(TapeT<T>& tp, const TensorPtr<T>& real_t_logits,
                        const TensorPtr<T>& recon_t_logits, AdvSide side) {
    return adversarial_loss(tp, real_t_logits, recon_t_logits, side);
}

/// loss components of one step; tensors live on the step's tape
template <typename T>
struct LossBundleT {
    TensorPtr<T> adv_s, adv_t, cst, sym, geo, total;
};

/// plain numbers for the metrics log
struct LossValues {
    int step = 0;
    double adv_s = 0, adv_t = 0, cst = 0, sym = 0, geo = 0, total = 0;
};

/// total = adv_s + adv_t + alpha*cst + beta*sym + gamma*geo. Components are
/// combined on the tape, so a zero weight reports the component but routes no
/// gradient through it.
template <typename T>
LossBundleT<T> full_objective(TapeT<T>& tp, TensorPtr<T> adv_s, TensorPtr<T> adv_t,
                              TensorPtr<T> cst, TensorPtr<T> sym, TensorPtr<T> geo, T alpha,
                              T beta, T gamma) {
    LossBundleT<T> b;
    b.adv_s = std::move(adv_s);
    b.adv_t = std::move(adv_t);
    b.cst = std::move(cst);
    b.sym = std::move(sym);
    b.geo = std::move(geo);
    const struct {
        const char* name;
        const TensorPtr<T>& v;
    } parts[] = {{"adv_s", b.adv_s}, {"adv_t", b.adv_t}, {"cst", b.cst},
                 {"sym", b.sym},     {"geo", b.geo}};
    for (const auto& p : parts) {
        if (!p.v || p.v->size() != 1)
            throw std::invalid_argument(std::string("full_objective: ") + p.name +
                                        " must be a scalar");
        if (!std::isfinite((double)p.v->data[0]))
            throw std::runtime_error(std::string("full_objective: non-finite component ") +
                                     p.name + " = " + std::to_string((double)p.v->data[0]));
    }
    auto t = add(tp, b.adv_s, b.adv_t);
    t = add(tp, t, mul(tp, b.cst, constant(alpha)));
    t = add(tp, t, mul(tp, b.sym, constant(beta)));
    b.total = add(tp, t, mul(tp, b.geo, constant(gamma)));
    return b;
}

}  // namespace dagan
