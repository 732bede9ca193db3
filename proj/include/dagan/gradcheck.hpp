#pragma once

// Central-difference gradient verification. Runs entirely in double: the
// scalar reference kernels are templated, so the whole op set instantiates at
// 64 bits and fd noise stays far below the 1e-4 acceptance line.

#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagan/ops.hpp"
#include "dagan/tensor.hpp"

namespace dagan {

struct GradCheckReport {
    std::vector<double> max_rel_err;  // one entry per checked parameter
    double worst = 0.0;

    bool pass(double tolerance) const { return worst <= tolerance; }
};

/// f builds a scalar loss on the given tape from the captured params.
using ScalarFn = std::function<TensorPtr<double>(TapeT<double>&)>;

namespace detail {

inline double eval_scalar(const ScalarFn& f) {
    TapeT<double> tape;
    auto out = f(tape);
    if (!out || out->size() != 1)
        throw std::invalid_argument("finite_diff_check: f must return a scalar");
    return out->data[0];
}

}  // namespace detail

inline GradCheckReport finite_diff_check(const ScalarFn& f,
                                         const std::vector<TensorPtr<double>>& params,
                                         double epsilon = 1e-4, double tolerance = 1e-4) {
    (void)tolerance;
    if (!(epsilon >= 1e-5 && epsilon <= 1e-2))
        throw std::invalid_argument("finite_diff_check: epsilon must lie in [1e-5, 1e-2]");
    for (const auto& p : params)
        if (!p || !p->requires_grad)
            throw std::invalid_argument("finite_diff_check: params must require grad");

    // determinism gate: two independent forward passes must agree bit-exactly
    const double f0 = detail::eval_scalar(f);
    const double f1 = detail::eval_scalar(f);
    if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
        throw std::runtime_error("finite_diff_check: f is not deterministic");

    // analytic grads
    std::vector<std::vector<double>> analytic;
    {
        TapeT<double> tape;
        auto loss = f(tape);
        backward(tape, loss);
        for (const auto& p : params) {
            if (p->has_grad())
                analytic.push_back(p->grad);
            else
                analytic.emplace_back(p->size(), 0.0);  // unreached by the loss
        }
    }

    GradCheckReport rep;
    rep.max_rel_err.resize(params.size(), 0.0);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p.data[i];
            p.data[i] = keep + epsilon;
            const double fp = detail::eval_scalar(f);
            p.data[i] = keep - epsilon;
            const double fm = detail::eval_scalar(f);
            p.data[i] = keep;
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            rep.max_rel_err[pi] = std::max(rep.max_rel_err[pi], rel);
            rep.worst = std::max(rep.worst, rel);
        }
    }
    return rep;
}

}  // namespace dagan
