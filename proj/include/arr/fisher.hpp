#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "arr/error.hpp"
#include "arr/nn.hpp"

namespace arr {

/// A single diagonal Fisher vector kept across the whole stream. `F` shares
/// the network's flat parameter layout and is clipped to [0, max_f].
struct FisherState {
    ParamVector F;
    double max_f = 1e-3;
    double lambda = 0.0;
    std::optional<ParamVector> theta_star;
    std::size_t updates = 0;

    FisherState() = default;
    FisherState(std::size_t params, double max_f_, double lambda_)
        : F(params, 0.0), max_f(max_f_), lambda(lambda_) {
        if (!(max_f > 0.0)) throw InputError("max_F must be positive");
        if (lambda < 0.0) throw InputError("lambda must be non-negative");
    }

    /// Folds one per-experience estimate into the running mean, then clips.
    void accumulate(std::span<const double> estimate) {
        if (estimate.size() != F.size()) throw DimensionError("Fisher estimate length mismatch");
        const double n = static_cast<double>(updates);
        for (std::size_t k = 0; k < F.size(); ++k) {
            const double mean = (F[k] * n + estimate[k]) / (n + 1.0);
            F[k] = std::clamp(mean, 0.0, max_f);
        }
        ++updates;
    }

    /// 1 - F_k / max_F.
    double scale(std::size_t k) const { return 1.0 - F[k] / max_f; }
};

/// Mean over samples of the squared per-sample cross-entropy gradient, for
/// the parameters of layers >= from_layer (zeros elsewhere).
inline ParamVector estimate_fisher(const Network& net, const Tensor& samples,
                                   std::span<const Label> labels, std::size_t from_layer = 0) {
    const auto n = samples.rows();
    if (n == 0) throw InputError("Fisher estimate needs at least one sample");
    if (labels.size() != n) throw DimensionError("label count differs from sample count");
    ParamVector est(net.parameter_count(), 0.0);
    const RowMask stop_all{true};
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t row_index[] = {r};
        const auto one = gather_rows(samples, row_index);
        const auto pass = forward(net, one);
        const auto loss = cross_entropy(pass.logits, labels.subspan(r, 1));
        const auto g = backward(net, pass, loss.gradient, from_layer, stop_all);
        for (std::size_t k = 0; k < est.size(); ++k) est[k] += g[k] * g[k];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : est) v *= inv;
    return est;
}

/// Scales a fresh estimate by lambda and folds it into `fisher`.
inline void update_fisher(FisherState& fisher, const Network& net, const Tensor& samples,
                          std::span<const Label> labels, std::size_t from_layer = 0) {
    auto est = estimate_fisher(net, samples, labels, from_layer);
    for (auto& v : est) v *= fisher.lambda;
    fisher.accumulate(est);
}

/// theta' = theta - eta*s*grad - eta*s*F*(theta - theta*), with s the
/// network's per-parameter learning-rate scale.
inline void ewc_step(Network& net, std::span<const double> grads, const FisherState& fisher,
                     double rate) {
    if (!fisher.theta_star) throw StateError("EWC step needs a theta* snapshot");
    const auto& anchor = *fisher.theta_star;
    if (grads.size() != net.parameter_count() || anchor.size() != net.parameter_count() ||
        fisher.F.size() != net.parameter_count()) {
        throw DimensionError("EWC step buffers do not match parameter count");
    }
    if (!(rate > 0.0)) throw InputError("learning rate must be positive");
    check_finite(net, grads);
    auto p = net.parameters();
    const auto s = net.lr_scale();
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (s[k] == 0.0) continue;
        p[k] = p[k] - rate * s[k] * grads[k] - rate * s[k] * fisher.F[k] * (p[k] - anchor[k]);
    }
}

}  // namespace arr
