#pragma once

// CWR* classifier head: consolidated weights (read at inference) and
// temporary weights (trained within an experience), one row per class.
// Each row holds the class's input weights followed by its bias.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "arr/error.hpp"
#include "arr/nn.hpp"
#include "arr/tensor.hpp"

namespace arr {

/// Per-class sample counts of one experience; keys are the classes present.
using ClassCounts = std::map<Label, std::size_t>;

inline ClassCounts count_classes(std::span<const Label> labels) {
    ClassCounts counts;
    for (auto y : labels) ++counts[y];
    return counts;
}

class ClassifierHead {
public:
    ClassifierHead() = default;

    ClassifierHead(std::size_t classes, std::size_t features)
        : cw(Tensor::matrix(classes, features + 1)),
          tw(Tensor::matrix(classes, features + 1)),
          past(classes, 0) {
        if (classes == 0 || features == 0) throw DimensionError("head needs classes and features");
    }

    std::size_t classes() const noexcept { return cw.rows(); }
    std::size_t features() const noexcept { return cw.cols() - 1; }

    void check_class(Label j) const {
        if (j < 0 || static_cast<std::size_t>(j) >= classes()) {
            throw InputError("class " + std::to_string(j) + " outside the class universe of size " +
                             std::to_string(classes()));
        }
    }

    Tensor cw;
    Tensor tw;
    std::vector<std::uint64_t> past;
};

/// tw[j] = cw[j] for classes present in the experience, 0 otherwise.
inline void begin_experience(ClassifierHead& head, std::span<const Label> classes_present) {
    std::vector<bool> present(head.classes(), false);
    for (auto j : classes_present) {
        head.check_class(j);
        present[static_cast<std::size_t>(j)] = true;
    }
    for (std::size_t j = 0; j < head.classes(); ++j) {
        auto dst = head.tw.row(j);
        if (present[j]) {
            const auto src = head.cw.row(j);
            std::copy(src.begin(), src.end(), dst.begin());
        } else {
            std::fill(dst.begin(), dst.end(), 0.0);
        }
    }
}

/// Scalar mean of every tw entry (weights and bias) over the given classes.
inline double average_tw(const ClassifierHead& head, const ClassCounts& counts) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [j, cur] : counts) {
        for (double v : head.tw.row(static_cast<std::size_t>(j))) sum += v;
        n += head.tw.cols();
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Weighted consolidation of tw into cw for the classes in `counts`:
///   wpast = sqrt(past / cur)
///   cw    = (cw * wpast + (tw - avg(tw))) / (wpast + 1)
///   past += cur
inline void consolidate(ClassifierHead& head, const ClassCounts& counts) {
    for (const auto& [j, cur] : counts) {
        head.check_class(j);
        if (cur == 0) {
            throw InputError("class " + std::to_string(j) + " is present with zero samples");
        }
    }
    const double avg = average_tw(head, counts);
    for (const auto& [j, cur] : counts) {
        const auto c = static_cast<std::size_t>(j);
        const double wpast =
            std::sqrt(static_cast<double>(head.past[c]) / static_cast<double>(cur));
        auto cw = head.cw.row(c);
        const auto tw = head.tw.row(c);
        for (std::size_t k = 0; k < cw.size(); ++k) {
            cw[k] = (cw[k] * wpast + (tw[k] - avg)) / (wpast + 1.0);
        }
        head.past[c] += cur;
    }
}

/// Copies head weights (classes x features+1) into the network's last layer.
inline void load_head(Network& net, const Tensor& weights) {
    const auto h = net.head_index();
    const auto& L = net.layer(h);
    if (weights.rows() != L.out || weights.cols() != L.in + 1) {
        throw DimensionError("head weights do not match the network's classifier layer");
    }
    for (std::size_t o = 0; o < L.out; ++o) {
        for (std::size_t i = 0; i < L.in; ++i) net.weight(h, o, i) = weights.at(o, i);
        net.bias(h, o) = weights.at(o, L.in);
    }
}

inline void store_head(const Network& net, Tensor& weights) {
    const auto h = net.head_index();
    const auto& L = net.layer(h);
    weights = Tensor::matrix(L.out, L.in + 1);
    for (std::size_t o = 0; o < L.out; ++o) {
        for (std::size_t i = 0; i < L.in; ++i) weights.at(o, i) = net.weight(h, o, i);
        weights.at(o, L.in) = net.bias(h, o);
    }
}

/// Logits computed from the shared representation and an explicit head
/// matrix, bypassing whatever the network's own last layer holds.
inline Tensor head_logits(const Network& net, const Tensor& weights, const Tensor& batch) {
    const auto features = forward_to(net, batch, net.head_index());
    const auto F = features.cols();
    if (weights.cols() != F + 1) throw DimensionError("head width does not match representation");
    Tensor logits = Tensor::matrix(features.rows(), weights.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const auto x = features.row(r);
        for (std::size_t j = 0; j < weights.rows(); ++j) {
            const auto w = weights.row(j);
            double acc = w[F];
            for (std::size_t i = 0; i < F; ++i) acc += w[i] * x[i];
            logits.at(r, j) = acc;
        }
    }
    return logits;
}

/// Argmax class per row; ties go to the lowest class index.
inline std::vector<Label> argmax_rows(const Tensor& logits) {
    std::vector<Label> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < z.size(); ++c) {
            if (z[c] > z[best]) best = c;
        }
        out[r] = static_cast<Label>(best);
    }
    return out;
}

/// Predictions from the shared representation and the consolidated weights.
inline std::vector<Label> predict(const Network& net, const ClassifierHead& head, const Tensor& batch) {
    return argmax_rows(head_logits(net, head.cw, batch));
}

}  // namespace arr
