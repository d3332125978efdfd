#pragma once

// Dense feed-forward network with explicit backpropagation.
//
// Parameters live in one flat vector. Layer l owns the slice
// [offset, offset + out*in + out): a row-major (out x in) weight matrix
// followed by the out biases. The learning-rate scale array has the same
// layout, so per-parameter rates, Fisher values and gradients all share
// one index space.
//
// Activations are addressed by boundary index: boundary 0 is the raw input,
// boundary b > 0 is the output of layer b-1 (after its nonlinearity).
// Layer b consumes boundary b, so "forward from layer b" and "inject at
// boundary b" mean the same thing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "arr/error.hpp"
#include "arr/random.hpp"
#include "arr/tensor.hpp"

namespace arr {

using ParamVector = std::vector<double>;
using Label = int;
/// One flag per mini-batch row; true marks a row whose gradient stops early.
using RowMask = std::vector<bool>;

enum class Activation { relu, identity };

struct LayerSpec {
    std::size_t width = 0;
    Activation activation = Activation::relu;
};

struct Layer {
    std::size_t index = 0;
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::relu;
    std::size_t offset = 0;

    std::size_t weight_count() const noexcept { return in * out; }
    std::size_t param_count() const noexcept { return in * out + out; }
    std::size_t bias_offset() const noexcept { return offset + in * out; }
    std::size_t end_offset() const noexcept { return offset + param_count(); }
};

class Network {
public:
    Network() = default;

    Network(std::size_t input_width, const std::vector<LayerSpec>& specs) : input_width_(input_width) {
        if (input_width == 0) throw DimensionError("network input width must be positive");
        if (specs.empty()) throw DimensionError("network needs at least one layer");
        std::size_t in = input_width;
        std::size_t offset = 0;
        for (std::size_t l = 0; l < specs.size(); ++l) {
            if (specs[l].width == 0) {
                throw DimensionError("layer " + std::to_string(l) + " has zero width");
            }
            Layer layer{l, in, specs[l].width, specs[l].activation, offset};
            offset += layer.param_count();
            in = layer.out;
            layers_.push_back(layer);
        }
        params_.assign(offset, 0.0);
        scale_.assign(offset, 1.0);
    }

    /// ReLU hidden layers followed by an identity classifier head, randomly initialized.
    static Network mlp(std::size_t input_width, std::span<const std::size_t> hidden,
                       std::size_t classes, Rng& rng, double head_std = 0.005) {
        std::vector<LayerSpec> specs;
        for (auto w : hidden) specs.push_back({w, Activation::relu});
        specs.push_back({classes, Activation::identity});
        Network net(input_width, specs);
        net.initialize(rng, head_std);
        return net;
    }

    /// Hidden weights ~ N(0, 1/fan_in), head weights ~ N(0, head_std^2), biases zero.
    void initialize(Rng& rng, double head_std = 0.005) {
        for (const auto& layer : layers_) {
            const double std = layer.index == head_index()
                                   ? head_std
                                   : 1.0 / std::sqrt(static_cast<double>(layer.in));
            for (std::size_t k = 0; k < layer.weight_count(); ++k) {
                params_[layer.offset + k] = std * standard_normal(rng);
            }
            std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset()),
                        layer.out, 0.0);
        }
    }

    std::size_t depth() const noexcept { return layers_.size(); }
    std::size_t head_index() const noexcept { return layers_.size() - 1; }
    std::size_t input_width() const noexcept { return input_width_; }
    std::size_t output_width() const noexcept { return layers_.empty() ? 0 : layers_.back().out; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// Width of the activation at a boundary (0 = raw input, depth() = logits).
    std::size_t width_at(std::size_t boundary) const {
        if (boundary > depth()) {
            throw DimensionError("boundary " + std::to_string(boundary) + " beyond network depth " +
                                 std::to_string(depth()));
        }
        return boundary == 0 ? input_width_ : layers_[boundary - 1].out;
    }

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const Layer& layer(std::size_t l) const { return layers_.at(l); }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    std::span<double> layer_parameters(std::size_t l) {
        const auto& L = layers_.at(l);
        return std::span<double>(params_).subspan(L.offset, L.param_count());
    }
    std::span<const double> layer_parameters(std::size_t l) const {
        const auto& L = layers_.at(l);
        return std::span<const double>(params_).subspan(L.offset, L.param_count());
    }

    double& weight(std::size_t l, std::size_t o, std::size_t i) {
        const auto& L = layers_.at(l);
        return params_[L.offset + o * L.in + i];
    }
    double weight(std::size_t l, std::size_t o, std::size_t i) const {
        const auto& L = layers_.at(l);
        return params_[L.offset + o * L.in + i];
    }
    double& bias(std::size_t l, std::size_t o) { return params_[layers_.at(l).bias_offset() + o]; }
    double bias(std::size_t l, std::size_t o) const {
        return params_[layers_.at(l).bias_offset() + o];
    }

    std::span<const double> lr_scale() const noexcept { return scale_; }

    void set_lr_scale(std::span<const double> scale) {
        if (scale.size() != scale_.size()) {
            throw DimensionError("learning-rate scale has " + std::to_string(scale.size()) +
                                 " entries, network has " + std::to_string(scale_.size()));
        }
        for (std::size_t k = 0; k < scale.size(); ++k) {
            if (!(scale[k] >= 0.0 && scale[k] <= 1.0)) {
                throw InputError("learning-rate scale outside [0,1] at " + describe_parameter(k));
            }
        }
        std::copy(scale.begin(), scale.end(), scale_.begin());
    }

    void reset_lr_scale() { std::fill(scale_.begin(), scale_.end(), 1.0); }

    /// Index of the layer owning flat parameter k.
    std::size_t layer_of(std::size_t k) const {
        for (const auto& L : layers_) {
            if (k < L.end_offset()) return L.index;
        }
        throw DimensionError("parameter index " + std::to_string(k) + " out of range");
    }

    std::string describe_parameter(std::size_t k) const {
        const auto& L = layers_.at(layer_of(k));
        const auto local = k - L.offset;
        if (local < L.weight_count()) {
            return "layer " + std::to_string(L.index) + " weight[" + std::to_string(local / L.in) +
                   "," + std::to_string(local % L.in) + "]";
        }
        return "layer " + std::to_string(L.index) + " bias[" +
               std::to_string(local - L.weight_count()) + "]";
    }

    friend bool operator==(const Network& a, const Network& b) {
        if (a.input_width_ != b.input_width_ || a.layers_.size() != b.layers_.size()) return false;
        for (std::size_t l = 0; l < a.layers_.size(); ++l) {
            if (a.layers_[l].out != b.layers_[l].out ||
                a.layers_[l].activation != b.layers_[l].activation) {
                return false;
            }
        }
        return a.params_ == b.params_ && a.scale_ == b.scale_;
    }

private:
    std::size_t input_width_ = 0;
    std::vector<Layer> layers_;
    ParamVector params_;
    ParamVector scale_;
};

/// Cached state of one forward evaluation, consumed by backward().
/// Layer l's cache holds only the batch rows listed in row_ids[l]; rows
/// injected at a boundary above l are absent there.
struct ForwardPass {
    std::size_t from_layer = 0;
    std::size_t batch_rows = 0;
    std::vector<Tensor> inputs;
    std::vector<Tensor> pre_activations;
    std::vector<std::vector<std::size_t>> row_ids;
    Tensor logits;

    bool ready() const noexcept { return !inputs.empty(); }
};

namespace detail {

inline void dense_rows(const Network& net, std::size_t l, const Tensor& input, Tensor& pre,
                       Tensor& post) {
    const auto& L = net.layer(l);
    const auto p = net.parameters();
    const double* W = p.data() + L.offset;
    const double* b = p.data() + L.bias_offset();
    const auto rows = input.rows();
    pre = Tensor::matrix(rows, L.out);
    post = Tensor::matrix(rows, L.out);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = input.values.data() + r * L.in;
        double* z = pre.values.data() + r * L.out;
        double* a = post.values.data() + r * L.out;
        for (std::size_t o = 0; o < L.out; ++o) {
            const double* w = W + o * L.in;
            double acc = b[o];
            for (std::size_t i = 0; i < L.in; ++i) acc += w[i] * x[i];
            z[o] = acc;
            a[o] = (L.activation == Activation::relu && acc <= 0.0) ? 0.0 : acc;
        }
    }
}

inline void check_batch_width(const Network& net, const Tensor& batch, std::size_t boundary) {
    const auto expected = net.width_at(boundary);
    if (batch.rows() > 0 && batch.cols() != expected) {
        throw DimensionError("batch width " + std::to_string(batch.cols()) + " does not match width " +
                             std::to_string(expected) + " at layer " + std::to_string(boundary));
    }
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> ids(n);
    for (std::size_t r = 0; r < n; ++r) ids[r] = r;
    return ids;
}

}  // namespace detail

/// Forward from layer `from_layer` (0 = raw input) to the logits, caching
/// everything backward() needs.
inline ForwardPass forward(const Network& net, const Tensor& batch, std::size_t from_layer = 0) {
    if (from_layer >= net.depth()) {
        throw DimensionError("from_layer " + std::to_string(from_layer) + " must be below depth " +
                             std::to_string(net.depth()));
    }
    detail::check_batch_width(net, batch, from_layer);
    ForwardPass pass;
    pass.from_layer = from_layer;
    pass.batch_rows = batch.rows();
    pass.inputs.resize(net.depth());
    pass.pre_activations.resize(net.depth());
    pass.row_ids.resize(net.depth());
    Tensor current = batch;
    if (current.shape.size() != 2) current.shape = {batch.rows(), net.width_at(from_layer)};
    const auto ids = detail::iota_rows(batch.rows());
    for (std::size_t l = from_layer; l < net.depth(); ++l) {
        Tensor post;
        pass.row_ids[l] = ids;
        pass.inputs[l] = current;
        detail::dense_rows(net, l, current, pass.pre_activations[l], post);
        current = std::move(post);
    }
    pass.logits = std::move(current);
    return pass;
}

/// Forward where `fresh` rows enter at the raw input and `injected` rows
/// (stored activations) are concatenated at boundary `inject_at` along the
/// batch dimension. Batch row order is fresh rows first, then injected rows.
inline ForwardPass forward_mixed(const Network& net, const Tensor& fresh, const Tensor& injected,
                                 std::size_t inject_at) {
    if (inject_at >= net.depth()) {
        throw DimensionError("injection layer " + std::to_string(inject_at) +
                             " must be below the head");
    }
    detail::check_batch_width(net, fresh, 0);
    detail::check_batch_width(net, injected, inject_at);
    ForwardPass pass;
    pass.from_layer = 0;
    pass.batch_rows = fresh.rows() + injected.rows();
    pass.inputs.resize(net.depth());
    pass.pre_activations.resize(net.depth());
    pass.row_ids.resize(net.depth());
    Tensor current = fresh;
    current.shape = {fresh.rows(), net.input_width()};
    const auto fresh_ids = detail::iota_rows(fresh.rows());
    const auto all_ids = detail::iota_rows(pass.batch_rows);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        if (l == inject_at) current = concat_rows(current, injected);
        Tensor post;
        pass.row_ids[l] = l < inject_at ? fresh_ids : all_ids;
        pass.inputs[l] = current;
        detail::dense_rows(net, l, current, pass.pre_activations[l], post);
        current = std::move(post);
    }
    pass.logits = std::move(current);
    return pass;
}

/// Activations at `boundary` (0 = the batch itself, depth() = logits). No cache.
inline Tensor forward_to(const Network& net, const Tensor& batch, std::size_t boundary) {
    if (boundary > net.depth()) throw DimensionError("boundary beyond network depth");
    detail::check_batch_width(net, batch, 0);
    Tensor current = batch;
    current.shape = {batch.rows(), net.input_width()};
    for (std::size_t l = 0; l < boundary; ++l) {
        Tensor pre, post;
        detail::dense_rows(net, l, current, pre, post);
        current = std::move(post);
    }
    return current;
}

/// Backpropagates `loss_gradient` (rows x classes, d loss / d logits).
///
/// Rows flagged in `rows_to_stop` contribute to layers >= stop_before_layer
/// only; all other rows reach every cached layer. Gradients are summed over
/// rows in ascending row order. An empty mask stops nothing.
inline ParamVector backward(const Network& net, const ForwardPass& pass, const Tensor& loss_gradient,
                            std::size_t stop_before_layer = 0, const RowMask& rows_to_stop = {}) {
    if (!pass.ready()) throw StateError("backward called without a prior forward pass");
    const auto B = pass.batch_rows;
    if (loss_gradient.rows() != B || loss_gradient.cols() != net.output_width()) {
        throw DimensionError("loss gradient shape does not match the cached logits");
    }
    if (!rows_to_stop.empty() && rows_to_stop.size() != B) {
        throw DimensionError("row mask length differs from batch size");
    }
    const auto masked = [&](std::size_t r) { return !rows_to_stop.empty() && rows_to_stop[r]; };

    ParamVector grads(net.parameter_count(), 0.0);
    const auto params = net.parameters();
    Tensor delta = loss_gradient;  // d loss / d output of the current layer, all B rows
    delta.shape = {B, net.output_width()};

    for (std::size_t l = net.depth(); l-- > pass.from_layer;) {
        const auto& L = net.layer(l);
        const bool below_stop = l < stop_before_layer;
        const auto& ids = pass.row_ids[l];
        if (ids.size() != B) {
            // rows absent from this cache must all be stopped rows
            std::vector<bool> present(B, false);
            for (auto r : ids) present[r] = true;
            for (std::size_t r = 0; r < B; ++r) {
                if (!present[r] && !(below_stop && masked(r))) {
                    throw StateError("row " + std::to_string(r) + " has no cached activation at layer " +
                                     std::to_string(l));
                }
            }
        }
        const Tensor& input = pass.inputs[l];
        const Tensor& pre = pass.pre_activations[l];
        double* dW = grads.data() + L.offset;
        double* db = grads.data() + L.bias_offset();
        const double* W = params.data() + L.offset;
        const bool propagate = l > pass.from_layer;
        Tensor delta_in = propagate ? Tensor::matrix(B, L.in) : Tensor{};
        std::vector<double> dpre(L.out);
        bool any_active = false;

        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto r = ids[k];
            if (below_stop && masked(r)) continue;
            any_active = true;
            const double* d = delta.values.data() + r * L.out;
            const double* z = pre.values.data() + k * L.out;
            const double* x = input.values.data() + k * L.in;
            for (std::size_t o = 0; o < L.out; ++o) {
                dpre[o] = (L.activation == Activation::relu && z[o] <= 0.0) ? 0.0 : d[o];
            }
            for (std::size_t o = 0; o < L.out; ++o) {
                const double g = dpre[o];
                if (g == 0.0) continue;
                double* row = dW + o * L.in;
                for (std::size_t i = 0; i < L.in; ++i) row[i] += g * x[i];
                db[o] += g;
            }
            if (propagate) {
                double* din = delta_in.values.data() + r * L.in;
                for (std::size_t o = 0; o < L.out; ++o) {
                    const double g = dpre[o];
                    if (g == 0.0) continue;
                    const double* w = W + o * L.in;
                    for (std::size_t i = 0; i < L.in; ++i) din[i] += w[i] * g;
                }
            }
        }
        if (!propagate || !any_active) break;
        if (l - 1 < stop_before_layer && !rows_to_stop.empty()) {
            // nothing left to do once every row below the stop is masked
            const auto& next_ids = pass.row_ids[l - 1];
            const bool all_stopped = std::all_of(next_ids.begin(), next_ids.end(),
                                                 [&](std::size_t r) { return masked(r); });
            if (all_stopped) break;
        }
        delta = std::move(delta_in);
    }
    return grads;
}

inline void check_finite(const Network& net, std::span<const double> grads) {
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(grads[k])) {
            throw NumericError("non-finite gradient at " + net.describe_parameter(k));
        }
    }
}

/// theta_k -= base_rate * scale_k * grad_k, with scale_k from the network's
/// learning-rate scale array.
inline void sgd_step(Network& net, std::span<const double> grads, double base_rate) {
    if (grads.size() != net.parameter_count()) {
        throw DimensionError("gradient length does not match parameter count");
    }
    if (!(base_rate > 0.0)) throw InputError("learning rate must be positive");
    check_finite(net, grads);
    auto p = net.parameters();
    const auto s = net.lr_scale();
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (s[k] == 0.0) continue;
        p[k] -= base_rate * s[k] * grads[k];
    }
}

struct LossResult {
    double loss = 0.0;
    Tensor gradient;
};

inline void check_labels(std::span<const Label> labels, std::size_t classes) {
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
            throw InputError("label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                             " outside [0," + std::to_string(classes) + ")");
        }
    }
}

/// Per-row softmax cross-entropy.
inline std::vector<double> cross_entropy_per_sample(const Tensor& logits, std::span<const Label> labels) {
    const auto C = logits.cols();
    if (labels.size() != logits.rows()) throw DimensionError("label count differs from logit rows");
    check_labels(labels, C);
    std::vector<double> out(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto z = logits.row(r);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        out[r] = std::log(sum) + m - z[static_cast<std::size_t>(labels[r])];
    }
    return out;
}

/// Mean softmax cross-entropy; gradient = (softmax - onehot) / rows.
inline LossResult cross_entropy(const Tensor& logits, std::span<const Label> labels) {
    const auto N = logits.rows();
    const auto C = logits.cols();
    if (labels.size() != N) throw DimensionError("label count differs from logit rows");
    if (N == 0) throw InputError("cross-entropy over an empty batch");
    check_labels(labels, C);
    LossResult res;
    res.gradient = Tensor::matrix(N, C);
    const double inv = 1.0 / static_cast<double>(N);
    for (std::size_t r = 0; r < N; ++r) {
        const auto z = logits.row(r);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        const auto y = static_cast<std::size_t>(labels[r]);
        res.loss += std::log(sum) + m - z[y];
        auto g = res.gradient.row(r);
        for (std::size_t c = 0; c < C; ++c) g[c] = std::exp(z[c] - m) / sum * inv;
        g[y] -= inv;
    }
    res.loss *= inv;
    return res;
}

/// Worst relative disagreement between backward() and central differences
/// of the mean cross-entropy, over up to `max_params` parameters (all when
/// the network is small enough, otherwise a seeded sample).
inline double finite_difference_check(const Network& net, const Tensor& batch,
                                      std::span<const Label> labels, double epsilon,
                                      std::size_t max_params = 512, std::uint64_t seed = 0) {
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw InputError("epsilon must lie in (0, 1e-2]");
    const auto pass = forward(net, batch);
    const auto loss = cross_entropy(pass.logits, labels);
    const auto analytic = backward(net, pass, loss.gradient);

    std::vector<std::size_t> probe;
    if (net.parameter_count() <= max_params) {
        probe = detail::iota_rows(net.parameter_count());
    } else {
        Rng rng(seed);
        probe = sample_without_replacement(net.parameter_count(), max_params, rng);
    }
    Network work = net;
    auto p = work.parameters();
    const auto loss_at = [&] { return cross_entropy(forward(work, batch).logits, labels).loss; };
    double worst = 0.0;
    for (auto k : probe) {
        const double saved = p[k];
        p[k] = saved + epsilon;
        const double up = loss_at();
        p[k] = saved - epsilon;
        const double down = loss_at();
        p[k] = saved;
        const double central = (up - down) / (2.0 * epsilon);
        const double err =
            std::abs(analytic[k] - central) / (std::abs(analytic[k]) + std::abs(central) + 1e-12);
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace arr
