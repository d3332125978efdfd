#pragma once

// Continual-learning strategies over a CWR*-style head:
//   naive  plain fine-tuning of the whole network
//   cwr    CWR* head (tw/cw with weighted consolidation), plain SGD below it
//   ewc    fine-tuning with the EWC two-term update on a single running Fisher
//   arr    CWR* head + Fisher-scaled learning rates + native/latent replay

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "arr/error.hpp"
#include "arr/fisher.hpp"
#include "arr/head.hpp"
#include "arr/nn.hpp"
#include "arr/random.hpp"
#include "arr/replay.hpp"
#include "arr/stream.hpp"

namespace arr {

enum class StrategyKind { naive, cwr, ewc, arr };

inline std::string to_string(StrategyKind s) {
    switch (s) {
        case StrategyKind::naive: return "naive";
        case StrategyKind::cwr: return "cwr";
        case StrategyKind::ewc: return "ewc";
        case StrategyKind::arr: return "arr";
    }
    return "unknown";
}

inline std::optional<StrategyKind> parse_strategy(const std::string& tag) {
    if (tag == "naive") return StrategyKind::naive;
    if (tag == "cwr") return StrategyKind::cwr;
    if (tag == "ewc") return StrategyKind::ewc;
    if (tag == "arr") return StrategyKind::arr;
    return std::nullopt;
}

inline bool uses_cwr_head(StrategyKind s) { return s == StrategyKind::cwr || s == StrategyKind::arr; }

struct TrainConfig {
    // RM_size, lambda and alpha default to 0: no replay, no regularization,
    // raw-input replay.
    std::size_t rm_size = 0;
    double lambda = 0.0;
    std::size_t alpha = 0;

    std::size_t mb_size = 32;
    std::size_t epochs = 1;
    double learning_rate = 0.01;
    double below_alpha_rate = 1.0;  // multiplier on learning_rate for layers below the slow-down boundary
    double max_f = 1e-3;
    std::uint64_t seed = 0;
    StrategyKind strategy = StrategyKind::arr;

    // Boundary below which below_alpha_rate applies and at/above which
    // regularization applies. Defaults to alpha.
    std::optional<std::size_t> slowdown_layer;
    // Apply below_alpha_rate in the first experience too (pre-trained
    // representation). Otherwise the first experience trains at full rate.
    bool freeze_from_first = false;
    std::size_t fisher_samples = 512;
    // Keep raw inputs next to stored patterns (drift diagnostics).
    bool keep_replay_inputs = false;

    std::size_t boundary() const noexcept { return slowdown_layer.value_or(alpha); }
};

/// Checks a config against a network; throws ConfigError on the first problem.
inline void check_config(const TrainConfig& cfg, const Network& net) {
    if (cfg.mb_size == 0) throw ConfigError("mb_size must be positive");
    if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(cfg.below_alpha_rate >= 0.0 && cfg.below_alpha_rate <= 1.0)) {
        throw ConfigError("below_alpha_rate must lie in [0,1]");
    }
    if (!(cfg.max_f > 0.0)) throw ConfigError("max_F must be positive");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (cfg.alpha > net.head_index()) {
        throw ConfigError("alpha " + std::to_string(cfg.alpha) + " is not below the head (layer " +
                          std::to_string(net.head_index()) + ")");
    }
    if (cfg.boundary() > net.head_index()) throw ConfigError("slowdown layer must be below the head");
}

struct MinibatchSplit {
    std::size_t fresh = 0;
    std::size_t replay = 0;

    friend bool operator==(const MinibatchSplit&, const MinibatchSplit&) = default;
};

/// mb_e = |D| / ((|D| + RM_size) / mb_size) rounded half-up and clamped to
/// [1, mb_size] after the first experience; mb_size in the first one.
inline MinibatchSplit minibatch_split(std::size_t experience_size, std::size_t rm_size,
                                      std::size_t mb_size, bool is_first) {
    if (mb_size == 0) throw InputError("mb_size must be positive");
    if (is_first || rm_size == 0) return {mb_size, 0};
    const double n = static_cast<double>(experience_size);
    const double exact = n / ((n + static_cast<double>(rm_size)) / static_cast<double>(mb_size));
    auto fresh = static_cast<std::size_t>(std::floor(exact + 0.5));
    fresh = std::clamp<std::size_t>(fresh, 1, mb_size);
    return {fresh, mb_size - fresh};
}

struct NetSpec {
    std::size_t input = 0;
    std::vector<std::size_t> hidden;
    std::size_t classes = 0;
};

/// Mixes the run seed into independent streams for initialization and training.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Strategy state for one run over a stream.
class Learner {
public:
    Learner(Network net, TrainConfig cfg)
        : net_(std::move(net)),
          cfg_(cfg),
          head_(net_.output_width(), net_.layer(net_.head_index()).in),
          fisher_(net_.parameter_count(), cfg.max_f, cfg.lambda),
          memory_(cfg.rm_size, cfg.alpha, cfg.keep_replay_inputs),
          rng_(derive_seed(cfg.seed, 1)) {
        check_config(cfg_, net_);
        if (!uses_cwr_head(cfg_.strategy)) store_head(net_, head_.cw);
    }

    Learner(const NetSpec& spec, TrainConfig cfg) : Learner(make_network(spec, cfg.seed), cfg) {}

    static Network make_network(const NetSpec& spec, std::uint64_t seed) {
        Rng init(derive_seed(seed, 0));
        return Network::mlp(spec.input, spec.hidden, spec.classes, init);
    }

    const Network& network() const noexcept { return net_; }
    Network& network() noexcept { return net_; }
    const ClassifierHead& head() const noexcept { return head_; }
    ClassifierHead& head() noexcept { return head_; }
    const FisherState& fisher() const noexcept { return fisher_; }
    FisherState& fisher() noexcept { return fisher_; }
    const ReplayMemory& memory() const noexcept { return memory_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    std::size_t experiences_seen() const noexcept { return seen_; }
    void set_experiences_seen(std::size_t n) noexcept { seen_ = n; }
    Rng& rng() noexcept { return rng_; }
    const Rng& rng() const noexcept { return rng_; }

    /// Replaces the replay memory (resuming from a dump).
    void restore_memory(ReplayMemory memory) {
        if (memory.alpha() != cfg_.alpha) throw ConfigError("memory dump alpha differs from config");
        if (memory.capacity() != cfg_.rm_size) throw ConfigError("memory capacity differs from RM_size");
        if (!memory.empty() && memory.width() != net_.width_at(cfg_.alpha)) {
            throw ConfigError("memory dump pattern width does not match layer alpha");
        }
        memory_ = std::move(memory);
    }

    std::vector<Label> predict(const Tensor& batch) const { return arr::predict(net_, head_, batch); }

    /// Learning-rate scales for the next experience (index i, 1-based).
    ParamVector rate_scales(std::size_t i) const {
        ParamVector s(net_.parameter_count(), 1.0);
        const bool first = i == 1;
        const auto boundary = cfg_.boundary();
        const auto head = net_.head_index();
        if (!first || cfg_.freeze_from_first) {
            for (std::size_t l = 0; l < boundary; ++l) {
                const auto& L = net_.layer(l);
                std::fill_n(s.begin() + static_cast<std::ptrdiff_t>(L.offset), L.param_count(),
                            cfg_.below_alpha_rate);
            }
        }
        if (!first && cfg_.strategy == StrategyKind::arr && cfg_.lambda > 0.0) {
            for (std::size_t l = boundary; l < head; ++l) {
                const auto& L = net_.layer(l);
                for (std::size_t k = L.offset; k < L.end_offset(); ++k) {
                    s[k] *= std::clamp(fisher_.scale(k), 0.0, 1.0);
                }
            }
        }
        return s;
    }

    /// Trains on one experience and updates head, Fisher and memory.
    void train_experience(const Experience& exp) {
        const auto& D = exp.train;
        if (D.empty()) throw InputError("experience " + std::to_string(exp.index) + " has no samples");
        if (D.width() != net_.input_width()) {
            throw DimensionError("experience input width does not match the network");
        }
        const auto i = seen_ + 1;
        const bool first = i == 1;
        const auto counts = count_classes(D.y);
        std::vector<Label> present;
        for (const auto& [j, n] : counts) present.push_back(j);

        if (uses_cwr_head(cfg_.strategy)) {
            begin_experience(head_, present);
        } else {
            for (auto j : present) head_.check_class(j);
            head_.tw = head_.cw;
        }
        load_head(net_, head_.tw);

        if (!memory_.empty() && memory_.width() != net_.width_at(cfg_.alpha)) {
            throw ConfigError("replay memory width " + std::to_string(memory_.width()) +
                              " does not match layer " + std::to_string(cfg_.alpha) + " width " +
                              std::to_string(net_.width_at(cfg_.alpha)));
        }
        const auto split = minibatch_split(D.size(), cfg_.rm_size, cfg_.mb_size, first);
        const auto scales = rate_scales(i);
        net_.set_lr_scale(scales);

        const auto boundary = cfg_.boundary();
        const bool full_rate = first && !cfg_.freeze_from_first;
        // When nothing below the boundary can move, stop every row there.
        const bool stop_all = !full_rate && cfg_.below_alpha_rate == 0.0 && boundary >= cfg_.alpha &&
                              boundary > 0;
        const bool use_ewc = cfg_.strategy == StrategyKind::ewc && fisher_.theta_star.has_value();

        for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
            const auto order = permutation(D.size(), rng_);
            ReplaySampler sampler(memory_, rng_);
            for (std::size_t start = 0; start < order.size(); start += split.fresh) {
                const auto stop = std::min(order.size(), start + split.fresh);
                const std::span<const std::size_t> rows(order.data() + start, stop - start);
                const auto fresh = D.subset(rows);
                std::vector<Label> labels = fresh.y;
                ForwardPass pass;
                RowMask mask;
                std::size_t stop_layer = 0;
                if (split.replay > 0 && !memory_.empty()) {
                    const auto replay = gather_replay(memory_, sampler.next(split.replay));
                    labels.insert(labels.end(), replay.labels.begin(), replay.labels.end());
                    pass = forward_mixed(net_, fresh.x, replay.patterns, cfg_.alpha);
                    mask.assign(labels.size(), false);
                    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(fresh.size()), mask.end(), true);
                    stop_layer = cfg_.alpha;
                } else {
                    pass = forward(net_, fresh.x);
                }
                if (stop_all) {
                    mask.assign(labels.size(), true);
                    stop_layer = boundary;
                }
                const auto loss = cross_entropy(pass.logits, labels);
                const auto grads = backward(net_, pass, loss.gradient, stop_layer, mask);
                if (use_ewc) {
                    ewc_step(net_, grads, fisher_, cfg_.learning_rate);
                } else {
                    sgd_step(net_, grads, cfg_.learning_rate);
                }
            }
        }
        store_head(net_, head_.tw);

        const bool wants_fisher = cfg_.strategy == StrategyKind::ewc ||
                                  (cfg_.strategy == StrategyKind::arr && cfg_.lambda > 0.0);
        if (wants_fisher) {
            const auto pick = sample_without_replacement(D.size(), cfg_.fisher_samples, rng_);
            const auto sample = D.subset(pick);
            update_fisher(fisher_, net_, sample.x, sample.y, boundary);
            if (cfg_.strategy == StrategyKind::ewc) {
                fisher_.theta_star.emplace(net_.parameters().begin(), net_.parameters().end());
            }
        }

        if (uses_cwr_head(cfg_.strategy)) {
            consolidate(head_, counts);
        } else {
            head_.cw = head_.tw;
            for (const auto& [j, n] : counts) head_.past[static_cast<std::size_t>(j)] += n;
        }

        if (cfg_.rm_size > 0) {
            const auto patterns = forward_to(net_, D.x, cfg_.alpha);
            update_memory(memory_, patterns, D.y, i, rng_, cfg_.keep_replay_inputs ? &D.x : nullptr);
        }
        net_.reset_lr_scale();
        seen_ = i;
    }

private:
    Network net_;
    TrainConfig cfg_;
    ClassifierHead head_;
    FisherState fisher_;
    ReplayMemory memory_;
    Rng rng_;
    std::size_t seen_ = 0;
};

}  // namespace arr
