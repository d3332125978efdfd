#pragma once

#include <chrono>
#include <cstdio>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arr/error.hpp"
#include "arr/head.hpp"
#include "arr/nn.hpp"
#include "arr/strategy.hpp"
#include "arr/stream.hpp"

namespace arr {

/// Read-only view of a trained model: shared representation + consolidated head.
struct ModelView {
    const Network& net;
    const ClassifierHead& head;

    explicit ModelView(const Learner& learner) : net(learner.network()), head(learner.head()) {}
    ModelView(const Network& n, const ClassifierHead& h) : net(n), head(h) {}

    Tensor logits(const Tensor& x) const { return head_logits(net, head.cw, x); }
};

/// Total cross-entropy over the union of the test sets divided by their
/// combined size.
inline double stream_loss(const ModelView& model, const std::vector<const LabeledSet*>& tests) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto* set : tests) {
        if (set == nullptr || set->empty()) continue;
        for (double l : cross_entropy_per_sample(model.logits(set->x), set->y)) total += l;
        count += set->size();
    }
    if (count == 0) throw InputError("stream loss over an empty union of test sets");
    return total / static_cast<double>(count);
}

inline double accuracy(const ModelView& model, const LabeledSet& set) {
    if (set.empty()) return 0.0;
    const auto pred = argmax_rows(model.logits(set.x));
    std::size_t hit = 0;
    for (std::size_t r = 0; r < pred.size(); ++r) hit += pred[r] == set.y[r] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(set.size());
}

/// Accuracy over the whole class-universe test set.
inline double accuracy_fixed(const ModelView& model, const LabeledSet& full_test) {
    return accuracy(model, full_test);
}

/// Accuracy over the test samples whose label is in `seen`.
inline double accuracy_seen(const ModelView& model, const LabeledSet& test, const std::set<Label>& seen) {
    if (seen.empty()) throw InputError("seen-class set is empty");
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < test.size(); ++r) {
        if (seen.count(test.y[r])) keep.push_back(r);
    }
    if (keep.empty()) return 0.0;
    return accuracy(model, test.subset(keep));
}

struct ExperienceRecord {
    std::size_t experience = 0;
    double accuracy_fixed = 0.0;
    double accuracy_seen = 0.0;
    double stream_loss = 0.0;
    double wall_seconds = 0.0;
};

class MetricsLog {
public:
    void append(const ExperienceRecord& rec) {
        if (rec.experience != records_.size() + 1) {
            throw InputError("metrics records must arrive in experience order");
        }
        if (rec.accuracy_fixed < 0.0 || rec.accuracy_fixed > 1.0 || rec.accuracy_seen < 0.0 ||
            rec.accuracy_seen > 1.0 || rec.stream_loss < 0.0) {
            throw InputError("metric value out of range");
        }
        records_.push_back(rec);
    }

    const std::vector<ExperienceRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const ExperienceRecord& back() const { return records_.back(); }

    /// Long-format CSV, one row per experience per metric. Wall time is not
    /// written here so that reruns reproduce the file byte for byte.
    void write_csv(std::ostream& out) const {
        out << "experience,metric,value\n";
        char buf[64];
        for (const auto& r : records_) {
            const std::pair<const char*, double> rows[] = {{"accuracy_fixed", r.accuracy_fixed},
                                                           {"accuracy_seen", r.accuracy_seen},
                                                           {"stream_loss", r.stream_loss}};
            for (const auto& [name, v] : rows) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << r.experience << ',' << name << ',' << buf << '\n';
            }
        }
    }

private:
    std::vector<ExperienceRecord> records_;
};

/// Evaluates the model after `completed` experiences of `stream`.
inline ExperienceRecord evaluate(const ModelView& model, const Stream& stream, std::size_t completed) {
    ExperienceRecord rec;
    rec.experience = completed;
    std::set<Label> seen;
    std::vector<const LabeledSet*> tests;
    for (std::size_t e = 0; e < completed; ++e) {
        const auto& ex = stream.experiences[e];
        seen.insert(ex.classes.begin(), ex.classes.end());
        tests.push_back(&ex.test);
    }
    rec.accuracy_fixed = accuracy_fixed(model, stream.full_test);
    rec.accuracy_seen = accuracy_seen(model, stream.full_test, seen);
    rec.stream_loss = stream_loss(model, tests);
    return rec;
}

/// Trains `learner` over the whole stream, evaluating after every experience.
/// `on_record` (optional) sees each record as soon as it exists.
template <typename OnRecord>
MetricsLog run_stream(Learner& learner, const Stream& stream, OnRecord&& on_record) {
    MetricsLog log;
    for (std::size_t e = 0; e < stream.size(); ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        learner.train_experience(stream.experiences[e]);
        const auto t1 = std::chrono::steady_clock::now();
        auto rec = evaluate(ModelView(learner), stream, e + 1);
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        log.append(rec);
        on_record(log);
    }
    return log;
}

inline MetricsLog run_stream(Learner& learner, const Stream& stream) {
    return run_stream(learner, stream, [](const MetricsLog&) {});
}

/// Joint (non-continual) training on the union of every experience's train
/// split, i.i.d. shuffled, with the naive strategy and no replay. Returns the
/// fixed-test-set accuracy.
inline double cumulative_upper_bound(const Stream& stream, const NetSpec& spec, TrainConfig cfg) {
    if (stream.experiences.empty()) throw InputError("cumulative bound needs a non-empty stream");
    Experience joint;
    joint.index = 1;
    for (const auto& ex : stream.experiences) joint.train = concat(joint.train, ex.train);
    std::set<Label> classes(joint.train.y.begin(), joint.train.y.end());
    joint.classes.assign(classes.begin(), classes.end());
    Rng shuffle(derive_seed(cfg.seed, 2));
    joint.train = joint.train.subset(permutation(joint.train.size(), shuffle));
    cfg.strategy = StrategyKind::naive;
    cfg.rm_size = 0;
    cfg.lambda = 0.0;
    cfg.alpha = 0;
    cfg.slowdown_layer.reset();
    Learner learner(spec, cfg);
    learner.train_experience(joint);
    return accuracy_fixed(ModelView(learner), stream.full_test);
}

}  // namespace arr
