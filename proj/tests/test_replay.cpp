#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "arr/error.hpp"
#include "arr/replay.hpp"
#include "arr/strategy.hpp"
#include "helpers.hpp"

using namespace arr;

namespace {

Tensor indexed_patterns(std::size_t n, std::size_t width, double tag) {
    Tensor t = Tensor::matrix(n, width);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < width; ++c) t.at(r, c) = tag + static_cast<double>(r);
    }
    return t;
}

}  // namespace

TEST(ComputeH, Examples) {
    EXPECT_EQ(compute_h(1500, 3), 500u);
    EXPECT_EQ(compute_h(100, 1), 100u);
    EXPECT_EQ(compute_h(0, 4), 0u);
    EXPECT_EQ(compute_h(100, 3), 33u);
    EXPECT_THROW(compute_h(10, 0), InputError);
}

TEST(UpdateMemory, FirstExperienceFillsMemory) {
    ReplayMemory mem(100, 0);
    Rng rng(1);
    update_memory(mem, indexed_patterns(500, 2, 0.0), std::vector<Label>(500, 3), 1, rng);
    EXPECT_EQ(mem.size(), 100u);
    for (const auto& e : mem.entries()) EXPECT_EQ(e.source, 1u);
    std::set<double> distinct;
    for (const auto& e : mem.entries()) distinct.insert(e.pattern[0]);
    EXPECT_EQ(distinct.size(), 100u);
}

TEST(UpdateMemory, SecondExperienceReplacesHalf) {
    ReplayMemory mem(100, 0);
    Rng rng(2);
    update_memory(mem, indexed_patterns(500, 2, 0.0), std::vector<Label>(500, 0), 1, rng);
    update_memory(mem, indexed_patterns(500, 2, 1000.0), std::vector<Label>(500, 1), 2, rng);
    EXPECT_EQ(mem.size(), 100u);
    const auto counts = mem.source_counts(2);
    EXPECT_EQ(counts[1], 50u);
    EXPECT_EQ(counts[2], 50u);
}

TEST(UpdateMemory, ExpectedCompositionIsBalanced) {
    std::vector<double> mean(5, 0.0);
    const int runs = 200;
    for (int s = 0; s < runs; ++s) {
        ReplayMemory mem(100, 0);
        Rng rng(static_cast<std::uint64_t>(s));
        for (std::size_t i = 1; i <= 5; ++i) {
            update_memory(mem, indexed_patterns(300, 1, 0.0), std::vector<Label>(300, 0), i, rng);
        }
        const auto c = mem.source_counts(5);
        for (std::size_t e = 0; e < 5; ++e) mean[e] += static_cast<double>(c[e + 1]) / runs;
    }
    for (double m : mean) EXPECT_NEAR(m, 20.0, 2.0);
}

TEST(UpdateMemory, CapacityNeverExceeded) {
    Rng sizes(99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cap = 1 + uniform_index(sizes, 60);
        ReplayMemory mem(cap, 0);
        Rng rng(static_cast<std::uint64_t>(trial));
        std::size_t seen = 0;
        for (std::size_t i = 1; i <= 8; ++i) {
            const std::size_t n = 1 + uniform_index(sizes, 80);
            seen += n;
            update_memory(mem, indexed_patterns(n, 1, 0.0), std::vector<Label>(n, 0), i, rng);
            ASSERT_LE(mem.size(), cap);
        }
        EXPECT_GT(mem.size(), 0u);
        EXPECT_LE(mem.size(), std::min(cap, seen));
    }
}

TEST(UpdateMemory, SizeIsMinOfCapacityAndSeenWhenExperiencesAreLarge) {
    ReplayMemory mem(90, 0);
    Rng rng(5);
    for (std::size_t i = 1; i <= 6; ++i) {
        update_memory(mem, indexed_patterns(200, 1, 0.0), std::vector<Label>(200, 0), i, rng);
        EXPECT_EQ(mem.size(), 90u);
    }
}

TEST(UpdateMemory, ZeroCapacityIsNoOp) {
    ReplayMemory mem(0, 0);
    Rng rng(1);
    update_memory(mem, indexed_patterns(10, 2, 0.0), std::vector<Label>(10, 0), 1, rng);
    EXPECT_TRUE(mem.empty());
}

TEST(UpdateMemory, WidthMismatchRejected) {
    ReplayMemory mem(10, 0);
    Rng rng(1);
    update_memory(mem, indexed_patterns(10, 2, 0.0), std::vector<Label>(10, 0), 1, rng);
    EXPECT_THROW(update_memory(mem, indexed_patterns(10, 3, 0.0), std::vector<Label>(10, 0), 2, rng),
                 ConfigError);
    EXPECT_THROW(update_memory(mem, indexed_patterns(10, 2, 0.0), std::vector<Label>(9, 0), 2, rng),
                 DimensionError);
}

TEST(Sampler, EmptyDrawAndExhaustiveDraw) {
    ReplayMemory mem(40, 0);
    Rng rng(3);
    update_memory(mem, indexed_patterns(40, 1, 0.0), std::vector<Label>(40, 0), 1, rng);
    EXPECT_TRUE(sample_replay(mem, 0, rng).labels.empty());
    ReplaySampler sampler(mem, rng);
    auto idx = sampler.next(40);
    std::sort(idx.begin(), idx.end());
    for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(idx[k], k);
}

TEST(Sampler, ReshuffleBoundsRepeats) {
    // 150 entries, 5 batches of 60 -> each entry at most ceil(300/150) = 2 times
    ReplayMemory mem(150, 0);
    Rng rng(4);
    update_memory(mem, indexed_patterns(150, 1, 0.0), std::vector<Label>(150, 0), 1, rng);
    ReplaySampler sampler(mem, rng);
    std::map<std::size_t, int> hits;
    for (int b = 0; b < 5; ++b) {
        for (auto k : sampler.next(60)) ++hits[k];
    }
    for (const auto& [k, n] : hits) EXPECT_LE(n, 2) << k;
}

TEST(Sampler, EmptyMemoryIsAnError) {
    ReplayMemory mem(10, 0);
    Rng rng(1);
    ReplaySampler sampler(mem, rng);
    EXPECT_THROW(sampler.next(3), StateError);
}

TEST(Drift, FrozenLowerLayersGiveZero) {
    TrainConfig cfg;
    cfg.strategy = StrategyKind::arr;
    cfg.rm_size = 60;
    cfg.alpha = 1;
    cfg.below_alpha_rate = 0.0;
    cfg.keep_replay_inputs = true;
    cfg.learning_rate = 0.05;
    cfg.seed = 3;
    const auto ds = arr::testing::small_dataset(2);
    const auto stream = make_nc_stream(ds, 2, 1);
    Learner learner(NetSpec{ds.input_width(), {12, 10}, ds.classes}, cfg);
    for (const auto& ex : stream.experiences) {
        learner.train_experience(ex);
        if (ex.index > 1) {
            EXPECT_EQ(activation_drift(learner.memory(), learner.network()), 0.0);
        }
    }
}

TEST(Drift, RawInputsNeverDrift) {
    TrainConfig cfg;
    cfg.rm_size = 60;
    cfg.alpha = 0;
    cfg.keep_replay_inputs = true;
    cfg.learning_rate = 0.05;
    const auto ds = arr::testing::small_dataset(3);
    const auto stream = make_nc_stream(ds, 2, 2);
    Learner learner(NetSpec{ds.input_width(), {12}, ds.classes}, cfg);
    for (const auto& ex : stream.experiences) learner.train_experience(ex);
    EXPECT_EQ(activation_drift(learner.memory(), learner.network()), 0.0);
}

TEST(Drift, FullRateTrainingDrifts) {
    TrainConfig cfg;
    cfg.rm_size = 60;
    cfg.alpha = 1;
    cfg.below_alpha_rate = 1.0;
    cfg.keep_replay_inputs = true;
    cfg.learning_rate = 0.05;
    const auto ds = arr::testing::small_dataset(4);
    const auto stream = make_nc_stream(ds, 2, 3);
    Learner learner(NetSpec{ds.input_width(), {12, 10}, ds.classes}, cfg);
    learner.train_experience(stream.experiences[0]);
    learner.train_experience(stream.experiences[1]);
    EXPECT_GT(activation_drift(learner.memory(), learner.network()), 0.0);
}

TEST(Drift, NeedsRawLog) {
    ReplayMemory mem(5, 1);
    const auto net = arr::testing::random_net(3, {4}, 2, 1);
    EXPECT_THROW(activation_drift(mem, net), StateError);
}

TEST(MemoryDump, RoundTripIsExact) {
    ReplayMemory mem(30, 2);
    Rng rng(8);
    Tensor p = arr::testing::random_batch(50, 4, rng);
    update_memory(mem, p, arr::testing::random_labels(50, 5, rng), 1, rng);
    update_memory(mem, arr::testing::random_batch(50, 4, rng), arr::testing::random_labels(50, 5, rng), 2, rng);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_memory(buf, mem);
    const auto back = load_memory(buf, 30);
    EXPECT_TRUE(back == mem);
    EXPECT_EQ(back.capacity(), 30u);
    EXPECT_EQ(back.alpha(), 2u);
}

TEST(MemoryDump, CorruptInputRejected) {
    std::stringstream bad("XXXX");
    EXPECT_THROW(load_memory(bad), ParseError);
    ReplayMemory mem(10, 0);
    Rng rng(1);
    update_memory(mem, indexed_patterns(10, 2, 0.0), std::vector<Label>(10, 0), 1, rng);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_memory(buf, mem);
    auto text = buf.str();
    std::stringstream truncated(text.substr(0, text.size() - 5));
    EXPECT_THROW(load_memory(truncated), ParseError);
    std::stringstream full(text);
    EXPECT_THROW(load_memory(full, 5), ParseError);
}
