#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "arr/error.hpp"
#include "arr/metrics.hpp"
#include "helpers.hpp"

using namespace arr;

namespace {

Dataset balanced(std::uint64_t seed = 5) {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.samples_per_class = 50;
    spec.input_dim = 8;
    spec.noise_std = 0.5;
    spec.seed = seed;
    return generate_synthetic(spec);
}

double mean_loss(const ModelView& m, const LabeledSet& s) {
    double total = 0.0;
    for (double l : cross_entropy_per_sample(m.logits(s.x), s.y)) total += l;
    return total / static_cast<double>(s.size());
}

}  // namespace

TEST(StreamLoss, WeightedBySetSize) {
    const auto ds = balanced();
    const auto net = arr::testing::random_net(8, {6}, 10, 3);
    ClassifierHead head(10, 6);
    Rng rng(4);
    for (auto& v : head.cw.values) v = standard_normal(rng);
    const ModelView model(net, head);
    std::vector<std::size_t> ra(10), rb(30);
    for (std::size_t k = 0; k < 10; ++k) ra[k] = k;
    for (std::size_t k = 0; k < 30; ++k) rb[k] = 40 + k;
    const auto a = ds.test.subset(ra);
    const auto b = ds.test.subset(rb);
    const double la = mean_loss(model, a);
    const double lb = mean_loss(model, b);
    EXPECT_NEAR(stream_loss(model, {&a, &b}), (10 * la + 30 * lb) / 40, 1e-13);
    EXPECT_THROW(stream_loss(model, {}), InputError);
}

TEST(StreamLoss, UniformModelGivesLogC) {
    const auto ds = balanced();
    const auto net = arr::testing::random_net(8, {6}, 10, 3);
    const ClassifierHead head(10, 6);
    EXPECT_NEAR(stream_loss(ModelView(net, head), {&ds.test}), std::log(10.0), 1e-12);
}

TEST(StreamLoss, ConfidentCorrectModelNearZero) {
    // identity representation and a head that scales the one-hot features
    Network net(3, {{3, Activation::relu}, {3, Activation::identity}});
    for (std::size_t k = 0; k < 3; ++k) net.weight(0, k, k) = 1.0;
    ClassifierHead head(3, 3);
    for (std::size_t k = 0; k < 3; ++k) head.cw.at(k, k) = 100.0;
    LabeledSet s;
    s.x = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    s.y = {0, 1, 2};
    EXPECT_LT(stream_loss(ModelView(net, head), {&s}), 1e-40);
    EXPECT_EQ(accuracy(ModelView(net, head), s), 1.0);
}

TEST(Accuracy, UntrainedHeadScoresOneOverC) {
    const auto ds = balanced();
    const auto net = arr::testing::random_net(8, {6}, 10, 3);
    const ClassifierHead head(10, 6);
    EXPECT_DOUBLE_EQ(accuracy_fixed(ModelView(net, head), ds.test), 0.1);
}

TEST(Accuracy, SeenSingleClass) {
    const auto ds = balanced();
    const auto net = arr::testing::random_net(8, {6}, 10, 3);
    ClassifierHead head(10, 6);
    head.cw.at(4, 6) = 10.0;  // bias of class 4
    EXPECT_EQ(accuracy_seen(ModelView(net, head), ds.test, {4}), 1.0);
    EXPECT_THROW(accuracy_seen(ModelView(net, head), ds.test, {}), InputError);
}

TEST(Evaluate, ProtocolsAcrossTheStream) {
    const auto ds = balanced(6);
    const auto stream = make_nc_stream(ds, 2, 3);
    TrainConfig cfg;
    cfg.strategy = StrategyKind::arr;
    cfg.rm_size = 50;
    cfg.learning_rate = 0.1;
    cfg.epochs = 3;
    Learner learner(NetSpec{ds.input_width(), {16}, ds.classes}, cfg);
    learner.train_experience(stream.experiences[0]);
    const auto first = evaluate(ModelView(learner), stream, 1);
    EXPECT_LE(first.accuracy_fixed, 0.2 + 0.05);
    EXPECT_DOUBLE_EQ(first.accuracy_seen, accuracy(ModelView(learner), stream.experiences[0].test));
    for (std::size_t e = 1; e < stream.size(); ++e) learner.train_experience(stream.experiences[e]);
    const auto last = evaluate(ModelView(learner), stream, stream.size());
    EXPECT_DOUBLE_EQ(last.accuracy_seen, last.accuracy_fixed);
}

TEST(MetricsLog, OrderAndRange) {
    MetricsLog log;
    log.append({1, 0.5, 0.6, 1.2, 0.01});
    EXPECT_THROW(log.append({3, 0.5, 0.5, 1.0, 0.0}), InputError);
    EXPECT_THROW(log.append({2, 1.5, 0.5, 1.0, 0.0}), InputError);
    EXPECT_THROW(log.append({2, 0.5, 0.5, -1.0, 0.0}), InputError);
    log.append({2, 0.25, 0.75, 0.5, 0.02});
    std::ostringstream csv;
    log.write_csv(csv);
    EXPECT_EQ(csv.str(),
              "experience,metric,value\n"
              "1,accuracy_fixed,0.5\n1,accuracy_seen,0.59999999999999998\n1,stream_loss,1.2\n"
              "2,accuracy_fixed,0.25\n2,accuracy_seen,0.75\n2,stream_loss,0.5\n");
}

TEST(RunStream, OneRecordPerExperience) {
    const auto ds = balanced(7);
    const auto stream = make_nc_stream(ds, 2, 4);
    TrainConfig cfg;
    cfg.rm_size = 20;
    Learner learner(NetSpec{ds.input_width(), {8}, ds.classes}, cfg);
    std::size_t calls = 0;
    const auto log = run_stream(learner, stream, [&](const MetricsLog& l) { EXPECT_EQ(l.size(), ++calls); });
    EXPECT_EQ(log.size(), 5u);
    for (std::size_t k = 0; k < log.size(); ++k) EXPECT_EQ(log.records()[k].experience, k + 1);
}

TEST(CumulativeBound, SingleExperienceMatchesOrdinaryTraining) {
    const auto ds = balanced(8);
    const auto stream = make_nc_stream(ds, 10, 1);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.1;
    cfg.seed = 2;
    const NetSpec spec{ds.input_width(), {12}, ds.classes};
    const double bound = cumulative_upper_bound(stream, spec, cfg);

    TrainConfig naive = cfg;
    naive.strategy = StrategyKind::naive;
    Experience joint = stream.experiences[0];
    Rng shuffle(derive_seed(cfg.seed, 2));
    joint.train = joint.train.subset(permutation(joint.train.size(), shuffle));
    Learner learner(spec, naive);
    learner.train_experience(joint);
    EXPECT_EQ(bound, accuracy_fixed(ModelView(learner), stream.full_test));
}

TEST(CumulativeBound, SeparableDataAboveNinetyFive) {
    SyntheticSpec s;
    s.classes = 10;
    s.samples_per_class = 100;
    s.noise_std = 0.1;
    s.input_dim = 16;
    s.seed = 3;
    const auto ds = generate_synthetic(s);
    const auto stream = make_nc_stream(ds, 2, 5);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.1;
    EXPECT_GT(cumulative_upper_bound(stream, NetSpec{16, {32, 32}, 10}, cfg), 0.95);
}
