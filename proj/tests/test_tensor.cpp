#include <set>

#include <gtest/gtest.h>

#include "arr/error.hpp"
#include "arr/random.hpp"
#include "arr/tensor.hpp"

using namespace arr;

TEST(Tensor, ValuesMatchShape) {
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    t.check_invariants();
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>{1, 2}), DimensionError);
}

TEST(Tensor, GradientMustMatchValues) {
    Tensor t = Tensor::matrix(2, 2);
    t.ensure_grad();
    t.check_invariants();
    t.grad->push_back(0.0);
    EXPECT_THROW(t.check_invariants(), DimensionError);
}

TEST(Tensor, ZeroRowMatrixKeepsWidth) {
    Tensor t = Tensor::matrix(0, 5);
    EXPECT_EQ(t.rows(), 0u);
    EXPECT_EQ(t.cols(), 5u);
}

TEST(Tensor, GatherAndConcatRows) {
    Tensor t = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
    const std::vector<std::size_t> idx{2, 0};
    const auto g = gather_rows(t, idx);
    EXPECT_EQ(g.values, (std::vector<double>{5, 6, 1, 2}));
    const auto c = concat_rows(g, t);
    EXPECT_EQ(c.rows(), 5u);
    EXPECT_EQ(c.at(4, 1), 6.0);
    EXPECT_THROW(concat_rows(t, Tensor::matrix(1, 3)), DimensionError);
    const std::vector<std::size_t> bad{3};
    EXPECT_THROW(gather_rows(t, bad), DimensionError);
}

TEST(Random, SameSeedSameDraws) {
    Rng a(5), b(5);
    EXPECT_EQ(permutation(50, a), permutation(50, b));
    EXPECT_EQ(standard_normal(a), standard_normal(b));
}

TEST(Random, PermutationAndSamplingAreDistinct) {
    Rng rng(9);
    auto p = permutation(100, rng);
    std::set<std::size_t> seen(p.begin(), p.end());
    EXPECT_EQ(seen.size(), 100u);
    auto s = sample_without_replacement(100, 30, rng);
    std::set<std::size_t> ss(s.begin(), s.end());
    EXPECT_EQ(ss.size(), 30u);
    EXPECT_LT(*ss.rbegin(), 100u);
    EXPECT_EQ(sample_without_replacement(5, 10, rng).size(), 5u);
}

TEST(Random, UniformIndexStaysInRange) {
    Rng rng(3);
    std::vector<int> hist(7, 0);
    for (int k = 0; k < 7000; ++k) ++hist[uniform_index(rng, 7)];
    for (int h : hist) EXPECT_NEAR(h, 1000, 150);
}
