#include "oracles.hpp"

#include "sketch3t/error.hpp"
#include "sketch3t/metrics.hpp"
#include "sketch3t/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace sketch3t;

using oracles::brute_ap;
using oracles::brute_pk;

TEST(Metrics, AveragePrecisionExamples) {
    EXPECT_NEAR(average_precision(std::vector<int>{1, 0, 1, 0}), 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
    EXPECT_EQ(average_precision(std::vector<int>{1, 1, 1}), 1.0);
    EXPECT_NEAR(average_precision(std::vector<int>{0, 0, 0, 1, 0}), 0.25, 1e-15);
    std::size_t none = 0;
    EXPECT_EQ(average_precision(std::vector<int>{0, 0}, &none), 0.0);
    EXPECT_EQ(average_precision(std::vector<int>{0}, &none), 0.0);
    EXPECT_EQ(none, 2u);
}

TEST(Metrics, PrecisionExamples) {
    const std::vector<int> rel{1, 1, 0, 0};
    EXPECT_EQ(precision_at_k(rel, 2), 1.0);
    EXPECT_EQ(precision_at_k(rel, 4), 0.5);
    EXPECT_EQ(precision_at_k(rel, 200), 0.5);
    EXPECT_THROW(precision_at_k(rel, 0), ConfigError);
}

TEST(Metrics, MeanOverQueries) {
    EXPECT_EQ(mean_over_queries(std::vector<double>{0.4}), 0.4);
    EXPECT_EQ(mean_over_queries(std::vector<double>{0.0, 1.0}), 0.5);
    const std::vector<double> a{0.1, 0.7, 0.3}, b{0.3, 0.1, 0.7};
    EXPECT_NEAR(mean_over_queries(a), mean_over_queries(b), 1e-16);
    EXPECT_THROW(mean_over_queries(std::vector<double>{}), Error);
}

TEST(Metrics, MatchesBruteForceOracle) {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.uniform_int(1, 500);
        const double p = rng.uniform(0.0, 0.6);
        std::vector<int> rel(static_cast<std::size_t>(n));
        for (int& r : rel) r = rng.uniform() < p ? 1 : 0;
        EXPECT_NEAR(average_precision(rel), brute_ap(rel), 1e-12) << trial;
        const int k = rng.uniform_int(1, 600);
        EXPECT_NEAR(precision_at_k(rel, k), brute_pk(rel, k), 1e-12) << trial;
    }
}

TEST(Metrics, PromotingARelevantItemNeverLowersAP) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> rel(static_cast<std::size_t>(rng.uniform_int(2, 60)));
        for (int& r : rel) r = rng.uniform() < 0.3 ? 1 : 0;
        const auto i = static_cast<std::size_t>(rng.uniform_int(1, static_cast<int>(rel.size()) - 1));
        if (!rel[i]) continue;
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::vector<int> promoted = rel;
        std::swap(promoted[i], promoted[j]);
        EXPECT_GE(average_precision(promoted), average_precision(rel) - 1e-15);
    }
}
