#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "flame/random.hpp"

using flame::derive_seed;
using flame::Rng;

TEST(Random, DeriveSeedIsDeterministicAndOrderSensitive) {
    EXPECT_EQ(derive_seed({7, 3, 1}), derive_seed({7, 3, 1}));
    EXPECT_NE(derive_seed({7, 3, 1}), derive_seed({7, 1, 3}));
    EXPECT_NE(derive_seed({7, 3}), derive_seed({7, 3, 0}));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed({1, i}));
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Random, UniformStaysInRangeWithCorrectMean) {
    Rng rng(5);
    double sum = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Random, BelowCoversRangeEvenly) {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts.at(rng.below(7));
    for (int c : counts) EXPECT_NEAR(c, n / 7, 5 * std::sqrt(n / 7.0));
}

TEST(Random, NormalMoments) {
    Rng rng(13);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Random, ShuffleIsAPermutationAndReproducible) {
    std::vector<int> a(50), b;
    std::iota(a.begin(), a.end(), 0);
    b = a;
    Rng r1(3), r2(3);
    r1.shuffle(a.begin(), a.end());
    r2.shuffle(b.begin(), b.end());
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(sorted, expect);
}
