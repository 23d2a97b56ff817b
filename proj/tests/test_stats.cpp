#include "synfair/stats.hpp"

#include <gtest/gtest.h>

using namespace synfair;
using namespace synfair::stats;

TEST(PearsonR, PerfectPositiveLinearity) {
    const Vec x{1, 2, 3, 4, 5};
    Vec y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    EXPECT_NEAR(pearson_r({x, y}), 1.0, 1e-12);
}

TEST(PearsonR, PerfectNegativeLinearity) {
    const Vec x{0.5, 1.5, -2.0, 3.0};
    Vec y;
    for (double v : x) y.push_back(-v);
    EXPECT_NEAR(pearson_r({x, y}), -1.0, 1e-12);
}

TEST(PearsonR, HandComputedCase) {
    // covariance-definition oracle gives 4/5
    EXPECT_NEAR(pearson_r({{1, 2, 3, 4}, {1, 3, 2, 4}}), 0.8, 1e-12);
}

TEST(PearsonR, AffineInvariance) {
    const Vec x{0.1, 0.9, 0.4, 0.7, 0.2};
    const Vec y{1.0, 0.3, 0.8, 0.2, 0.5};
    const double base = pearson_r({x, y});
    Vec xs;
    for (double v : x) xs.push_back(3.0 * v + 10.0);
    EXPECT_NEAR(pearson_r({xs, y}), base, 1e-12);
    Vec xn;
    for (double v : x) xn.push_back(-2.0 * v + 1.0);
    EXPECT_NEAR(pearson_r({xn, y}), -base, 1e-12);
}

TEST(PearsonR, ZeroVarianceThrows) {
    EXPECT_THROW(pearson_r({{1, 1, 1}, {1, 2, 3}}), NumericError);
    EXPECT_THROW(pearson_r({{1, 2}, {1, 2, 3}}), ShapeError);
    EXPECT_THROW(pearson_r({{1}, {1}}), ParamError);
}

TEST(CohenKappa, PerfectAgreement) {
    RatingTable t{{0, 1, 0, 2, 1}, {0, 1, 0, 2, 1}};
    EXPECT_DOUBLE_EQ(cohen_kappa(t), 1.0);
}

TEST(CohenKappa, HandTwoByTwoTable) {
    // a=20 both X, b=5 (A:X,B:Y), c=10 (A:Y,B:X), d=15 both Y
    RatingTable t;
    for (int i = 0; i < 20; ++i) {
        t.rater_a.push_back(0);
        t.rater_b.push_back(0);
    }
    for (int i = 0; i < 5; ++i) {
        t.rater_a.push_back(0);
        t.rater_b.push_back(1);
    }
    for (int i = 0; i < 10; ++i) {
        t.rater_a.push_back(1);
        t.rater_b.push_back(0);
    }
    for (int i = 0; i < 15; ++i) {
        t.rater_a.push_back(1);
        t.rater_b.push_back(1);
    }
    // p_o = 0.7, p_e = 0.5*0.6 + 0.5*0.4 = 0.5, kappa = 0.4
    EXPECT_NEAR(cohen_kappa(t), 0.4, 1e-12);
}

TEST(CohenKappa, NullAgreementIsNearZero) {
    // rater 2 draws independently from the same marginals
    Rng rng(31);
    RatingTable t;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        t.rater_a.push_back(static_cast<int>(rng.index(3)));
        t.rater_b.push_back(static_cast<int>(rng.index(3)));
    }
    EXPECT_NEAR(cohen_kappa(t), 0.0, 0.05);
}

TEST(CohenKappa, RelabelingInvariance) {
    RatingTable t{{0, 1, 2, 0, 1, 2, 0, 0}, {0, 1, 1, 0, 2, 2, 1, 0}};
    const double base = cohen_kappa(t);
    auto relabel = [](int v) { return v == 0 ? 7 : v == 1 ? 3 : 5; };
    RatingTable t2;
    for (std::size_t i = 0; i < t.rater_a.size(); ++i) {
        t2.rater_a.push_back(relabel(t.rater_a[i]));
        t2.rater_b.push_back(relabel(t.rater_b[i]));
    }
    EXPECT_DOUBLE_EQ(cohen_kappa(t2), base);
}

TEST(CohenKappa, ConstantEqualRatersConvention) {
    RatingTable t{{1, 1, 1}, {1, 1, 1}};
    EXPECT_DOUBLE_EQ(cohen_kappa(t), 1.0);  // p_e = 1 convention
}

TEST(CohenKappa, MeanPairwiseAcrossRaters) {
    const std::vector<std::vector<int>> raters{{0, 1, 0, 1}, {0, 1, 0, 1}, {1, 1, 0, 1}};
    const double k01 = cohen_kappa({raters[0], raters[1]});
    const double k02 = cohen_kappa({raters[0], raters[2]});
    const double k12 = cohen_kappa({raters[1], raters[2]});
    EXPECT_NEAR(mean_pairwise_kappa(raters), (k01 + k02 + k12) / 3.0, 1e-12);
    EXPECT_THROW(mean_pairwise_kappa({raters[0]}), ParamError);
}

TEST(BootstrapCi, ConstantDataGivesZeroWidth) {
    Rng rng(5);
    const auto [lo, hi] = bootstrap_ci(Vec(50, 3.25), mean_of, 200, 0.05, rng);
    EXPECT_DOUBLE_EQ(lo, 3.25);
    EXPECT_DOUBLE_EQ(hi, 3.25);
}

TEST(BootstrapCi, DeterministicUnderSeed) {
    Vec values;
    Rng data(77);
    for (int i = 0; i < 200; ++i) values.push_back(data.normal());
    Rng a(123456), b(123456);
    const auto ra = bootstrap_ci(values, mean_of, 500, 0.05, a);
    const auto rb = bootstrap_ci(values, mean_of, 500, 0.05, b);
    EXPECT_DOUBLE_EQ(ra.first, rb.first);
    EXPECT_DOUBLE_EQ(ra.second, rb.second);
}

TEST(BootstrapCi, CoverageOfTheMean) {
    // interval for the mean of N(0,1), n=1000: contains 0 in >= 90% of 50 seeded replications
    int covered = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Rng data(1000 + static_cast<std::uint64_t>(rep));
        Vec values;
        for (int i = 0; i < 1000; ++i) values.push_back(data.normal());
        Rng boot(9000 + static_cast<std::uint64_t>(rep));
        const auto [lo, hi] = bootstrap_ci(values, mean_of, 2000, 0.05, boot);
        if (lo <= 0.0 && 0.0 <= hi) ++covered;
    }
    EXPECT_GE(covered, 45);
}

TEST(BootstrapCi, WidthWeaklyIncreasesAsAlphaShrinks) {
    Vec values;
    Rng data(4242);
    for (int i = 0; i < 300; ++i) values.push_back(data.normal());
    Rng a(7), b(7);  // same stream for both alphas
    const auto wide = bootstrap_ci(values, mean_of, 1000, 0.01, a);
    const auto narrow = bootstrap_ci(values, mean_of, 1000, 0.20, b);
    EXPECT_GE(wide.second - wide.first, narrow.second - narrow.first);
}

TEST(BootstrapCi, ParameterValidation) {
    Rng rng(1);
    EXPECT_THROW(bootstrap_ci(Vec{1.0, 2.0}, mean_of, 50, 0.05, rng), ParamError);
    EXPECT_THROW(bootstrap_ci(Vec{}, mean_of, 200, 0.05, rng), ParamError);
}
