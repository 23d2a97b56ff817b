#include "synfair/balancing.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace synfair;
using namespace synfair::balancing;

namespace {

FeatureTable five_point_mass_table() {
    // five groups, two identical rows each, all features equal
    FeatureTable t;
    for (int g = 0; g < 5; ++g)
        for (int k = 0; k < 2; ++k) {
            t.rows.push_back({1.0, 2.0});
            t.group.push_back(g);
        }
    return t;
}

// 1-D instance: groups A and B sit off the global mean at uniform weights
// but both can be reweighted onto it; C/D/E straddle the mean with spread
// above delta. The attainable optimum is ~0.
FeatureTable two_off_mean_groups_table() {
    FeatureTable t;
    auto add = [&](int g, double a, double b) {
        t.rows.push_back({a});
        t.group.push_back(g);
        t.rows.push_back({b});
        t.group.push_back(g);
    };
    add(0, 0.0, 1.2);  // uniform mean 0.6
    add(1, 0.8, 2.0);  // uniform mean 1.4
    add(2, 0.3, 1.7);
    add(3, 0.5, 1.5);
    add(4, 0.4, 1.6);
    return t;
}

}  // namespace

TEST(BalanceLoss, PointMassGroupsPayTheHinge) {
    const auto t = five_point_mass_table();
    const auto w = BalanceWeights::uniform(t.size());
    // group means equal the global mean; sigma_d = 0 < 0.1 so L = 5 * 0.01
    EXPECT_NEAR(balance_loss(t, w, 0.1), 0.05, 1e-12);
}

TEST(BalanceLoss, HandArithmeticOnMeans) {
    // 1-D: two groups at means 0 and 1, three groups at the global mean 0.5,
    // every sigma_d >= delta
    FeatureTable t;
    auto add = [&](int g, double a, double b) {
        t.rows.push_back({a});
        t.group.push_back(g);
        t.rows.push_back({b});
        t.group.push_back(g);
    };
    add(0, -0.5, 0.5);  // mean 0, sigma 0.5
    add(1, 0.5, 1.5);   // mean 1, sigma 0.5
    add(2, 0.0, 1.0);   // mean 0.5, sigma 0.5
    add(3, 0.0, 1.0);
    add(4, 0.0, 1.0);
    const auto w = BalanceWeights::uniform(t.size());
    // global mean 0.5; sum ||mu_d - mu||^2 = 0.25 + 0.25 = 0.5; hinges 0
    EXPECT_NEAR(balance_loss(t, w, 0.1), 0.5, 1e-12);
}

TEST(BalanceLoss, ZeroAtTheLossZeroPoint) {
    // all group means equal mu and all sigma_d = delta
    FeatureTable t;
    for (int g = 0; g < 5; ++g) {
        t.rows.push_back({-0.1});
        t.group.push_back(g);
        t.rows.push_back({0.1});
        t.group.push_back(g);
    }
    EXPECT_NEAR(balance_loss(t, BalanceWeights::uniform(t.size()), 0.1), 0.0, 1e-15);
}

TEST(BalanceLoss, DegenerateGroupThrows) {
    auto t = five_point_mass_table();
    BalanceWeights w = BalanceWeights::uniform(t.size());
    w.w[0] = w.w[1] = 0.0;  // group 0 zeroed out
    EXPECT_THROW(balance_loss(t, w, 0.1), NumericError);
}

TEST(BalanceLoss, PermutationInvarianceWithinGroup) {
    auto t = two_off_mean_groups_table();
    BalanceWeights w{Vec{0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.2, 0.8, 0.9, 0.1}};
    const double base = balance_loss(t, w, 0.1);
    std::swap(t.rows[0], t.rows[1]);
    std::swap(w.w[0], w.w[1]);
    EXPECT_NEAR(balance_loss(t, w, 0.1), base, 1e-13);
}

TEST(BalanceLoss, PerGroupWeightScaleInvariance) {
    const auto t = two_off_mean_groups_table();
    BalanceWeights w{Vec{0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.2, 0.8, 0.9, 0.1}};
    const double base = balance_loss(t, w, 0.1);
    BalanceWeights scaled = w;
    scaled.w[2] *= 37.0;  // scale all of group 1 together
    scaled.w[3] *= 37.0;
    EXPECT_NEAR(balance_loss(t, scaled, 0.1), base, 1e-12);
}

TEST(BalanceLoss, GradientMatchesFiniteDifferences) {
    const auto t = two_off_mean_groups_table();
    Vec w{0.4, 0.6, 0.7, 0.3, 0.5, 0.5, 0.45, 0.55, 0.6, 0.4};
    const double delta = 0.45;  // keep some hinges active
    const Vec grad = balancing::detail::balance_loss_gradient(t, w, delta);
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.size(); ++i) {
        Vec wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double fd =
            (balance_loss(t, BalanceWeights{wp}, delta) - balance_loss(t, BalanceWeights{wm}, delta)) / (2.0 * h);
        EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::fabs(fd)));
    }
}

TEST(OptimizeWeights, BalancedTableIsAFixedPoint) {
    FeatureTable t;
    for (int g = 0; g < 5; ++g) {
        t.rows.push_back({-0.5});
        t.group.push_back(g);
        t.rows.push_back({0.5});
        t.group.push_back(g);
    }
    BalanceConfig cfg;
    const auto res = optimize_weights(t, cfg);
    // loss is already 0; weights stay uniform (after per-group normalization)
    EXPECT_NEAR(res.loss_trace.front(), 0.0, 1e-15);
    EXPECT_NEAR(res.loss_trace.back(), 0.0, 1e-15);
    for (double w : res.weights.w) EXPECT_NEAR(w, 0.5, 1e-12);
}

TEST(OptimizeWeights, ReducesLossTenfoldOnOffMeanGroups) {
    const auto t = two_off_mean_groups_table();
    BalanceConfig cfg;
    cfg.max_iters = 2000;
    const auto uniform_loss = balance_loss(t, BalanceWeights::uniform(t.size()), cfg.delta);
    const auto res = optimize_weights(t, cfg);
    EXPECT_LT(res.loss_trace.back(), 0.1 * uniform_loss);

    // grid-search oracle over the two free group weight splits confirms the
    // optimum really is far below 10% of the uniform loss
    double oracle_best = uniform_loss;
    for (int i = 1; i < 200; ++i)
        for (int j = 1; j < 200; ++j) {
            Vec w(t.size(), 0.5);
            w[0] = i / 200.0;
            w[1] = 1.0 - w[0];
            w[2] = j / 200.0;
            w[3] = 1.0 - w[2];
            oracle_best = std::min(oracle_best, balance_loss(t, BalanceWeights{w}, cfg.delta));
        }
    EXPECT_LT(oracle_best, 0.05 * uniform_loss);
    EXPECT_LE(res.loss_trace.back(), oracle_best + 1e-4);
}

TEST(OptimizeWeights, LossTraceNonincreasing) {
    const auto t = two_off_mean_groups_table();
    BalanceConfig cfg;
    const auto res = optimize_weights(t, cfg);
    for (std::size_t i = 1; i < res.loss_trace.size(); ++i) EXPECT_LE(res.loss_trace[i], res.loss_trace[i - 1] + 1e-15);
}

TEST(Resample, UniformWeightsOnePerGroup) {
    std::vector<int> groups{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
    Rng rng(3);
    const auto idx = resample_indices(groups, BalanceWeights::uniform(groups.size()), 5, rng);
    ASSERT_EQ(idx.size(), 5u);
    std::set<int> seen;
    for (std::size_t i : idx) seen.insert(groups[i]);
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Resample, ZeroWeightNeverDrawn) {
    std::vector<int> groups{0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
    BalanceWeights w = BalanceWeights::uniform(groups.size());
    w.w[1] = 0.0;  // middle row of group 0
    Rng rng(11);
    const auto idx = resample_indices(groups, w, 10000, rng);
    for (std::size_t i : idx) EXPECT_NE(i, 1u);
}

TEST(Resample, WeightRatioRespected) {
    std::vector<int> groups{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
    BalanceWeights w = BalanceWeights::uniform(groups.size());
    w.w[0] = 1.0;
    w.w[1] = 3.0;
    Rng rng(19);
    const auto idx = resample_indices(groups, w, 50000, rng);
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i : idx) {
        if (i == 0) ++n0;
        if (i == 1) ++n1;
    }
    const double ratio = static_cast<double>(n1) / static_cast<double>(n0 + n1);
    EXPECT_NEAR(ratio, 0.75, 0.05);
}

TEST(Resample, ParameterValidation) {
    std::vector<int> groups{0, 1, 2, 3, 4};
    Rng rng(1);
    EXPECT_THROW(resample_indices(groups, BalanceWeights::uniform(5), 4, rng), ParamError);
    BalanceWeights w = BalanceWeights::uniform(5);
    w.w[2] = 0.0;  // group 2 unreachable
    EXPECT_THROW(resample_indices(groups, w, 10, rng), ParamError);
}

TEST(KsTwoSample, IdenticalSamples) {
    const auto r = ks_two_sample({1, 2, 3, 4}, {1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(r.d, 0.0);
    EXPECT_DOUBLE_EQ(r.p_asymptotic, 1.0);
}

TEST(KsTwoSample, DisjointSupports) {
    const auto r = ks_two_sample({0, 0}, {1, 1});
    EXPECT_DOUBLE_EQ(r.d, 1.0);
}

TEST(KsTwoSample, HandCaseAgainstEcdfSweepOracle) {
    const Vec a{1, 2, 3};
    const Vec b{1.5, 2.5, 3.5};
    const auto r = ks_two_sample(a, b);
    EXPECT_NEAR(r.d, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.d, oracles::ks_d_bruteforce(a, b), 1e-15);
    // p from the Kolmogorov series truncated at 100 terms
    const double ne = 9.0 / 6.0;
    const double lambda = std::sqrt(ne) * r.d;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        sum += sign * std::exp(-2.0 * k * k * lambda * lambda);
        sign = -sign;
    }
    EXPECT_NEAR(r.p_asymptotic, std::min(1.0, std::max(0.0, 2.0 * sum)), 1e-12);
}

TEST(KsTwoSample, SymmetryAndMonotoneTransformInvariance) {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        Vec a, b;
        for (int i = 0; i < 12; ++i) a.push_back(rng.normal());
        for (int i = 0; i < 9; ++i) b.push_back(rng.normal(0.4, 1.2));
        const auto r1 = ks_two_sample(a, b);
        const auto r2 = ks_two_sample(b, a);
        EXPECT_DOUBLE_EQ(r1.d, r2.d);
        EXPECT_DOUBLE_EQ(r1.p_asymptotic, r2.p_asymptotic);
        Vec at, bt;
        for (double v : a) at.push_back(std::exp(v));  // strictly increasing transform
        for (double v : b) bt.push_back(std::exp(v));
        EXPECT_DOUBLE_EQ(ks_two_sample(at, bt).d, r1.d);
    }
}

TEST(KsTwoSample, ExactPermutationMatchesIndependentOracle) {
    Rng rng(21);
    for (int rep = 0; rep < 12; ++rep) {
        const std::size_t na = 3 + rng.index(5);  // 3..7
        const std::size_t nb = 3 + rng.index(5);
        Vec a, b;
        for (std::size_t i = 0; i < na; ++i) a.push_back(rng.normal());
        for (std::size_t i = 0; i < nb; ++i) b.push_back(rng.normal(0.5, 1.0));
        const auto r = ks_two_sample(a, b);
        ASSERT_TRUE(r.has_exact);
        EXPECT_NEAR(r.d, oracles::ks_d_bruteforce(a, b), 1e-15);
        EXPECT_NEAR(r.p_exact, oracles::ks_exact_p_bruteforce(a, b), 1e-12);
    }
}

TEST(KsTwoSample, EmptySampleThrows) {
    EXPECT_THROW(ks_two_sample({}, {1.0}), ParamError);
    EXPECT_THROW(ks_two_sample({1.0}, {}), ParamError);
}
