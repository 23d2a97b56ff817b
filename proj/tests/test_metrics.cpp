#include "synfair/metrics.hpp"

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace synfair;
using namespace synfair::metrics;

namespace {

PairSet make_pairs(std::initializer_list<ScoredPair> ps) {
    PairSet out;
    out.pairs = ps;
    out.usable_for_far = out.impostor_count() > 0;
    return out;
}

PairSet random_pairs(Rng& rng, std::size_t n, int groups = 1, double genuine_shift = 1.0) {
    PairSet out;
    for (std::size_t i = 0; i < n; ++i) {
        const bool genuine = rng.uniform() < 0.5;
        const int g = static_cast<int>(rng.index(static_cast<std::size_t>(groups)));
        out.pairs.push_back({rng.normal(genuine ? genuine_shift : 0.0, 1.0), genuine, g});
    }
    // ensure both classes exist
    out.pairs.push_back({genuine_shift, true, 0});
    out.pairs.push_back({0.0, false, 0});
    out.usable_for_far = true;
    return out;
}

}  // namespace

TEST(SamplePairs, TwoByTwoCombinatorics) {
    std::vector<SampleLabel> labels{{0, 0}, {0, 0}, {1, 0}, {1, 0}};
    Rng rng(1);
    const auto ps = sample_pairs(labels, [](std::size_t, std::size_t) { return 0.5; }, 0.0, rng);
    EXPECT_EQ(ps.genuine_count(), 2u);  // C(2,2)=1 per identity
    EXPECT_FALSE(ps.usable_for_far);    // impostor_ratio 0 -> unusable for FAR metrics
}

TEST(SamplePairs, GenuineCountByEnumerationOracle) {
    // 5 identities x 3 samples -> 5 * C(3,2) = 15 genuine pairs
    std::vector<SampleLabel> labels;
    for (int id = 0; id < 5; ++id)
        for (int k = 0; k < 3; ++k) labels.push_back({id, id % 2});
    std::size_t oracle = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j)
            if (labels[i].identity == labels[j].identity) ++oracle;
    EXPECT_EQ(oracle, 15u);
    Rng rng(2);
    const auto ps = sample_pairs(labels, [](std::size_t, std::size_t) { return 0.0; }, 1.0, rng);
    EXPECT_EQ(ps.genuine_count(), oracle);
    EXPECT_GT(ps.impostor_count(), 0u);
}

TEST(SamplePairs, ImpostorsStayWithinGroup) {
    std::vector<SampleLabel> labels;
    for (int id = 0; id < 8; ++id)
        for (int k = 0; k < 3; ++k) labels.push_back({id, id / 2});
    Rng rng(3);
    // score encodes the group pair so we can audit group labels
    const auto ps = sample_pairs(
        labels, [&](std::size_t i, std::size_t j) { return labels[i].group == labels[j].group ? 1.0 : -1.0; }, 2.0,
        rng);
    for (const auto& p : ps.pairs)
        if (!p.genuine) EXPECT_DOUBLE_EQ(p.score, 1.0);
}

TEST(SamplePairs, ProtocolErrors) {
    Rng rng(4);
    std::vector<SampleLabel> one_identity{{0, 0}, {0, 0}};
    EXPECT_THROW(sample_pairs(one_identity, [](std::size_t, std::size_t) { return 0.0; }, 1.0, rng), ProtocolError);
    std::vector<SampleLabel> singletons{{0, 0}, {1, 0}};
    EXPECT_THROW(sample_pairs(singletons, [](std::size_t, std::size_t) { return 0.0; }, 1.0, rng), ProtocolError);
}

TEST(Roc, PerfectSeparationReachesTopLeft) {
    const auto ps = make_pairs({{1.0, true, 0}, {1.0, true, 0}, {0.0, false, 0}, {0.0, false, 0}});
    const auto c = roc(ps);
    bool found = false;
    for (std::size_t i = 0; i < c.size(); ++i) found |= c.far[i] == 0.0 && c.tpr[i] == 1.0;
    EXPECT_TRUE(found);
}

TEST(Roc, EndpointsPresent) {
    Rng rng(5);
    const auto ps = random_pairs(rng, 60);
    const auto c = roc(ps);
    EXPECT_EQ(c.far.front(), 0.0);
    EXPECT_DOUBLE_EQ(c.far.back(), 1.0);
    EXPECT_DOUBLE_EQ(c.tpr.back(), 1.0);
}

TEST(Roc, MonotoneAlongSweep) {
    Rng rng(6);
    const auto ps = random_pairs(rng, 300);
    const auto c = roc(ps);
    for (std::size_t i = 1; i < c.size(); ++i) {
        EXPECT_GE(c.far[i], c.far[i - 1]);
        EXPECT_GE(c.tpr[i], c.tpr[i - 1]);
        EXPECT_LT(c.thresholds[i], c.thresholds[i - 1]);
    }
}

TEST(Roc, HandInstanceMatchesBruteForceSweep) {
    const auto ps = make_pairs({{0.9, true, 0},
                                {0.8, true, 0},
                                {0.8, false, 0},
                                {0.5, true, 0},
                                {0.3, false, 0},
                                {0.1, false, 0}});
    const auto c = roc(ps);
    const auto oracle = oracles::roc_bruteforce(ps);
    ASSERT_EQ(c.size(), oracle.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_DOUBLE_EQ(c.far[i], oracle[i].far);
        EXPECT_DOUBLE_EQ(c.tpr[i], oracle[i].tpr);
    }
}

TEST(Roc, NullScoresGiveHalfAuc) {
    Rng rng(7);
    PairSet ps;
    for (int i = 0; i < 10000; ++i) ps.pairs.push_back({rng.normal(), rng.uniform() < 0.5, 0});
    ps.pairs.push_back({0.0, true, 0});
    ps.pairs.push_back({0.0, false, 0});
    ps.usable_for_far = true;
    const auto c = roc(ps);
    double auc = 0.0;
    for (std::size_t i = 1; i < c.size(); ++i) auc += (c.far[i] - c.far[i - 1]) * 0.5 * (c.tpr[i] + c.tpr[i - 1]);
    EXPECT_NEAR(auc, 0.5, 0.02);
}

TEST(TprAtFar, PerfectCurveIsOneEverywhere) {
    const auto ps = make_pairs({{1.0, true, 0}, {1.0, true, 0}, {0.0, false, 0}, {0.0, false, 0}});
    const auto c = roc(ps);
    for (double target : {1e-4, 1e-2, 0.5}) {
        const auto r = tpr_at_far(c, target);
        EXPECT_DOUBLE_EQ(r.tpr, 1.0);
        EXPECT_FALSE(r.extrapolated);
    }
}

TEST(TprAtFar, LogLinearMidpoint) {
    RocCurve c;
    c.thresholds = {std::numeric_limits<double>::infinity(), 0.9, 0.5};
    c.far = {0.0, 1e-3, 1e-1};
    c.tpr = {0.0, 0.90, 0.98};
    const auto r = tpr_at_far(c, 1e-2);
    EXPECT_FALSE(r.exact);
    EXPECT_NEAR(r.tpr, 0.94, 1e-12);
}

TEST(TprAtFar, WithinBruteForceBracket) {
    Rng rng(8);
    for (int rep = 0; rep < 30; ++rep) {
        const auto ps = random_pairs(rng, 50);
        const auto c = roc(ps);
        const double target = std::pow(10.0, -(0.3 + 2.0 * rng.uniform()));
        const auto r = tpr_at_far(c, target);
        const auto bracket = oracles::tpr_at_far_bruteforce(ps, target);
        EXPECT_GE(r.tpr, bracket.tpr_lo - 1e-12);
        EXPECT_LE(r.tpr, bracket.tpr_hi + 1e-12);
    }
}

TEST(TprAtFar, ExtrapolationFlagBelowSmallestPositiveFar) {
    // top score is an impostor: far=0 exists only at tpr=0, so a tiny target
    // reports the value at the smallest achievable positive FAR, flagged
    const auto ps = make_pairs({{0.99, false, 0}, {0.9, true, 0}, {0.5, true, 0}, {0.1, false, 0}});
    const auto c = roc(ps);
    const auto r = tpr_at_far(c, 1e-6);
    EXPECT_TRUE(r.extrapolated);
    EXPECT_NEAR(r.tpr, 1.0, 1e-12);  // max tpr attained at far = 1/2
}

TEST(TprAtFar, RangeValidation) {
    RocCurve c;
    c.thresholds = {std::numeric_limits<double>::infinity(), 1.0};
    c.far = {0.0, 1.0};
    c.tpr = {0.0, 1.0};
    EXPECT_THROW(tpr_at_far(c, 0.0), ParamError);
    EXPECT_THROW(tpr_at_far(c, 1.0), ParamError);
}

TEST(Eer, PerfectSeparationIsZero) {
    const auto ps = make_pairs({{1.0, true, 0}, {0.9, true, 0}, {0.2, false, 0}, {0.0, false, 0}});
    EXPECT_DOUBLE_EQ(eer(roc(ps)), 0.0);
}

TEST(Eer, SymmetricFourScoreInstance) {
    const auto ps = make_pairs({{0.9, true, 0}, {0.4, true, 0}, {0.6, false, 0}, {0.1, false, 0}});
    EXPECT_NEAR(eer(roc(ps)), 0.5, 1e-12);
    const auto bracket = oracles::eer_bruteforce(ps);
    EXPECT_GE(0.5, bracket.lo - 1e-12);
    EXPECT_LE(0.5, bracket.hi + 1e-12);
}

TEST(Eer, NullScoresNearHalf) {
    Rng rng(9);
    PairSet ps;
    for (int i = 0; i < 20000; ++i) ps.pairs.push_back({rng.normal(), rng.uniform() < 0.5, 0});
    ps.usable_for_far = true;
    EXPECT_NEAR(eer(roc(ps)), 0.5, 0.03);
}

TEST(Eer, WithinBruteForceBracket) {
    Rng rng(10);
    for (int rep = 0; rep < 30; ++rep) {
        const auto ps = random_pairs(rng, 40 + rng.index(160));
        const double e = eer(roc(ps));
        const auto bracket = oracles::eer_bruteforce(ps);
        EXPECT_GE(e, bracket.lo - 1e-12);
        EXPECT_LE(e, bracket.hi + 1e-12);
    }
}

TEST(GlobalThreshold, AcceptAllAtFarOne) {
    const auto ps = make_pairs({{0.9, true, 0}, {0.4, true, 0}, {0.6, false, 0}, {0.1, false, 0}});
    const auto op = global_threshold(ps, 1.0);
    EXPECT_LE(op.tau, 0.1);  // accepts every score
}

TEST(GlobalThreshold, BoundaryConventionAdmitsExactlyOne) {
    PairSet ps = make_pairs({{0.1, false, 0}, {0.2, false, 0}, {0.3, false, 0}, {0.4, false, 0}, {0.95, true, 0}});
    const auto op = global_threshold(ps, 0.25);
    EXPECT_GT(op.tau, 0.3);
    EXPECT_LE(op.tau, 0.4);
    int admitted = 0;
    for (const auto& p : ps.pairs)
        if (!p.genuine && p.score >= op.tau) ++admitted;
    EXPECT_EQ(admitted, 1);
}

TEST(GlobalThreshold, PooledFarIsSizeWeightedMeanOfGroupFars) {
    Rng rng(11);
    PairSet ps;
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < 40 + g * 17; ++i) {
            ps.pairs.push_back({rng.normal(1.0, 1.0), true, g});
            ps.pairs.push_back({rng.normal(0.0, 1.0), false, g});
        }
    ps.usable_for_far = true;
    const auto op = global_threshold(ps, 0.1);
    const auto rates = group_rates(ps, op.tau);
    double weighted = 0.0;
    std::size_t total = 0;
    for (const auto& [g, r] : rates) {
        weighted += r.fpr * static_cast<double>(r.n_impostor);
        total += r.n_impostor;
    }
    weighted /= static_cast<double>(total);
    const auto pooled = pooled_rates(ps, op.tau);
    EXPECT_NEAR(pooled.fpr, weighted, 1e-12);
}

TEST(GlobalThreshold, UnattainableTargetNamesSmallestFar) {
    // every candidate threshold accepts all four impostors (all scores equal)
    const auto ps = make_pairs({{0.5, false, 0}, {0.5, false, 0}, {0.5, false, 0}, {0.5, false, 0}, {0.5, true, 0}});
    try {
        global_threshold(ps, 0.1);
        FAIL() << "expected ParamError";
    } catch (const ParamError& e) {
        EXPECT_NE(std::string(e.what()).find("1.0"), std::string::npos);
    }
}

TEST(GroupRates, ThresholdExtremes) {
    const auto ps = make_pairs({{0.9, true, 0}, {0.4, true, 0}, {0.6, false, 0}, {0.1, false, 0}});
    const auto lo = group_rates(ps, -10.0);
    EXPECT_DOUBLE_EQ(lo.at(0).tpr, 1.0);
    EXPECT_DOUBLE_EQ(lo.at(0).fpr, 1.0);
    const auto hi = group_rates(ps, 10.0);
    EXPECT_DOUBLE_EQ(hi.at(0).tpr, 0.0);
    EXPECT_DOUBLE_EQ(hi.at(0).fpr, 0.0);
}

TEST(GroupRates, CountingOracle) {
    Rng rng(12);
    PairSet ps;
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < 10; ++i) {
            ps.pairs.push_back({rng.uniform(), i % 2 == 0, g});
        }
    ps.pairs.push_back({0.5, true, 0});
    ps.pairs.push_back({0.5, false, 0});
    ps.usable_for_far = true;
    const double tau = 0.5;
    const auto rates = group_rates(ps, tau);
    for (const auto& [g, r] : rates) {
        double tp = 0, fp = 0, ng = 0, ni = 0;
        for (const auto& p : ps.pairs) {
            if (p.group != g) continue;
            if (p.genuine) {
                ng += 1;
                if (p.score >= tau) tp += 1;
            } else {
                ni += 1;
                if (p.score >= tau) fp += 1;
            }
        }
        EXPECT_DOUBLE_EQ(r.tpr, tp / ng);
        EXPECT_DOUBLE_EQ(r.fpr, fp / ni);
        EXPECT_DOUBLE_EQ(r.accept_rate, r.tpr);
    }
}

TEST(GroupRates, MissingClassMarkedUnevaluatedNotDropped) {
    const auto ps = make_pairs({{0.9, true, 0}, {0.6, false, 0}, {0.8, true, 1}});  // group 1 has no impostors
    const auto rates = group_rates(ps, 0.5);
    ASSERT_TRUE(rates.count(1));
    EXPECT_FALSE(rates.at(1).evaluated);
    EXPECT_TRUE(rates.at(0).evaluated);
}

TEST(Gaps, TableOneFixtures) {
    // verification-table rows as arithmetic fixtures (percent units)
    EXPECT_NEAR(tpr_gap({98.2, 95.1, 96.7, 93.8, 94.5}), 4.4, 1e-12);
    EXPECT_NEAR(tpr_gap({97.8, 96.2, 97.1, 95.3, 96.0}), 2.5, 1e-12);
    EXPECT_NEAR(tpr_gap({98.5, 97.8, 98.1, 97.2, 97.5}), 1.3, 1e-12);
    EXPECT_DOUBLE_EQ(tpr_gap({0.5, 0.5, 0.5}), 0.0);
    EXPECT_THROW(tpr_gap({0.5}), ParamError);
}

TEST(Gaps, DpdFixtureAndEnumerationOracle) {
    EXPECT_NEAR(dpd({0.95, 0.887, 0.9, 0.91, 0.92}), 0.063, 1e-12);
    EXPECT_DOUBLE_EQ(dpd({0.4, 0.4}), 0.0);
    EXPECT_THROW(dpd({0.4}), ParamError);
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        Vec rates{rng.uniform(), rng.uniform(), rng.uniform()};
        double oracle = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) oracle = std::max(oracle, rates[i] - rates[j]);
        EXPECT_DOUBLE_EQ(dpd(rates), oracle);
    }
}

TEST(Gaps, EoGapCases) {
    std::map<int, GroupRates> rates;
    GroupRates pooled;
    pooled.tpr = 0.9;
    pooled.fpr = 0.05;
    pooled.evaluated = true;
    for (int g = 0; g < 5; ++g) {
        GroupRates r;
        r.tpr = 0.9;
        r.fpr = 0.05;
        r.evaluated = true;
        rates[g] = r;
    }
    EXPECT_DOUBLE_EQ(eo_gap(rates, pooled), 0.0);
    rates[2].tpr = 0.85;  // single 0.05 deviation dominates
    EXPECT_NEAR(eo_gap(rates, pooled), 0.05, 1e-12);

    Rng rng(14);
    for (int rep = 0; rep < 20; ++rep) {
        std::map<int, GroupRates> rr;
        for (int g = 0; g < 5; ++g) {
            GroupRates r;
            r.tpr = rng.uniform();
            r.fpr = rng.uniform();
            r.evaluated = true;
            rr[g] = r;
        }
        double oracle = 0.0;
        for (const auto& [g, r] : rr)
            oracle = std::max(oracle, std::max(std::fabs(r.tpr - pooled.tpr), std::fabs(r.fpr - pooled.fpr)));
        EXPECT_DOUBLE_EQ(eo_gap(rr, pooled), oracle);
    }
}

TEST(Gaps, EoGapExcludesUnevaluatedWithWarning) {
    std::map<int, GroupRates> rates;
    GroupRates pooled;
    pooled.tpr = 0.9;
    pooled.fpr = 0.1;
    pooled.evaluated = true;
    GroupRates ok;
    ok.tpr = 0.88;
    ok.fpr = 0.1;
    ok.evaluated = true;
    GroupRates bad;
    bad.evaluated = false;
    bad.tpr = 0.0;
    rates[0] = ok;
    rates[1] = bad;
    int excluded = 0;
    EXPECT_NEAR(eo_gap(rates, pooled, &excluded), 0.02, 1e-12);
    EXPECT_EQ(excluded, 1);
}

TEST(Gaps, PermutationInvariance) {
    Vec tprs{0.9, 0.8, 0.95, 0.7, 0.85};
    const double base_gap = tpr_gap(tprs);
    const double base_dpd = dpd(tprs);
    std::reverse(tprs.begin(), tprs.end());
    EXPECT_DOUBLE_EQ(tpr_gap(tprs), base_gap);
    EXPECT_DOUBLE_EQ(dpd(tprs), base_dpd);
}

TEST(Pareto, SinglePoint) {
    const auto front = pareto_frontier({{0.9, 0.1, 0}});
    ASSERT_EQ(front.size(), 1u);
    EXPECT_DOUBLE_EQ(front[0].accuracy, 0.9);
}

TEST(Pareto, TableShapedDominance) {
    // (0.98, 0.025) dominates both others
    const auto front = pareto_frontier({{0.98, 0.025, 0}, {0.96, 0.063, 0}, {0.97, 0.038, 0}});
    ASSERT_EQ(front.size(), 1u);
    EXPECT_DOUBLE_EQ(front[0].accuracy, 0.98);
    EXPECT_DOUBLE_EQ(front[0].disparity, 0.025);
}

TEST(Pareto, DuplicatesKeepFirstByInputOrder) {
    const auto front = pareto_frontier({{0.9, 0.1, 0}, {0.9, 0.1, 0}, {0.8, 0.05, 0}});
    ASSERT_EQ(front.size(), 2u);
    EXPECT_EQ(front[0].index, 2u);
    EXPECT_EQ(front[1].index, 0u);  // the first of the duplicates
}

TEST(Pareto, RandomSetsMatchQuadraticChecker) {
    Rng rng(15);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<ParetoPoint> pts;
        const std::size_t n = 2 + rng.index(30);
        for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(), rng.uniform(), 0});
        const auto front = pareto_frontier(pts);
        // no dominated point kept, no non-dominated point omitted
        auto dominated = [&](std::size_t i) {
            for (std::size_t j = 0; j < pts.size(); ++j) {
                if (i == j) continue;
                const bool geq = pts[j].accuracy >= pts[i].accuracy && pts[j].disparity <= pts[i].disparity;
                const bool strict = pts[j].accuracy > pts[i].accuracy || pts[j].disparity < pts[i].disparity;
                if (geq && strict) return true;
            }
            return false;
        };
        std::set<std::size_t> kept;
        for (const auto& p : front) kept.insert(p.index);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (dominated(i)) {
                EXPECT_FALSE(kept.count(i));
            } else {
                bool duplicate_of_earlier = false;
                for (std::size_t j = 0; j < i; ++j)
                    duplicate_of_earlier |= pts[j].accuracy == pts[i].accuracy && pts[j].disparity == pts[i].disparity;
                if (!duplicate_of_earlier) EXPECT_TRUE(kept.count(i));
            }
        }
        for (std::size_t i = 1; i < front.size(); ++i) EXPECT_GE(front[i].accuracy, front[i - 1].accuracy);
    }
}

TEST(ScoreMonotoneInvariance, RocEerGapsUnchangedUnderIncreasingTransform) {
    Rng rng(16);
    PairSet ps;
    for (int g = 0; g < 2; ++g)
        for (int i = 0; i < 60; ++i) {
            ps.pairs.push_back({rng.normal(g == 0 ? 1.0 : 1.3, 1.0), true, g});
            ps.pairs.push_back({rng.normal(0.0, 1.0), false, g});
        }
    ps.usable_for_far = true;
    PairSet ts = ps;
    for (auto& p : ts.pairs) p.score = std::exp(p.score);  // strictly increasing

    const auto c1 = roc(ps);
    const auto c2 = roc(ts);
    ASSERT_EQ(c1.size(), c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i) {
        EXPECT_DOUBLE_EQ(c1.far[i], c2.far[i]);
        EXPECT_DOUBLE_EQ(c1.tpr[i], c2.tpr[i]);
    }
    EXPECT_NEAR(eer(c1), eer(c2), 1e-12);

    const double far_target = 0.1;
    const auto op1 = global_threshold(ps, far_target);
    const auto op2 = global_threshold(ts, far_target);
    const auto r1 = group_rates(ps, op1.tau);
    const auto r2 = group_rates(ts, op2.tau);
    Vec t1, t2, a1, a2;
    for (const auto& [g, r] : r1) {
        t1.push_back(r.tpr);
        a1.push_back(r.accept_rate);
    }
    for (const auto& [g, r] : r2) {
        t2.push_back(r.tpr);
        a2.push_back(r.accept_rate);
    }
    EXPECT_DOUBLE_EQ(tpr_gap(t1), tpr_gap(t2));
    EXPECT_DOUBLE_EQ(dpd(a1), dpd(a2));
    EXPECT_DOUBLE_EQ(eo_gap(r1, pooled_rates(ps, op1.tau)), eo_gap(r2, pooled_rates(ts, op2.tau)));
}
