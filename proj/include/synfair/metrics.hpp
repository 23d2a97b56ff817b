#pragma once

#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "synfair/common.hpp"

namespace synfair::metrics {

struct ScoredPair {
    double score = 0.0;
    bool genuine = false;
    int group = -1;
};

struct PairSet {
    std::vector<ScoredPair> pairs;
    bool usable_for_far = true;  // false when no impostor pairs exist

    std::size_t genuine_count() const {
        std::size_t n = 0;
        for (const auto& p : pairs) n += p.genuine ? 1 : 0;
        return n;
    }
    std::size_t impostor_count() const { return pairs.size() - genuine_count(); }

    std::vector<int> group_ids() const {
        std::map<int, bool> seen;
        for (const auto& p : pairs) seen[p.group] = true;
        std::vector<int> out;
        for (const auto& [g, _] : seen) out.push_back(g);
        return out;
    }

    void validate() const {
        if (genuine_count() == 0) throw ProtocolError("PairSet: no genuine pairs");
        if (usable_for_far && impostor_count() == 0) throw ProtocolError("PairSet: no impostor pairs");
    }
};

struct SampleLabel {
    int identity = 0;
    int group = 0;
};

// All within-identity pairs become genuine pairs; impostor pairs are drawn
// within-group (cross-group optional) at impostor_ratio times the per-group
// genuine count, with replacement.
inline PairSet sample_pairs(const std::vector<SampleLabel>& labels, const std::function<double(std::size_t, std::size_t)>& score,
                            double impostor_ratio, Rng& rng, bool cross_group = false) {
    if (impostor_ratio < 0.0) throw ParamError("sample_pairs: impostor_ratio must be >= 0");
    std::map<int, std::vector<std::size_t>> by_identity;
    std::map<int, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_identity[labels[i].identity].push_back(i);
        by_group[labels[i].group].push_back(i);
    }
    if (by_identity.size() < 2) throw ProtocolError("sample_pairs: need >= 2 identities");
    bool any_pairable = false;
    for (const auto& [id, idxs] : by_identity) any_pairable |= idxs.size() >= 2;
    if (!any_pairable) throw ProtocolError("sample_pairs: no identity has >= 2 samples");

    PairSet out;
    std::map<int, std::size_t> genuine_per_group;
    for (const auto& [id, idxs] : by_identity) {
        for (std::size_t a = 0; a < idxs.size(); ++a)
            for (std::size_t b = a + 1; b < idxs.size(); ++b) {
                const int g = labels[idxs[a]].group;
                out.pairs.push_back({score(idxs[a], idxs[b]), true, g});
                genuine_per_group[g] += 1;
            }
    }

    if (impostor_ratio == 0.0) {
        out.usable_for_far = false;
        return out;
    }

    if (cross_group) {
        std::size_t genuine_total = out.pairs.size();
        const auto want = static_cast<std::size_t>(std::llround(impostor_ratio * static_cast<double>(genuine_total)));
        std::size_t made = 0;
        for (std::size_t guard = 0; made < want && guard < want * 100 + 1000; ++guard) {
            const std::size_t i = rng.index(labels.size());
            const std::size_t j = rng.index(labels.size());
            if (labels[i].identity == labels[j].identity) continue;
            // pooled-only pair: group -1 keeps cross-group impostors out of per-group rates
            const int g = labels[i].group == labels[j].group ? labels[i].group : -1;
            out.pairs.push_back({score(i, j), false, g});
            ++made;
        }
    } else {
        for (const auto& [g, members] : by_group) {
            const auto want = static_cast<std::size_t>(
                std::llround(impostor_ratio * static_cast<double>(genuine_per_group[g])));
            std::size_t distinct_ids = 0;
            {
                std::map<int, bool> ids;
                for (std::size_t i : members) ids[labels[i].identity] = true;
                distinct_ids = ids.size();
            }
            if (distinct_ids < 2) continue;  // group contributes no impostors; flagged unevaluated downstream
            std::size_t made = 0;
            for (std::size_t guard = 0; made < want && guard < want * 100 + 1000; ++guard) {
                const std::size_t i = members[rng.index(members.size())];
                const std::size_t j = members[rng.index(members.size())];
                if (labels[i].identity == labels[j].identity) continue;
                out.pairs.push_back({score(i, j), false, g});
                ++made;
            }
        }
    }
    out.usable_for_far = out.impostor_count() > 0;
    return out;
}

// One point per distinct threshold (descending); ties share a point. A
// virtual (far=0, tpr=0) point at threshold +inf is always present, and the
// final point is (1, 1).
struct RocCurve {
    std::vector<double> thresholds;
    std::vector<double> far;
    std::vector<double> tpr;

    std::size_t size() const { return thresholds.size(); }
};

inline RocCurve roc(const PairSet& pairs) {
    pairs.validate();
    if (!pairs.usable_for_far) throw ProtocolError("roc: PairSet has no impostor pairs");
    std::vector<ScoredPair> sorted = pairs.pairs;
    std::sort(sorted.begin(), sorted.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });
    const double ng = static_cast<double>(pairs.genuine_count());
    const double ni = static_cast<double>(pairs.impostor_count());

    RocCurve c;
    c.thresholds.push_back(std::numeric_limits<double>::infinity());
    c.far.push_back(0.0);
    c.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double thr = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == thr) {
            (sorted[i].genuine ? tp : fp) += 1;
            ++i;
        }
        c.thresholds.push_back(thr);
        c.far.push_back(static_cast<double>(fp) / ni);
        c.tpr.push_back(static_cast<double>(tp) / ng);
    }
    return c;
}

struct TprAtFar {
    double tpr = 0.0;
    bool exact = false;         // far_target attained by a sweep point
    bool extrapolated = false;  // target below the smallest achievable positive FAR
};

// Linear interpolation in log10(FAR) between the bracketing sweep points
// (the curve's value at a FAR is the max TPR attained there). When the lower
// bracket sits at FAR = 0 its TPR is returned unchanged (conservative: no
// interpolation toward -inf in the log domain); if that TPR is 0 the value
// at the smallest achievable positive FAR is returned with the extrapolated
// flag set.
inline TprAtFar tpr_at_far(const RocCurve& curve, double far_target) {
    if (!(far_target > 0.0 && far_target < 1.0)) throw ParamError("tpr_at_far: far_target must be in (0, 1)");
    std::map<double, double> best;  // far -> max tpr at that far
    for (std::size_t i = 0; i < curve.size(); ++i) {
        auto [it, inserted] = best.emplace(curve.far[i], curve.tpr[i]);
        if (!inserted) it->second = std::max(it->second, curve.tpr[i]);
    }
    const auto exact = best.find(far_target);
    if (exact != best.end()) return {exact->second, true, false};

    auto upper = best.upper_bound(far_target);
    const double hi_far = upper != best.end() ? upper->first : 1.0;
    const double hi_tpr = upper != best.end() ? upper->second : 1.0;
    if (upper == best.begin()) return {hi_tpr, false, true};  // no point at or below the target
    const auto lower = std::prev(upper);
    if (lower->first > 0.0) {
        const double x = std::log10(far_target);
        const double x0 = std::log10(lower->first);
        const double x1 = std::log10(hi_far);
        const double w = (x - x0) / (x1 - x0);
        return {lower->second + w * (hi_tpr - lower->second), false, false};
    }
    if (lower->second > 0.0) return {lower->second, false, false};
    return {hi_tpr, false, true};
}

// FAR = FNR crossing, linearly interpolated between bracketing sweep points.
inline double eer(const RocCurve& curve) {
    double prev_far = curve.far.front();
    double prev_fnr = 1.0 - curve.tpr.front();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double f = curve.far[i];
        const double fnr = 1.0 - curve.tpr[i];
        if (f >= fnr) {
            const double d_prev = prev_fnr - prev_far;  // >= 0 before the crossing
            const double d_cur = f - fnr;               // >= 0 at/after it
            if (d_prev + d_cur <= 0.0) return f;
            const double w = d_prev / (d_prev + d_cur);
            return prev_far + w * (f - prev_far);
        }
        prev_far = f;
        prev_fnr = fnr;
    }
    return prev_far;  // FAR never reaches FNR within the sweep
}

struct OperatingPoint {
    double tau = 0.0;
    double far_target = 0.0;
};

// Accept iff score >= tau. Returns the largest threshold drawn from the
// observed scores whose pooled FAR does not exceed far_target while
// maximizing acceptance (see worked convention in the tests).
inline OperatingPoint global_threshold(const PairSet& pairs, double far_target) {
    pairs.validate();
    if (!pairs.usable_for_far) throw ProtocolError("global_threshold: no impostor scores");
    if (!(far_target >= 0.0 && far_target <= 1.0)) throw ParamError("global_threshold: far_target must be in [0, 1]");
    std::vector<double> scores;
    std::vector<double> impostors;
    for (const auto& p : pairs.pairs) {
        scores.push_back(p.score);
        if (!p.genuine) impostors.push_back(p.score);
    }
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::sort(impostors.begin(), impostors.end());
    const double ni = static_cast<double>(impostors.size());

    auto far_at = [&](double tau) {
        // impostors with score >= tau
        const auto it = std::lower_bound(impostors.begin(), impostors.end(), tau);
        return static_cast<double>(impostors.end() - it) / ni;
    };
    // smallest observed score keeping FAR <= target maximizes acceptance
    double best_far = 1.0;
    for (double s : scores) {
        const double f = far_at(s);
        best_far = std::min(best_far, f);
        if (f <= far_target) return {s, far_target};
    }
    throw ParamError("global_threshold: far_target " + std::to_string(far_target) +
                     " unattainable; smallest achievable FAR is " + std::to_string(best_far));
}

struct GroupRates {
    double tpr = 0.0;
    double fpr = 0.0;
    double accept_rate = 0.0;  // genuine-pair accept rate (equals tpr by construction)
    bool evaluated = false;
    std::size_t n_genuine = 0;
    std::size_t n_impostor = 0;
};

// Per-group TPR/FPR/accept-rate at tau (accept iff score >= tau). Groups
// missing either class are returned with evaluated=false rather than dropped.
// Group -1 (pooled-only pairs) is never listed.
inline std::map<int, GroupRates> group_rates(const PairSet& pairs, double tau) {
    std::map<int, GroupRates> out;
    for (const auto& p : pairs.pairs) {
        if (p.group < 0) continue;
        auto& r = out[p.group];
        if (p.genuine) {
            r.n_genuine += 1;
            if (p.score >= tau) r.tpr += 1.0;
        } else {
            r.n_impostor += 1;
            if (p.score >= tau) r.fpr += 1.0;
        }
    }
    for (auto& [g, r] : out) {
        if (r.n_genuine > 0 && r.n_impostor > 0) {
            r.tpr /= static_cast<double>(r.n_genuine);
            r.fpr /= static_cast<double>(r.n_impostor);
            r.accept_rate = r.tpr;
            r.evaluated = true;
        } else {
            r.tpr = r.fpr = r.accept_rate = 0.0;
            r.evaluated = false;
        }
    }
    return out;
}

inline GroupRates pooled_rates(const PairSet& pairs, double tau) {
    GroupRates r;
    for (const auto& p : pairs.pairs) {
        if (p.genuine) {
            r.n_genuine += 1;
            if (p.score >= tau) r.tpr += 1.0;
        } else {
            r.n_impostor += 1;
            if (p.score >= tau) r.fpr += 1.0;
        }
    }
    if (r.n_genuine > 0) r.tpr /= static_cast<double>(r.n_genuine);
    if (r.n_impostor > 0) r.fpr /= static_cast<double>(r.n_impostor);
    r.accept_rate = r.tpr;
    r.evaluated = r.n_genuine > 0 && r.n_impostor > 0;
    return r;
}

// max_g TPR_g - min_g TPR_g
inline double tpr_gap(const Vec& group_tprs) {
    if (group_tprs.size() < 2) throw ParamError("tpr_gap: need >= 2 groups");
    const auto [mn, mx] = std::minmax_element(group_tprs.begin(), group_tprs.end());
    return *mx - *mn;
}

// Demographic parity difference: max over ordered pairs of accept-rate
// differences, which reduces to max - min.
inline double dpd(const Vec& group_accept_rates) {
    if (group_accept_rates.size() < 2) throw ParamError("dpd: need >= 2 groups");
    const auto [mn, mx] = std::minmax_element(group_accept_rates.begin(), group_accept_rates.end());
    return *mx - *mn;
}

// max over groups of max(|TPR_g - TPR_all|, |FPR_g - FPR_all|). Unevaluated
// groups are excluded; the count of exclusions is reported via the optional out-param.
inline double eo_gap(const std::map<int, GroupRates>& rates, const GroupRates& pooled, int* excluded = nullptr) {
    if (!pooled.evaluated) throw ParamError("eo_gap: pooled rates unavailable");
    double gap = 0.0;
    int skipped = 0;
    for (const auto& [g, r] : rates) {
        if (!r.evaluated) {
            ++skipped;
            continue;
        }
        gap = std::max(gap, std::max(std::fabs(r.tpr - pooled.tpr), std::fabs(r.fpr - pooled.fpr)));
    }
    if (excluded) *excluded = skipped;
    return gap;
}

struct ParetoPoint {
    double accuracy = 0.0;
    double disparity = 0.0;
    std::size_t index = 0;  // position in the input list
};

// Keeps a point iff no other point is >= on accuracy and <= on disparity
// with at least one strict inequality. Duplicates keep the first occurrence.
// Output sorted by ascending accuracy.
inline std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points) {
    if (points.empty()) throw ParamError("pareto_frontier: empty input");
    for (std::size_t i = 0; i < points.size(); ++i) points[i].index = i;
    std::vector<ParetoPoint> kept;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            if (i == j) continue;
            const bool geq = points[j].accuracy >= points[i].accuracy && points[j].disparity <= points[i].disparity;
            const bool strict = points[j].accuracy > points[i].accuracy || points[j].disparity < points[i].disparity;
            if (geq && strict) dominated = true;
            // exact duplicate: only the earliest survives
            if (!strict && geq && j < i) dominated = true;
        }
        if (!dominated) kept.push_back(points[i]);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const ParetoPoint& a, const ParetoPoint& b) { return a.accuracy < b.accuracy; });
    return kept;
}

}  // namespace synfair::metrics
