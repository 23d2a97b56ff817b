#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "synfair/common.hpp"

namespace synfair::stats {

struct PairedSeries {
    Vec x;
    Vec y;

    void validate() const {
        if (x.size() != y.size()) throw ShapeError("PairedSeries: length mismatch");
        if (x.size() < 2) throw ParamError("PairedSeries: need length >= 2");
        if (!all_finite(x) || !all_finite(y)) throw NumericError("PairedSeries: non-finite values");
    }
};

inline double pearson_r(const PairedSeries& s) {
    s.validate();
    const double mx = mean_of(s.x);
    const double my = mean_of(s.y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double dx = s.x[i] - mx;
        const double dy = s.y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson_r: a series has zero variance, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

// n items rated by two raters with labels from a shared categorical set.
struct RatingTable {
    std::vector<int> rater_a;
    std::vector<int> rater_b;

    void validate() const {
        if (rater_a.size() != rater_b.size()) throw ShapeError("RatingTable: column length mismatch");
        if (rater_a.empty()) throw ParamError("RatingTable: need at least one item");
    }
};

// kappa = (p_o - p_e) / (1 - p_e). When both raters are constant and equal
// (p_e == 1, p_o == 1) the value is defined as 1 by convention.
inline double cohen_kappa(const RatingTable& t) {
    t.validate();
    const double n = static_cast<double>(t.rater_a.size());
    std::map<int, double> freq_a, freq_b;
    double agree = 0.0;
    for (std::size_t i = 0; i < t.rater_a.size(); ++i) {
        freq_a[t.rater_a[i]] += 1.0;
        freq_b[t.rater_b[i]] += 1.0;
        if (t.rater_a[i] == t.rater_b[i]) agree += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [label, ca] : freq_a) {
        auto it = freq_b.find(label);
        if (it != freq_b.end()) p_e += (ca / n) * (it->second / n);
    }
    if (p_e >= 1.0) return 1.0;
    return (p_o - p_e) / (1.0 - p_e);
}

// Mean of Cohen's kappa over all rater pairs; the two-rater statistic
// generalized to an n x m table by averaging.
inline double mean_pairwise_kappa(const std::vector<std::vector<int>>& raters) {
    if (raters.size() < 2) throw ParamError("mean_pairwise_kappa: need >= 2 raters");
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < raters.size(); ++a)
        for (std::size_t b = a + 1; b < raters.size(); ++b) {
            sum += cohen_kappa(RatingTable{raters[a], raters[b]});
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

// Percentile bootstrap interval for an arbitrary statistic. Deterministic
// under the rng seed; replicates use derived sub-streams.
inline std::pair<double, double> bootstrap_ci(const Vec& values, const std::function<double(const Vec&)>& statistic,
                                              int n_boot, double alpha, Rng& rng) {
    if (n_boot < 100) throw ParamError("bootstrap_ci: n_boot must be >= 100");
    if (values.empty()) throw ParamError("bootstrap_ci: empty sample");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParamError("bootstrap_ci: alpha must be in (0, 1)");
    Vec stats(static_cast<std::size_t>(n_boot));
    Vec resample(values.size());
    for (int b = 0; b < n_boot; ++b) {
        Rng sub = rng.derive(static_cast<std::uint64_t>(b));
        for (auto& v : resample) v = values[sub.index(values.size())];
        stats[static_cast<std::size_t>(b)] = statistic(resample);
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(n_boot - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, stats.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return stats[lo] * (1.0 - frac) + stats[hi] * frac;
    };
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

}  // namespace synfair::stats
