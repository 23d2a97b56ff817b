#pragma once

#include <map>
#include <set>
#include <vector>

#include "synfair/common.hpp"

namespace synfair::balancing {

struct FeatureTable {
    std::vector<Vec> rows;
    std::vector<int> group;  // label per row

    std::size_t size() const { return rows.size(); }
    std::size_t feature_dim() const { return rows.empty() ? 0 : rows.front().size(); }

    std::vector<int> group_ids() const {
        std::set<int> s(group.begin(), group.end());
        return {s.begin(), s.end()};
    }

    void validate() const {
        if (rows.size() != group.size()) throw ShapeError("FeatureTable: rows/group length mismatch");
        if (rows.size() < 5) throw ParamError("FeatureTable: need N >= 5");
        const std::size_t f = feature_dim();
        if (f == 0) throw ShapeError("FeatureTable: empty feature vectors");
        for (const auto& r : rows)
            if (r.size() != f) throw ShapeError("FeatureTable: ragged feature rows");
        std::map<int, int> counts;
        for (int g : group) counts[g] += 1;
        for (const auto& [g, c] : counts)
            if (c < 2) throw ParamError("FeatureTable: group " + std::to_string(g) + " has < 2 rows");
    }
};

struct BalanceWeights {
    Vec w;

    void validate(const FeatureTable& t) const {
        if (w.size() != t.size()) throw ShapeError("BalanceWeights: length != table size");
        for (double v : w)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ParamError("BalanceWeights: weights must be finite and >= 0");
    }

    static BalanceWeights uniform(std::size_t n) { return BalanceWeights{Vec(n, 1.0)}; }
};

struct BalanceConfig {
    double delta = 0.1;
    double learning_rate = 0.05;
    int max_iters = 500;
    double tolerance = 1e-10;

    void validate() const {
        if (delta < 0.0) throw ParamError("BalanceConfig: delta must be >= 0");
        if (learning_rate <= 0.0) throw ParamError("BalanceConfig: learning_rate must be > 0");
        if (max_iters < 1) throw ParamError("BalanceConfig: max_iters must be >= 1");
    }
};

namespace detail {

// Weighted per-group statistics shared by the loss and its gradient. The
// global mean is the unweighted average of the weighted group means: each
// group counts equally, which is what makes the loss invariant to scaling
// any one group's weights.
struct GroupStats {
    std::vector<int> ids;                  // distinct group labels, ascending
    std::map<int, std::size_t> id_to_idx;  // label -> position in ids
    std::vector<double> wsum;              // per-group weight totals
    std::vector<Vec> mu;                   // per-group weighted means
    std::vector<Vec> var;                  // per-group weighted variances (per feature)
    std::vector<double> sigma;             // per-group scalar std: sqrt(mean_f var)
    Vec mu_global;                         // mean of the group means
};

inline GroupStats group_stats(const FeatureTable& t, const Vec& w) {
    const std::size_t F = t.feature_dim();
    GroupStats s;
    s.ids = t.group_ids();
    for (std::size_t k = 0; k < s.ids.size(); ++k) s.id_to_idx[s.ids[k]] = k;
    const std::size_t G = s.ids.size();
    s.wsum.assign(G, 0.0);
    s.mu.assign(G, Vec(F, 0.0));
    s.var.assign(G, Vec(F, 0.0));
    s.sigma.assign(G, 0.0);
    s.mu_global.assign(F, 0.0);

    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t g = s.id_to_idx.at(t.group[i]);
        s.wsum[g] += w[i];
        for (std::size_t f = 0; f < F; ++f) s.mu[g][f] += w[i] * t.rows[i][f];
    }
    for (std::size_t g = 0; g < G; ++g) {
        if (s.wsum[g] <= 0.0)
            throw NumericError("degenerate group " + std::to_string(s.ids[g]) + ": zero total weight");
        for (std::size_t f = 0; f < F; ++f) {
            s.mu[g][f] /= s.wsum[g];
            s.mu_global[f] += s.mu[g][f] / static_cast<double>(G);
        }
    }

    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t g = s.id_to_idx.at(t.group[i]);
        for (std::size_t f = 0; f < F; ++f) {
            const double d = t.rows[i][f] - s.mu[g][f];
            s.var[g][f] += w[i] * d * d;
        }
    }
    for (std::size_t g = 0; g < G; ++g) {
        double acc = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            s.var[g][f] /= s.wsum[g];
            acc += s.var[g][f];
        }
        s.sigma[g] = std::sqrt(acc / static_cast<double>(F));
    }
    return s;
}

}  // namespace detail

// L = sum_d ||mu_d - mu||^2 + max(0, delta - sigma_d)^2, all moments
// weighted; sigma_d is the root-mean of per-feature weighted variances.
inline double balance_loss(const FeatureTable& t, const BalanceWeights& bw, double delta) {
    t.validate();
    bw.validate(t);
    const auto s = detail::group_stats(t, bw.w);
    double loss = 0.0;
    for (std::size_t g = 0; g < s.ids.size(); ++g) {
        for (std::size_t f = 0; f < t.feature_dim(); ++f) {
            const double d = s.mu[g][f] - s.mu_global[f];
            loss += d * d;
        }
        const double hinge = std::max(0.0, delta - s.sigma[g]);
        loss += hinge * hinge;
    }
    return loss;
}

namespace detail {

inline Vec balance_loss_gradient(const FeatureTable& t, const Vec& w, double delta) {
    const auto s = group_stats(t, w);
    const std::size_t F = t.feature_dim();

    // the global-mean chain term vanishes: sum_d (mu_d - mu) = 0 identically
    // when mu is the mean of the group means
    Vec grad(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t g = s.id_to_idx.at(t.group[i]);
        double acc = 0.0;
        for (std::size_t f = 0; f < F; ++f)
            acc += 2.0 * (s.mu[g][f] - s.mu_global[f]) * (t.rows[i][f] - s.mu[g][f]) / s.wsum[g];
        // hinge term, only active when sigma_g < delta
        const double hinge = delta - s.sigma[g];
        if (hinge > 0.0 && s.sigma[g] > 1e-12) {
            double dvar = 0.0;
            for (std::size_t f = 0; f < F; ++f) {
                const double d = t.rows[i][f] - s.mu[g][f];
                dvar += (d * d - s.var[g][f]) / s.wsum[g];
            }
            dvar /= static_cast<double>(F);
            acc += -hinge / s.sigma[g] * dvar;
        }
        grad[i] = acc;
    }
    return grad;
}

// Clamp to the nonnegative orthant and renormalize each group's weights to
// sum to 1 (the loss is invariant to per-group scale).
inline void project_weights(const FeatureTable& t, Vec& w) {
    for (auto& v : w) v = std::max(v, 0.0);
    std::map<int, double> sums;
    std::map<int, int> counts;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sums[t.group[i]] += w[i];
        counts[t.group[i]] += 1;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double s = sums[t.group[i]];
        if (s > 0.0)
            w[i] /= s;
        else
            w[i] = 1.0 / counts[t.group[i]];  // group zeroed out entirely, restart it uniform
    }
}

}  // namespace detail

struct OptimizeResult {
    BalanceWeights weights;
    std::vector<double> loss_trace;  // loss at start plus after every accepted step
    int iterations = 0;
};

// Projected gradient descent with backtracking. The accepted-loss sequence is
// nonincreasing by construction; stops on relative tolerance, max_iters, or
// when no step length improves the loss.
inline OptimizeResult optimize_weights(const FeatureTable& t, const BalanceConfig& cfg) {
    t.validate();
    cfg.validate();
    Vec w(t.size(), 1.0);
    detail::project_weights(t, w);

    OptimizeResult res;
    double loss = balance_loss(t, BalanceWeights{w}, cfg.delta);
    res.loss_trace.push_back(loss);

    double step = cfg.learning_rate;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const Vec grad = detail::balance_loss_gradient(t, w, cfg.delta);
        if (!all_finite(grad))
            throw NumericError("optimize_weights: non-finite gradient at iteration " + std::to_string(iter));

        bool accepted = false;
        double trial_step = step;
        for (int bt = 0; bt < 40; ++bt) {
            Vec trial = w;
            for (std::size_t i = 0; i < trial.size(); ++i) trial[i] -= trial_step * grad[i];
            detail::project_weights(t, trial);
            const double trial_loss = balance_loss(t, BalanceWeights{trial}, cfg.delta);
            if (!std::isfinite(trial_loss))
                throw NumericError("optimize_weights: non-finite loss at iteration " + std::to_string(iter));
            if (trial_loss <= loss) {
                const double gain = loss - trial_loss;
                w = std::move(trial);
                loss = trial_loss;
                res.loss_trace.push_back(loss);
                step = trial_step * 1.5;
                accepted = true;
                res.iterations = iter + 1;
                if (gain <= cfg.tolerance * std::max(1.0, loss)) return {BalanceWeights{w}, res.loss_trace, res.iterations};
                break;
            }
            trial_step *= 0.5;
        }
        if (!accepted) break;  // no descent direction at any step length
    }
    res.weights = BalanceWeights{w};
    return res;
}

// Draws target_n items, equal counts per group (remainder goes to the
// lowest-id groups), with replacement, probability proportional to weight
// within each group. Returns row indices in draw order.
inline std::vector<std::size_t> resample_indices(const std::vector<int>& groups, const BalanceWeights& bw,
                                                 std::size_t target_n, Rng& rng) {
    if (groups.size() != bw.w.size()) throw ShapeError("resample: weights/groups length mismatch");
    if (target_n < 5) throw ParamError("resample: target_n must be >= 5");
    std::set<int> ids(groups.begin(), groups.end());
    const std::size_t G = ids.size();
    if (G == 0) throw ParamError("resample: empty input");

    std::vector<std::size_t> out;
    out.reserve(target_n);
    std::size_t extra = target_n % G;
    for (int id : ids) {
        std::size_t quota = target_n / G + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
        std::vector<std::size_t> members;
        Vec cum;
        double total = 0.0;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (groups[i] != id) continue;
            total += bw.w[i];
            members.push_back(i);
            cum.push_back(total);
        }
        if (total <= 0.0)
            throw ParamError("resample: target_n not achievable, group " + std::to_string(id) + " has zero total weight");
        for (std::size_t k = 0; k < quota; ++k) {
            const double u = rng.uniform() * total;
            const auto it = std::lower_bound(cum.begin(), cum.end(), u);
            const std::size_t pos = std::min(static_cast<std::size_t>(it - cum.begin()), members.size() - 1);
            out.push_back(members[pos]);
        }
    }
    return out;
}

template <typename T>
std::vector<T> resample(const std::vector<T>& items, const std::vector<int>& groups, const BalanceWeights& bw,
                        std::size_t target_n, Rng& rng) {
    std::vector<T> out;
    out.reserve(target_n);
    for (std::size_t i : resample_indices(groups, bw, target_n, rng)) out.push_back(items[i]);
    return out;
}

struct KsResult {
    double d = 0.0;
    double p_asymptotic = 1.0;
    bool has_exact = false;
    double p_exact = 1.0;  // valid when has_exact; filled for pooled n <= 20
};

namespace detail {

inline double ks_d_statistic(const Vec& a_sorted, const Vec& b_sorted) {
    const double na = static_cast<double>(a_sorted.size());
    const double nb = static_cast<double>(b_sorted.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a_sorted.size() && j < b_sorted.size()) {
        const double v = std::min(a_sorted[i], b_sorted[j]);
        while (i < a_sorted.size() && a_sorted[i] <= v) ++i;
        while (j < b_sorted.size() && b_sorted[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    return d;
}

// Kolmogorov survival function Q(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-9) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-14) break;
        sign = -sign;
    }
    return clamp01(2.0 * sum);
}

}  // namespace detail

// Exact two-sample permutation p-value: the fraction of all C(n, n_a)
// assignments of pooled values whose D statistic reaches the observed one.
// Only feasible for small pooled n; callers gate on n <= 20.
inline double ks_exact_pvalue(Vec a, Vec b) {
    if (a.empty() || b.empty()) throw ParamError("ks_exact_pvalue: empty sample");
    if (a.size() + b.size() > 22) throw ParamError("ks_exact_pvalue: pooled n too large for enumeration");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double d_obs = detail::ks_d_statistic(a, b);

    Vec pooled;
    pooled.reserve(a.size() + b.size());
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());

    // mask starts as the lexicographically smallest arrangement; prev_permutation
    // walks every distinct assignment of n_a slots.
    std::vector<char> mask(pooled.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) mask[i] = 1;
    std::sort(mask.begin(), mask.end(), std::greater<char>());

    std::uint64_t total = 0, at_least = 0;
    Vec pa, pb;
    do {
        pa.clear();
        pb.clear();
        for (std::size_t i = 0; i < pooled.size(); ++i) (mask[i] ? pa : pb).push_back(pooled[i]);
        const double d = detail::ks_d_statistic(pa, pb);
        ++total;
        if (d >= d_obs - 1e-12) ++at_least;
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return static_cast<double>(at_least) / static_cast<double>(total);
}

// D by a single merge sweep; asymptotic p from the Kolmogorov distribution
// with effective n = n_a*n_b/(n_a+n_b). For pooled n <= 20 the exact
// permutation p is also filled in.
inline KsResult ks_two_sample(Vec a, Vec b) {
    if (a.empty() || b.empty()) throw ParamError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    KsResult r;
    r.d = detail::ks_d_statistic(a, b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ne = na * nb / (na + nb);
    r.p_asymptotic = detail::kolmogorov_q(std::sqrt(ne) * r.d);
    if (a.size() + b.size() <= 20) {
        r.has_exact = true;
        r.p_exact = ks_exact_pvalue(a, b);
    }
    return r;
}

}  // namespace synfair::balancing
