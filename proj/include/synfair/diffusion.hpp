#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "synfair/common.hpp"

namespace synfair::diffusion {

// Beta/alpha/alpha_bar arrays for a T-step DDPM. Arrays are 0-indexed by
// t-1: beta[0] is beta_1, alpha_bar.back() is alpha_bar_T.
struct NoiseSchedule {
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    int steps() const { return static_cast<int>(beta.size()); }

    double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
    // alpha_bar_0 = 1 by the empty-product convention.
    double alpha_bar_prev(int t) const { return t <= 1 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 2)]; }

    void check_step(int t) const {
        if (t < 1 || t > steps()) throw ParamError("step t=" + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
};

inline NoiseSchedule linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02) {
    if (T < 1) throw ParamError("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ParamError("linear_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<std::size_t>(i)] = b;
        s.alpha[static_cast<std::size_t>(i)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
inline Vec forward_noise(const Vec& x0, int t, const NoiseSchedule& sched, const Vec& eps) {
    sched.check_step(t);
    if (x0.size() != eps.size()) throw ShapeError("forward_noise: x0 and eps lengths differ");
    const double ab = sched.alpha_bar_at(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Vec out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

// Conditional Gaussian data model: x0 | c ~ N(m_c, diag(var)). Tractable
// stand-in for a learned denoiser; the reverse process under it is exactly
// checkable against the closed-form posterior.
struct GaussianConditionModel {
    std::map<std::string, Vec> means;
    Vec var_diag;  // shared diagonal covariance, entries > 0 allowed to be 0 (point mass)

    int dim() const { return static_cast<int>(var_diag.size()); }

    const Vec& mean_of(const std::string& c) const {
        auto it = means.find(c);
        if (it == means.end()) throw LookupError("unknown condition label '" + c + "'");
        if (it->second.size() != var_diag.size()) throw ShapeError("condition mean length != covariance length");
        return it->second;
    }

    void validate() const {
        if (var_diag.empty()) throw ParamError("condition model: empty covariance");
        for (double v : var_diag)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ParamError("condition model: covariance entries must be finite and >= 0");
        for (const auto& [label, m] : means)
            if (m.size() != var_diag.size()) throw ShapeError("condition '" + label + "' mean length != covariance length");
    }
};

// Posterior mean E[x0 | x_t, c] for the linear-Gaussian model, per coordinate:
//   (sqrt(ab)*var*x_t + (1-ab)*m_c) / (ab*var + 1-ab)
inline Vec posterior_mean_x0(const Vec& x_t, int t, const std::string& c, const NoiseSchedule& sched,
                             const GaussianConditionModel& model) {
    sched.check_step(t);
    const Vec& m = model.mean_of(c);
    if (x_t.size() != m.size()) throw ShapeError("posterior_mean_x0: x_t length != model dimension");
    const double ab = sched.alpha_bar_at(t);
    const double sab = std::sqrt(ab);
    Vec out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double v = model.var_diag[i];
        out[i] = (sab * v * x_t[i] + (1.0 - ab) * m[i]) / (ab * v + 1.0 - ab);
    }
    return out;
}

// eps_hat = (x_t - sqrt(ab) * E[x0|x_t,c]) / sqrt(1-ab)
inline Vec analytic_eps(const Vec& x_t, int t, const std::string& c, const NoiseSchedule& sched,
                        const GaussianConditionModel& model) {
    const Vec x0_hat = posterior_mean_x0(x_t, t, c, sched, model);
    const double ab = sched.alpha_bar_at(t);
    const double sab = std::sqrt(ab);
    const double s1m = std::sqrt(1.0 - ab);
    if (s1m == 0.0) throw NumericError("analytic_eps: alpha_bar_t == 1, eps undefined");
    Vec out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = (x_t[i] - sab * x0_hat[i]) / s1m;
    return out;
}

struct GuidanceConfig {
    double w = 0.0;

    void validate() const {
        if (!std::isfinite(w) || w < 0.0) throw ParamError("guidance weight must be finite and >= 0");
    }
};

// Classifier-free guidance: (1+w) * eps_cond - w * eps_uncond.
inline Vec cfg_combine(const Vec& eps_cond, const Vec& eps_uncond, const GuidanceConfig& g) {
    if (eps_cond.size() != eps_uncond.size()) throw ShapeError("cfg_combine: length mismatch");
    Vec out(eps_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + g.w) * eps_cond[i] - g.w * eps_uncond[i];
    return out;
}

// One ancestral DDPM step. Posterior mean
//   (x_t - beta_t / sqrt(1-ab_t) * eps_hat) / sqrt(alpha_t)
// plus N(0, beta_tilde) noise, beta_tilde = beta_t*(1-ab_{t-1})/(1-ab_t).
// The t=1 step is deterministic.
inline Vec reverse_step(const Vec& x_t, int t, const Vec& eps_hat, const NoiseSchedule& sched, Rng& rng) {
    sched.check_step(t);
    if (x_t.size() != eps_hat.size()) throw ShapeError("reverse_step: length mismatch");
    const double ab = sched.alpha_bar_at(t);
    const double beta = sched.beta_at(t);
    const double alpha = sched.alpha_at(t);
    const double coef = beta / std::sqrt(1.0 - ab);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double beta_tilde = beta * (1.0 - sched.alpha_bar_prev(t)) / (1.0 - ab);
    const double noise_sd = t > 1 ? std::sqrt(beta_tilde) : 0.0;
    Vec out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mean = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
        out[i] = mean + (noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0);
    }
    return out;
}

// Full reverse chain from a given x_T down to x_0 under the analytic
// denoiser. When g.w > 0 and uncond_label is present in the model, the
// conditional and unconditional predictions are CFG-combined.
inline Vec reverse_chain(Vec x, const std::string& c, const NoiseSchedule& sched, const GaussianConditionModel& model,
                         const GuidanceConfig& g, Rng& rng, const std::string& uncond_label = "") {
    g.validate();
    const bool use_cfg = g.w > 0.0 && model.means.count(uncond_label) > 0;
    for (int t = sched.steps(); t >= 1; --t) {
        Vec eps = analytic_eps(x, t, c, sched, model);
        if (use_cfg) eps = cfg_combine(eps, analytic_eps(x, t, uncond_label, sched, model), g);
        x = reverse_step(x, t, eps, sched, rng);
    }
    return x;
}

inline Vec sample_reverse(const std::string& c, const NoiseSchedule& sched, const GaussianConditionModel& model,
                          const GuidanceConfig& g, Rng& rng, const std::string& uncond_label = "") {
    Vec x(static_cast<std::size_t>(model.dim()));
    for (auto& v : x) v = rng.normal();
    return reverse_chain(std::move(x), c, sched, model, g, rng, uncond_label);
}

// Evenly spaced subsequence ending at T (indices floor(j*T/steps), j=1..steps).
// alpha_bar at the selected indices is preserved exactly; the effective betas
// are recomputed from consecutive alpha_bar ratios.
inline NoiseSchedule subsample_schedule(const NoiseSchedule& sched, int steps) {
    const int T = sched.steps();
    if (steps < 1 || steps > T) throw ParamError("subsample_schedule: need 1 <= steps <= T");
    NoiseSchedule out;
    out.beta.reserve(static_cast<std::size_t>(steps));
    out.alpha.reserve(static_cast<std::size_t>(steps));
    out.alpha_bar.reserve(static_cast<std::size_t>(steps));
    double prev_ab = 1.0;
    for (int j = 1; j <= steps; ++j) {
        const int idx = static_cast<int>((static_cast<long long>(j) * T) / steps);
        const double ab = sched.alpha_bar_at(idx);
        const double alpha = ab / prev_ab;
        out.beta.push_back(1.0 - alpha);
        out.alpha.push_back(alpha);
        out.alpha_bar.push_back(ab);
        prev_ab = ab;
    }
    return out;
}

// Renderer-parameter state: frozen identity coordinates plus editable
// attribute coordinates. frozen_mask covers the concatenation
// [identity_coords | attribute_coords].
struct FaceState {
    Vec identity_coords;
    Vec attribute_coords;
    std::vector<bool> frozen_mask;

    std::size_t size() const { return identity_coords.size() + attribute_coords.size(); }

    void validate() const {
        if (frozen_mask.size() != size()) throw ShapeError("FaceState: mask length != identity+attribute length");
    }

    double coord(std::size_t i) const {
        return i < identity_coords.size() ? identity_coords[i] : attribute_coords[i - identity_coords.size()];
    }
    void set_coord(std::size_t i, double v) {
        if (i < identity_coords.size())
            identity_coords[i] = v;
        else
            attribute_coords[i - identity_coords.size()] = v;
    }
};

// Masked single-attribute edit: noise the unfrozen coordinates to t_edit,
// then run the reverse chain under new_c. Frozen coordinates are copied
// through untouched. The model dimension must equal the unfrozen count.
inline FaceState edit_attribute(const FaceState& state, int t_edit, const std::string& new_c,
                                const NoiseSchedule& sched, const GaussianConditionModel& model,
                                const GuidanceConfig& g, Rng& rng, const std::string& uncond_label = "") {
    state.validate();
    model.mean_of(new_c);  // throws LookupError for unknown conditions
    if (t_edit < 0 || t_edit > sched.steps()) throw ParamError("edit_attribute: t_edit outside [0, T]");
    if (t_edit == 0) return state;

    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < state.frozen_mask.size(); ++i)
        if (!state.frozen_mask[i]) free_idx.push_back(i);
    if (free_idx.empty()) return state;
    if (static_cast<int>(free_idx.size()) != model.dim())
        throw ShapeError("edit_attribute: unfrozen coordinate count != model dimension");

    Vec x(free_idx.size());
    for (std::size_t k = 0; k < free_idx.size(); ++k) x[k] = state.coord(free_idx[k]);

    Vec eps(x.size());
    for (auto& e : eps) e = rng.normal();
    x = forward_noise(x, t_edit, sched, eps);

    const bool use_cfg = g.w > 0.0 && model.means.count(uncond_label) > 0;
    for (int t = t_edit; t >= 1; --t) {
        Vec eps_hat = analytic_eps(x, t, new_c, sched, model);
        if (use_cfg) eps_hat = cfg_combine(eps_hat, analytic_eps(x, t, uncond_label, sched, model), g);
        x = reverse_step(x, t, eps_hat, sched, rng);
    }

    FaceState out = state;
    for (std::size_t k = 0; k < free_idx.size(); ++k) out.set_coord(free_idx[k], x[k]);
    return out;
}

// CSV with header "t,beta,alpha,alpha_bar", full double precision.
inline void export_schedule_csv(const NoiseSchedule& sched, std::ostream& os) {
    os << "t,beta,alpha,alpha_bar\n";
    char buf[128];
    for (int t = 1; t <= sched.steps(); ++t) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", t, sched.beta_at(t), sched.alpha_at(t),
                      sched.alpha_bar_at(t));
        os << buf;
    }
}

}  // namespace synfair::diffusion
