#pragma once

#include <string>
#include <vector>

#include "synfair/cohort.hpp"
#include "synfair/common.hpp"
#include "synfair/metrics.hpp"
#include "synfair/recognizer.hpp"

namespace synfair::attribution {

using cohort::AttributeVector;
using cohort::FactorFamily;

// One experimental condition: the base attributes with exactly one factor
// family intervened. delta_factor is the canonical family magnitude
// normalized to [0, 1] across the grid.
struct Condition {
    FactorFamily family = FactorFamily::light;
    std::string label;
    AttributeVector attrs;
    double delta_factor = 0.0;
};

struct LightLevel {
    cohort::LightDir dir = cohort::LightDir::front;
    double intensity = 0.5;
};

struct InterventionGrid {
    std::vector<double> yaw_levels;
    std::vector<double> pitch_levels;
    std::vector<LightLevel> light_levels;
    std::vector<int> expression_levels;

    static InterventionGrid defaults() {
        InterventionGrid g;
        g.yaw_levels = {-30.0, -15.0, 15.0, 30.0};
        g.pitch_levels = {-20.0, 20.0};
        g.light_levels = {{cohort::LightDir::left, 0.2},  {cohort::LightDir::left, 0.8},
                          {cohort::LightDir::right, 0.2}, {cohort::LightDir::right, 0.8},
                          {cohort::LightDir::top, 0.2},   {cohort::LightDir::top, 0.8},
                          {cohort::LightDir::front, 0.2}, {cohort::LightDir::front, 0.8}};
        g.expression_levels = {1, 2, 3, 4};
        return g;
    }
};

// One condition per (factor, level); every condition differs from the base
// in exactly that factor family.
inline std::vector<Condition> plan_interventions(const AttributeVector& base, const InterventionGrid& grid) {
    base.validate();
    std::vector<Condition> out;

    for (double yaw : grid.yaw_levels) {
        Condition c;
        c.family = FactorFamily::pose;
        c.attrs = cohort::intervene(base, {cohort::Factor::pose_yaw, yaw});
        c.label = "yaw=" + std::to_string(yaw);
        out.push_back(std::move(c));
    }
    for (double pitch : grid.pitch_levels) {
        Condition c;
        c.family = FactorFamily::pose;
        c.attrs = cohort::intervene(base, {cohort::Factor::pose_pitch, pitch});
        c.label = "pitch=" + std::to_string(pitch);
        out.push_back(std::move(c));
    }
    for (const auto& ll : grid.light_levels) {
        Condition c;
        c.family = FactorFamily::light;
        c.attrs = cohort::intervene(base, {cohort::Factor::light_dir, static_cast<double>(static_cast<int>(ll.dir))});
        c.attrs = cohort::intervene(c.attrs, {cohort::Factor::light_intensity, ll.intensity});
        c.label = std::string("light=") + cohort::light_dir_name(ll.dir) + "," + std::to_string(ll.intensity);
        out.push_back(std::move(c));
    }
    for (int lv : grid.expression_levels) {
        Condition c;
        c.family = FactorFamily::expression;
        c.attrs = cohort::intervene(base, {cohort::Factor::expression, static_cast<double>(lv)});
        c.label = "expression=" + std::to_string(lv);
        out.push_back(std::move(c));
    }

    // normalize the canonical magnitudes per family across this grid
    double max_mag[3] = {0.0, 0.0, 0.0};
    for (auto& c : out) {
        c.delta_factor = cohort::family_magnitude(c.family, base, c.attrs);
        max_mag[static_cast<int>(c.family)] = std::max(max_mag[static_cast<int>(c.family)], c.delta_factor);
    }
    for (auto& c : out)
        if (max_mag[static_cast<int>(c.family)] > 0.0) c.delta_factor /= max_mag[static_cast<int>(c.family)];
    return out;
}

struct InterventionRun {
    FactorFamily family = FactorFamily::light;
    std::string label;
    double delta_factor = 0.0;
    double measured_disparity = 0.0;  // tpr_gap at the fixed operating point, in [0, 1]
    double delta_disparity = 0.0;     // measured_disparity - base disparity; the regression target
    bool evaluable = true;
};

// Verification protocol for one condition: each identity's clean neutral
// render is the enrollment image; probes are that identity rendered under
// the condition with `replicates` independent noise draws. Genuine pairs are
// (enroll_i, probe_i), impostors are within-group (enroll_i, probe_j).
// tau is held fixed across conditions.
namespace detail {

inline std::uint64_t attrs_stream_key(const AttributeVector& a) {
    // stable content key so identical conditions reuse identical noise streams
    std::string s = std::to_string(a.yaw_deg) + "|" + std::to_string(a.pitch_deg) + "|" +
                    std::to_string(static_cast<int>(a.light_dir)) + "|" + std::to_string(a.light_intensity) + "|" +
                    std::to_string(a.expression_level);
    return fnv1a64(s);
}

struct ConditionScores {
    metrics::PairSet pairs;
};

inline ConditionScores score_condition(const recognizer::EncoderParams& model,
                                       const std::vector<cohort::IdentitySpec>& identities,
                                       const std::vector<recognizer::Embedding>& enroll,
                                       const AttributeVector& base, const AttributeVector& cond_attrs,
                                       const cohort::RenderParams& render_params, const cohort::BiasPlant& plant,
                                       int replicates, std::uint64_t seed) {
    ConditionScores out;
    const std::uint64_t cond_key = attrs_stream_key(cond_attrs);
    std::vector<std::vector<recognizer::Embedding>> probes(identities.size());
    for (std::size_t i = 0; i < identities.size(); ++i) {
        const auto& id = identities[i];
        cohort::Observation probe = cohort::render(id, cond_attrs, render_params);
        const double sigma = plant.sigma_for(id.group_id, id.albedo, base, cond_attrs);
        probes[i].reserve(static_cast<std::size_t>(replicates));
        for (int rep = 0; rep < replicates; ++rep) {
            cohort::Observation noisy = probe;
            Rng noise_rng(mix_seed(mix_seed(seed, cond_key),
                                   static_cast<std::uint64_t>(id.identity_id) * 131ULL + static_cast<std::uint64_t>(rep)));
            cohort::apply_pixel_noise(noisy, sigma, noise_rng);
            probes[i].push_back(recognizer::encode(model, noisy));
        }
    }
    for (std::size_t i = 0; i < identities.size(); ++i) {
        for (const auto& e : probes[i])
            out.pairs.pairs.push_back({recognizer::cosine_score(enroll[i], e), true, identities[i].group_id});
        for (std::size_t j = 0; j < identities.size(); ++j) {
            if (i == j || identities[i].group_id != identities[j].group_id) continue;
            // first replicate only; enough impostors without quadratic blowup
            out.pairs.pairs.push_back(
                {recognizer::cosine_score(enroll[i], probes[j].front()), false, identities[i].group_id});
        }
    }
    out.pairs.usable_for_far = out.pairs.impostor_count() > 0;
    return out;
}

inline double condition_tpr_gap(const metrics::PairSet& pairs, double tau) {
    const auto rates = metrics::group_rates(pairs, tau);
    Vec tprs;
    for (const auto& [g, r] : rates)
        if (r.evaluated) tprs.push_back(r.tpr);
    if (tprs.size() < 2) throw ProtocolError("condition with < 2 evaluable groups");
    return metrics::tpr_gap(tprs);
}

}  // namespace detail

struct DisparityMeasurement {
    std::vector<InterventionRun> runs;
    double base_disparity = 0.0;
    double tau = 0.0;
    double base_far_target = 0.0;
};

// Measures tpr_gap per condition at a fixed tau chosen from the base
// condition at far_target, then forms deltas against the base disparity.
inline DisparityMeasurement measure_disparity_deltas(const recognizer::EncoderParams& model,
                                                     const std::vector<cohort::IdentitySpec>& identities,
                                                     const std::vector<Condition>& plan, double far_target,
                                                     const cohort::RenderParams& render_params,
                                                     const cohort::BiasPlant& plant, int replicates,
                                                     std::uint64_t seed) {
    if (identities.empty()) throw ParamError("measure_disparity_deltas: no identities");
    if (replicates < 1) throw ParamError("measure_disparity_deltas: replicates must be >= 1");
    const AttributeVector base = AttributeVector::neutral();

    std::vector<recognizer::Embedding> enroll;
    enroll.reserve(identities.size());
    for (const auto& id : identities) enroll.push_back(recognizer::encode(model, cohort::render(id, base, render_params)));

    const auto base_scores =
        detail::score_condition(model, identities, enroll, base, base, render_params, plant, replicates, seed);
    const auto op = metrics::global_threshold(base_scores.pairs, far_target);
    DisparityMeasurement out;
    out.tau = op.tau;
    out.base_far_target = far_target;
    out.base_disparity = detail::condition_tpr_gap(base_scores.pairs, op.tau);

    for (const auto& cond : plan) {
        InterventionRun run;
        run.family = cond.family;
        run.label = cond.label;
        run.delta_factor = cond.delta_factor;
        try {
            const auto scores = detail::score_condition(model, identities, enroll, base, cond.attrs, render_params,
                                                        plant, replicates, seed);
            run.measured_disparity = detail::condition_tpr_gap(scores.pairs, out.tau);
            run.delta_disparity = run.measured_disparity - out.base_disparity;
        } catch (const ProtocolError&) {
            run.evaluable = false;  // flagged, excluded from the regression downstream
        }
        out.runs.push_back(std::move(run));
    }
    return out;
}

struct AttributionWeights {
    double w_light = 0.0, w_pose = 0.0, w_exp = 0.0;
    double share_light = 0.0, share_pose = 0.0, share_exp = 0.0;
    double var_share_light = 0.0, var_share_pose = 0.0, var_share_exp = 0.0;
    bool clamped[3] = {false, false, false};  // light, pose, expression
    double residual_norm = 0.0;               // OLS residual (pre-clamp solution)
    double r_squared = 0.0;
    int excluded_runs = 0;
};

// Ordinary least squares of the disparity deltas on the three per-family
// regressors (a run contributes its delta_factor to its own family column
// and zero elsewhere). Negative coefficients are clamped to zero before the
// share normalization; variance shares are the per-family explained
// sums-of-squares, which are additive because the columns have disjoint
// support.
inline AttributionWeights decompose(const std::vector<InterventionRun>& runs) {
    double xtx[3] = {0.0, 0.0, 0.0};
    double xty[3] = {0.0, 0.0, 0.0};
    int excluded = 0;
    std::vector<const InterventionRun*> used;
    for (const auto& r : runs) {
        if (!r.evaluable) {
            ++excluded;
            continue;
        }
        const int f = static_cast<int>(r.family);
        xtx[f] += r.delta_factor * r.delta_factor;
        xty[f] += r.delta_factor * r.delta_disparity;
        used.push_back(&r);
    }
    static const char* kFamily[3] = {"light", "pose", "expression"};
    for (int f = 0; f < 3; ++f)
        if (xtx[f] <= 0.0)
            throw ParamError(std::string("decompose: rank-deficient design, factor '") + kFamily[f] +
                             "' has no run with nonzero delta_factor");

    double w[3];
    for (int f = 0; f < 3; ++f) w[f] = xty[f] / xtx[f];

    AttributionWeights out;
    out.excluded_runs = excluded;

    double ss_res = 0.0, ss_tot = 0.0, ybar = 0.0;
    for (const auto* r : used) ybar += r->delta_disparity;
    ybar /= static_cast<double>(used.size());
    double ss_explained[3] = {0.0, 0.0, 0.0};
    for (const auto* r : used) {
        const int f = static_cast<int>(r->family);
        const double yhat = w[f] * r->delta_factor;
        ss_res += (r->delta_disparity - yhat) * (r->delta_disparity - yhat);
        ss_tot += (r->delta_disparity - ybar) * (r->delta_disparity - ybar);
        ss_explained[f] += yhat * yhat;
    }
    out.residual_norm = std::sqrt(ss_res);
    out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;

    bool clamped_any = false;
    for (int f = 0; f < 3; ++f) {
        if (w[f] < 0.0) {
            w[f] = 0.0;
            out.clamped[f] = true;
            clamped_any = true;
        }
    }
    (void)clamped_any;
    out.w_light = w[0];
    out.w_pose = w[1];
    out.w_exp = w[2];

    const double wsum = w[0] + w[1] + w[2];
    if (wsum > 0.0) {
        out.share_light = w[0] / wsum;
        out.share_pose = w[1] / wsum;
        out.share_exp = w[2] / wsum;
    }
    const double ss_sum = ss_explained[0] + ss_explained[1] + ss_explained[2];
    if (ss_sum > 0.0) {
        out.var_share_light = ss_explained[0] / ss_sum;
        out.var_share_pose = ss_explained[1] / ss_sum;
        out.var_share_exp = ss_explained[2] / ss_sum;
    }
    return out;
}

}  // namespace synfair::attribution
