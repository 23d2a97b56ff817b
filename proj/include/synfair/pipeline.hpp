#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synfair/attribution.hpp"
#include "synfair/balancing.hpp"
#include "synfair/cohort.hpp"
#include "synfair/common.hpp"
#include "synfair/diffusion.hpp"
#include "synfair/io.hpp"
#include "synfair/metrics.hpp"
#include "synfair/recognizer.hpp"
#include "synfair/stats.hpp"

namespace synfair::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct MetricsConfig {
    std::vector<double> far_targets = {1e-2, 1e-4};
    double impostor_ratio = 4.0;
    bool cross_group = false;

    void validate() const {
        if (far_targets.empty()) throw ParamError("metrics: need at least one FAR target");
        for (double f : far_targets)
            if (!(f > 0.0 && f < 1.0)) throw ParamError("metrics: FAR targets must be in (0, 1)");
        if (impostor_ratio <= 0.0) throw ParamError("metrics: impostor_ratio must be > 0");
    }
};

struct AttributionConfig {
    std::string model = "adaface";  // which trained variant drives the attribution runs
    double far_target = 1e-2;
    int replicates = 4;
    attribution::InterventionGrid grid = attribution::InterventionGrid::defaults();
};

struct DiffusionConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int substeps = 250;
};

struct RunConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;  // seeds are mandatory; no implicit entropy
    cohort::CohortSpec cohort_spec{20, 10, cohort::default_intervention_plan(), 0};
    cohort::RenderParams render;
    cohort::BiasPlant noise;
    cohort::GroupRegistry registry = cohort::default_registry();
    balancing::BalanceConfig balance;
    recognizer::TrainConfig train;
    std::vector<recognizer::MarginConfig> margins = {recognizer::MarginConfig::arcface(),
                                                     recognizer::MarginConfig::cosface(),
                                                     recognizer::MarginConfig::adaface()};
    MetricsConfig metrics_cfg;
    AttributionConfig attribution_cfg;
    DiffusionConfig diffusion_cfg;

    void validate() const {
        if (!seed_set) throw ParamError("config: seed is mandatory (no implicit entropy)");
        cohort_spec.validate();
        render.validate();
        cohort::validate_registry(registry);
        balance.validate();
        train.validate();
        if (margins.empty()) throw ParamError("config: need at least one margin variant");
        for (const auto& m : margins) m.validate();
        metrics_cfg.validate();
        if (attribution_cfg.replicates < 1) throw ParamError("config: attribution replicates must be >= 1");
        if (!(attribution_cfg.far_target > 0.0 && attribution_cfg.far_target < 1.0))
            throw ParamError("config: attribution far_target must be in (0, 1)");
    }
};

// --- config json ------------------------------------------------------------

inline json to_json(const recognizer::MarginConfig& m) {
    return json{{"variant", m.name()}, {"s", m.s}, {"m", m.m}, {"m0", m.m0}, {"lambda_m", m.lambda_m}};
}

inline recognizer::MarginConfig margin_from_json(const json& j) {
    auto m = recognizer::MarginConfig::from_name(j.at("variant").get<std::string>());
    if (j.contains("s")) m.s = j.at("s").get<double>();
    if (j.contains("m")) m.m = j.at("m").get<double>();
    if (j.contains("m0")) m.m0 = j.at("m0").get<double>();
    if (j.contains("lambda_m")) m.lambda_m = j.at("lambda_m").get<double>();
    m.validate();
    return m;
}

inline json to_json(const recognizer::TrainConfig& t) {
    return json{{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"momentum", t.momentum},
                {"hidden_dim", t.hidden_dim},
                {"embed_dim", t.embed_dim},
                {"q_ref_percentile", t.q_ref_percentile},
                {"augment", t.augment}};
}

inline recognizer::TrainConfig train_from_json(const json& j) {
    recognizer::TrainConfig t;
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.lr = j.at("lr").get<double>();
    t.momentum = j.at("momentum").get<double>();
    t.hidden_dim = j.at("hidden_dim").get<int>();
    t.embed_dim = j.at("embed_dim").get<int>();
    t.q_ref_percentile = j.at("q_ref_percentile").get<double>();
    t.augment = j.at("augment").get<bool>();
    return t;
}

inline json to_json(const attribution::InterventionGrid& g) {
    json lights = json::array();
    for (const auto& l : g.light_levels)
        lights.push_back(json{{"dir", cohort::light_dir_name(l.dir)}, {"intensity", l.intensity}});
    return json{{"yaw", g.yaw_levels}, {"pitch", g.pitch_levels}, {"light", lights}, {"expression", g.expression_levels}};
}

inline cohort::LightDir light_dir_from_name(const std::string& s) {
    for (int d = 0; d < 4; ++d)
        if (s == cohort::light_dir_name(static_cast<cohort::LightDir>(d))) return static_cast<cohort::LightDir>(d);
    throw LookupError("unknown light direction '" + s + "'");
}

inline attribution::InterventionGrid grid_from_json(const json& j) {
    attribution::InterventionGrid g;
    g.yaw_levels = j.at("yaw").get<std::vector<double>>();
    g.pitch_levels = j.at("pitch").get<std::vector<double>>();
    g.light_levels.clear();
    for (const auto& e : j.at("light"))
        g.light_levels.push_back({light_dir_from_name(e.at("dir").get<std::string>()), e.at("intensity").get<double>()});
    g.expression_levels = j.at("expression").get<std::vector<int>>();
    return g;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["schema_version"] = 1;
    j["seed"] = c.seed;
    j["cohort"] = io::to_json(c.cohort_spec);
    j["render"] = io::to_json(c.render);
    j["noise"] = io::to_json(c.noise);
    j["registry"] = io::to_json(c.registry);
    j["balance"] = json{{"delta", c.balance.delta},
                        {"learning_rate", c.balance.learning_rate},
                        {"max_iters", c.balance.max_iters},
                        {"tolerance", c.balance.tolerance}};
    j["train"] = to_json(c.train);
    json margins = json::array();
    for (const auto& m : c.margins) margins.push_back(to_json(m));
    j["margins"] = margins;
    j["metrics"] = json{{"far_targets", c.metrics_cfg.far_targets},
                        {"impostor_ratio", c.metrics_cfg.impostor_ratio},
                        {"cross_group", c.metrics_cfg.cross_group}};
    j["attribution"] = json{{"model", c.attribution_cfg.model},
                            {"far_target", c.attribution_cfg.far_target},
                            {"replicates", c.attribution_cfg.replicates},
                            {"grid", to_json(c.attribution_cfg.grid)}};
    j["diffusion"] = json{{"T", c.diffusion_cfg.T},
                          {"beta_start", c.diffusion_cfg.beta_start},
                          {"beta_end", c.diffusion_cfg.beta_end},
                          {"substeps", c.diffusion_cfg.substeps}};
    return j;
}

// Partial configs are allowed: absent sections keep their defaults. The seed
// must come from the file or the --seed flag.
inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
        throw ParamError("config: unsupported schema_version");
    if (j.contains("seed")) {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.seed_set = true;
    }
    if (j.contains("cohort")) c.cohort_spec = io::cohort_spec_from_json(j.at("cohort"));
    if (j.contains("render")) c.render = io::render_params_from_json(j.at("render"));
    if (j.contains("noise")) c.noise = io::bias_plant_from_json(j.at("noise"));
    if (j.contains("registry")) c.registry = io::registry_from_json(j.at("registry"));
    if (j.contains("balance")) {
        const auto& b = j.at("balance");
        c.balance.delta = b.at("delta").get<double>();
        c.balance.learning_rate = b.at("learning_rate").get<double>();
        c.balance.max_iters = b.at("max_iters").get<int>();
        c.balance.tolerance = b.at("tolerance").get<double>();
    }
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("margins")) {
        c.margins.clear();
        for (const auto& m : j.at("margins")) c.margins.push_back(margin_from_json(m));
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        c.metrics_cfg.far_targets = m.at("far_targets").get<std::vector<double>>();
        c.metrics_cfg.impostor_ratio = m.at("impostor_ratio").get<double>();
        c.metrics_cfg.cross_group = m.at("cross_group").get<bool>();
    }
    if (j.contains("attribution")) {
        const auto& a = j.at("attribution");
        c.attribution_cfg.model = a.at("model").get<std::string>();
        c.attribution_cfg.far_target = a.at("far_target").get<double>();
        c.attribution_cfg.replicates = a.at("replicates").get<int>();
        if (a.contains("grid")) c.attribution_cfg.grid = grid_from_json(a.at("grid"));
    }
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        c.diffusion_cfg.T = d.at("T").get<int>();
        c.diffusion_cfg.beta_start = d.at("beta_start").get<double>();
        c.diffusion_cfg.beta_end = d.at("beta_end").get<double>();
        c.diffusion_cfg.substeps = d.at("substeps").get<int>();
    }
    return c;
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path.string());
    return config_from_json(json::parse(f));
}

// Canonical serialization (sorted keys, shortest round-trip floats) hashed
// with FNV-1a; the bundle's provenance block carries this value.
inline std::string config_hash(const RunConfig& c) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
    return buf;
}

// Guards the output directory against concurrent commands.
class OutputLock {
public:
    explicit OutputLock(const fs::path& out_dir) {
        fs::create_directories(out_dir);
        path_ = out_dir / ".lock";
        if (fs::exists(path_)) throw IoError("output directory is locked (stale .lock?): " + path_.string());
        std::ofstream f(path_, std::ios::binary);
        f << "locked\n";
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

inline std::string format_far(double far) {
    for (int k = -12; k <= 0; ++k) {
        const double p = std::pow(10.0, k);
        if (std::fabs(far - p) < 1e-12 * p) return "1e" + std::to_string(k);
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", far);
    return buf;
}

// --- generate ---------------------------------------------------------------

inline fs::path cmd_generate(const RunConfig& cfg_in, const fs::path& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    cfg.cohort_spec.seed = cfg.seed;
    OutputLock lock(out_dir);
    const fs::path cohort_dir = out_dir / "cohort";
    const auto identities = cohort::sample_identities(cfg.cohort_spec, cfg.registry);
    const auto observations = cohort::generate_cohort(cfg.cohort_spec, cfg.registry, cfg.render, cfg.noise);
    io::write_cohort(cohort_dir, cfg.cohort_spec, cfg.registry, cfg.render, cfg.noise, identities, observations);
    return cohort_dir;
}

// --- train ------------------------------------------------------------------

inline fs::path params_path(const fs::path& dir, const std::string& variant) {
    return dir / ("params_" + variant + ".bin");
}

inline std::vector<fs::path> cmd_train(const RunConfig& cfg_in, const fs::path& cohort_dir, const fs::path& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    OutputLock lock(out_dir);
    const auto cohort_data = io::read_cohort(cohort_dir);
    std::vector<fs::path> written;
    for (const auto& margin : cfg.margins) {
        recognizer::TrainConfig t = cfg.train;
        t.seed = cfg.seed;
        const auto result = recognizer::train(cohort_data.observations, margin, t);
        const auto path = params_path(out_dir, margin.name());
        io::save_params(path, result.params, margin);
        std::ofstream log(out_dir / ("loss_" + margin.name() + ".csv"), std::ios::binary);
        log << "epoch,loss\n";
        char buf[64];
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, result.epoch_losses[e]);
            log << buf;
        }
        written.push_back(path);
    }
    return written;
}

// --- balance ----------------------------------------------------------------

struct BalanceReport {
    double loss_before = 0.0;
    double loss_after = 0.0;
    double max_mean_dev_before = 0.0;
    double max_mean_dev_after = 0.0;
    double ks_min_p = 1.0;  // min over (feature x group-vs-pooled) comparisons
    balancing::BalanceWeights weights;
};

inline double max_group_mean_deviation(const balancing::FeatureTable& t, const balancing::BalanceWeights& w) {
    const auto s = balancing::detail::group_stats(t, w.w);
    double worst = 0.0;
    for (std::size_t g = 0; g < s.ids.size(); ++g) {
        double d2 = 0.0;
        for (std::size_t f = 0; f < t.feature_dim(); ++f) {
            const double d = s.mu[g][f] - s.mu_global[f];
            d2 += d * d;
        }
        worst = std::max(worst, std::sqrt(d2));
    }
    return worst;
}

// KS alignment check: every feature, every group against the pooled sample;
// reports the minimum asymptotic p.
inline double ks_min_alignment_p(const balancing::FeatureTable& t) {
    double min_p = 1.0;
    for (std::size_t f = 0; f < t.feature_dim(); ++f) {
        Vec pooled;
        std::map<int, Vec> per_group;
        for (std::size_t i = 0; i < t.size(); ++i) {
            pooled.push_back(t.rows[i][f]);
            per_group[t.group[i]].push_back(t.rows[i][f]);
        }
        for (const auto& [g, vals] : per_group) {
            const auto r = balancing::ks_two_sample(vals, pooled);
            min_p = std::min(min_p, r.p_asymptotic);
        }
    }
    return min_p;
}

inline BalanceReport cmd_balance(const RunConfig& cfg, const fs::path& table_csv, const fs::path& out_dir) {
    cfg.balance.validate();
    OutputLock lock(out_dir);
    std::ifstream in(table_csv);
    if (!in) throw IoError("cannot read feature table " + table_csv.string());
    const auto table = io::read_feature_table_csv(in);

    BalanceReport rep;
    const auto uniform = balancing::BalanceWeights::uniform(table.size());
    rep.loss_before = balancing::balance_loss(table, uniform, cfg.balance.delta);
    rep.max_mean_dev_before = max_group_mean_deviation(table, uniform);
    const auto opt = balancing::optimize_weights(table, cfg.balance);
    rep.weights = opt.weights;
    rep.loss_after = opt.loss_trace.back();
    rep.max_mean_dev_after = max_group_mean_deviation(table, opt.weights);
    rep.ks_min_p = ks_min_alignment_p(table);

    std::ofstream wf(out_dir / "weights.csv", std::ios::binary);
    io::write_weights_csv(wf, rep.weights);
    json j{{"loss_before", rep.loss_before},
           {"loss_after", rep.loss_after},
           {"max_mean_dev_before", rep.max_mean_dev_before},
           {"max_mean_dev_after", rep.max_mean_dev_after},
           {"ks_min_p", rep.ks_min_p}};
    io::write_text_file(out_dir / "balance_report.json", j.dump(2) + "\n");
    return rep;
}

// --- audit ------------------------------------------------------------------

struct ModelReport {
    std::string name;
    std::map<std::string, double> pooled_tpr_at_far;  // far key -> pooled TPR
    double eer = 0.0;
    // far key -> per-group rates / gaps
    std::map<std::string, std::map<int, metrics::GroupRates>> group_rates;
    std::map<std::string, double> tpr_gap, dpd, eo_gap, tau;
};

struct AuditBundle {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<ModelReport> models;
    attribution::AttributionWeights attribution_weights;
    attribution::DisparityMeasurement attribution_runs;
    std::vector<metrics::ParetoPoint> pareto_points;  // one per model, input order
    std::vector<std::size_t> pareto_front_indices;
    json config_snapshot;
};

namespace detail {

inline json rates_to_json(const metrics::GroupRates& r) {
    return json{{"tpr", r.tpr},
                {"fpr", r.fpr},
                {"accept_rate", r.accept_rate},
                {"evaluated", r.evaluated},
                {"n_genuine", r.n_genuine},
                {"n_impostor", r.n_impostor}};
}

}  // namespace detail

inline json to_json(const AuditBundle& b) {
    json j;
    j["schema_version"] = 1;
    j["provenance"] = json{{"config_hash", b.config_hash}, {"seed", b.seed}, {"version", kVersion}};
    j["config"] = b.config_snapshot;
    json models = json::array();
    for (const auto& m : b.models) {
        json jm;
        jm["model"] = m.name;
        jm["eer"] = m.eer;
        for (const auto& [fk, v] : m.pooled_tpr_at_far) jm["tpr_at_far_" + fk] = v;
        json gaps;
        for (const auto& [fk, v] : m.tpr_gap)
            gaps[fk] = json{{"tpr_gap", v}, {"dpd", m.dpd.at(fk)}, {"eo_gap", m.eo_gap.at(fk)}, {"tau", m.tau.at(fk)}};
        jm["gaps"] = gaps;
        json groups;
        for (const auto& [fk, rates] : m.group_rates) {
            json per_far;
            for (const auto& [g, r] : rates) per_far["g" + std::to_string(g)] = detail::rates_to_json(r);
            groups[fk] = per_far;
        }
        jm["groups"] = groups;
        models.push_back(jm);
    }
    j["models"] = models;
    j["attribution"] = json{{"light", b.attribution_weights.share_light},
                            {"pose", b.attribution_weights.share_pose},
                            {"expression", b.attribution_weights.share_exp},
                            {"coefficients",
                             json{{"light", b.attribution_weights.w_light},
                                  {"pose", b.attribution_weights.w_pose},
                                  {"expression", b.attribution_weights.w_exp}}},
                            {"variance_shares",
                             json{{"light", b.attribution_weights.var_share_light},
                                  {"pose", b.attribution_weights.var_share_pose},
                                  {"expression", b.attribution_weights.var_share_exp}}},
                            {"residual_norm", b.attribution_weights.residual_norm},
                            {"r_squared", b.attribution_weights.r_squared},
                            {"base_disparity", b.attribution_runs.base_disparity},
                            {"tau", b.attribution_runs.tau}};
    json pareto = json::array();
    for (std::size_t i = 0; i < b.pareto_points.size(); ++i) {
        const bool on_front = std::find(b.pareto_front_indices.begin(), b.pareto_front_indices.end(), i) !=
                              b.pareto_front_indices.end();
        pareto.push_back(json{{"model", b.models[i].name},
                              {"accuracy", b.pareto_points[i].accuracy},
                              {"disparity", b.pareto_points[i].disparity},
                              {"on_frontier", on_front}});
    }
    j["pareto"] = pareto;
    return j;
}

namespace detail {

inline std::string pareto_svg(const AuditBundle& b) {
    io::SvgCanvas svg(520, 420, "fairness-accuracy trade-off");
    const double x0 = 70, x1 = 480, y0 = 360, y1 = 50;
    svg.line(x0, y0, x1, y0);
    svg.line(x0, y0, x0, y1);
    svg.text((x0 + x1) / 2, 400, "pooled TPR", 12, "middle");
    svg.text(18, (y0 + y1) / 2, "tpr_gap", 12, "middle");
    double amin = 1e300, amax = -1e300, dmin = 1e300, dmax = -1e300;
    for (const auto& p : b.pareto_points) {
        amin = std::min(amin, p.accuracy);
        amax = std::max(amax, p.accuracy);
        dmin = std::min(dmin, p.disparity);
        dmax = std::max(dmax, p.disparity);
    }
    if (amax - amin < 1e-9) {
        amin -= 0.01;
        amax += 0.01;
    }
    if (dmax - dmin < 1e-9) {
        dmin -= 0.01;
        dmax += 0.01;
    }
    auto px = [&](double a) { return x0 + (a - amin) / (amax - amin) * (x1 - x0); };
    auto py = [&](double d) { return y0 - (d - dmin) / (dmax - dmin) * (y0 - y1); };
    // frontier polyline (sorted by accuracy)
    std::vector<metrics::ParetoPoint> front;
    for (std::size_t i : b.pareto_front_indices) front.push_back(b.pareto_points[i]);
    std::sort(front.begin(), front.end(),
              [](const metrics::ParetoPoint& a, const metrics::ParetoPoint& c) { return a.accuracy < c.accuracy; });
    for (std::size_t i = 1; i < front.size(); ++i)
        svg.line(px(front[i - 1].accuracy), py(front[i - 1].disparity), px(front[i].accuracy), py(front[i].disparity),
                 "#2a7", 1.5);
    for (std::size_t i = 0; i < b.pareto_points.size(); ++i) {
        const auto& p = b.pareto_points[i];
        const bool on_front = std::find(b.pareto_front_indices.begin(), b.pareto_front_indices.end(), i) !=
                              b.pareto_front_indices.end();
        svg.circle(px(p.accuracy), py(p.disparity), 5, on_front ? "#2a7" : "#c33");
        svg.text(px(p.accuracy) + 8, py(p.disparity) + 4, b.models[i].name);
    }
    return svg.finish();
}

inline std::string bias_distribution_svg(const AuditBundle& b) {
    const auto& runs = b.attribution_runs.runs;
    io::SvgCanvas svg(std::max<int>(520, 40 + static_cast<int>(runs.size()) * 26), 420,
                      "disparity delta per intervention");
    const double x0 = 60, y0 = 340, y1 = 60;
    double dmax = 1e-9;
    for (const auto& r : runs) dmax = std::max(dmax, std::fabs(r.delta_disparity));
    auto py = [&](double d) { return y0 - d / dmax * (y0 - y1) * 0.5 - (y0 - y1) * 0.5; };
    svg.line(x0 - 10, py(0.0), x0 + static_cast<double>(runs.size()) * 26 + 10, py(0.0), "#888");
    static const char* colors[3] = {"#e6a23c", "#4a90d9", "#7b68ae"};  // light, pose, expression
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const double x = x0 + static_cast<double>(i) * 26;
        const double yz = py(0.0);
        const double yv = py(r.delta_disparity);
        svg.rect(x, std::min(yz, yv), 18, std::max(1.0, std::fabs(yz - yv)), colors[static_cast<int>(r.family)]);
    }
    svg.text(x0, 395, "bars ordered as attribution.csv rows; color = factor family (light/pose/expression)", 11);
    return svg.finish();
}

}  // namespace detail

inline void write_attribution_runs_csv(std::ostream& os, const attribution::DisparityMeasurement& m) {
    os << "factor,label,delta_factor,measured_disparity,delta_disparity,evaluable\n";
    char buf[256];
    for (const auto& r : m.runs) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%d\n", cohort::family_name(r.family), r.label.c_str(),
                      r.delta_factor, r.measured_disparity, r.delta_disparity, r.evaluable ? 1 : 0);
        os << buf;
    }
}

inline void write_attribution_weights_csv(std::ostream& os, const attribution::AttributionWeights& w) {
    os << "factor,coefficient,share,variance_share,clamped\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "light,%.17g,%.17g,%.17g,%d\n", w.w_light, w.share_light, w.var_share_light,
                  w.clamped[0] ? 1 : 0);
    os << buf;
    std::snprintf(buf, sizeof buf, "pose,%.17g,%.17g,%.17g,%d\n", w.w_pose, w.share_pose, w.var_share_pose,
                  w.clamped[1] ? 1 : 0);
    os << buf;
    std::snprintf(buf, sizeof buf, "expression,%.17g,%.17g,%.17g,%d\n", w.w_exp, w.share_exp, w.var_share_exp,
                  w.clamped[2] ? 1 : 0);
    os << buf;
}

inline AuditBundle cmd_audit(const RunConfig& cfg_in, const fs::path& cohort_dir, const fs::path& params_dir,
                             const fs::path& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    OutputLock lock(out_dir);
    const auto cohort_data = io::read_cohort(cohort_dir);

    // all margin variants must have trained params on disk
    std::vector<std::string> missing;
    for (const auto& m : cfg.margins)
        if (!fs::exists(params_path(params_dir, m.name()))) missing.push_back(m.name());
    if (!missing.empty()) {
        std::string msg = "audit: missing trained params for:";
        for (const auto& s : missing) msg += " " + s;
        throw ParamError(msg);
    }

    AuditBundle bundle;
    bundle.seed = cfg.seed;
    bundle.config_snapshot = to_json(cfg);
    bundle.config_hash = config_hash(cfg);

    std::vector<metrics::SampleLabel> labels;
    labels.reserve(cohort_data.observations.size());
    for (const auto& o : cohort_data.observations) labels.push_back({o.identity_id, o.group_id});

    const std::string primary_far_key = format_far(cfg.metrics_cfg.far_targets.front());

    for (const auto& margin : cfg.margins) {
        const auto [params, margin_loaded] = io::load_params(params_path(params_dir, margin.name()));
        (void)margin_loaded;
        std::vector<recognizer::Embedding> embs;
        embs.reserve(cohort_data.observations.size());
        for (const auto& o : cohort_data.observations) embs.push_back(recognizer::encode(params, o));

        Rng pair_rng(mix_seed(cfg.seed, fnv1a64("pairs:" + margin.name())));
        const auto pairs = metrics::sample_pairs(
            labels, [&](std::size_t i, std::size_t j) { return recognizer::cosine_score(embs[i], embs[j]); },
            cfg.metrics_cfg.impostor_ratio, pair_rng, cfg.metrics_cfg.cross_group);
        const auto curve = metrics::roc(pairs);

        ModelReport report;
        report.name = margin.name();
        report.eer = metrics::eer(curve);
        for (double far : cfg.metrics_cfg.far_targets) {
            const std::string fk = format_far(far);
            report.pooled_tpr_at_far[fk] = metrics::tpr_at_far(curve, far).tpr;
            const auto op = metrics::global_threshold(pairs, far);
            const auto rates = metrics::group_rates(pairs, op.tau);
            const auto pooled = metrics::pooled_rates(pairs, op.tau);
            Vec tprs, accepts;
            for (const auto& [g, r] : rates)
                if (r.evaluated) {
                    tprs.push_back(r.tpr);
                    accepts.push_back(r.accept_rate);
                }
            report.group_rates[fk] = rates;
            report.tau[fk] = op.tau;
            report.tpr_gap[fk] = metrics::tpr_gap(tprs);
            report.dpd[fk] = metrics::dpd(accepts);
            report.eo_gap[fk] = metrics::eo_gap(rates, pooled);
        }
        bundle.models.push_back(std::move(report));
    }

    // Pareto points: pooled TPR at the primary FAR vs tpr_gap at the same FAR
    std::vector<metrics::ParetoPoint> pts;
    for (const auto& m : bundle.models)
        pts.push_back({m.pooled_tpr_at_far.at(primary_far_key), m.tpr_gap.at(primary_far_key), 0});
    bundle.pareto_points = pts;
    for (const auto& p : metrics::pareto_frontier(pts)) bundle.pareto_front_indices.push_back(p.index);

    // attribution on the configured model
    {
        const auto model_name = cfg.attribution_cfg.model;
        bool known = false;
        for (const auto& m : cfg.margins) known |= m.name() == model_name;
        if (!known) throw ParamError("audit: attribution model '" + model_name + "' not among margin variants");
        const auto [params, margin_loaded] = io::load_params(params_path(params_dir, model_name));
        (void)margin_loaded;
        const auto plan = attribution::plan_interventions(cohort::AttributeVector::neutral(), cfg.attribution_cfg.grid);
        bundle.attribution_runs = attribution::measure_disparity_deltas(
            params, cohort_data.identities, plan, cfg.attribution_cfg.far_target, cohort_data.render,
            cohort_data.plant, cfg.attribution_cfg.replicates, mix_seed(cfg.seed, fnv1a64("attribution")));
        bundle.attribution_weights = attribution::decompose(bundle.attribution_runs.runs);
    }

    // emit tables, figures, bundle
    {
        std::ofstream t1(out_dir / "table1.csv", std::ios::binary);
        t1 << "model,group";
        for (double far : cfg.metrics_cfg.far_targets) t1 << ",tpr_at_far_" << format_far(far);
        t1 << "\n";
        char buf[64];
        for (const auto& m : bundle.models) {
            std::vector<int> gids;
            for (const auto& [g, r] : m.group_rates.at(primary_far_key)) gids.push_back(g);
            for (int g : gids) {
                t1 << m.name << ",g" << g;
                for (double far : cfg.metrics_cfg.far_targets) {
                    const auto& r = m.group_rates.at(format_far(far)).at(g);
                    std::snprintf(buf, sizeof buf, ",%.17g", r.tpr);
                    t1 << buf;
                }
                t1 << "\n";
            }
        }
    }
    {
        std::ofstream t2(out_dir / "table2.csv", std::ios::binary);
        t2 << "model,far,tpr_gap,dpd,eo_gap,tau\n";
        char buf[196];
        for (const auto& m : bundle.models)
            for (double far : cfg.metrics_cfg.far_targets) {
                const std::string fk = format_far(far);
                std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g\n", m.name.c_str(), fk.c_str(),
                              m.tpr_gap.at(fk), m.dpd.at(fk), m.eo_gap.at(fk), m.tau.at(fk));
                t2 << buf;
            }
    }
    {
        std::ofstream runs(out_dir / "attribution.csv", std::ios::binary);
        write_attribution_runs_csv(runs, bundle.attribution_runs);
        std::ofstream weights(out_dir / "attribution_weights.csv", std::ios::binary);
        write_attribution_weights_csv(weights, bundle.attribution_weights);
    }
    io::write_text_file(out_dir / "pareto.svg", detail::pareto_svg(bundle));
    io::write_text_file(out_dir / "bias_distribution.svg", detail::bias_distribution_svg(bundle));
    io::write_text_file(out_dir / "bundle.json", to_json(bundle).dump(2) + "\n");
    return bundle;
}

// --- attribute (standalone) --------------------------------------------------

inline attribution::AttributionWeights cmd_attribute(const RunConfig& cfg_in, const fs::path& cohort_dir,
                                                     const fs::path& params_file, const fs::path& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    OutputLock lock(out_dir);
    const auto cohort_data = io::read_cohort(cohort_dir);
    const auto [params, margin] = io::load_params(params_file);
    (void)margin;
    const auto plan = attribution::plan_interventions(cohort::AttributeVector::neutral(), cfg.attribution_cfg.grid);
    const auto runs = attribution::measure_disparity_deltas(params, cohort_data.identities, plan,
                                                            cfg.attribution_cfg.far_target, cohort_data.render,
                                                            cohort_data.plant, cfg.attribution_cfg.replicates,
                                                            mix_seed(cfg.seed, fnv1a64("attribution")));
    const auto weights = attribution::decompose(runs.runs);
    std::ofstream rcsv(out_dir / "attribution.csv", std::ios::binary);
    write_attribution_runs_csv(rcsv, runs);
    std::ofstream wcsv(out_dir / "attribution_weights.csv", std::ios::binary);
    write_attribution_weights_csv(wcsv, weights);
    return weights;
}

// --- transfer ----------------------------------------------------------------

struct TransferRow {
    std::string far_key;
    double gap_percent = 0.0;
    double r = 0.0;
};

struct TransferReport {
    std::vector<TransferRow> rows;
    double overall_r = 0.0;
    double overall_gap_percent = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // bootstrap CI on the overall r
};

// Compares the per-group TPR disparity patterns of two audit bundles (e.g.
// two simulator configurations standing in for synthetic vs real).
inline TransferReport cmd_transfer(const fs::path& bundle_a_path, const fs::path& bundle_b_path,
                                   const fs::path& out_dir, std::uint64_t seed = 1) {
    OutputLock lock(out_dir);
    const json a = json::parse(io::read_text_file(bundle_a_path));
    const json b = json::parse(io::read_text_file(bundle_b_path));

    // schema agreement: identical model names and per-model group/far keys
    std::vector<std::string> mismatches;
    const auto& ma = a.at("models");
    const auto& mb = b.at("models");
    std::map<std::string, const json*> b_by_name;
    for (const auto& m : mb) b_by_name[m.at("model").get<std::string>()] = &m;
    for (const auto& m : ma) {
        const auto name = m.at("model").get<std::string>();
        if (!b_by_name.count(name)) {
            mismatches.push_back("model " + name + " missing in bundle B");
            continue;
        }
        const json& other = *b_by_name.at(name);
        for (const auto& [fk, groups] : m.at("groups").items()) {
            if (!other.at("groups").contains(fk)) {
                mismatches.push_back("far key " + fk + " missing for model " + name + " in bundle B");
                continue;
            }
            for (const auto& [gk, _] : groups.items())
                if (!other.at("groups").at(fk).contains(gk))
                    mismatches.push_back("group " + gk + " missing for model " + name + "/" + fk + " in bundle B");
        }
    }
    if (ma.size() != mb.size()) mismatches.push_back("bundles list different model counts");
    if (!mismatches.empty()) {
        std::string msg = "transfer: bundle schema mismatch:";
        for (const auto& s : mismatches) msg += " [" + s + "]";
        throw ParamError(msg);
    }

    // collect aligned per-(model, far, group) TPR vectors
    std::map<std::string, std::pair<Vec, Vec>> per_far;
    Vec all_a, all_b;
    for (const auto& m : ma) {
        const auto name = m.at("model").get<std::string>();
        const json& other = *b_by_name.at(name);
        for (const auto& [fk, groups] : m.at("groups").items())
            for (const auto& [gk, rates] : groups.items()) {
                const double va = rates.at("tpr").get<double>();
                const double vb = other.at("groups").at(fk).at(gk).at("tpr").get<double>();
                per_far[fk].first.push_back(va);
                per_far[fk].second.push_back(vb);
                all_a.push_back(va);
                all_b.push_back(vb);
            }
    }

    TransferReport rep;
    for (const auto& [fk, vecs] : per_far) {
        TransferRow row;
        row.far_key = fk;
        double gap = 0.0;
        for (std::size_t i = 0; i < vecs.first.size(); ++i) gap += std::fabs(vecs.first[i] - vecs.second[i]);
        row.gap_percent = 100.0 * gap / static_cast<double>(vecs.first.size());
        row.r = stats::pearson_r({vecs.first, vecs.second});
        rep.rows.push_back(row);
    }
    rep.overall_r = stats::pearson_r({all_a, all_b});
    double gap = 0.0;
    for (std::size_t i = 0; i < all_a.size(); ++i) gap += std::fabs(all_a[i] - all_b[i]);
    rep.overall_gap_percent = 100.0 * gap / static_cast<double>(all_a.size());

    // bootstrap CI on the overall r: resample aligned pairs
    {
        const int n_boot = 2000;
        Rng rng(mix_seed(seed, fnv1a64("transfer")));
        Vec rs;
        rs.reserve(n_boot);
        for (int bi = 0; bi < n_boot; ++bi) {
            Rng sub = rng.derive(static_cast<std::uint64_t>(bi));
            Vec xa(all_a.size()), xb(all_a.size());
            for (std::size_t i = 0; i < all_a.size(); ++i) {
                const std::size_t k = sub.index(all_a.size());
                xa[i] = all_a[k];
                xb[i] = all_b[k];
            }
            try {
                rs.push_back(stats::pearson_r({xa, xb}));
            } catch (const NumericError&) {
                // degenerate resample, skip
            }
        }
        if (!rs.empty()) {
            std::sort(rs.begin(), rs.end());
            rep.ci_lo = rs[static_cast<std::size_t>(0.025 * static_cast<double>(rs.size() - 1))];
            rep.ci_hi = rs[static_cast<std::size_t>(0.975 * static_cast<double>(rs.size() - 1))];
        }
    }

    std::ofstream csv(out_dir / "transfer.csv", std::ios::binary);
    csv << "dataset,gap_percent,r\n";
    char buf[160];
    for (const auto& row : rep.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", row.far_key.c_str(), row.gap_percent, row.r);
        csv << buf;
    }
    std::snprintf(buf, sizeof buf, "overall,%.17g,%.17g\n", rep.overall_gap_percent, rep.overall_r);
    csv << buf;
    json j{{"rows", json::array()},
           {"overall", json{{"r", rep.overall_r}, {"gap_percent", rep.overall_gap_percent},
                            {"r_ci", json::array({rep.ci_lo, rep.ci_hi})}}}};
    for (const auto& row : rep.rows)
        j["rows"].push_back(json{{"dataset", row.far_key}, {"gap_percent", row.gap_percent}, {"r", row.r}});
    io::write_text_file(out_dir / "transfer.json", j.dump(2) + "\n");
    return rep;
}

// --- report ------------------------------------------------------------------

// Renders a bundle as human-readable text; verifies the provenance hash
// against the embedded config snapshot first.
inline std::string cmd_report(const fs::path& bundle_path) {
    const json b = json::parse(io::read_text_file(bundle_path));
    const auto recorded = b.at("provenance").at("config_hash").get<std::string>();
    const RunConfig cfg = config_from_json(b.at("config"));
    RunConfig with_seed = cfg;
    with_seed.seed_set = true;
    const auto recomputed = config_hash(with_seed);
    if (recorded != recomputed)
        throw ParamError("report: provenance hash mismatch (recorded " + recorded + ", recomputed " + recomputed + ")");

    std::ostringstream os;
    os << "audit bundle (seed " << b.at("provenance").at("seed") << ", config " << recorded << ")\n\n";
    os << "verification by model and FAR target:\n";
    for (const auto& m : b.at("models")) {
        os << "  " << m.at("model").get<std::string>() << ": eer=" << m.at("eer").get<double>();
        for (const auto& [k, v] : m.items())
            if (k.rfind("tpr_at_far_", 0) == 0) os << " " << k << "=" << v.get<double>();
        os << "\n";
        for (const auto& [fk, g] : m.at("gaps").items())
            os << "    far=" << fk << " tpr_gap=" << g.at("tpr_gap").get<double>() << " dpd=" << g.at("dpd").get<double>()
               << " eo_gap=" << g.at("eo_gap").get<double>() << "\n";
    }
    os << "\nattribution shares: light=" << b.at("attribution").at("light").get<double>()
       << " pose=" << b.at("attribution").at("pose").get<double>()
       << " expression=" << b.at("attribution").at("expression").get<double>() << "\n";
    os << "pareto frontier:";
    for (const auto& p : b.at("pareto"))
        if (p.at("on_frontier").get<bool>()) os << " " << p.at("model").get<std::string>();
    os << "\n";
    return os.str();
}

}  // namespace synfair::pipeline
