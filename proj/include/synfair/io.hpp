#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synfair/balancing.hpp"
#include "synfair/cohort.hpp"
#include "synfair/common.hpp"
#include "synfair/metrics.hpp"
#include "synfair/recognizer.hpp"

namespace synfair::io {

using nlohmann::json;

// --- raw little-endian float32 --------------------------------------------

inline void write_f32_le(std::ostream& os, const std::vector<float>& data) {
    for (float v : data) {
        std::uint32_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof bits);
        const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                               static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
        os.write(bytes, 4);
    }
}

inline std::vector<float> read_f32_le(std::istream& is, std::size_t count) {
    std::vector<float> out(count);
    for (auto& v : out) {
        unsigned char bytes[4];
        is.read(reinterpret_cast<char*>(bytes), 4);
        if (!is) throw IoError("read_f32_le: truncated stream");
        const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
                                   (static_cast<std::uint32_t>(bytes[2]) << 16) |
                                   (static_cast<std::uint32_t>(bytes[3]) << 24);
        std::memcpy(&v, &bits, sizeof v);
    }
    return out;
}

// --- json conversions for cohort configuration ----------------------------

inline json to_json(const cohort::Intervention& iv) {
    return json{{"factor", cohort::factor_name(iv.factor)}, {"value", iv.value}};
}

inline cohort::Intervention intervention_from_json(const json& j) {
    return {cohort::factor_from_name(j.at("factor").get<std::string>()), j.at("value").get<double>()};
}

inline json to_json(const cohort::CohortSpec& s) {
    json plan = json::array();
    for (const auto& iv : s.plan) plan.push_back(to_json(iv));
    return json{{"identities_per_group", s.identities_per_group},
                {"variants_per_identity", s.variants_per_identity},
                {"intervention_plan", plan},
                {"seed", s.seed}};
}

inline cohort::CohortSpec cohort_spec_from_json(const json& j) {
    cohort::CohortSpec s;
    s.identities_per_group = j.at("identities_per_group").get<int>();
    s.variants_per_identity = j.at("variants_per_identity").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.plan.clear();
    for (const auto& e : j.at("intervention_plan")) s.plan.push_back(intervention_from_json(e));
    return s;
}

inline json to_json(const cohort::RenderParams& p) {
    return json{{"width", p.width},           {"height", p.height},       {"k_ambient", p.k_ambient},
                {"k_diffuse", p.k_diffuse},   {"k_specular", p.k_specular}, {"shininess", p.shininess},
                {"texture_amp", p.texture_amp}, {"background", p.background}};
}

inline cohort::RenderParams render_params_from_json(const json& j) {
    cohort::RenderParams p;
    p.width = j.at("width").get<int>();
    p.height = j.at("height").get<int>();
    p.k_ambient = j.at("k_ambient").get<double>();
    p.k_diffuse = j.at("k_diffuse").get<double>();
    p.k_specular = j.at("k_specular").get<double>();
    p.shininess = j.at("shininess").get<double>();
    p.texture_amp = j.at("texture_amp").get<double>();
    p.background = j.at("background").get<double>();
    return p;
}

inline json to_json(const cohort::BiasPlant& b) {
    return json{{"base_sigma", b.base_sigma},
                {"albedo_coupling", b.albedo_coupling},
                {"light", b.light},
                {"pose", b.pose},
                {"expression", b.expression},
                {"scale", b.scale},
                {"group_sensitivity", b.group_sensitivity}};
}

inline cohort::BiasPlant bias_plant_from_json(const json& j) {
    cohort::BiasPlant b;
    b.base_sigma = j.at("base_sigma").get<double>();
    b.albedo_coupling = j.at("albedo_coupling").get<double>();
    b.light = j.at("light").get<double>();
    b.pose = j.at("pose").get<double>();
    b.expression = j.at("expression").get<double>();
    b.scale = j.at("scale").get<double>();
    const auto gs = j.at("group_sensitivity").get<std::vector<double>>();
    if (gs.size() != cohort::kNumGroups) throw IoError("group_sensitivity must have 5 entries");
    std::copy(gs.begin(), gs.end(), b.group_sensitivity.begin());
    return b;
}

inline json to_json(const cohort::DemographicGroup& g) {
    return json{{"id", g.id},
                {"name", g.name},
                {"albedo_mean", g.albedo_mean},
                {"albedo_spread", g.albedo_spread},
                {"shape_offset", g.shape_offset}};
}

inline cohort::DemographicGroup group_from_json(const json& j) {
    cohort::DemographicGroup g;
    g.id = j.at("id").get<int>();
    g.name = j.at("name").get<std::string>();
    g.albedo_mean = j.at("albedo_mean").get<double>();
    g.albedo_spread = j.at("albedo_spread").get<double>();
    const auto so = j.at("shape_offset").get<std::vector<double>>();
    if (so.size() != 4) throw IoError("shape_offset must have 4 entries");
    std::copy(so.begin(), so.end(), g.shape_offset.begin());
    return g;
}

inline json to_json(const cohort::GroupRegistry& reg) {
    json arr = json::array();
    for (const auto& g : reg) arr.push_back(to_json(g));
    return arr;
}

inline cohort::GroupRegistry registry_from_json(const json& j) {
    if (!j.is_array() || j.size() != cohort::kNumGroups) throw IoError("registry must list exactly 5 groups");
    cohort::GroupRegistry reg;
    for (std::size_t i = 0; i < cohort::kNumGroups; ++i) reg[i] = group_from_json(j[i]);
    return reg;
}

inline json to_json(const cohort::IdentitySpec& id) {
    return json{{"identity_id", id.identity_id},
                {"group_id", id.group_id},
                {"latent", id.latent},
                {"albedo", id.albedo},
                {"shape_offset", id.shape_offset}};
}

inline cohort::IdentitySpec identity_from_json(const json& j) {
    cohort::IdentitySpec id;
    id.identity_id = j.at("identity_id").get<int>();
    id.group_id = j.at("group_id").get<int>();
    id.latent = j.at("latent").get<Vec>();
    id.albedo = j.at("albedo").get<double>();
    const auto so = j.at("shape_offset").get<std::vector<double>>();
    std::copy(so.begin(), so.end(), id.shape_offset.begin());
    return id;
}

// --- cohort directory ------------------------------------------------------
// manifest.json + one row-major float32 file per observation named
// gNN_idNNNN_vNN.f32

inline std::string observation_filename(int group_id, int identity_id, int variant) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "g%02d_id%04d_v%02d.f32", group_id, identity_id, variant);
    return buf;
}

struct CohortDir {
    cohort::CohortSpec spec;
    cohort::GroupRegistry registry;
    cohort::RenderParams render;
    cohort::BiasPlant plant;
    std::vector<cohort::IdentitySpec> identities;
    std::vector<cohort::Observation> observations;
};

inline void write_cohort(const std::filesystem::path& dir, const cohort::CohortSpec& spec,
                         const cohort::GroupRegistry& registry, const cohort::RenderParams& render,
                         const cohort::BiasPlant& plant, const std::vector<cohort::IdentitySpec>& identities,
                         const std::vector<cohort::Observation>& observations) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    try {
        json manifest;
        manifest["schema_version"] = 1;
        manifest["seed"] = spec.seed;
        manifest["spec"] = to_json(spec);
        manifest["registry"] = to_json(registry);
        manifest["render"] = to_json(render);
        manifest["plant"] = to_json(plant);
        json ids = json::array();
        for (const auto& id : identities) ids.push_back(to_json(id));
        manifest["identities"] = ids;
        {
            std::ofstream mf(dir / "manifest.json", std::ios::binary);
            if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
            mf << manifest.dump(2) << "\n";
        }
        std::map<int, int> variant_counter;
        for (const auto& obs : observations) {
            const int v = variant_counter[obs.identity_id]++;
            const auto name = observation_filename(obs.group_id, obs.identity_id, v);
            std::ofstream f(dir / name, std::ios::binary);
            if (!f) throw IoError("cannot write " + (dir / name).string());
            write_f32_le(f, obs.pixels);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove_all(dir, ec);  // no partial cohort directories
        throw;
    }
}

inline CohortDir read_cohort(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot read " + (dir / "manifest.json").string());
    json manifest = json::parse(mf);

    CohortDir out;
    out.spec = cohort_spec_from_json(manifest.at("spec"));
    out.registry = registry_from_json(manifest.at("registry"));
    out.render = render_params_from_json(manifest.at("render"));
    out.plant = bias_plant_from_json(manifest.at("plant"));
    for (const auto& e : manifest.at("identities")) out.identities.push_back(identity_from_json(e));

    const std::size_t npx = static_cast<std::size_t>(out.render.width) * out.render.height;
    const cohort::AttributeVector base = cohort::AttributeVector::neutral();
    for (const auto& id : out.identities) {
        for (int v = 0; v < out.spec.variants_per_identity; ++v) {
            const auto name = observation_filename(id.group_id, id.identity_id, v);
            std::ifstream f(dir / name, std::ios::binary);
            if (!f) throw IoError("missing observation file " + (dir / name).string());
            cohort::Observation obs;
            obs.pixels = read_f32_le(f, npx);
            obs.width = out.render.width;
            obs.height = out.render.height;
            obs.identity_id = id.identity_id;
            obs.group_id = id.group_id;
            obs.attrs = out.spec.plan.empty() ? base : cohort::intervene(base, out.spec.plan[static_cast<std::size_t>(v)]);
            out.observations.push_back(std::move(obs));
        }
    }
    return out;
}

// --- encoder params file ----------------------------------------------------
// single file: one JSON header line, then the parameter arrays as raw
// little-endian float32 in the order w1, b1, w2, b2, prototypes

inline void save_params(const std::filesystem::path& path, const recognizer::EncoderParams& p,
                        const recognizer::MarginConfig& margin) {
    p.validate();
    json header;
    header["schema_version"] = 1;
    header["input_dim"] = p.input_dim;
    header["hidden_dim"] = p.hidden_dim;
    header["embed_dim"] = p.embed_dim;
    header["n_classes"] = p.n_classes;
    header["q_ref"] = p.q_ref;
    header["margin"] = {{"variant", margin.name()}, {"s", margin.s}, {"m", margin.m},
                        {"m0", margin.m0},          {"lambda_m", margin.lambda_m}};
    header["order"] = {"w1", "b1", "w2", "b2", "prototypes"};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << header.dump() << "\n";
    auto dump_vec = [&](const Vec& v) {
        std::vector<float> fl(v.begin(), v.end());
        write_f32_le(f, fl);
    };
    dump_vec(p.w1);
    dump_vec(p.b1);
    dump_vec(p.w2);
    dump_vec(p.b2);
    dump_vec(p.prototypes);
}

inline std::pair<recognizer::EncoderParams, recognizer::MarginConfig> load_params(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw IoError("params file missing JSON header: " + path.string());
    json header = json::parse(line);

    recognizer::EncoderParams p;
    p.input_dim = header.at("input_dim").get<int>();
    p.hidden_dim = header.at("hidden_dim").get<int>();
    p.embed_dim = header.at("embed_dim").get<int>();
    p.n_classes = header.at("n_classes").get<int>();
    p.q_ref = header.at("q_ref").get<double>();

    auto load_vec = [&](std::size_t n) {
        const auto fl = read_f32_le(f, n);
        return Vec(fl.begin(), fl.end());
    };
    p.w1 = load_vec(static_cast<std::size_t>(p.hidden_dim) * p.input_dim);
    p.b1 = load_vec(static_cast<std::size_t>(p.hidden_dim));
    p.w2 = load_vec(static_cast<std::size_t>(p.embed_dim) * p.hidden_dim);
    p.b2 = load_vec(static_cast<std::size_t>(p.embed_dim));
    p.prototypes = load_vec(static_cast<std::size_t>(p.embed_dim) * p.n_classes);
    p.validate();

    recognizer::MarginConfig margin = recognizer::MarginConfig::from_name(header.at("margin").at("variant").get<std::string>());
    margin.s = header.at("margin").at("s").get<double>();
    margin.m = header.at("margin").at("m").get<double>();
    margin.m0 = header.at("margin").at("m0").get<double>();
    margin.lambda_m = header.at("margin").at("lambda_m").get<double>();
    return {std::move(p), margin};
}

// --- CSV --------------------------------------------------------------------

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

// F feature columns named f0..f{F-1} plus a trailing `group` column.
inline balancing::FeatureTable read_feature_table_csv(std::istream& is) {
    balancing::FeatureTable t;
    std::string line;
    if (!std::getline(is, line)) throw IoError("feature table CSV: empty stream");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "group")
        throw IoError("feature table CSV: expected header f0,..,group");
    const std::size_t nf = header.size() - 1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != nf + 1) throw IoError("feature table CSV: ragged row");
        Vec row(nf);
        for (std::size_t i = 0; i < nf; ++i) row[i] = std::stod(cells[i]);
        t.rows.push_back(std::move(row));
        t.group.push_back(std::stoi(cells[nf]));
    }
    t.validate();
    return t;
}

inline void write_feature_table_csv(std::ostream& os, const balancing::FeatureTable& t) {
    for (std::size_t i = 0; i < t.feature_dim(); ++i) os << "f" << i << ",";
    os << "group\n";
    char buf[64];
    for (std::size_t r = 0; r < t.size(); ++r) {
        for (double v : t.rows[r]) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            os << buf;
        }
        os << t.group[r] << "\n";
    }
}

inline void write_weights_csv(std::ostream& os, const balancing::BalanceWeights& w) {
    os << "row,weight\n";
    char buf[64];
    for (std::size_t i = 0; i < w.w.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, w.w[i]);
        os << buf;
    }
}

// score,genuine,group rows
inline void write_pairset_csv(std::ostream& os, const metrics::PairSet& ps) {
    os << "score,genuine,group\n";
    char buf[80];
    for (const auto& p : ps.pairs) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%d\n", p.score, p.genuine ? 1 : 0, p.group);
        os << buf;
    }
}

inline metrics::PairSet read_pairset_csv(std::istream& is) {
    metrics::PairSet ps;
    std::string line;
    if (!std::getline(is, line)) throw IoError("pairset CSV: empty stream");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 3) throw IoError("pairset CSV: ragged row");
        ps.pairs.push_back({std::stod(cells[0]), std::stoi(cells[1]) != 0, std::stoi(cells[2])});
    }
    ps.usable_for_far = ps.impostor_count() > 0;
    return ps;
}

// --- minimal SVG writer -----------------------------------------------------

class SvgCanvas {
public:
    SvgCanvas(int width, int height, std::string title) : width_(width), height_(height) {
        append("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        append("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n", width,
               height, width, height);
        append("<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", width, height);
        append("<text x=\"%d\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">%s</text>\n",
               width / 2, title.c_str());
    }

    void line(double x1, double y1, double x2, double y2, const char* color = "#444", double w = 1.0) {
        append("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"%.2f\"/>\n", x1, y1,
               x2, y2, color, w);
    }

    void circle(double x, double y, double r, const char* color) {
        append("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"%s\"/>\n", x, y, r, color);
    }

    void rect(double x, double y, double w, double h, const char* color) {
        append("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", x, y, w, h, color);
    }

    void text(double x, double y, const std::string& s, int size = 11, const char* anchor = "start") {
        append("<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"%d\" text-anchor=\"%s\">%s</text>\n",
               x, y, size, anchor, s.c_str());
    }

    std::string finish() {
        body_ += "</svg>\n";
        return body_;
    }

    int width() const { return width_; }
    int height() const { return height_; }

private:
    template <typename... Args>
    void append(const char* fmt, Args... args) {
        char buf[512];
        std::snprintf(buf, sizeof buf, fmt, args...);
        body_ += buf;
    }
    void append(const char* s) { body_ += s; }

    int width_, height_;
    std::string body_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace synfair::io
