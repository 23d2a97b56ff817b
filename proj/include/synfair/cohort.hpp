#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "synfair/common.hpp"

namespace synfair::cohort {

constexpr int kNumGroups = 5;
constexpr int kIdentityDim = 8;  // identity latent length; drives 8 blendshapes + 8 texture bases
constexpr int kNumActionUnits = 4;
constexpr int kNumLandmarks = 68;

enum class LightDir : int { front = 0, left = 1, right = 2, top = 3 };

inline const char* light_dir_name(LightDir d) {
    switch (d) {
        case LightDir::front: return "front";
        case LightDir::left: return "left";
        case LightDir::right: return "right";
        case LightDir::top: return "top";
    }
    return "?";
}

enum class Factor : int { pose_yaw = 0, pose_pitch = 1, light_dir = 2, light_intensity = 3, expression = 4 };

inline const char* factor_name(Factor f) {
    switch (f) {
        case Factor::pose_yaw: return "pose_yaw";
        case Factor::pose_pitch: return "pose_pitch";
        case Factor::light_dir: return "light_dir";
        case Factor::light_intensity: return "light_intensity";
        case Factor::expression: return "expression";
    }
    return "?";
}

inline Factor factor_from_name(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == factor_name(static_cast<Factor>(i))) return static_cast<Factor>(i);
    throw LookupError("unknown factor '" + s + "'");
}

// Five expression levels -> fixed action-unit coefficient vectors: a shared
// magnitude {0, 0.25, 0.5, 0.75, 1.0} scaling a fixed per-AU pattern.
inline std::array<double, kNumActionUnits> facs_for_level(int level) {
    if (level < 0 || level > 4) throw RangeError("expression=" + std::to_string(level) + " outside {0..4}");
    static constexpr double kMagnitude[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
    static constexpr double kPattern[kNumActionUnits] = {1.0, 0.8, 0.6, 0.4};
    std::array<double, kNumActionUnits> f{};
    for (int j = 0; j < kNumActionUnits; ++j) f[static_cast<std::size_t>(j)] = kMagnitude[level] * kPattern[j];
    return f;
}

struct AttributeVector {
    double yaw_deg = 0.0;    // [-30, 30]
    double pitch_deg = 0.0;  // [-30, 30]
    LightDir light_dir = LightDir::front;
    double light_intensity = 0.5;  // lambda in [0.2, 0.8]
    int expression_level = 0;      // {0..4}
    std::array<double, kNumActionUnits> facs = facs_for_level(0);

    static AttributeVector neutral() { return AttributeVector{}; }

    void validate() const {
        if (!(yaw_deg >= -30.0 && yaw_deg <= 30.0))
            throw RangeError("pose_yaw=" + std::to_string(yaw_deg) + " outside [-30, 30]");
        if (!(pitch_deg >= -30.0 && pitch_deg <= 30.0))
            throw RangeError("pose_pitch=" + std::to_string(pitch_deg) + " outside [-30, 30]");
        if (!(light_intensity >= 0.2 && light_intensity <= 0.8))
            throw RangeError("light_intensity=" + std::to_string(light_intensity) + " outside [0.2, 0.8]");
        if (expression_level < 0 || expression_level > 4)
            throw RangeError("expression=" + std::to_string(expression_level) + " outside {0..4}");
        if (facs != facs_for_level(expression_level)) throw RangeError("facs inconsistent with expression_level");
    }

    bool operator==(const AttributeVector&) const = default;
};

// (factor, level) pair; enum-valued factors encode their level as a small
// integer in `value` (light_dir: 0..3, expression: 0..4).
struct Intervention {
    Factor factor = Factor::pose_yaw;
    double value = 0.0;
};

inline AttributeVector intervene(const AttributeVector& base, const Intervention& iv) {
    AttributeVector out = base;
    switch (iv.factor) {
        case Factor::pose_yaw:
            if (!(iv.value >= -30.0 && iv.value <= 30.0))
                throw RangeError("pose_yaw=" + std::to_string(iv.value) + " outside [-30, 30]");
            out.yaw_deg = iv.value;
            break;
        case Factor::pose_pitch:
            if (!(iv.value >= -30.0 && iv.value <= 30.0))
                throw RangeError("pose_pitch=" + std::to_string(iv.value) + " outside [-30, 30]");
            out.pitch_deg = iv.value;
            break;
        case Factor::light_dir: {
            const int d = static_cast<int>(iv.value);
            if (d < 0 || d > 3 || static_cast<double>(d) != iv.value)
                throw RangeError("light_dir=" + std::to_string(iv.value) + " outside {0..3}");
            out.light_dir = static_cast<LightDir>(d);
            break;
        }
        case Factor::light_intensity:
            if (!(iv.value >= 0.2 && iv.value <= 0.8))
                throw RangeError("light_intensity=" + std::to_string(iv.value) + " outside [0.2, 0.8]");
            out.light_intensity = iv.value;
            break;
        case Factor::expression: {
            const int lv = static_cast<int>(iv.value);
            if (lv < 0 || lv > 4 || static_cast<double>(lv) != iv.value)
                throw RangeError("expression=" + std::to_string(iv.value) + " outside {0..4}");
            out.expression_level = lv;
            out.facs = facs_for_level(lv);
            break;
        }
    }
    return out;
}

// Factors on which two attribute vectors differ; facs changes count with
// expression. Used by the ceteris-paribus checks.
inline std::vector<Factor> changed_factors(const AttributeVector& base, const AttributeVector& a) {
    std::vector<Factor> out;
    if (a.yaw_deg != base.yaw_deg) out.push_back(Factor::pose_yaw);
    if (a.pitch_deg != base.pitch_deg) out.push_back(Factor::pose_pitch);
    if (a.light_dir != base.light_dir) out.push_back(Factor::light_dir);
    if (a.light_intensity != base.light_intensity) out.push_back(Factor::light_intensity);
    if (a.expression_level != base.expression_level || a.facs != base.facs) out.push_back(Factor::expression);
    return out;
}

struct DemographicGroup {
    int id = 0;  // 0..4
    std::string name;
    double albedo_mean = 0.6;    // (0, 1]
    double albedo_spread = 0.0;  // >= 0
    std::array<double, 4> shape_offset{};

    void validate() const {
        if (!(albedo_mean > 0.0 && albedo_mean <= 1.0)) throw RangeError("albedo_mean outside (0, 1]");
        if (albedo_spread < 0.0) throw RangeError("albedo_spread must be >= 0");
    }
};

using GroupRegistry = std::array<DemographicGroup, kNumGroups>;

// Planted-bias simulator configuration, not a claim about populations: the
// albedo means put the cohorts at deliberately different reflectance levels
// so the audit has a disparity to find.
inline GroupRegistry default_registry() {
    GroupRegistry r;
    const double means[kNumGroups] = {0.85, 0.35, 0.7, 0.55, 0.6};
    for (int g = 0; g < kNumGroups; ++g) {
        r[static_cast<std::size_t>(g)].id = g;
        r[static_cast<std::size_t>(g)].name = std::string("g") + std::to_string(g);
        r[static_cast<std::size_t>(g)].albedo_mean = means[g];
        r[static_cast<std::size_t>(g)].albedo_spread = 0.04;
        for (int k = 0; k < 4; ++k)
            r[static_cast<std::size_t>(g)].shape_offset[static_cast<std::size_t>(k)] =
                0.4 * std::sin(1.7 * (g + 1) * (k + 1));
    }
    return r;
}

inline void validate_registry(const GroupRegistry& reg) {
    for (int g = 0; g < kNumGroups; ++g) {
        if (reg[static_cast<std::size_t>(g)].id != g) throw ParamError("registry: group ids must be 0..4 in order");
        reg[static_cast<std::size_t>(g)].validate();
    }
}

struct IdentitySpec {
    int identity_id = 0;
    int group_id = 0;
    Vec latent;  // length kIdentityDim
    double albedo = 0.6;
    std::array<double, 4> shape_offset{};  // copied from the group so render() is self-contained
};

// Latent is standard normal per coordinate; albedo is drawn from the group
// distribution truncated at mean +/- 3*spread and clamped into (0, 1].
inline IdentitySpec sample_identity(const DemographicGroup& group, Rng& rng, int identity_id = 0) {
    IdentitySpec id;
    id.identity_id = identity_id;
    id.group_id = group.id;
    id.shape_offset = group.shape_offset;
    id.latent.resize(kIdentityDim);
    for (auto& v : id.latent) v = rng.normal();
    double z = rng.normal();
    z = std::min(3.0, std::max(-3.0, z));
    id.albedo = std::min(1.0, std::max(1e-3, group.albedo_mean + group.albedo_spread * z));
    return id;
}

struct RenderParams {
    int width = 32;
    int height = 32;
    double k_ambient = 0.15;
    double k_diffuse = 0.7;
    double k_specular = 0.15;
    double shininess = 8.0;
    double texture_amp = 0.12;
    double background = 0.0;

    void validate() const {
        if (width < 4 || height < 4) throw ParamError("RenderParams: image must be at least 4x4");
        if (k_ambient < 0 || k_diffuse < 0 || k_specular < 0 || shininess <= 0)
            throw ParamError("RenderParams: shading constants must be nonnegative (shininess > 0)");
    }
};

struct Observation {
    std::vector<float> pixels;  // row-major, row 0 = top, intensities in [0, 1]
    int width = 0;
    int height = 0;
    int identity_id = 0;
    int group_id = 0;
    AttributeVector attrs;
};

namespace detail {

struct P2 {
    double x, y;
};
struct P3 {
    double x, y, z;
};

// 68-point template, iBUG-style ordering: 0-16 jaw, 17-26 brows, 27-35 nose,
// 36-47 eyes, 48-67 lips. Coordinates in head units, y up.
inline const std::array<P2, kNumLandmarks>& landmark_template() {
    static const std::array<P2, kNumLandmarks> tmpl = [] {
        std::array<P2, kNumLandmarks> p{};
        for (int i = 0; i <= 16; ++i) {  // jaw
            const double ang = M_PI * (1.0 - i / 16.0);
            p[static_cast<std::size_t>(i)] = {0.62 * std::cos(ang), 0.25 - 1.0 * std::sin(ang)};
        }
        for (int i = 0; i < 5; ++i) {  // brows
            const double t = i / 4.0;
            p[static_cast<std::size_t>(17 + i)] = {-0.45 + 0.33 * t, 0.42 + 0.035 * std::sin(M_PI * t)};
            p[static_cast<std::size_t>(22 + i)] = {0.12 + 0.33 * t, 0.42 + 0.035 * std::sin(M_PI * (1.0 - t))};
        }
        for (int i = 0; i < 4; ++i)  // nose bridge
            p[static_cast<std::size_t>(27 + i)] = {0.0, 0.28 - 0.0933 * i};
        for (int i = 0; i < 5; ++i) {  // nose base
            const double t = i / 4.0;
            p[static_cast<std::size_t>(31 + i)] = {-0.12 + 0.24 * t, -0.07 - 0.025 * std::sin(M_PI * t)};
        }
        for (int i = 0; i < 6; ++i) {  // eyes
            const double ang = 2.0 * M_PI * i / 6.0;
            p[static_cast<std::size_t>(36 + i)] = {-0.28 + 0.10 * std::cos(ang), 0.25 + 0.045 * std::sin(ang)};
            p[static_cast<std::size_t>(42 + i)] = {0.28 + 0.10 * std::cos(ang), 0.25 + 0.045 * std::sin(ang)};
        }
        for (int i = 0; i < 12; ++i) {  // outer lip
            const double ang = 2.0 * M_PI * i / 12.0;
            p[static_cast<std::size_t>(48 + i)] = {0.22 * std::cos(ang), -0.38 + 0.10 * std::sin(ang)};
        }
        for (int i = 0; i < 8; ++i) {  // inner lip
            const double ang = 2.0 * M_PI * i / 8.0;
            p[static_cast<std::size_t>(60 + i)] = {0.13 * std::cos(ang), -0.38 + 0.04 * std::sin(ang)};
        }
        return p;
    }();
    return tmpl;
}

inline bool is_jaw(int i) { return i <= 16; }
inline bool is_brow(int i) { return i >= 17 && i <= 26; }
inline bool is_nose(int i) { return i >= 27 && i <= 35; }
inline bool is_eye(int i) { return i >= 36 && i <= 47; }
inline bool is_outer_lip(int i) { return i >= 48 && i <= 59; }
inline bool is_inner_lip(int i) { return i >= 60 && i <= 67; }
inline bool is_lip(int i) { return i >= 48 && i <= 67; }

// Linear blendshapes: group shape offsets, identity deformations, expression
// action units. All displacements are deterministic functions of the
// template geometry.
inline std::array<P2, kNumLandmarks> deformed_landmarks(const std::array<double, 4>& shape_offset, const Vec& latent,
                                                        const std::array<double, kNumActionUnits>& facs) {
    auto pts = landmark_template();
    const double eye_cx[2] = {-0.28, 0.28};
    for (int i = 0; i < kNumLandmarks; ++i) {
        auto& p = pts[static_cast<std::size_t>(i)];
        const P2 t = landmark_template()[static_cast<std::size_t>(i)];
        double dx = 0.0, dy = 0.0;

        // group shape: face width, face height, eye spacing, mouth width
        dx += 0.06 * shape_offset[0] * t.x;
        dy += 0.06 * shape_offset[1] * t.y;
        if (is_eye(i) || is_brow(i)) dx += 0.04 * shape_offset[2] * (t.x >= 0.0 ? 1.0 : -1.0);
        if (is_lip(i)) dx += 0.08 * shape_offset[3] * t.x;

        // identity blendshapes, one per latent coordinate
        const double s = 0.35;
        if (is_brow(i)) dy += s * latent[0] * 0.05;                       // brow height
        if (is_eye(i)) {                                                  // eye size
            const double cx = eye_cx[i >= 42 ? 1 : 0];
            dx += s * latent[1] * 0.3 * (t.x - cx);
            dy += s * latent[1] * 0.3 * (t.y - 0.25);
        }
        if (is_nose(i)) dy -= s * latent[2] * 0.05;                       // nose length
        if (is_lip(i)) dy += s * latent[3] * 0.05;                        // mouth height
        if (is_jaw(i)) dx += s * latent[4] * 0.06 * t.x;                  // jaw width
        if (is_jaw(i) && i >= 3 && i <= 13) dx += s * latent[5] * 0.04 * (t.x >= 0.0 ? 1.0 : -1.0);  // cheeks
        if (is_eye(i)) dy += s * latent[6] * 0.18 * (t.x >= 0.0 ? t.x - 0.28 : t.x + 0.28);          // eye slant
        if (is_outer_lip(i)) dy += s * latent[7] * 0.35 * (t.y + 0.38);   // lip thickness

        // expression action units
        if (is_lip(i) && t.y < -0.38) dy -= 0.10 * facs[0];               // AU0 mouth open (lower lip drop)
        if (is_jaw(i) && i >= 6 && i <= 10) dy -= 0.05 * facs[0];         //     + jaw drop
        if (is_lip(i) && std::fabs(t.x) > 0.11) {                         // AU1 mouth corner raise
            dy += 0.08 * facs[1];
            dx += 0.04 * facs[1] * (t.x >= 0.0 ? 1.0 : -1.0);
        }
        if (is_brow(i)) dy += 0.07 * facs[2];                             // AU2 brow raise
        if (is_eye(i)) dy -= 0.5 * facs[3] * (t.y - 0.25);                // AU3 eye narrow

        p.x = t.x + dx;
        p.y = t.y + dy;
    }
    return pts;
}

struct Mat3 {
    double m[3][3];
    P3 mul(const P3& p) const {
        return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z, m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
                m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z};
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }
    static Mat3 mulm(const Mat3& a, const Mat3& b) {
        Mat3 r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }
};

// head rotation: yaw about +y, then pitch about +x
inline Mat3 head_rotation(double yaw_deg, double pitch_deg) {
    const double ya = yaw_deg * M_PI / 180.0;
    const double pa = pitch_deg * M_PI / 180.0;
    const Mat3 ry{{{std::cos(ya), 0.0, std::sin(ya)}, {0.0, 1.0, 0.0}, {-std::sin(ya), 0.0, std::cos(ya)}}};
    const Mat3 rx{{{1.0, 0.0, 0.0}, {0.0, std::cos(pa), -std::sin(pa)}, {0.0, std::sin(pa), std::cos(pa)}}};
    return Mat3::mulm(rx, ry);
}

inline P3 light_vector(LightDir d) {
    const double inv = 1.0 / std::sqrt(2.0);
    switch (d) {
        case LightDir::front: return {0.0, 0.0, 1.0};
        case LightDir::left: return {-inv, 0.0, inv};
        case LightDir::right: return {inv, 0.0, inv};
        case LightDir::top: return {0.0, inv, inv};
    }
    return {0.0, 0.0, 1.0};
}

// smooth low-frequency identity texture over face coordinates in [-1, 1]^2
inline double identity_texture(const Vec& latent, double amp, double u, double v) {
    const double b[kIdentityDim] = {std::cos(M_PI * u),
                                    std::cos(M_PI * v),
                                    std::cos(2.0 * M_PI * u),
                                    std::cos(2.0 * M_PI * v),
                                    std::sin(M_PI * u) * std::sin(M_PI * v),
                                    std::cos(M_PI * u) * std::cos(2.0 * M_PI * v),
                                    std::sin(2.0 * M_PI * u) * std::sin(M_PI * v),
                                    std::cos(2.0 * M_PI * u) * std::cos(M_PI * v)};
    double t = 0.0;
    for (int k = 0; k < kIdentityDim; ++k) t += latent[static_cast<std::size_t>(k)] * b[k];
    return std::min(1.45, std::max(0.55, 1.0 + amp * t / std::sqrt(static_cast<double>(kIdentityDim))));
}

struct FeatureSplat {
    double weight;
    double sigma;
};

inline FeatureSplat splat_for(int i) {
    if (is_brow(i)) return {0.45, 0.045};
    if (is_nose(i)) return {i <= 30 ? 0.18 : 0.25, i <= 30 ? 0.035 : 0.030};
    if (is_eye(i)) return {0.60, 0.038};
    if (is_outer_lip(i)) return {0.40, 0.042};
    if (is_inner_lip(i)) return {0.30, 0.030};
    return {0.10, 0.050};  // jaw outline
}

}  // namespace detail

// Deterministic rasterizer: an ellipsoid head shaded with the Phong model
//   k_a*albedo + k_d*albedo*lambda*max(0, n.l) + k_s*lambda*max(0, r.v)^alpha
// and 68 landmark-driven reflectance splats. The landmark template is
// deformed by group shape offsets, the identity latent, and the expression
// action units, then rotated by yaw/pitch before orthographic projection.
inline Observation render(const IdentitySpec& identity, const AttributeVector& attrs, const RenderParams& params) {
    params.validate();
    attrs.validate();
    if (identity.latent.size() != kIdentityDim) throw ShapeError("identity latent length != identity dimension");

    using namespace detail;
    const Mat3 rot = head_rotation(attrs.yaw_deg, attrs.pitch_deg);
    const Mat3 rot_t = rot.transposed();

    // rotated-ellipsoid quadratic form Q = R D R^T, D = diag(1/a^2, 1/b^2, 1/c^2)
    const double ax = 0.75, by = 0.95, cz = 0.80;
    Mat3 dm{};
    dm.m[0][0] = 1.0 / (ax * ax);
    dm.m[1][1] = 1.0 / (by * by);
    dm.m[2][2] = 1.0 / (cz * cz);
    const Mat3 q = Mat3::mulm(Mat3::mulm(rot, dm), rot_t);

    // landmarks: deform, lift onto the ellipsoid surface, rotate, keep front-facing
    const auto lm2 = deformed_landmarks(identity.shape_offset, identity.latent, attrs.facs);
    struct ProjSplat {
        double x, y, weight, sigma;
    };
    std::vector<ProjSplat> splats;
    splats.reserve(kNumLandmarks);
    for (int i = 0; i < kNumLandmarks; ++i) {
        const P2& p = lm2[static_cast<std::size_t>(i)];
        const double rr = (p.x / ax) * (p.x / ax) + (p.y / by) * (p.y / by);
        const double z = cz * std::sqrt(std::max(0.0, 1.0 - rr));
        const P3 w = rot.mul({p.x, p.y, z});
        if (w.z <= 0.0) continue;  // back-facing at extreme deformation
        const auto fs = splat_for(i);
        splats.push_back({w.x, w.y, fs.weight, fs.sigma});
    }

    const P3 light = light_vector(attrs.light_dir);
    const double lambda = attrs.light_intensity;

    Observation obs;
    obs.width = params.width;
    obs.height = params.height;
    obs.identity_id = identity.identity_id;
    obs.group_id = identity.group_id;
    obs.attrs = attrs;
    obs.pixels.assign(static_cast<std::size_t>(params.width) * static_cast<std::size_t>(params.height),
                      static_cast<float>(clamp01(params.background)));

    for (int row = 0; row < params.height; ++row) {
        const double y = 1.0 - 2.0 * (row + 0.5) / params.height;  // row 0 = top, y up
        for (int col = 0; col < params.width; ++col) {
            const double x = 2.0 * (col + 0.5) / params.width - 1.0;
            // front intersection of the pixel ray with the rotated ellipsoid
            const double a2 = q.m[2][2];
            const double b2 = 2.0 * (q.m[0][2] * x + q.m[1][2] * y);
            const double c2 = q.m[0][0] * x * x + 2.0 * q.m[0][1] * x * y + q.m[1][1] * y * y - 1.0;
            const double disc = b2 * b2 - 4.0 * a2 * c2;
            if (disc < 0.0) continue;
            const double z = (-b2 + std::sqrt(disc)) / (2.0 * a2);
            const P3 p{x, y, z};

            // outward normal ~ Q p
            P3 n = q.mul(p);
            const double nn = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
            n = {n.x / nn, n.y / nn, n.z / nn};

            // reflectance: identity albedo x identity texture x feature splats
            const P3 q0 = rot_t.mul(p);  // object space, so the texture rides with the head
            double alb = identity.albedo * identity_texture(identity.latent, params.texture_amp, q0.x / ax, q0.y / by);
            for (const auto& s : splats) {
                const double dx = x - s.x;
                const double dy = y - s.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 > 9.0 * s.sigma * s.sigma) continue;
                alb *= 1.0 - s.weight * std::exp(-d2 / (2.0 * s.sigma * s.sigma));
            }

            const double ndotl = n.x * light.x + n.y * light.y + n.z * light.z;
            const double diffuse = params.k_diffuse * alb * lambda * std::max(0.0, ndotl);
            // r = 2(n.l)n - l; v = (0,0,1) so r.v is the z component
            const double rz = 2.0 * ndotl * n.z - light.z;
            const double specular = params.k_specular * lambda * std::pow(std::max(0.0, rz), params.shininess);
            const double intensity = params.k_ambient * alb + diffuse + specular;
            obs.pixels[static_cast<std::size_t>(row) * params.width + col] = static_cast<float>(clamp01(intensity));
        }
    }
    return obs;
}

// --- canonical per-family intervention magnitudes -------------------------
// One shared definition used both by the planted-bias noise model and by the
// attribution regressors, so planted sensitivities and recovered
// coefficients live on the same scale.

enum class FactorFamily : int { light = 0, pose = 1, expression = 2 };

inline const char* family_name(FactorFamily f) {
    switch (f) {
        case FactorFamily::light: return "light";
        case FactorFamily::pose: return "pose";
        case FactorFamily::expression: return "expression";
    }
    return "?";
}

inline double pose_magnitude(const AttributeVector& base, const AttributeVector& a) {
    return clamp01(std::max(std::fabs(a.yaw_deg - base.yaw_deg), std::fabs(a.pitch_deg - base.pitch_deg)) / 30.0);
}

inline double light_magnitude(const AttributeVector& base, const AttributeVector& a) {
    const double dir = a.light_dir == base.light_dir ? 0.0 : 1.0;
    const double lam = std::fabs(a.light_intensity - base.light_intensity) / 0.3;
    return clamp01(std::max(dir, lam));
}

inline double expression_magnitude(const AttributeVector& base, const AttributeVector& a) {
    return clamp01(std::fabs(static_cast<double>(a.expression_level - base.expression_level)) / 4.0);
}

inline double family_magnitude(FactorFamily f, const AttributeVector& base, const AttributeVector& a) {
    switch (f) {
        case FactorFamily::light: return light_magnitude(base, a);
        case FactorFamily::pose: return pose_magnitude(base, a);
        case FactorFamily::expression: return expression_magnitude(base, a);
    }
    return 0.0;
}

// Observation noise model. Noise variance is the base floor plus an
// albedo-coupled term plus planted per-family sensitivities gated by the
// group sensitivity vector; keeping the family terms linear in variance is
// what makes the attribution experiment's ground truth linear.
struct BiasPlant {
    double base_sigma = 0.0;
    double albedo_coupling = 0.0;
    double light = 0.0;
    double pose = 0.0;
    double expression = 0.0;
    double scale = 0.0;
    std::array<double, kNumGroups> group_sensitivity = {0.0, 1.0, 0.3, 0.6, 0.5};

    bool active() const { return base_sigma > 0.0 || albedo_coupling > 0.0 || scale > 0.0; }

    double sigma_for(int group_id, double albedo, const AttributeVector& base, const AttributeVector& attrs) const {
        const double alb_term = albedo_coupling * (1.0 - albedo);
        double var = base_sigma * base_sigma + alb_term * alb_term;
        if (scale > 0.0) {
            const double mix = light * light_magnitude(base, attrs) + pose * pose_magnitude(base, attrs) +
                               expression * expression_magnitude(base, attrs);
            var += scale * scale * mix * group_sensitivity[static_cast<std::size_t>(group_id)];
        }
        return std::sqrt(var);
    }
};

inline void apply_pixel_noise(Observation& obs, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (auto& px : obs.pixels) px = static_cast<float>(clamp01(static_cast<double>(px) + sigma * rng.normal()));
}

struct CohortSpec {
    int identities_per_group = 20;
    int variants_per_identity = 10;
    std::vector<Intervention> plan;  // one entry per variant, applied to the neutral base
    std::uint64_t seed = 0;

    int total() const { return kNumGroups * identities_per_group * variants_per_identity; }

    void validate() const {
        if (identities_per_group < 1) throw ParamError("CohortSpec: identities_per_group must be >= 1");
        if (variants_per_identity < 1) throw ParamError("CohortSpec: variants_per_identity must be >= 1");
        if (plan.empty()) {
            if (variants_per_identity > 1)
                throw ParamError("CohortSpec: empty intervention plan with variants_per_identity > 1");
        } else if (static_cast<int>(plan.size()) != variants_per_identity) {
            throw ParamError("CohortSpec: intervention plan length must equal variants_per_identity");
        }
    }
};

// The ten-variant desk default: single-factor interventions off the neutral base.
inline std::vector<Intervention> default_intervention_plan() {
    return {
        {Factor::pose_yaw, -30.0},
        {Factor::pose_yaw, 30.0},
        {Factor::pose_pitch, -30.0},
        {Factor::pose_pitch, 30.0},
        {Factor::light_dir, static_cast<double>(static_cast<int>(LightDir::left))},
        {Factor::light_dir, static_cast<double>(static_cast<int>(LightDir::right))},
        {Factor::light_dir, static_cast<double>(static_cast<int>(LightDir::top))},
        {Factor::light_intensity, 0.2},
        {Factor::light_intensity, 0.8},
        {Factor::expression, 3.0},
    };
}

// Deterministic in (spec, registry, params, plant): every identity draws an
// independent sub-stream keyed on its global index, so generation order does
// not affect the output.
inline std::vector<Observation> generate_cohort(const CohortSpec& spec, const GroupRegistry& registry,
                                                const RenderParams& params, const BiasPlant& plant = {}) {
    spec.validate();
    validate_registry(registry);
    params.validate();
    const AttributeVector base = AttributeVector::neutral();

    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(spec.total()));
    for (int g = 0; g < kNumGroups; ++g) {
        for (int k = 0; k < spec.identities_per_group; ++k) {
            const int idx = g * spec.identities_per_group + k;
            Rng id_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(idx)));
            const IdentitySpec id = sample_identity(registry[static_cast<std::size_t>(g)], id_rng, idx);
            for (int v = 0; v < spec.variants_per_identity; ++v) {
                const AttributeVector attrs = spec.plan.empty() ? base : intervene(base, spec.plan[static_cast<std::size_t>(v)]);
                Observation obs = render(id, attrs, params);
                if (plant.active()) {
                    const double sigma = plant.sigma_for(g, id.albedo, base, attrs);
                    Rng noise_rng(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(idx)),
                                           0x1000u + static_cast<std::uint64_t>(v)));
                    apply_pixel_noise(obs, sigma, noise_rng);
                }
                out.push_back(std::move(obs));
            }
        }
    }
    return out;
}

// Re-samples just the identities of a cohort (no renders); used when probe
// images are rendered per experimental condition instead of per plan entry.
inline std::vector<IdentitySpec> sample_identities(const CohortSpec& spec, const GroupRegistry& registry) {
    spec.validate();
    validate_registry(registry);
    std::vector<IdentitySpec> ids;
    ids.reserve(static_cast<std::size_t>(kNumGroups * spec.identities_per_group));
    for (int g = 0; g < kNumGroups; ++g)
        for (int k = 0; k < spec.identities_per_group; ++k) {
            const int idx = g * spec.identities_per_group + k;
            Rng id_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(idx)));
            ids.push_back(sample_identity(registry[static_cast<std::size_t>(g)], id_rng, idx));
        }
    return ids;
}

}  // namespace synfair::cohort
