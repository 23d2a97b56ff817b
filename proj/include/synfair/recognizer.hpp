#pragma once

#include <map>
#include <string>
#include <vector>

#include "synfair/cohort.hpp"
#include "synfair/common.hpp"

namespace synfair::recognizer {

// Two-layer perceptron encoder (input -> hidden ReLU -> embedding) plus a
// unit-column class-prototype matrix. Prototype columns are renormalized
// after every optimizer step.
struct EncoderParams {
    int input_dim = 0;
    int hidden_dim = 0;
    int embed_dim = 0;
    int n_classes = 0;
    Vec w1;          // hidden x input, row-major
    Vec b1;          // hidden
    Vec w2;          // embed x hidden, row-major
    Vec b2;          // embed
    Vec prototypes;  // embed x n_classes, column-major (column j = class j)
    double q_ref = 1.0;

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1 || n_classes < 1)
            throw ParamError("EncoderParams: dimensions must be >= 1");
        if (w1.size() != static_cast<std::size_t>(hidden_dim) * input_dim || b1.size() != static_cast<std::size_t>(hidden_dim) ||
            w2.size() != static_cast<std::size_t>(embed_dim) * hidden_dim || b2.size() != static_cast<std::size_t>(embed_dim) ||
            prototypes.size() != static_cast<std::size_t>(embed_dim) * n_classes)
            throw ShapeError("EncoderParams: array sizes inconsistent with dimensions");
        if (!(q_ref > 0.0)) throw ParamError("EncoderParams: q_ref must be > 0");
    }
};

inline void renormalize_prototypes(EncoderParams& p) {
    for (int j = 0; j < p.n_classes; ++j) {
        double s = 0.0;
        for (int e = 0; e < p.embed_dim; ++e) {
            const double v = p.prototypes[static_cast<std::size_t>(j) * p.embed_dim + e];
            s += v * v;
        }
        s = std::sqrt(s);
        if (s < 1e-12) {
            // collapsed column, reset to a fixed axis
            for (int e = 0; e < p.embed_dim; ++e)
                p.prototypes[static_cast<std::size_t>(j) * p.embed_dim + e] = e == j % p.embed_dim ? 1.0 : 0.0;
        } else {
            for (int e = 0; e < p.embed_dim; ++e) p.prototypes[static_cast<std::size_t>(j) * p.embed_dim + e] /= s;
        }
    }
}

inline EncoderParams init_encoder(int input_dim, int hidden_dim, int embed_dim, int n_classes, Rng& rng) {
    EncoderParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.embed_dim = embed_dim;
    p.n_classes = n_classes;
    p.w1.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
    p.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0);
    p.w2.resize(static_cast<std::size_t>(embed_dim) * hidden_dim);
    p.b2.assign(static_cast<std::size_t>(embed_dim), 0.0);
    p.prototypes.resize(static_cast<std::size_t>(embed_dim) * n_classes);
    const double s1 = std::sqrt(2.0 / input_dim);
    for (auto& v : p.w1) v = s1 * rng.normal();
    const double s2 = std::sqrt(2.0 / hidden_dim);
    for (auto& v : p.w2) v = s2 * rng.normal();
    for (auto& v : p.prototypes) v = rng.normal();
    renormalize_prototypes(p);
    return p;
}

// f: pre-normalization feature; u: unit direction; q = clamp(||f|| / q_ref, 0, 1).
// An all-zero f yields the documented zero-embedding sentinel.
struct Embedding {
    Vec f;
    Vec u;
    double q = 0.0;
    bool zero = false;
};

inline Embedding encode_vec(const EncoderParams& p, const Vec& x) {
    if (x.size() != static_cast<std::size_t>(p.input_dim)) throw ShapeError("encode: input length != input_dim");
    Vec h(static_cast<std::size_t>(p.hidden_dim));
    for (int i = 0; i < p.hidden_dim; ++i) {
        double acc = p.b1[static_cast<std::size_t>(i)];
        const double* row = &p.w1[static_cast<std::size_t>(i) * p.input_dim];
        for (int j = 0; j < p.input_dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
        h[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
    }
    Embedding e;
    e.f.resize(static_cast<std::size_t>(p.embed_dim));
    for (int i = 0; i < p.embed_dim; ++i) {
        double acc = p.b2[static_cast<std::size_t>(i)];
        const double* row = &p.w2[static_cast<std::size_t>(i) * p.hidden_dim];
        for (int j = 0; j < p.hidden_dim; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
        e.f[static_cast<std::size_t>(i)] = acc;
    }
    const double r = norm2(e.f);
    if (r < 1e-12) {
        e.zero = true;
        e.q = 0.0;
        e.u.assign(e.f.size(), 0.0);
        return e;
    }
    e.u.resize(e.f.size());
    for (std::size_t i = 0; i < e.f.size(); ++i) e.u[i] = e.f[i] / r;
    e.q = clamp01(r / p.q_ref);
    return e;
}

inline Embedding encode(const EncoderParams& p, const cohort::Observation& obs) {
    if (static_cast<std::size_t>(obs.width) * obs.height != static_cast<std::size_t>(p.input_dim))
        throw ShapeError("encode: observation " + std::to_string(obs.width) + "x" + std::to_string(obs.height) +
                         " != input_dim " + std::to_string(p.input_dim));
    Vec x(obs.pixels.begin(), obs.pixels.end());
    return encode_vec(p, x);
}

// u1.u2; sentinel embeddings score 0 and set the warning flag.
inline double cosine_score(const Embedding& a, const Embedding& b, bool* sentinel_warning = nullptr) {
    if (a.zero || b.zero) {
        if (sentinel_warning) *sentinel_warning = true;
        return 0.0;
    }
    if (sentinel_warning) *sentinel_warning = false;
    return dot(a.u, b.u);
}

struct MarginConfig {
    enum class Variant { arcface, cosface, adaface };
    Variant variant = Variant::cosface;
    double s = 64.0;
    double m = 0.35;       // cosface / arcface margin
    double m0 = 0.4;       // adaface base margin
    double lambda_m = 0.3; // adaface quality slope (distinct from illumination lambda)

    void validate() const {
        if (!(s > 0.0)) throw ParamError("MarginConfig: s must be > 0");
        if (m < 0.0 || m0 < 0.0 || lambda_m < 0.0) throw ParamError("MarginConfig: margins must be >= 0");
        if (m0 - lambda_m < 0.0) throw ParamError("MarginConfig: m0 - lambda_m must be >= 0 so m_q stays nonnegative");
    }

    std::string name() const {
        switch (variant) {
            case Variant::arcface: return "arcface";
            case Variant::cosface: return "cosface";
            case Variant::adaface: return "adaface";
        }
        return "?";
    }

    static MarginConfig arcface() { return {Variant::arcface, 64.0, 0.5, 0.4, 0.3}; }
    static MarginConfig cosface() { return {Variant::cosface, 64.0, 0.35, 0.4, 0.3}; }
    static MarginConfig adaface() { return {Variant::adaface, 64.0, 0.35, 0.4, 0.3}; }

    static MarginConfig from_name(const std::string& n) {
        if (n == "arcface") return arcface();
        if (n == "cosface") return cosface();
        if (n == "adaface") return adaface();
        throw LookupError("unknown margin variant '" + n + "'");
    }
};

constexpr double kCosClamp = 1e-7;  // arcface acos clamp margin

// Target-class logit. cosface: s(cos - m); adaface: s(cos - m_q) with
// m_q = m0 - lambda*(1 - q); arcface: s cos(theta + m), theta = acos(cos).
inline double margin_logit(const MarginConfig& cfg, double cos_target, double q) {
    switch (cfg.variant) {
        case MarginConfig::Variant::cosface:
            return cfg.s * (cos_target - cfg.m);
        case MarginConfig::Variant::adaface: {
            const double m_q = cfg.m0 - cfg.lambda_m * (1.0 - q);
            return cfg.s * (cos_target - m_q);
        }
        case MarginConfig::Variant::arcface: {
            const double c = std::min(1.0 - kCosClamp, std::max(-1.0 + kCosClamp, cos_target));
            return cfg.s * std::cos(std::acos(c) + cfg.m);
        }
    }
    return 0.0;
}

struct LossGrads {
    double loss = 0.0;
    Vec gw1, gb1, gw2, gb2, gproto;
    Vec f_norms;  // per-sample ||f||, feeds the q_ref running percentile
};

// Mean softmax cross-entropy with the margin-adjusted target logit. Full
// backprop, including the adaface quality path through q = ||f|| / q_ref
// (when unclamped), so gradients match finite differences of the loss as
// computed.
inline LossGrads loss_and_grads(const EncoderParams& p, const std::vector<Vec>& xs, const std::vector<int>& labels,
                                const MarginConfig& cfg) {
    p.validate();
    cfg.validate();
    if (xs.empty()) throw ParamError("loss_and_grads: empty batch");
    if (xs.size() != labels.size()) throw ShapeError("loss_and_grads: inputs/labels length mismatch");
    for (int y : labels)
        if (y < 0 || y >= p.n_classes) throw ParamError("loss_and_grads: label outside class count");

    LossGrads out;
    out.gw1.assign(p.w1.size(), 0.0);
    out.gb1.assign(p.b1.size(), 0.0);
    out.gw2.assign(p.w2.size(), 0.0);
    out.gb2.assign(p.b2.size(), 0.0);
    out.gproto.assign(p.prototypes.size(), 0.0);
    out.f_norms.reserve(xs.size());

    const double inv_n = 1.0 / static_cast<double>(xs.size());
    Vec h(static_cast<std::size_t>(p.hidden_dim)), hpre(static_cast<std::size_t>(p.hidden_dim));
    Vec f(static_cast<std::size_t>(p.embed_dim)), u(static_cast<std::size_t>(p.embed_dim));
    Vec cosv(static_cast<std::size_t>(p.n_classes)), z(static_cast<std::size_t>(p.n_classes));
    Vec dz(static_cast<std::size_t>(p.n_classes)), du(static_cast<std::size_t>(p.embed_dim));
    Vec df(static_cast<std::size_t>(p.embed_dim)), dh(static_cast<std::size_t>(p.hidden_dim));

    for (std::size_t n = 0; n < xs.size(); ++n) {
        const Vec& x = xs[n];
        if (x.size() != static_cast<std::size_t>(p.input_dim)) throw ShapeError("loss_and_grads: input length != input_dim");
        const int y = labels[n];

        for (int i = 0; i < p.hidden_dim; ++i) {
            double acc = p.b1[static_cast<std::size_t>(i)];
            const double* row = &p.w1[static_cast<std::size_t>(i) * p.input_dim];
            for (int j = 0; j < p.input_dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
            hpre[static_cast<std::size_t>(i)] = acc;
            h[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
        }
        for (int i = 0; i < p.embed_dim; ++i) {
            double acc = p.b2[static_cast<std::size_t>(i)];
            const double* row = &p.w2[static_cast<std::size_t>(i) * p.hidden_dim];
            for (int j = 0; j < p.hidden_dim; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
            f[static_cast<std::size_t>(i)] = acc;
        }
        const double r = norm2(f);
        if (r < 1e-12) throw NumericError("loss_and_grads: zero embedding at sample " + std::to_string(n));
        for (int i = 0; i < p.embed_dim; ++i) u[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)] / r;
        out.f_norms.push_back(r);
        const double q_raw = r / p.q_ref;
        const double q = clamp01(q_raw);

        for (int j = 0; j < p.n_classes; ++j) {
            double acc = 0.0;
            const double* col = &p.prototypes[static_cast<std::size_t>(j) * p.embed_dim];
            for (int e = 0; e < p.embed_dim; ++e) acc += col[e] * u[static_cast<std::size_t>(e)];
            cosv[static_cast<std::size_t>(j)] = acc;
            z[static_cast<std::size_t>(j)] = cfg.s * acc;
        }
        z[static_cast<std::size_t>(y)] = margin_logit(cfg, cosv[static_cast<std::size_t>(y)], q);

        double zmax = z[0];
        for (double v : z) zmax = std::max(zmax, v);
        double sum_exp = 0.0;
        for (double v : z) sum_exp += std::exp(v - zmax);
        const double lse = zmax + std::log(sum_exp);
        const double sample_loss = lse - z[static_cast<std::size_t>(y)];
        if (!std::isfinite(sample_loss)) throw NumericError("loss_and_grads: non-finite loss at sample " + std::to_string(n));
        out.loss += inv_n * sample_loss;

        for (int j = 0; j < p.n_classes; ++j)
            dz[static_cast<std::size_t>(j)] = std::exp(z[static_cast<std::size_t>(j)] - lse) - (j == y ? 1.0 : 0.0);

        // dz/dcos per class; target depends on the margin variant
        double dzy_dcos = cfg.s;
        double dzy_dq = 0.0;
        if (cfg.variant == MarginConfig::Variant::adaface) {
            dzy_dq = (q_raw > 0.0 && q_raw < 1.0) ? cfg.s * cfg.lambda_m : 0.0;
        } else if (cfg.variant == MarginConfig::Variant::arcface) {
            const double c = cosv[static_cast<std::size_t>(y)];
            if (c > -1.0 + kCosClamp && c < 1.0 - kCosClamp) {
                const double theta = std::acos(c);
                dzy_dcos = cfg.s * std::sin(theta + cfg.m) / std::sin(theta);
            } else {
                dzy_dcos = 0.0;  // inside the acos clamp, logit is locally flat
            }
        }

        std::fill(du.begin(), du.end(), 0.0);
        double dq_total = 0.0;
        for (int j = 0; j < p.n_classes; ++j) {
            const double dcos = dz[static_cast<std::size_t>(j)] * (j == y ? dzy_dcos : cfg.s);
            const double* col = &p.prototypes[static_cast<std::size_t>(j) * p.embed_dim];
            double* gcol = &out.gproto[static_cast<std::size_t>(j) * p.embed_dim];
            for (int e = 0; e < p.embed_dim; ++e) {
                du[static_cast<std::size_t>(e)] += dcos * col[e];
                gcol[e] += inv_n * dcos * u[static_cast<std::size_t>(e)];
            }
        }
        dq_total = dz[static_cast<std::size_t>(y)] * dzy_dq;

        // df = (du - (du.u) u) / r  +  dq * u / q_ref (q path, when unclamped)
        const double du_dot_u = dot(du, u);
        for (int e = 0; e < p.embed_dim; ++e)
            df[static_cast<std::size_t>(e)] = (du[static_cast<std::size_t>(e)] - du_dot_u * u[static_cast<std::size_t>(e)]) / r;
        if (dq_total != 0.0)
            for (int e = 0; e < p.embed_dim; ++e) df[static_cast<std::size_t>(e)] += dq_total * u[static_cast<std::size_t>(e)] / p.q_ref;

        for (int i = 0; i < p.embed_dim; ++i) {
            const double g = df[static_cast<std::size_t>(i)];
            out.gb2[static_cast<std::size_t>(i)] += inv_n * g;
            double* grow = &out.gw2[static_cast<std::size_t>(i) * p.hidden_dim];
            for (int j = 0; j < p.hidden_dim; ++j) grow[j] += inv_n * g * h[static_cast<std::size_t>(j)];
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int i = 0; i < p.embed_dim; ++i) {
            const double g = df[static_cast<std::size_t>(i)];
            const double* row = &p.w2[static_cast<std::size_t>(i) * p.hidden_dim];
            for (int j = 0; j < p.hidden_dim; ++j) dh[static_cast<std::size_t>(j)] += g * row[j];
        }
        for (int i = 0; i < p.hidden_dim; ++i) {
            if (hpre[static_cast<std::size_t>(i)] <= 0.0) continue;
            const double g = dh[static_cast<std::size_t>(i)];
            out.gb1[static_cast<std::size_t>(i)] += inv_n * g;
            double* grow = &out.gw1[static_cast<std::size_t>(i) * p.input_dim];
            for (int j = 0; j < p.input_dim; ++j) grow[j] += inv_n * g * x[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double lr = 0.001;
    double momentum = 0.9;
    int hidden_dim = 64;
    int embed_dim = 32;
    double q_ref_percentile = 0.95;
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ParamError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ParamError("TrainConfig: batch_size must be >= 1");
        if (lr < 0.0) throw ParamError("TrainConfig: lr must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ParamError("TrainConfig: momentum must be in [0, 1)");
    }
};

// Cosine annealing: lr * (1 + cos(pi * epoch / epochs)) / 2, epoch 0-based.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(cfg.epochs))) / 2.0;
}

namespace detail {

// horizontal flip + 2-pixel jittered crop + brightness scaling (the
// grayscale stand-in for color jitter)
inline Vec augment_image(const std::vector<float>& px, int w, int h, Rng& rng) {
    const bool flip = rng.uniform() < 0.5;
    const int dx = static_cast<int>(rng.index(5)) - 2;
    const int dy = static_cast<int>(rng.index(5)) - 2;
    const double bright = rng.uniform(0.8, 1.2);
    Vec out(static_cast<std::size_t>(w) * h, 0.0);
    for (int r = 0; r < h; ++r) {
        const int sr = r + dy;
        if (sr < 0 || sr >= h) continue;
        for (int c = 0; c < w; ++c) {
            int sc = c + dx;
            if (sc < 0 || sc >= w) continue;
            if (flip) sc = w - 1 - sc;
            out[static_cast<std::size_t>(r) * w + c] =
                clamp01(bright * static_cast<double>(px[static_cast<std::size_t>(sr) * w + sc]));
        }
    }
    return out;
}

}  // namespace detail

struct TrainResult {
    EncoderParams params;
    std::vector<double> epoch_losses;
    std::map<int, int> identity_to_class;
};

// SGD with momentum, cosine-annealed lr, margin softmax loss. q_ref is the
// running 95th-percentile of ||f|| over the first epoch, frozen afterwards.
// Deterministic given (cohort bytes, configs, seed): fixed shuffle, fixed
// reduction order, per-(epoch, sample) augmentation streams.
inline TrainResult train_from(EncoderParams params, const std::vector<cohort::Observation>& cohort_obs,
                              const MarginConfig& margin_cfg, const TrainConfig& cfg) {
    cfg.validate();
    margin_cfg.validate();
    if (cohort_obs.empty()) throw ParamError("train: empty cohort");

    std::map<int, int> id_to_class;
    for (const auto& o : cohort_obs) id_to_class.emplace(o.identity_id, 0);
    if (id_to_class.size() < 2) throw ParamError("train: cohort must contain >= 2 identities");
    {
        int next = 0;
        for (auto& [id, cls] : id_to_class) cls = next++;
    }
    std::vector<int> labels;
    labels.reserve(cohort_obs.size());
    for (const auto& o : cohort_obs) labels.push_back(id_to_class.at(o.identity_id));

    Rng rng(mix_seed(cfg.seed, 0x7261696eULL));
    Vec vw1(params.w1.size(), 0.0), vb1(params.b1.size(), 0.0);
    Vec vw2(params.w2.size(), 0.0), vb2(params.b2.size(), 0.0);
    Vec vproto(params.prototypes.size(), 0.0);

    TrainResult result;
    Vec epoch0_norms;
    std::vector<std::size_t> order(cohort_obs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = rng.derive(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        const double lr = lr_at_epoch(cfg, epoch);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Vec> xs;
            std::vector<int> ys;
            xs.reserve(end - start);
            ys.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const auto& o = cohort_obs[order[k]];
                if (cfg.augment) {
                    Rng aug(mix_seed(mix_seed(cfg.seed, 0x617567ULL),
                                     static_cast<std::uint64_t>(epoch) * 1000003ULL + order[k]));
                    xs.push_back(detail::augment_image(o.pixels, o.width, o.height, aug));
                } else {
                    xs.emplace_back(o.pixels.begin(), o.pixels.end());
                }
                ys.push_back(labels[order[k]]);
            }

            const LossGrads lg = loss_and_grads(params, xs, ys, margin_cfg);
            if (!std::isfinite(lg.loss) || lg.loss > 1e6)
                throw TrainingError("train: diverged at epoch " + std::to_string(epoch) +
                                    " (loss=" + std::to_string(lg.loss) + ")");
            epoch_loss += lg.loss * static_cast<double>(end - start);
            seen += end - start;

            if (epoch == 0) {
                epoch0_norms.insert(epoch0_norms.end(), lg.f_norms.begin(), lg.f_norms.end());
                params.q_ref = std::max(1e-9, percentile(epoch0_norms, cfg.q_ref_percentile));
            }

            auto sgd = [&](Vec& v, Vec& p, const Vec& g) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    v[i] = cfg.momentum * v[i] - lr * g[i];
                    p[i] += v[i];
                }
            };
            sgd(vw1, params.w1, lg.gw1);
            sgd(vb1, params.b1, lg.gb1);
            sgd(vw2, params.w2, lg.gw2);
            sgd(vb2, params.b2, lg.gb2);
            sgd(vproto, params.prototypes, lg.gproto);
            renormalize_prototypes(params);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
    }

    result.params = std::move(params);
    result.identity_to_class = std::move(id_to_class);
    return result;
}

inline TrainResult train(const std::vector<cohort::Observation>& cohort_obs, const MarginConfig& margin_cfg,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (cohort_obs.empty()) throw ParamError("train: empty cohort");
    std::map<int, int> ids;
    for (const auto& o : cohort_obs) ids.emplace(o.identity_id, 0);
    const int input_dim = cohort_obs.front().width * cohort_obs.front().height;
    Rng init_rng(mix_seed(cfg.seed, 0x696e6974ULL));
    EncoderParams p = init_encoder(input_dim, cfg.hidden_dim, cfg.embed_dim, static_cast<int>(ids.size()), init_rng);
    return train_from(std::move(p), cohort_obs, margin_cfg, cfg);
}

}  // namespace synfair::recognizer
