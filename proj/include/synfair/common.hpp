#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace synfair {

using Vec = std::vector<double>;

// Error taxonomy. Every throwing operation documents which of these it uses.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RangeError : Error {
    using Error::Error;
};  // a value outside its documented bounds
struct ParamError : Error {
    using Error::Error;
};  // unusable parameters / configuration
struct ShapeError : Error {
    using Error::Error;
};  // mismatched vector/matrix dimensions
struct LookupError : Error {
    using Error::Error;
};  // unknown label or key
struct NumericError : Error {
    using Error::Error;
};  // non-finite or degenerate computation
struct ProtocolError : Error {
    using Error::Error;
};  // experimental protocol cannot be satisfied
struct TrainingError : Error {
    using Error::Error;
};  // optimizer divergence
struct IoError : Error {
    using Error::Error;
};  // file / serialization problems

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

// Combines a seed with a stream id into a new seed. Used to derive
// independent sub-streams, e.g. one per identity or per bootstrap replicate.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t a = seed;
    std::uint64_t b = salt ^ 0x9e3779b97f4a7c15ULL;
    std::uint64_t h = detail::splitmix64(a) ^ detail::splitmix64(b);
    return detail::splitmix64(h);
}

// xoshiro256++ seeded via splitmix64. The stdlib distributions are
// implementation-defined, so uniform/normal conversion is done here to keep
// every sampled value identical across compilers and runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : root_(seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = detail::splitmix64(x);
    }

    std::uint64_t u64() {
        const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Independent sub-stream keyed on (construction seed, salt).
    Rng derive(std::uint64_t salt) const { return Rng(mix_seed(root_, salt)); }

    std::uint64_t root_seed() const { return root_; }

private:
    std::uint64_t root_;
    std::uint64_t s_[4];
    double cache_ = 0.0;
    bool has_cache_ = false;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double mean_of(const Vec& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(const Vec& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

inline bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Nearest-rank percentile (p in [0,1]) of an unsorted sample.
inline double percentile(Vec values, double p) {
    if (values.empty()) throw ParamError("percentile: empty sample");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::min(std::max<std::size_t>(rank, 1), n);
    return values[rank - 1];
}

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// FNV-1a, used for provenance hashes of canonical config text.
inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace synfair
