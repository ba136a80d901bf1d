#ifndef NTUMATCH_RNG_HPP
#define NTUMATCH_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

#include "ntumatch/stats.hpp"

namespace ntumatch {

// SplitMix64 step; used both as a stand-alone mixer and to key substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a, folded through splitmix64 for avalanche.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

/// Seeded random stream. Substreams are derived by mixing the master seed with
/// a tag and an index, so e.g. covariate draws, student shocks, and college
/// shocks come from independent streams and stay reproducible when the code
/// that consumes one of them changes.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed)
        : engine_(splitmix64(seed ^ 0x5bf0363546e17f9dULL)), seed_key_(splitmix64(seed)) {}

    RngStream substream(std::string_view tag, std::uint64_t index = 0) const {
        return RngStream(splitmix64(seed_key_ ^ hash_tag(tag) ^ splitmix64(index)));
    }

    static RngStream from_master(std::uint64_t seed) { return RngStream(seed); }

    /// Uniform on (0,1); never returns the endpoints.
    double uniform() {
        const std::uint64_t bits = engine_() >> 11; // top 53 bits
        double u = static_cast<double>(bits) * 0x1.0p-53;
        if (u <= 0.0) u = 0x1.0p-53;
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via inverse CDF: deterministic across platforms.
    double normal() { return normal_quantile(uniform()); }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }
    const std::mt19937_64& engine() const { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_key_ = 0;
};

} // namespace ntumatch

#endif
