#ifndef NTUMATCH_TRUNCATED_NORMAL_HPP
#define NTUMATCH_TRUNCATED_NORMAL_HPP

#include <cmath>
#include <limits>

#include "ntumatch/errors.hpp"
#include "ntumatch/rng.hpp"
#include "ntumatch/stats.hpp"

namespace ntumatch {

namespace detail {

// Tail boundary: inverse-CDF arithmetic keeps full accuracy well past this,
// but rejection avoids the CDF difference underflowing for narrow far-tail
// intervals.
inline constexpr double kTailThreshold = 5.0;

/// Robert (1995) exponential-rejection draw from a standard normal restricted
/// to [a, b] with a in the far right tail. b may be +inf.
inline double sample_right_tail(double a, double b, RngStream& rng) {
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
        const double z = a + rng.exponential(rate);
        if (z > b) continue;
        const double d = z - rate;
        if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
    }
}

/// Standard-normal draw restricted to (a, b), a < b.
inline double sample_std_interval(double a, double b, RngStream& rng) {
    if (a >= kTailThreshold) return sample_right_tail(a, b, rng);
    if (b <= -kTailThreshold) return -sample_right_tail(-b, -a, rng);

    // Inverse CDF on the side with the better-conditioned tail probability.
    double z;
    if (a + b > 0.0) {
        // work in the upper tail: P(Z > x) is small and well resolved
        const double qa = normal_ccdf(a);
        const double qb = (b == std::numeric_limits<double>::infinity()) ? 0.0 : normal_ccdf(b);
        z = -normal_quantile(qb + (qa - qb) * rng.uniform());
    } else {
        const double pa = (a == -std::numeric_limits<double>::infinity()) ? 0.0 : normal_cdf(a);
        const double pb = normal_cdf(b);
        z = normal_quantile(pa + (pb - pa) * rng.uniform());
    }
    // Rounding at the interval edge: nudge strictly inside.
    if (z <= a) z = std::nextafter(a, b);
    if (z >= b) z = std::nextafter(b, a);
    return z;
}

} // namespace detail

/// Draw from N(mean, sd^2) conditioned on (lower, upper). Either bound may be
/// infinite. Draws are strictly inside the interval.
inline double sample_truncated_normal(double mean, double sd, double lower, double upper, RngStream& rng) {
    if (!(sd > 0.0)) throw InvalidBounds("sd must be positive");
    if (!(lower < upper)) throw InvalidBounds("lower must be < upper");
    const double a = (lower - mean) / sd;
    const double b = (upper - mean) / sd;
    if (a == -std::numeric_limits<double>::infinity() && b == std::numeric_limits<double>::infinity())
        return mean + sd * rng.normal();
    double z = detail::sample_std_interval(a, b, rng);
    double x = mean + sd * z;
    if (x <= lower) x = std::nextafter(lower, upper);
    if (x >= upper) x = std::nextafter(upper, lower);
    return x;
}

} // namespace ntumatch

#endif
