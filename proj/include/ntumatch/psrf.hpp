#ifndef NTUMATCH_PSRF_HPP
#define NTUMATCH_PSRF_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "ntumatch/gibbs.hpp"

namespace ntumatch {

struct PsrfResult {
    std::vector<std::string> parameterNames;
    Vector values;                   // one PSRF per parameter
    std::vector<bool> degenerate;    // zero within-chain variance

    double fractionBelow(double threshold) const {
        if (values.size() == 0) return 0.0;
        int k = 0;
        for (int i = 0; i < values.size(); ++i) k += (values[i] < threshold);
        return static_cast<double>(k) / static_cast<double>(values.size());
    }
};

/// Gelman-Rubin potential scale reduction factor per parameter. With a single
/// chain it is computed on the two half-chains.
inline PsrfResult psrf(const std::vector<PosteriorChain>& chains) {
    if (chains.empty()) throw InvalidInput("psrf needs at least one chain");

    // Split a lone chain; otherwise use chains as-is, cut to a common length.
    std::vector<Matrix> runs;
    if (chains.size() == 1) {
        const Matrix& d = chains[0].draws;
        const int half = static_cast<int>(d.rows()) / 2;
        if (half < 2) throw InvalidInput("chain too short for split-chain psrf");
        runs.push_back(d.topRows(half));
        runs.push_back(d.bottomRows(half));
    } else {
        int len = std::numeric_limits<int>::max();
        for (const auto& c : chains) len = std::min(len, static_cast<int>(c.draws.rows()));
        if (len < 2) throw InvalidInput("chains too short for psrf");
        for (const auto& c : chains) {
            if (c.draws.cols() != chains[0].draws.cols()) throw InvalidInput("chains have different parameters");
            runs.push_back(c.draws.topRows(len));
        }
    }

    const int m = static_cast<int>(runs.size());
    const int n = static_cast<int>(runs[0].rows());
    const int p = static_cast<int>(runs[0].cols());

    PsrfResult out;
    out.parameterNames = chains[0].parameterNames;
    out.values.resize(p);
    out.degenerate.assign(p, false);
    for (int k = 0; k < p; ++k) {
        std::vector<double> means(m), vars(m);
        for (int j = 0; j < m; ++j) {
            const auto col = runs[j].col(k);
            means[j] = col.mean();
            vars[j] = (col.array() - means[j]).square().sum() / (n - 1);
        }
        double grand = 0.0;
        for (double mu : means) grand += mu;
        grand /= m;
        double b = 0.0;  // between-chain variance * n
        for (double mu : means) b += (mu - grand) * (mu - grand);
        b *= static_cast<double>(n) / std::max(1, m - 1);
        double w = 0.0;
        for (double v2 : vars) w += v2;
        w /= m;
        if (w <= 0.0) {
            out.degenerate[k] = true;
            out.values[k] = b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            continue;
        }
        const double varPlus = (static_cast<double>(n - 1) / n) * w + b / n;
        out.values[k] = std::sqrt(varPlus / w);
    }
    return out;
}

} // namespace ntumatch

#endif
