#ifndef NTUMATCH_MODEL_FIT_HPP
#define NTUMATCH_MODEL_FIT_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ntumatch/design.hpp"
#include "ntumatch/market.hpp"
#include "ntumatch/matching_ops.hpp"
#include "ntumatch/parallel.hpp"

namespace ntumatch {

struct FitReport {
    double pctCorrectSchool = 0.0;   // percentages in [0,100]
    double pctCorrectType = 0.0;
    double pctCorrectBinding = 0.0;

    struct RmseEntry {
        std::string name;
        double rmse = 0.0;
        long skipped = 0;  // (school,sim) or (student,sim) terms without a value
    };
    std::vector<RmseEntry> schoolPanel;   // averages of student traits per school
    std::vector<RmseEntry> studentPanel;  // matched-school attributes per student
};

namespace detail {

inline int schoolTypeOf(const Market& m, int collegeId) {
    return collegeId == kOutsideId ? -1 : static_cast<int>(m.colleges[m.collegeIndexById(collegeId)].type);
}

inline bool bindingIn(const Market& m, const std::vector<int>& assignment, int collegeIdx) {
    int count = 0;
    for (int a : assignment) count += (a == m.colleges[collegeIdx].id);
    return count == m.colleges[collegeIdx].capacity;
}

} // namespace detail

/// Correct-prediction rates: per-outcome indicators averaged over simulations
/// and then over agents, as percentages.
inline FitReport predictionRates(const std::vector<Matching>& simulations, const Matching& observed,
                                 const Market& market) {
    if (simulations.empty()) throw InvalidInput("predictionRates needs at least one simulation");
    const int n = market.numStudents();
    const int C = market.numColleges();
    const double M = static_cast<double>(simulations.size());

    FitReport rep;
    double school = 0.0, type = 0.0;
    for (const auto& sim : simulations) {
        for (int i = 0; i < n; ++i) {
            school += sim.assignment[i] == observed.assignment[i];
            type += detail::schoolTypeOf(market, sim.assignment[i]) ==
                    detail::schoolTypeOf(market, observed.assignment[i]);
        }
    }
    rep.pctCorrectSchool = 100.0 * school / (M * n);
    rep.pctCorrectType = 100.0 * type / (M * n);

    double binding = 0.0;
    std::vector<bool> obsBinding(C);
    for (int c = 0; c < C; ++c) obsBinding[c] = detail::bindingIn(market, observed.assignment, c);
    for (const auto& sim : simulations)
        for (int c = 0; c < C; ++c) binding += detail::bindingIn(market, sim.assignment, c) == obsBinding[c];
    rep.pctCorrectBinding = 100.0 * binding / (M * C);
    return rep;
}

/// RMSEs of match-partner characteristics.
/// School panel, per student variable x: error of school c in simulation m is
/// mean(x | matched to c in m) - mean(x | matched to c observed); RMSE over
/// all (c, m) with both sides defined, the divisor reduced for skipped terms.
/// Student panel, per school attribute a: error of student i in simulation m
/// is a(match in m) - a(observed match); outside-option matches carry no
/// attribute and are skipped the same way.
inline FitReport rmsePanels(const std::vector<Matching>& simulations, const Matching& observed, const Market& market,
                            const std::vector<std::string>& studentVariables,
                            const std::vector<std::string>& schoolAttributes) {
    if (simulations.empty()) throw InvalidInput("rmsePanels needs at least one simulation");
    const int n = market.numStudents();
    const int C = market.numColleges();

    FitReport rep;

    for (const auto& var : studentVariables) {
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i) x[i] = detail::resolve_variable(var, market, i, 0);

        std::vector<double> obsMean(C);
        std::vector<bool> obsHas(C, false);
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            int k = 0;
            for (int i = 0; i < n; ++i)
                if (observed.assignment[i] == market.colleges[c].id) {
                    s += x[i];
                    ++k;
                }
            if (k > 0) {
                obsMean[c] = s / k;
                obsHas[c] = true;
            }
        }

        FitReport::RmseEntry e;
        e.name = var;
        double sq = 0.0;
        long terms = 0;
        for (const auto& sim : simulations) {
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                int k = 0;
                for (int i = 0; i < n; ++i)
                    if (sim.assignment[i] == market.colleges[c].id) {
                        s += x[i];
                        ++k;
                    }
                if (k == 0 || !obsHas[c]) {
                    ++e.skipped;
                    continue;
                }
                const double d = s / k - obsMean[c];
                sq += d * d;
                ++terms;
            }
        }
        e.rmse = terms > 0 ? std::sqrt(sq / terms) : std::numeric_limits<double>::quiet_NaN();
        rep.schoolPanel.push_back(e);
    }

    for (const auto& attr : schoolAttributes) {
        FitReport::RmseEntry e;
        e.name = attr;
        auto attrOf = [&](int collegeId, double& out) {
            if (collegeId == kOutsideId) return false;
            out = detail::resolve_variable(attr, market, 0, market.collegeIndexById(collegeId));
            return true;
        };
        double sq = 0.0;
        long terms = 0;
        for (const auto& sim : simulations) {
            for (int i = 0; i < n; ++i) {
                double aSim = 0.0, aObs = 0.0;
                if (!attrOf(sim.assignment[i], aSim) || !attrOf(observed.assignment[i], aObs)) {
                    ++e.skipped;
                    continue;
                }
                const double d = aSim - aObs;
                sq += d * d;
                ++terms;
            }
        }
        e.rmse = terms > 0 ? std::sqrt(sq / terms) : std::numeric_limits<double>::quiet_NaN();
        rep.studentPanel.push_back(e);
    }
    return rep;
}

/// Pure-noise benchmark: every utility is an independent standard normal,
/// all market structure (capacities, gender restrictions, lotteries) kept.
inline std::vector<Matching> randomBenchmark(const Market& market, int nSims, std::uint64_t seed) {
    std::vector<Matching> sims(nSims);
    auto master = RngStream::from_master(seed);
    parallel_for(nSims, [&](int s) {
        auto rng = master.substream("random-benchmark", static_cast<std::uint64_t>(s));
        const LatentUtilities u = drawShocks(market, rng);
        sims[s] = deferredAcceptance(market, u);
    });
    return sims;
}

} // namespace ntumatch

#endif
