#ifndef NTUMATCH_COUNTERFACTUAL_HPP
#define NTUMATCH_COUNTERFACTUAL_HPP

#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ntumatch/design.hpp"
#include "ntumatch/gibbs.hpp"
#include "ntumatch/market.hpp"
#include "ntumatch/matching_ops.hpp"
#include "ntumatch/parallel.hpp"
#include "ntumatch/stats.hpp"

namespace ntumatch {

/// Admission priority for students carrying a boolean tag, at the colleges in
/// scope. Rankings become lexicographic: priority group first, original order
/// within groups.
struct PriorityPolicy {
    std::string priorityFlag = "low_income";
    TermScope scope;          // colleges affected
    bool enabled = true;      // false = no-op policy

    static PriorityPolicy none() {
        PriorityPolicy p;
        p.enabled = false;
        return p;
    }
};

/// Order transformation only: scores are untouched, so DA consumes the same
/// cardinal information within each priority class.
inline CollegeRanking applyPolicy(const Market& market, const LatentUtilities& utilities,
                                  const PriorityPolicy& policy) {
    CollegeRanking ranking = defaultRanking(market, utilities);
    if (!policy.enabled) return ranking;
    for (int c = 0; c < market.numColleges(); ++c) {
        if (!policy.scope.applies(market.colleges[c])) continue;
        for (int i = 0; i < market.numStudents(); ++i)
            ranking[c][i].priority = market.students[i].tags.count(policy.priorityFlag) ? 1 : 0;
    }
    return ranking;
}

/// Share of the variance of `values` explained by school assignment: the R^2
/// of a regression on school indicators. NaN when values carry no variance.
inline double sortingIndex(const std::vector<double>& values, const std::vector<int>& assignment) {
    if (values.size() != assignment.size() || values.empty()) throw InvalidInput("sortingIndex: size mismatch");
    const double n = static_cast<double>(values.size());
    double grand = 0.0;
    for (double v : values) grand += v;
    grand /= n;
    double total = 0.0;
    for (double v : values) total += (v - grand) * (v - grand);
    if (total <= 0.0) return std::numeric_limits<double>::quiet_NaN();

    std::map<int, std::pair<double, int>> bySchool;  // sum, count
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& e = bySchool[assignment[i]];
        e.first += values[i];
        e.second += 1;
    }
    double between = 0.0;
    for (const auto& [id, e] : bySchool) {
        const double m = e.first / e.second;
        between += e.second * (m - grand) * (m - grand);
    }
    return between / total;
}

/// Per-student utility change between two assignments under one utility draw,
/// in willingness-to-travel kilometers.
inline std::vector<double> welfareChange(const LatentUtilities& utilities, const Market& market,
                                         const std::vector<int>& counterfactualAssignment,
                                         const std::vector<int>& baselineAssignment, double distanceCoefficient) {
    if (distanceCoefficient == 0.0) throw InvalidInput("distance coefficient must be nonzero");
    if (!(distanceCoefficient < 0.0)) throw InvalidInput("distance coefficient must be negative");
    const int n = market.numStudents();
    auto util = [&](int i, int id) {
        return id == kOutsideId ? utilities.studentU(i, 0) : utilities.studentU(i, market.collegeIndexById(id) + 1);
    };
    std::vector<double> km(n);
    for (int i = 0; i < n; ++i) {
        if (counterfactualAssignment[i] == baselineAssignment[i]) {
            km[i] = 0.0;  // unmoved students are exactly indifferent
            continue;
        }
        km[i] = (util(i, counterfactualAssignment[i]) - util(i, baselineAssignment[i])) / -distanceCoefficient;
    }
    return km;
}

struct CounterfactualOptions {
    int nDraws = 1500;
    int blocks = 15;  // equally spaced blocks of kept draws
    std::uint64_t seed = 0;
    std::string abilityVariable;             // student variable for ability sorting
    std::string incomeFlag = "low_income";   // grouping tag (also income sorting dummy)
    std::string distanceCoefficient;         // coefficient name for the km scale; empty = raw utils
};

struct GroupOutcome {
    std::string name;
    double meanKm = 0.0;
    double meanKmSd = 0.0;
    double winners = 0.0;
    double losers = 0.0;
    double indifferent = 0.0;
    Vector enrollObserved;  // share per school type + outside, observed matching
    Vector enrollPolicy;    // same, averaged across draws
};

struct CounterfactualReport {
    double sortingAbilityObserved = 0.0;
    double sortingAbilityPolicy = 0.0;
    double sortingAbilityPolicySd = 0.0;
    double sortingIncomeObserved = 0.0;
    double sortingIncomePolicy = 0.0;
    double sortingIncomePolicySd = 0.0;
    std::vector<GroupOutcome> groups;  // flagged group then the rest
    std::vector<std::string> enrollmentColumns;
    int drawsUsed = 0;
};

namespace detail {

inline std::vector<int> equallySpacedDraws(int available, int nDraws, int blocks) {
    if (nDraws > available) throw InvalidInput("more draws requested than available");
    blocks = std::max(1, std::min(blocks, nDraws));
    const int perBlock = nDraws / blocks;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(perBlock) * blocks);
    for (int b = 0; b < blocks; ++b) {
        const long start = (blocks == 1) ? 0
                                         : static_cast<long>(b) * (available - perBlock) / (blocks - 1);
        for (int k = 0; k < perBlock; ++k) idx.push_back(static_cast<int>(start) + k);
    }
    return idx;
}

inline int typeColumn(const Market& m, int collegeId) {
    if (collegeId == kOutsideId) return 3;
    switch (m.colleges[m.collegeIndexById(collegeId)].type) {
        case SchoolType::NonSelecting: return 0;
        case SchoolType::SelectingA: return 1;
        case SchoolType::SelectingB: return 2;
    }
    return 3;
}

} // namespace detail

/// Simulate the policy from posterior draws: per draw, rebuild utilities with
/// fresh shocks, run deferred acceptance with and without the priority
/// transformation under the same shocks, and average the statistics.
inline CounterfactualReport simulateCounterfactual(const Market& market, const EmpiricalSpec& spec,
                                                   const PosteriorChain& posterior, const PriorityPolicy& policy,
                                                   const Matching& observed, const CounterfactualOptions& opt) {
    const int n = market.numStudents();
    const CompiledDesign design = compileDesign(spec, market);
    const int p = design.numCoefficients();
    if (posterior.draws.cols() != static_cast<int>(posterior.parameterNames.size()))
        throw InvalidInput("posterior draw width mismatch");

    const auto drawIdx = detail::equallySpacedDraws(posterior.numKept(), opt.nDraws, opt.blocks);
    const int D = static_cast<int>(drawIdx.size());

    std::vector<double> ability(n, 0.0);
    bool haveAbility = !opt.abilityVariable.empty();
    std::vector<double> income(n, 0.0);
    std::vector<bool> flagged(n, false);
    for (int i = 0; i < n; ++i) {
        if (haveAbility) ability[i] = detail::resolve_variable(opt.abilityVariable, market, i, 0);
        flagged[i] = market.students[i].tags.count(opt.incomeFlag) > 0;
        income[i] = flagged[i] ? 1.0 : 0.0;
    }

    int distCoefIdx = -1;
    if (!opt.distanceCoefficient.empty()) distCoefIdx = design.coefficientIndex(opt.distanceCoefficient);

    struct DrawStats {
        double sortAbility = std::numeric_limits<double>::quiet_NaN();
        double sortIncome = std::numeric_limits<double>::quiet_NaN();
        double kmFlag = 0.0, kmOther = 0.0;
        double winFlag = 0.0, loseFlag = 0.0;
        double winOther = 0.0, loseOther = 0.0;
        Vector enrollFlag = Vector::Zero(4), enrollOther = Vector::Zero(4);
    };
    std::vector<DrawStats> stats(D);

    auto master = RngStream::from_master(opt.seed);
    parallel_for(D, [&](int d) {
        auto rng = master.substream("cf-draw", static_cast<std::uint64_t>(d));
        const Vector row = posterior.draws.row(drawIdx[d]).transpose();
        const Vector coeffs = row.head(p);
        std::vector<double> scales = design.scaleValues;
        int extra = p;
        for (std::size_t g = 0; g < design.scaleNames.size(); ++g)
            if (design.scaleEstimated[g] && extra < row.size()) scales[g] = row[extra++];

        const LatentUtilities shocks = drawShocks(market, rng);
        const LatentUtilities util = buildUtilities(design, market, coeffs, shocks, &scales);

        const Matching base = deferredAcceptance(market, util);
        const CollegeRanking ranking = applyPolicy(market, util, policy);
        const Matching cf = deferredAcceptance(market, util, &ranking);

        DrawStats& st = stats[d];
        if (haveAbility) st.sortAbility = sortingIndex(ability, cf.assignment);
        st.sortIncome = sortingIndex(income, cf.assignment);

        const double distCoef = distCoefIdx >= 0 ? coeffs[distCoefIdx] : -1.0;
        const auto km = welfareChange(util, market, cf.assignment, base.assignment, distCoef);
        int nFlag = 0, nOther = 0;
        for (int i = 0; i < n; ++i) {
            auto& enroll = flagged[i] ? st.enrollFlag : st.enrollOther;
            enroll[detail::typeColumn(market, cf.assignment[i])] += 1.0;
            if (flagged[i]) {
                ++nFlag;
                st.kmFlag += km[i];
                st.winFlag += km[i] > 0.0;
                st.loseFlag += km[i] < 0.0;
            } else {
                ++nOther;
                st.kmOther += km[i];
                st.winOther += km[i] > 0.0;
                st.loseOther += km[i] < 0.0;
            }
        }
        if (nFlag > 0) {
            st.kmFlag /= nFlag;
            st.winFlag /= nFlag;
            st.loseFlag /= nFlag;
            st.enrollFlag /= nFlag;
        }
        if (nOther > 0) {
            st.kmOther /= nOther;
            st.winOther /= nOther;
            st.loseOther /= nOther;
            st.enrollOther /= nOther;
        }
    });

    CounterfactualReport rep;
    rep.drawsUsed = D;
    rep.enrollmentColumns = {"nonselecting", "selecting_a", "selecting_b", "outside"};
    if (haveAbility) rep.sortingAbilityObserved = sortingIndex(ability, observed.assignment);
    rep.sortingIncomeObserved = sortingIndex(income, observed.assignment);

    auto meanSd = [&](auto getter) {
        std::vector<double> xs;
        xs.reserve(D);
        for (const auto& st : stats) {
            const double v = getter(st);
            if (!std::isnan(v)) xs.push_back(v);
        }
        if (xs.empty()) return std::pair<double, double>{std::numeric_limits<double>::quiet_NaN(), 0.0};
        const double m = mean(xs);
        return std::pair<double, double>{m, xs.size() > 1 ? stddev(xs) : 0.0};
    };
    std::tie(rep.sortingAbilityPolicy, rep.sortingAbilityPolicySd) =
        meanSd([](const DrawStats& s) { return s.sortAbility; });
    std::tie(rep.sortingIncomePolicy, rep.sortingIncomePolicySd) =
        meanSd([](const DrawStats& s) { return s.sortIncome; });

    GroupOutcome flaggedGroup, otherGroup;
    flaggedGroup.name = opt.incomeFlag;
    otherGroup.name = "other";
    flaggedGroup.enrollObserved = Vector::Zero(4);
    otherGroup.enrollObserved = Vector::Zero(4);
    int nFlag = 0, nOther = 0;
    for (int i = 0; i < n; ++i) {
        auto& g = flagged[i] ? flaggedGroup : otherGroup;
        (flagged[i] ? nFlag : nOther) += 1;
        g.enrollObserved[detail::typeColumn(market, observed.assignment[i])] += 1.0;
    }
    if (nFlag > 0) flaggedGroup.enrollObserved /= nFlag;
    if (nOther > 0) otherGroup.enrollObserved /= nOther;

    auto fill = [&](GroupOutcome& g, auto kmG, auto winG, auto loseG, auto enrollG) {
        std::tie(g.meanKm, g.meanKmSd) = meanSd(kmG);
        g.winners = meanSd(winG).first;
        g.losers = meanSd(loseG).first;
        g.indifferent = 1.0 - g.winners - g.losers;
        g.enrollPolicy = Vector::Zero(4);
        for (const auto& st : stats) g.enrollPolicy += enrollG(st);
        g.enrollPolicy /= D;
    };
    fill(
        flaggedGroup, [](const DrawStats& s) { return s.kmFlag; }, [](const DrawStats& s) { return s.winFlag; },
        [](const DrawStats& s) { return s.loseFlag; }, [](const DrawStats& s) { return s.enrollFlag; });
    fill(
        otherGroup, [](const DrawStats& s) { return s.kmOther; }, [](const DrawStats& s) { return s.winOther; },
        [](const DrawStats& s) { return s.loseOther; }, [](const DrawStats& s) { return s.enrollOther; });
    rep.groups = {flaggedGroup, otherGroup};
    return rep;
}

} // namespace ntumatch

#endif
