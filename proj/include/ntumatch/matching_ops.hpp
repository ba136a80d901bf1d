#ifndef NTUMATCH_MATCHING_OPS_HPP
#define NTUMATCH_MATCHING_OPS_HPP

#include <algorithm>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "ntumatch/market.hpp"

namespace ntumatch {

/// How a college orders student applicants. Higher priority class admits
/// first; within a class colleges rank by score (their utility v), with the
/// lottery tag deciding at non-selecting colleges where scores are all zero.
/// Exact ties beyond that are non-generic and resolved by lower student id.
struct RankKey {
    int priority = 0;
    double score = 0.0;
    double lottery = 0.0;
    int id = 0;
};

inline int rank_compare(const RankKey& a, const RankKey& b) {
    if (a.priority != b.priority) return a.priority > b.priority ? 1 : -1;
    if (a.score != b.score) return a.score > b.score ? 1 : -1;
    if (a.lottery != b.lottery) return a.lottery > b.lottery ? 1 : -1;
    if (a.id != b.id) return a.id < b.id ? 1 : -1;
    return 0;
}

/// rankings[c][i] is college c's key for student i.
using CollegeRanking = std::vector<std::vector<RankKey>>;

inline CollegeRanking defaultRanking(const Market& market, const LatentUtilities& u) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    CollegeRanking r(C, std::vector<RankKey>(n));
    for (int c = 0; c < C; ++c) {
        const bool sel = market.colleges[c].selecting();
        for (int i = 0; i < n; ++i) {
            r[c][i].score = sel ? u.collegeV(c, i) : 0.0;
            r[c][i].lottery = sel ? 0.0 : (market.lottery.empty() ? 0.0 : market.lottery[i]);
            r[c][i].id = market.students[i].id;
        }
    }
    return r;
}

inline std::vector<Cutoff> computeCutoffs(const std::vector<int>& assignment, const LatentUtilities& utilities,
                                          const Market& market);

struct BlockingPair {
    int studentId = 0;
    int collegeId = 0;
    bool excessCapacity = false;  // otherwise displacedId says who loses the seat
    int displacedId = 0;
};

struct StabilityReport {
    std::vector<BlockingPair> blockingPairs;
    std::vector<int> irViolations;  // matched student ids with u_match <= u_outside
    bool nonGeneric = false;        // an exact ranking tie exists somewhere

    bool stable() const { return blockingPairs.empty() && irViolations.empty(); }
};

namespace detail {

struct HeldLess {
    const std::vector<RankKey>* keys;
    bool operator()(int a, int b) const {
        const int c = rank_compare((*keys)[a], (*keys)[b]);
        if (c != 0) return c < 0;  // worst first
        return a < b;
    }
};

} // namespace detail

/// Student-proposing deferred acceptance. Students find a college acceptable
/// only if it beats their outside draw strictly; colleges hold the best
/// applicants up to capacity under `ranking`.
inline Matching deferredAcceptance(const Market& market, const LatentUtilities& utilities,
                                   const CollegeRanking* rankingOpt = nullptr) {
    utilities.validate(market);
    const int n = market.numStudents();
    const int C = market.numColleges();
    CollegeRanking owned;
    if (!rankingOpt) {
        owned = defaultRanking(market, utilities);
        rankingOpt = &owned;
    }
    const CollegeRanking& ranking = *rankingOpt;

    Matching out;
    out.assignment.assign(n, kOutsideId);

    // Preference lists: acceptable, eligible colleges sorted by u descending.
    std::vector<std::vector<int>> prefs(n);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < C; ++c) {
            if (utilities.studentU(i, c + 1) > utilities.studentU(i, 0) && market.eligible(i, c))
                prefs[i].push_back(c);
        }
        std::sort(prefs[i].begin(), prefs[i].end(), [&](int a, int b) {
            const double ua = utilities.studentU(i, a + 1), ub = utilities.studentU(i, b + 1);
            if (ua != ub) return ua > ub;
            out.tieBroken = true;
            return market.colleges[a].id < market.colleges[b].id;
        });
    }

    std::vector<std::set<int, detail::HeldLess>> held;
    held.reserve(C);
    for (int c = 0; c < C; ++c) held.emplace_back(detail::HeldLess{&ranking[c]});

    std::vector<int> nextChoice(n, 0);
    std::queue<int> free;
    for (int i = 0; i < n; ++i) free.push(i);

    while (!free.empty()) {
        const int i = free.front();
        free.pop();
        bool placed = false;
        while (nextChoice[i] < static_cast<int>(prefs[i].size())) {
            const int c = prefs[i][nextChoice[i]++];
            auto& seat = held[c];
            if (static_cast<int>(seat.size()) < market.colleges[c].capacity) {
                seat.insert(i);
                placed = true;
                break;
            }
            const int worst = *seat.begin();
            const int cmp = rank_compare(ranking[c][i], ranking[c][worst]);
            if (cmp == 0) out.tieBroken = true;
            if (cmp > 0) {
                seat.erase(seat.begin());
                seat.insert(i);
                free.push(worst);
                placed = true;
                break;
            }
        }
        (void)placed;
    }

    for (int c = 0; c < C; ++c)
        for (int i : held[c]) out.assignment[i] = market.colleges[c].id;

    out.cutoffs = computeCutoffs(out.assignment, utilities, market);
    return out;
}

/// Cutoffs from an assignment: the lowest matched score when a selecting
/// college fills its capacity, not binding otherwise. Non-selecting colleges
/// never generate a score cutoff; their rationing lives in the lottery.
inline std::vector<Cutoff> computeCutoffs(const std::vector<int>& assignment, const LatentUtilities& utilities,
                                          const Market& market) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    if (static_cast<int>(assignment.size()) != n) throw InvalidInput("assignment length != number of students");
    std::vector<int> count(C, 0);
    std::vector<double> minV(C, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        if (assignment[i] == kOutsideId) continue;
        const int c = market.collegeIndexById(assignment[i]);
        ++count[c];
        minV[c] = std::min(minV[c], utilities.collegeV(c, i));
    }
    std::vector<Cutoff> cutoffs(C, Cutoff::none());
    for (int c = 0; c < C; ++c) {
        if (count[c] > market.colleges[c].capacity)
            throw DataError("college " + std::to_string(market.colleges[c].id) + " over capacity in assignment");
        if (market.colleges[c].selecting() && count[c] == market.colleges[c].capacity)
            cutoffs[c] = Cutoff::at(minV[c]);
    }
    return cutoffs;
}

/// Feasible set of a student: college ids whose cutoff the student clears
/// (weak inequality) plus the outside option. Gender restrictions exclude a
/// college regardless of scores.
inline std::vector<int> feasibleSet(int studentIdx, const std::vector<Cutoff>& cutoffs,
                                    const LatentUtilities& utilities, const Market& market) {
    std::vector<int> out{kOutsideId};
    for (int c = 0; c < market.numColleges(); ++c) {
        if (!market.eligible(studentIdx, c)) continue;
        if (cutoffs[c].admits(utilities.collegeV(c, studentIdx))) out.push_back(market.colleges[c].id);
    }
    return out;
}

struct AuditOptions {
    // Students whose preferences are constrained by assumption to "own match
    // only" (e.g. out-of-market students); they never block.
    std::vector<bool> inert;
};

/// Exhaustive blocking-pair and individual-rationality scan.
inline StabilityReport auditStability(const Market& market, const LatentUtilities& utilities,
                                      const Matching& matching, const CollegeRanking* rankingOpt = nullptr,
                                      const AuditOptions& opts = {}) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    CollegeRanking owned;
    if (!rankingOpt) {
        owned = defaultRanking(market, utilities);
        rankingOpt = &owned;
    }
    const CollegeRanking& ranking = *rankingOpt;

    StabilityReport rep;
    rep.nonGeneric = matching.tieBroken;

    std::vector<int> count(C, 0);
    // Worst held key per college (by ranking), for displacement checks.
    std::vector<std::optional<RankKey>> worst(C);
    std::vector<int> worstIdx(C, -1);
    for (int i = 0; i < n; ++i) {
        if (matching.assignment[i] == kOutsideId) continue;
        const int c = market.collegeIndexById(matching.assignment[i]);
        ++count[c];
        if (!worst[c] || rank_compare(ranking[c][i], *worst[c]) < 0) {
            worst[c] = ranking[c][i];
            worstIdx[c] = i;
        }
    }

    for (int i = 0; i < n; ++i) {
        const bool inert = i < static_cast<int>(opts.inert.size()) && opts.inert[i];
        const double uOwn = matching.assignment[i] == kOutsideId
                                ? utilities.studentU(i, 0)
                                : utilities.studentU(i, market.collegeIndexById(matching.assignment[i]) + 1);
        if (matching.assignment[i] != kOutsideId && !inert && uOwn <= utilities.studentU(i, 0))
            rep.irViolations.push_back(market.students[i].id);
        if (inert) continue;
        for (int c = 0; c < C; ++c) {
            if (market.colleges[c].id == matching.assignment[i]) continue;
            if (!market.eligible(i, c)) continue;
            if (utilities.studentU(i, c + 1) <= uOwn) continue;
            if (count[c] < market.colleges[c].capacity) {
                rep.blockingPairs.push_back({market.students[i].id, market.colleges[c].id, true, 0});
            } else if (worst[c] && rank_compare(ranking[c][i], *worst[c]) > 0) {
                rep.blockingPairs.push_back(
                    {market.students[i].id, market.colleges[c].id, false, market.students[worstIdx[c]].id});
            }
        }
    }
    return rep;
}

struct DemandResult {
    Matching matching;
    bool clears = false;
    std::vector<int> overDemanded;  // college ids with demand > capacity
    std::vector<int> underFilled;   // college ids with a binding cutoff not exactly filled
};

/// Assign every student to the best college in their feasible set at the
/// given cutoffs, and report whether those cutoffs clear the market.
inline DemandResult stableFromCutoffs(const Market& market, const LatentUtilities& utilities,
                                      const std::vector<Cutoff>& cutoffs) {
    utilities.validate(market);
    const int n = market.numStudents();
    const int C = market.numColleges();
    if (static_cast<int>(cutoffs.size()) != C) throw InvalidInput("cutoff vector length != number of colleges");

    DemandResult res;
    res.matching.assignment.assign(n, kOutsideId);
    res.matching.cutoffs = cutoffs;

    std::vector<int> demand(C, 0);
    for (int i = 0; i < n; ++i) {
        int best = kOutsideId;
        double bestU = utilities.studentU(i, 0);
        for (int c = 0; c < C; ++c) {
            if (!market.eligible(i, c)) continue;
            if (!cutoffs[c].admits(utilities.collegeV(c, i))) continue;
            const double u = utilities.studentU(i, c + 1);
            if (u > bestU) {
                bestU = u;
                best = market.colleges[c].id;
            } else if (u == bestU && best != kOutsideId) {
                res.matching.tieBroken = true;
            }
        }
        res.matching.assignment[i] = best;
        if (best != kOutsideId) ++demand[market.collegeIndexById(best)];
    }

    res.clears = true;
    for (int c = 0; c < C; ++c) {
        if (demand[c] > market.colleges[c].capacity) {
            res.overDemanded.push_back(market.colleges[c].id);
            res.clears = false;
        }
        if (cutoffs[c].binding && demand[c] != market.colleges[c].capacity) {
            res.underFilled.push_back(market.colleges[c].id);
            res.clears = false;
        }
    }
    return res;
}

} // namespace ntumatch

#endif
