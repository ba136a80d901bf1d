#include <catch2/catch_amalgamated.hpp>

#include "ntumatch/matching_ops.hpp"
#include "testutil.hpp"

using namespace ntumatch;

namespace {

Market tinyMarket(int n, std::vector<int> capacities) {
    Market m;
    m.zNames = {"x"};
    for (std::size_t c = 0; c < capacities.size(); ++c) {
        CollegeRecord col;
        col.id = static_cast<int>(c) + 1;
        col.capacity = capacities[c];
        m.colleges.push_back(col);
    }
    for (int i = 0; i < n; ++i) {
        StudentRecord s;
        s.id = i + 1;
        s.y = Vector::Zero(m.numColleges());
        s.w = Vector::Zero(m.numColleges());
        s.z = Vector::Zero(1);
        m.students.push_back(s);
    }
    m.lottery.assign(n, 0.0);
    return m;
}

LatentUtilities utilsFor(int n, int C) {
    LatentUtilities u;
    u.studentU = Matrix::Zero(n, C + 1);
    u.collegeV = Matrix::Zero(C, n);
    return u;
}

} // namespace

TEST_CASE("single student, single college") {
    Market m = tinyMarket(1, {1});
    LatentUtilities u = utilsFor(1, 1);
    u.studentU(0, 1) = 0.7;  // beats the outside draw of 0
    u.collegeV(0, 0) = -0.3;
    const Matching match = deferredAcceptance(m, u);
    REQUIRE(match.assignment[0] == 1);
    REQUIRE(match.cutoffs[0].binding);
    REQUIRE(match.cutoffs[0].value == -0.3);
}

TEST_CASE("two students, one seat: better-ranked student wins") {
    Market m = tinyMarket(2, {1});
    LatentUtilities u = utilsFor(2, 1);
    u.studentU(0, 1) = 1.0;
    u.studentU(1, 1) = 2.0;
    u.collegeV(0, 0) = 0.9;   // v_11 > v_12
    u.collegeV(0, 1) = 0.2;
    const Matching match = deferredAcceptance(m, u);
    REQUIRE(match.assignment[0] == 1);
    REQUIRE(match.assignment[1] == kOutsideId);
    REQUIRE(match.cutoffs[0].binding);
    REQUIRE(match.cutoffs[0].value == 0.9);
    REQUIRE(auditStability(m, u, match).stable());
}

TEST_CASE("individual rationality is strict") {
    Market m = tinyMarket(1, {1});
    LatentUtilities u = utilsFor(1, 1);
    u.studentU(0, 0) = 0.5;
    u.studentU(0, 1) = 0.5;  // tie with the outside option: stays out
    const Matching match = deferredAcceptance(m, u);
    REQUIRE(match.assignment[0] == kOutsideId);
}

TEST_CASE("computeCutoffs from an assignment") {
    Market m = tinyMarket(3, {3});
    LatentUtilities u = utilsFor(3, 1);
    u.collegeV(0, 0) = 2.0;
    u.collegeV(0, 1) = 0.5;
    u.collegeV(0, 2) = 1.1;

    SECTION("full college takes the minimum") {
        const auto cutoffs = computeCutoffs({1, 1, 1}, u, m);
        REQUIRE(cutoffs[0].binding);
        REQUIRE(cutoffs[0].value == 0.5);
    }
    SECTION("slack college is not binding") {
        const auto cutoffs = computeCutoffs({1, 1, kOutsideId}, u, m);
        REQUIRE_FALSE(cutoffs[0].binding);
    }
    SECTION("over-capacity assignment is a data error") {
        Market m2 = tinyMarket(3, {2});
        REQUIRE_THROWS_AS(computeCutoffs({1, 1, 1}, u, m2), DataError);
    }
}

TEST_CASE("feasible sets") {
    Market m = tinyMarket(1, {2, 1});
    LatentUtilities u = utilsFor(1, 2);
    u.collegeV(0, 0) = 0.4;
    u.collegeV(1, 0) = -0.2;

    SECTION("everything feasible when nothing binds") {
        const auto fs = feasibleSet(0, {Cutoff::none(), Cutoff::none()}, u, m);
        REQUIRE(fs == std::vector<int>{0, 1, 2});
    }
    SECTION("weak inequality at the cutoff") {
        const auto fs = feasibleSet(0, {Cutoff::at(0.4), Cutoff::at(0.0)}, u, m);
        REQUIRE(fs == std::vector<int>{0, 1});
    }
    SECTION("gender restriction excludes regardless of score") {
        m.colleges[0].genderRestriction = GenderRestriction::FemaleOnly;
        m.students[0].gender = "m";
        const auto fs = feasibleSet(0, {Cutoff::none(), Cutoff::none()}, u, m);
        REQUIRE(fs == std::vector<int>{0, 2});
    }
}

TEST_CASE("audit flags a manual swap") {
    // 4 students, 2 colleges, capacity 1 each; preferences strictly disagree
    auto rng = RngStream::from_master(99);
    for (int attempt = 0; attempt < 50; ++attempt) {
        auto inst = testutil::randomInstance(rng, 4, 2);
        inst.market.colleges[0].capacity = 1;
        inst.market.colleges[1].capacity = 1;
        const Matching da = deferredAcceptance(inst.market, inst.utilities);
        // find two students matched to different colleges and swap them
        int a = -1, b = -1;
        for (int i = 0; i < 4; ++i) {
            if (da.assignment[i] == 1) a = i;
            if (da.assignment[i] == 2) b = i;
        }
        if (a < 0 || b < 0) continue;
        Matching swapped = da;
        std::swap(swapped.assignment[a], swapped.assignment[b]);
        swapped.cutoffs = computeCutoffs(swapped.assignment, inst.utilities, inst.market);
        const auto rep = auditStability(inst.market, inst.utilities, swapped);
        const int oracle = testutil::naiveBlockingPairCount(inst.market, inst.utilities, swapped);
        REQUIRE(static_cast<int>(rep.blockingPairs.size()) == oracle);
        if (oracle > 0) return;  // found a genuinely unstable swap, done
    }
    FAIL("no swappable instance found");
}

TEST_CASE("stableFromCutoffs matches the audit oracle") {
    auto rng = RngStream::from_master(1234);
    for (int t = 0; t < 40; ++t) {
        auto inst = testutil::randomInstance(rng, 30, 3);
        const Matching da = deferredAcceptance(inst.market, inst.utilities);
        const auto res = stableFromCutoffs(inst.market, inst.utilities, da.cutoffs);
        REQUIRE(testutil::naiveBlockingPairCount(inst.market, inst.utilities, res.matching) == 0);
        REQUIRE(testutil::naiveIrViolationCount(inst.market, inst.utilities, res.matching) == 0);
    }
}

TEST_CASE("cutoff equivalence on random markets") {
    auto rng = RngStream::from_master(4321);
    for (int t = 0; t < 200; ++t) {
        const int n = 10 + static_cast<int>(rng.uniform() * 41);
        const int C = 1 + static_cast<int>(rng.uniform() * 4);
        auto inst = testutil::randomInstance(rng, n, C);
        const Matching da = deferredAcceptance(inst.market, inst.utilities);
        REQUIRE_FALSE(da.tieBroken);
        const auto res = stableFromCutoffs(inst.market, inst.utilities, da.cutoffs);
        REQUIRE(res.clears);
        REQUIRE(res.matching.assignment == da.assignment);
    }
}

TEST_CASE("stability over random instances") {
    auto rng = RngStream::from_master(777);
    for (int t = 0; t < 200; ++t) {
        const int n = 10 + static_cast<int>(rng.uniform() * 91);
        const int C = 1 + static_cast<int>(rng.uniform() * 5);
        auto inst = testutil::randomInstance(rng, n, C);
        const Matching da = deferredAcceptance(inst.market, inst.utilities);
        const auto rep = auditStability(inst.market, inst.utilities, da);
        REQUIRE(rep.stable());
        REQUIRE(testutil::naiveBlockingPairCount(inst.market, inst.utilities, da) == 0);
    }
}

TEST_CASE("non-clearing cutoffs are reported, not thrown") {
    Market m = tinyMarket(2, {1});
    LatentUtilities u = utilsFor(2, 1);
    u.studentU(0, 1) = 1.0;
    u.studentU(1, 1) = 2.0;
    u.collegeV(0, 0) = 0.3;
    u.collegeV(0, 1) = -0.1;

    SECTION("everything open, one seat, two takers") {
        const auto res = stableFromCutoffs(m, u, {Cutoff::none()});
        REQUIRE_FALSE(res.clears);
        REQUIRE(res.overDemanded == std::vector<int>{1});
    }
    SECTION("prohibitive cutoff sends everyone outside") {
        const auto res = stableFromCutoffs(m, u, {Cutoff::at(1e18)});
        REQUIRE(res.matching.assignment == std::vector<int>{kOutsideId, kOutsideId});
        // the binding tag claims the college fills, which it cannot
        REQUIRE_FALSE(res.clears);
        REQUIRE(res.underFilled == std::vector<int>{1});
    }
}

TEST_CASE("raising a score weakly expands the feasible set") {
    auto rng = RngStream::from_master(31);
    auto inst = testutil::randomInstance(rng, 20, 3);
    const Matching da = deferredAcceptance(inst.market, inst.utilities);
    for (int i = 0; i < 20; ++i) {
        const auto before = feasibleSet(i, da.cutoffs, inst.utilities, inst.market);
        LatentUtilities bumped = inst.utilities;
        bumped.collegeV(1, i) += 1.5;
        const auto after = feasibleSet(i, da.cutoffs, bumped, inst.market);
        for (int id : before) REQUIRE(std::find(after.begin(), after.end(), id) != after.end());
    }
}

TEST_CASE("match frequency at fixed cutoffs equals the tail-probability product") {
    // One college, all students at the same index; independent shocks.
    const int n = 100000;
    Market m = tinyMarket(n, {n});  // capacity irrelevant at fixed cutoffs
    LatentUtilities u = utilsFor(n, 1);
    auto rng = RngStream::from_master(2024);
    const double uBar = 0.4, vBar = -0.2, delta = 0.3;
    for (int i = 0; i < n; ++i) {
        u.studentU(i, 0) = 0.0;
        u.studentU(i, 1) = uBar + rng.normal();
        u.collegeV(0, i) = vBar + rng.normal();
    }
    const auto res = stableFromCutoffs(m, u, {Cutoff::at(delta)});
    int matched = 0;
    for (int a : res.matching.assignment) matched += (a == 1);
    const double p = normal_ccdf(-uBar) * normal_ccdf(delta - vBar);
    const double se = std::sqrt(p * (1.0 - p) / n);
    REQUIRE(std::fabs(static_cast<double>(matched) / n - p) < 3.0 * se);
}

TEST_CASE("non-selecting college rations by lottery and never gets a cutoff") {
    Market m = tinyMarket(3, {1});
    m.colleges[0].type = SchoolType::NonSelecting;
    m.lottery = {0.2, 0.9, 0.5};
    LatentUtilities u = utilsFor(3, 1);
    for (int i = 0; i < 3; ++i) u.studentU(i, 1) = 1.0 + 0.1 * i;
    const Matching match = deferredAcceptance(m, u);
    REQUIRE(match.assignment == std::vector<int>{kOutsideId, 1, kOutsideId});  // best lottery wins
    REQUIRE_FALSE(match.cutoffs[0].binding);
    REQUIRE(auditStability(m, u, match).stable());  // equal v cannot block
}

TEST_CASE("nan utilities are rejected") {
    Market m = tinyMarket(1, {1});
    LatentUtilities u = utilsFor(1, 1);
    u.studentU(0, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(deferredAcceptance(m, u), InvalidInput);
}

TEST_CASE("derivative identity of the one-college match probability") {
    // sigma(z,y,w) = P(match) built from normal cdfs; central finite
    // differences must satisfy d sigma/dz = beta d sigma/dy + gamma d sigma/dw.
    const double beta = 0.8, gamma = -0.6, delta = 0.35;
    auto sigma = [&](double z, double y, double w) {
        const double uIdx = y + beta * z;
        const double vIdx = w + gamma * z;
        return normal_ccdf(-uIdx) * normal_ccdf(delta - vIdx);
    };
    const double h = 1e-4;
    for (auto [z, y, w] : {std::tuple{0.1, 0.2, -0.1}, std::tuple{-0.5, 0.4, 0.3}, std::tuple{1.0, -0.2, 0.6}}) {
        const double dz = (sigma(z + h, y, w) - sigma(z - h, y, w)) / (2 * h);
        const double dy = (sigma(z, y + h, w) - sigma(z, y - h, w)) / (2 * h);
        const double dw = (sigma(z, y, w + h) - sigma(z, y, w + -h)) / (2 * h);
        REQUIRE(dz == Catch::Approx(beta * dy + gamma * dw).epsilon(1e-6));
    }
}
