#include <catch2/catch_amalgamated.hpp>

#include "ntumatch/counterfactual.hpp"
#include "ntumatch/dgp.hpp"
#include "testutil.hpp"

using namespace ntumatch;

namespace {

/// Small mixed market with tags for policy experiments.
SimulatedMarket taggedSim(std::uint64_t seed, int n = 200) {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = n;
    cfg.capacities = {n / 5, n / 6, n / 5};
    cfg.seed = seed;
    auto sim = simulateMarket(cfg);
    auto rng = RngStream::from_master(seed).substream("tags");
    for (auto& s : sim.market.students)
        if (rng.uniform() < 0.4) s.tags.insert("low_income");
    return sim;
}

PosteriorChain fakeChain(const SimulatedMarket& sim, int rows) {
    // degenerate "posterior" concentrated at the generating truth
    PosteriorChain chain;
    const CompiledDesign d = compileDesign(sim.spec, sim.market);
    chain.parameterNames = d.coefficientNames;
    for (std::size_t g = 0; g < d.scaleNames.size(); ++g)
        if (d.scaleEstimated[g]) chain.parameterNames.push_back(d.scaleNames[g]);
    chain.draws.resize(rows, static_cast<int>(chain.parameterNames.size()));
    for (int r = 0; r < rows; ++r) {
        chain.draws.row(r).head(sim.trueCoefficients.size()) = sim.trueCoefficients.transpose();
        for (int k = sim.trueCoefficients.size(); k < chain.draws.cols(); ++k) chain.draws(r, k) = 1.0;
    }
    return chain;
}

} // namespace

TEST_CASE("policy order transformation") {
    const auto sim = taggedSim(1);
    PriorityPolicy policy;
    policy.priorityFlag = "low_income";
    policy.scope = TermScope::everywhere();

    SECTION("no student flagged leaves rankings unchanged") {
        auto clean = sim;
        for (auto& s : clean.market.students) s.tags.clear();
        const auto base = defaultRanking(clean.market, clean.utilities);
        const auto ranked = applyPolicy(clean.market, clean.utilities, policy);
        for (int c = 0; c < clean.market.numColleges(); ++c)
            for (int i = 0; i < clean.market.numStudents(); ++i)
                REQUIRE(rank_compare(ranked[c][i], base[c][i]) == 0);
    }
    SECTION("all students flagged is the same ordering") {
        auto all = sim;
        for (auto& s : all.market.students) s.tags.insert("low_income");
        const auto ranked = applyPolicy(all.market, all.utilities, policy);
        const Matching a = deferredAcceptance(all.market, all.utilities);
        const Matching b = deferredAcceptance(all.market, all.utilities, &ranked);
        REQUIRE(a.assignment == b.assignment);
    }
    SECTION("flagged student with lower score overtakes") {
        Market m;
        m.zNames = {"x"};
        CollegeRecord c;
        c.id = 1;
        c.capacity = 1;
        m.colleges.push_back(c);
        for (int i = 0; i < 2; ++i) {
            StudentRecord s;
            s.id = i + 1;
            s.y = Vector::Zero(1);
            s.w = Vector::Zero(1);
            s.z = Vector::Zero(1);
            m.students.push_back(s);
        }
        m.students[1].tags.insert("low_income");
        m.lottery = {0.0, 0.0};
        LatentUtilities u;
        u.studentU = Matrix::Zero(2, 2);
        u.studentU(0, 1) = 1.0;
        u.studentU(1, 1) = 1.0;
        u.collegeV.resize(1, 2);
        u.collegeV << 2.0, 1.0;  // unflagged student has the higher score
        const auto ranking = applyPolicy(m, u, policy);
        const Matching match = deferredAcceptance(m, u, &ranking);
        REQUIRE(match.assignment == std::vector<int>{kOutsideId, 1});
    }
}

TEST_CASE("empty-scope and universal policies reproduce the baseline under shared shocks") {
    const auto sim = taggedSim(2);
    const Matching base = deferredAcceptance(sim.market, sim.utilities);

    PriorityPolicy empty = PriorityPolicy::none();
    const auto emptyRank = applyPolicy(sim.market, sim.utilities, empty);
    REQUIRE(deferredAcceptance(sim.market, sim.utilities, &emptyRank).assignment == base.assignment);

    auto all = sim;
    for (auto& s : all.market.students) s.tags.insert("low_income");
    PriorityPolicy universal;
    universal.scope = TermScope::everywhere();
    const auto uniRank = applyPolicy(all.market, all.utilities, universal);
    REQUIRE(deferredAcceptance(all.market, all.utilities, &uniRank).assignment == base.assignment);
}

TEST_CASE("counterfactual matchings stay stable under the policy ranking") {
    const auto sim = taggedSim(3);
    PriorityPolicy policy;
    policy.scope = TermScope::everywhere();
    const auto ranking = applyPolicy(sim.market, sim.utilities, policy);
    const Matching cf = deferredAcceptance(sim.market, sim.utilities, &ranking);
    const auto rep = auditStability(sim.market, sim.utilities, cf, &ranking);
    REQUIRE(rep.stable());
}

TEST_CASE("sorting index") {
    SECTION("worked example") {
        // two schools with values {1,1} and {3,3,4}
        const std::vector<double> values{1.0, 1.0, 3.0, 3.0, 4.0};
        const std::vector<int> groups{1, 1, 2, 2, 2};
        const double idx = sortingIndex(values, groups);
        REQUIRE(idx == Catch::Approx(testutil::regressionR2(values, groups)).margin(1e-12));
        REQUIRE(idx == Catch::Approx(0.827586206896552).epsilon(1e-9));
    }
    SECTION("equal school means give zero") {
        REQUIRE(sortingIndex({1.0, 2.0, 1.0, 2.0}, {1, 1, 2, 2}) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("zero within-school variance gives one") {
        REQUIRE(sortingIndex({1.0, 1.0, 5.0, 5.0}, {1, 1, 2, 2}) == Catch::Approx(1.0));
    }
    SECTION("no variance is NaN") {
        REQUIRE(std::isnan(sortingIndex({2.0, 2.0}, {1, 2})));
    }
    SECTION("matches the regression oracle on random data") {
        auto rng = RngStream::from_master(4);
        for (int t = 0; t < 50; ++t) {
            const int n = 20 + static_cast<int>(rng.uniform() * 100);
            std::vector<double> values(n);
            std::vector<int> groups(n);
            for (int i = 0; i < n; ++i) {
                values[i] = rng.normal();
                groups[i] = static_cast<int>(rng.uniform() * 4);
            }
            REQUIRE(sortingIndex(values, groups) ==
                    Catch::Approx(testutil::regressionR2(values, groups)).margin(1e-10));
        }
    }
    SECTION("affine invariance") {
        auto rng = RngStream::from_master(5);
        std::vector<double> values(60);
        std::vector<int> groups(60);
        for (int i = 0; i < 60; ++i) {
            values[i] = rng.normal();
            groups[i] = i % 3;
        }
        const double base = sortingIndex(values, groups);
        for (auto& v : values) v = 3.0 * v - 7.0;
        REQUIRE(sortingIndex(values, groups) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("welfare change") {
    const auto sim = taggedSim(6, 50);
    const Matching base = deferredAcceptance(sim.market, sim.utilities);

    SECTION("identical assignments are exactly zero") {
        const auto km = welfareChange(sim.utilities, sim.market, base.assignment, base.assignment, -0.173);
        for (double x : km) REQUIRE(x == 0.0);
    }
    SECTION("km conversion divides by the coefficient magnitude") {
        std::vector<int> cf = base.assignment;
        // force one student somewhere else
        int i = 0;
        while (cf[i] == kOutsideId) ++i;
        cf[i] = kOutsideId;
        const auto km = welfareChange(sim.utilities, sim.market, cf, base.assignment, -0.173);
        const double du = sim.utilities.studentU(i, 0) -
                          sim.utilities.studentU(i, sim.market.collegeIndexById(base.assignment[i]) + 1);
        REQUIRE(km[i] == Catch::Approx(du / 0.173));
    }
    SECTION("bad coefficients are rejected") {
        REQUIRE_THROWS_AS(welfareChange(sim.utilities, sim.market, base.assignment, base.assignment, 0.0),
                          InvalidInput);
        REQUIRE_THROWS_AS(welfareChange(sim.utilities, sim.market, base.assignment, base.assignment, 0.2),
                          InvalidInput);
    }
}

TEST_CASE("report invariants and the no-op policy") {
    const auto sim = taggedSim(7, 300);
    const auto chain = fakeChain(sim, 200);

    CounterfactualOptions opt;
    opt.nDraws = 40;
    opt.blocks = 4;
    opt.seed = 9;
    opt.abilityVariable = "s";

    PriorityPolicy policy;
    policy.scope = TermScope::everywhere();
    const auto rep = simulateCounterfactual(sim.market, sim.spec, chain, policy, sim.matching, opt);
    REQUIRE(rep.drawsUsed == 40);
    for (const auto& g : rep.groups) {
        REQUIRE(g.winners + g.losers + g.indifferent == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(g.enrollObserved.sum() == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(g.enrollPolicy.sum() == Catch::Approx(1.0).margin(1e-9));
    }
    REQUIRE(rep.sortingAbilityObserved >= 0.0);
    REQUIRE(rep.sortingAbilityObserved <= 1.0);
    REQUIRE(rep.sortingAbilityPolicy >= 0.0);
    REQUIRE(rep.sortingAbilityPolicy <= 1.0);

    // a no-op policy produces exactly zero welfare change in every draw
    const auto nop = simulateCounterfactual(sim.market, sim.spec, chain, PriorityPolicy::none(), sim.matching, opt);
    for (const auto& g : nop.groups) {
        REQUIRE(g.meanKm == 0.0);
        REQUIRE(g.indifferent == 1.0);
    }
}

TEST_CASE("draw selection uses equally spaced blocks") {
    const auto idx = ntumatch::detail::equallySpacedDraws(1000, 40, 4);
    REQUIRE(idx.size() == 40);
    REQUIRE(idx.front() == 0);
    REQUIRE(idx[10] == 330);  // second block starts a third of the way in
    REQUIRE(idx.back() == 999);
    REQUIRE_THROWS_AS(ntumatch::detail::equallySpacedDraws(10, 40, 4), InvalidInput);
}
