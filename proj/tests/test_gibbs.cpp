#include <catch2/catch_amalgamated.hpp>

#include "ntumatch/dgp.hpp"
#include "ntumatch/gibbs.hpp"
#include "ntumatch/io.hpp"
#include "testutil.hpp"

using namespace ntumatch;

namespace {

SimulatedMarket smallSim(std::uint64_t seed, int n = 50, std::vector<int> caps = {12, 10, 12}) {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = n;
    cfg.capacities = std::move(caps);
    cfg.seed = seed;
    return simulateMarket(cfg);
}

} // namespace

TEST_CASE("every sweep preserves stability of the observed matching") {
    const auto sim = smallSim(101);
    GibbsConfig cfg;
    cfg.iterations = 100;
    cfg.burnIn = 1;
    cfg.seed = 7;
    GibbsSampler sampler(sim.market, sim.matching, sim.spec, cfg);
    auto s = sampler.initState(0);
    REQUIRE(sampler.auditState(s).stable());
    for (int t = 0; t < 100; ++t) {
        sampler.sweep(s);
        const auto rep = sampler.auditState(s);
        REQUIRE(rep.blockingPairs.empty());
        REQUIRE(rep.irViolations.empty());
    }
}

TEST_CASE("college update respects its truncation bounds") {
    const auto sim = smallSim(102);
    GibbsConfig cfg;
    cfg.seed = 8;
    GibbsSampler sampler(sim.market, sim.matching, sim.spec, cfg);
    auto s = sampler.initState(0);
    for (int t = 0; t < 50; ++t) {
        sampler.updateCollegeSide(s);
        const int C = sim.market.numColleges();
        for (int c = 0; c < C; ++c) {
            REQUIRE(s.cutoffs[c].binding);
            double minMatched = std::numeric_limits<double>::infinity();
            double maxWanting = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < sim.market.numStudents(); ++i) {
                const int matchedIdx = sim.matching.assignment[i] == kOutsideId
                                           ? 0
                                           : sim.market.collegeIndexById(sim.matching.assignment[i]) + 1;
                if (sim.matching.assignment[i] == sim.market.colleges[c].id)
                    minMatched = std::min(minMatched, s.v(c, i));
                else if (s.u(i, c + 1) > s.u(i, matchedIdx))
                    maxWanting = std::max(maxWanting, s.v(c, i));
            }
            REQUIRE(s.cutoffs[c].value == minMatched);
            // rejected students who prefer c sit strictly below the cutoff
            REQUIRE(maxWanting < minMatched);
        }
        sampler.updateStudentSide(s);
        sampler.updateParameters(s);
    }
}

TEST_CASE("student update makes the match the feasible argmax") {
    const auto sim = smallSim(103);
    GibbsConfig cfg;
    cfg.seed = 9;
    GibbsSampler sampler(sim.market, sim.matching, sim.spec, cfg);
    auto s = sampler.initState(0);
    for (int t = 0; t < 100; ++t) {
        sampler.updateCollegeSide(s);
        sampler.updateStudentSide(s);
        for (int i = 0; i < sim.market.numStudents(); ++i) {
            const int matchedIdx = sim.matching.assignment[i] == kOutsideId
                                       ? 0
                                       : sim.market.collegeIndexById(sim.matching.assignment[i]) + 1;
            double bestFeasible = s.u(i, 0);
            int arg = 0;
            for (int c = 0; c < sim.market.numColleges(); ++c) {
                const bool feasible = s.cutoffs[c].admits(s.v(c, i));
                if (feasible && s.u(i, c + 1) > bestFeasible) {
                    bestFeasible = s.u(i, c + 1);
                    arg = c + 1;
                }
            }
            REQUIRE(arg == matchedIdx);
        }
        sampler.updateParameters(s);
    }
}

TEST_CASE("parameter step matches the conjugate posterior in the data-rich limit") {
    // Freeze the latent state at generated values and update parameters only:
    // draws must concentrate on the closed-form posterior mean.
    auto cfg = DgpConfig::standard();
    cfg.nStudents = 2000;
    cfg.capacities = {500, 450, 500};
    cfg.seed = 104;
    const auto sim = simulateMarket(cfg);
    GibbsConfig gc;
    gc.seed = 10;
    GibbsSampler sampler(sim.market, sim.matching, sim.spec, gc);
    auto s = sampler.initState(0);
    s.u = sim.utilities.studentU;
    s.v = sim.utilities.collegeV;

    const int reps = 200;
    Vector acc = Vector::Zero(sampler.parameterNames().size() - 1);
    for (int t = 0; t < reps; ++t) {
        GibbsSampler::State frozen = s;  // keep latents fixed
        frozen.rng = RngStream::from_master(1000 + t);
        sampler.updateParameters(frozen);
        acc += frozen.coeffs;
    }
    acc /= reps;

    // independent oracle: per-college regression of u on (y, s, z)
    const int n = sim.market.numStudents();
    Matrix X(n, 3);
    Vector yresp(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = sim.market.students[i].y[0];
        X(i, 1) = sim.market.students[i].z[0];
        X(i, 2) = sim.market.students[i].z[1];
        yresp[i] = sim.utilities.studentU(i, 1);
    }
    const Vector oracle = testutil::conjugatePosteriorMean(X, yresp, 1.0, 100.0);
    REQUIRE(acc[0] == Catch::Approx(oracle[0]).margin(0.01));
    REQUIRE(acc[1] == Catch::Approx(oracle[1]).margin(0.01));
    REQUIRE(acc[2] == Catch::Approx(oracle[2]).margin(0.01));
    // and the posterior sits near the generating truth at this n
    REQUIRE(acc[0] == Catch::Approx(-1.0).margin(0.05));
    REQUIRE(acc[1] == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("coefficients without data revert to the prior") {
    const auto sim = smallSim(105);
    EmpiricalSpec spec = sim.spec;
    // a coefficient scoped to a college id that does not exist gets no rows
    spec.studentTerms.push_back({"orphan", "s", "", Side::Student, TermScope::ofCollege(99)});
    GibbsConfig cfg;
    cfg.seed = 11;
    cfg.priorVarScale = 100.0;
    GibbsSampler sampler(sim.market, sim.matching, spec, cfg);
    auto s = sampler.initState(0);
    const int orphanIdx = sampler.design().coefficientIndex("orphan");
    std::vector<double> draws;
    for (int t = 0; t < 3000; ++t) {
        sampler.sweep(s);
        draws.push_back(s.coeffs[orphanIdx]);
    }
    REQUIRE(std::fabs(mean(draws)) < 4.0 * std::sqrt(100.0 / 3000.0));
    REQUIRE(variance(draws) == Catch::Approx(100.0).epsilon(0.15));
}

TEST_CASE("prior scale barely moves the posterior at this sample size") {
    const auto sim = smallSim(106, 1500, {380, 350, 380});
    auto run = [&](double priorVar) {
        GibbsConfig cfg;
        cfg.iterations = 1500;
        cfg.burnIn = 500;
        cfg.seed = 12;
        cfg.priorVarScale = priorVar;
        return runChain(sim.market, sim.matching, sim.spec, cfg).posteriorMean();
    };
    const Vector a = run(100.0);
    const Vector b = run(10.0);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("chains are deterministic in the seed") {
    const auto sim = smallSim(107);
    GibbsConfig cfg;
    cfg.iterations = 300;
    cfg.burnIn = 100;
    cfg.seed = 13;
    const auto a = runChain(sim.market, sim.matching, sim.spec, cfg);
    const auto b = runChain(sim.market, sim.matching, sim.spec, cfg);
    REQUIRE(a.draws == b.draws);

    GibbsConfig cfg2 = cfg;
    cfg2.seed = 14;
    const auto c = runChain(sim.market, sim.matching, sim.spec, cfg2);
    REQUIRE(a.draws != c.draws);
}

TEST_CASE("shock-scale group variance is recovered") {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = 1500;
    cfg.capacities = {380, 350, 380};
    cfg.shockScale = {1.0, 1.0, 2.0};  // college 3 truly noisier
    cfg.seed = 108;
    const auto sim = simulateMarket(cfg);
    GibbsConfig gc;
    gc.iterations = 4000;
    gc.burnIn = 2000;
    gc.seed = 15;
    const auto chain = runChain(sim.market, sim.matching, sim.spec, gc);
    const int k = static_cast<int>(chain.parameterNames.size()) - 1;
    REQUIRE(chain.parameterNames[k] == "sigma_eps_3");
    REQUIRE(chain.posteriorMean()[k] == Catch::Approx(2.0).margin(0.5));
}

TEST_CASE("checkpoint resume reproduces the uninterrupted chain") {
    const auto sim = smallSim(109);
    GibbsConfig cfg;
    cfg.iterations = 200;
    cfg.burnIn = 50;
    cfg.seed = 16;
    GibbsSampler sampler(sim.market, sim.matching, sim.spec, cfg);
    const auto full = sampler.run(0);

    // run 120 sweeps, checkpoint, restore, finish
    GibbsConfig head = cfg;
    head.iterations = 120;
    GibbsSampler headSampler(sim.market, sim.matching, sim.spec, head);
    auto s = headSampler.initState(0);
    const auto part = headSampler.runFrom(s, Matrix(0, static_cast<int>(sampler.parameterNames().size())));
    const std::string prefix = "checkpoint_test_tmp";
    saveCheckpoint(sampler, s, part.draws, prefix);
    auto [restored, draws] = loadCheckpoint(sampler, prefix);
    const auto resumed = sampler.runFrom(restored, draws);
    REQUIRE(resumed.draws.rows() == full.draws.rows());
    REQUIRE((resumed.draws - full.draws).cwiseAbs().maxCoeff() == 0.0);
    std::remove((prefix + ".draws.csv").c_str());
    std::remove((prefix + ".state.txt").c_str());
}

TEST_CASE("gender-restricted colleges stay infeasible for the other gender") {
    auto sim = smallSim(110, 60, {15, 12, 15});
    Market& m = sim.market;
    m.colleges[0].genderRestriction = GenderRestriction::FemaleOnly;
    for (int i = 0; i < m.numStudents(); ++i) m.students[i].gender = (i % 2 == 0) ? "f" : "m";
    // rebuild a consistent observed matching under the restriction
    const Matching observed = deferredAcceptance(m, sim.utilities);

    GibbsConfig cfg;
    cfg.iterations = 60;
    cfg.burnIn = 10;
    cfg.seed = 17;
    GibbsSampler sampler(m, observed, sim.spec, cfg);
    auto s = sampler.initState(0);
    for (int t = 0; t < 60; ++t) {
        sampler.sweep(s);
        REQUIRE(sampler.auditState(s).stable());
    }
}

TEST_CASE("out-of-market students hold seats but express no preferences") {
    auto sim = smallSim(111, 60, {15, 12, 15});
    Market& m = sim.market;
    // mark three matched students as out-of-market
    int marked = 0;
    for (int i = 0; i < m.numStudents() && marked < 3; ++i) {
        if (sim.matching.assignment[i] != kOutsideId) {
            m.students[i].tags.insert("out_of_market");
            ++marked;
        }
    }
    GibbsConfig cfg;
    cfg.iterations = 80;
    cfg.burnIn = 20;
    cfg.seed = 18;
    GibbsSampler sampler(m, sim.matching, sim.spec, cfg);
    auto s = sampler.initState(0);
    for (int t = 0; t < 80; ++t) {
        sampler.sweep(s);
        REQUIRE(sampler.auditState(s).stable());
        // out-of-market students never get a u row
        for (int i = 0; i < m.numStudents(); ++i)
            if (m.outOfMarket(i))
                for (int c = 0; c <= m.numColleges(); ++c) REQUIRE(s.u(i, c) == 0.0);
    }
}

TEST_CASE("unmatched out-of-market student is rejected") {
    auto sim = smallSim(112);
    Market& m = sim.market;
    for (int i = 0; i < m.numStudents(); ++i) {
        if (sim.matching.assignment[i] == kOutsideId) {
            m.students[i].tags.insert("out_of_market");
            break;
        }
    }
    GibbsConfig cfg;
    REQUIRE_THROWS_AS(GibbsSampler(m, sim.matching, sim.spec, cfg), DataError);
}

TEST_CASE("config validation") {
    GibbsConfig cfg;
    cfg.burnIn = cfg.iterations;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidInput);
    GibbsConfig cfg2;
    cfg2.priorVarScale = 0.0;
    REQUIRE_THROWS_AS(cfg2.validate(), InvalidInput);
}
