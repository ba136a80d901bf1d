#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "ntumatch/dgp.hpp"
#include "testutil.hpp"

using namespace ntumatch;

TEST_CASE("benchmark sample: shapes, binding capacities, excess demand") {
    auto cfg = DgpConfig::standard();
    cfg.seed = 31337;
    const auto sim = simulateMarket(cfg);
    REQUIRE(sim.market.numStudents() == 3000);
    REQUIRE(sim.market.totalCapacity() == 2200);
    REQUIRE(sim.market.hasExcessDemand());
    for (const auto& c : sim.matching.cutoffs) REQUIRE(c.binding);
    REQUIRE_FALSE(sim.nonBindingWarning);
    REQUIRE(auditStability(sim.market, sim.utilities, sim.matching).stable());
}

TEST_CASE("covariate moments match the configuration") {
    auto cfg = DgpConfig::standard();
    cfg.seed = 9;
    const auto sim = simulateMarket(cfg);
    const int n = sim.market.numStudents();
    auto col = [&](auto getter) {
        std::vector<double> xs(n);
        for (int i = 0; i < n; ++i) xs[i] = getter(sim.market.students[i]);
        return xs;
    };
    const double seMean = 6.0 / std::sqrt(static_cast<double>(n));        // sd 6
    const double seVar = 36.0 * std::sqrt(2.0 / (n - 1.0));               // var of sample variance
    auto checkDist = [&](std::vector<double> xs, double mu, double var) {
        REQUIRE(std::fabs(mean(xs) - mu) < 4 * seMean);
        REQUIRE(std::fabs(variance(xs) - var) < 4 * seVar);
    };
    checkDist(col([](const StudentRecord& s) { return s.y[0]; }), 0.0, 36.0);
    checkDist(col([](const StudentRecord& s) { return s.w[2]; }), 0.0, 36.0);
    checkDist(col([](const StudentRecord& s) { return s.z[0]; }), 5.0, 36.0);  // s
    checkDist(col([](const StudentRecord& s) { return s.z[1]; }), 0.0, 36.0);  // z
    checkDist(col([](const StudentRecord& s) { return s.z[2]; }), 0.0, 36.0);  // m
}

TEST_CASE("same seed reproduces the market bit for bit") {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = 500;
    cfg.capacities = {120, 110, 120};
    cfg.seed = 42;
    const auto a = simulateMarket(cfg);
    const auto b = simulateMarket(cfg);
    REQUIRE(a.matching.assignment == b.matching.assignment);
    REQUIRE(a.utilities.studentU == b.utilities.studentU);
    REQUIRE(a.utilities.collegeV == b.utilities.collegeV);
    for (int i = 0; i < 500; ++i) REQUIRE(a.market.students[i].y == b.market.students[i].y);
}

TEST_CASE("no excess demand is rejected") {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = 3000;
    cfg.capacities = {1500, 1500, 1500};
    REQUIRE_THROWS_AS(simulateMarket(cfg), InvalidInput);
}

TEST_CASE("student order does not change the matched sets") {
    auto cfg = DgpConfig::standard();
    cfg.nStudents = 400;
    cfg.capacities = {90, 80, 90};
    cfg.seed = 77;
    const auto sim = simulateMarket(cfg);

    // permute students (reverse), rerun DA on the permuted market
    Market perm = sim.market;
    LatentUtilities permU = sim.utilities;
    const int n = perm.numStudents();
    for (int i = 0; i < n; ++i) {
        perm.students[i] = sim.market.students[n - 1 - i];
        perm.lottery[i] = sim.market.lottery[n - 1 - i];
        permU.studentU.row(i) = sim.utilities.studentU.row(n - 1 - i);
        for (int c = 0; c < perm.numColleges(); ++c) permU.collegeV(c, i) = sim.utilities.collegeV(c, n - 1 - i);
    }
    const Matching matchPerm = deferredAcceptance(perm, permU);
    for (int c = 0; c < perm.numColleges(); ++c) {
        std::set<int> a, b;
        for (int i = 0; i < n; ++i) {
            if (sim.matching.assignment[i] == c + 1) a.insert(sim.market.students[i].id);
            if (matchPerm.assignment[i] == c + 1) b.insert(perm.students[i].id);
        }
        REQUIRE(a == b);
    }
}

TEST_CASE("buildUtilities evaluates terms and interactions") {
    Market m;
    m.zNames = {"income"};
    m.attributeNames = {"tuition", "distance"};
    CollegeRecord c;
    c.id = 1;
    c.capacity = 1;
    c.attributes = Vector(2);
    c.attributes << 2.0, 2.81;
    m.colleges.push_back(c);
    StudentRecord s;
    s.id = 1;
    s.y = Vector::Zero(1);
    s.w = Vector::Zero(1);
    s.z = Vector(1);
    s.z << 3.0;
    m.students.push_back(s);
    m.lottery = {0.0};

    LatentUtilities shocks;
    shocks.studentU = Matrix::Zero(1, 2);
    shocks.collegeV = Matrix::Zero(1, 1);

    SECTION("single distance term") {
        EmpiricalSpec spec;
        spec.studentTerms.push_back({"b_dist", "distance", "", Side::Student, TermScope::everywhere()});
        Vector coeffs(1);
        coeffs << -1.0;
        const auto u = buildUtilities(spec, m, coeffs, shocks);
        REQUIRE(u.studentU(0, 1) == Catch::Approx(-2.81));
    }
    SECTION("empty spec leaves the shock alone") {
        EmpiricalSpec spec;
        shocks.studentU(0, 1) = 0.37;
        const auto u = buildUtilities(spec, m, Vector(0), shocks);
        REQUIRE(u.studentU(0, 1) == 0.37);
    }
    SECTION("interaction equals the product of the base columns") {
        EmpiricalSpec spec;
        spec.studentTerms.push_back({"b_ti", "tuition", "income", Side::Student, TermScope::everywhere()});
        Vector coeffs(1);
        coeffs << 2.0;
        const auto u = buildUtilities(spec, m, coeffs, shocks);
        REQUIRE(u.studentU(0, 1) == Catch::Approx(2.0 * (2.0 * 3.0)));
    }
    SECTION("unknown variable fails loudly") {
        EmpiricalSpec spec;
        spec.studentTerms.push_back({"b", "notacolumn", "", Side::Student, TermScope::everywhere()});
        REQUIRE_THROWS_AS(buildUtilities(spec, m, Vector::Zero(1), shocks), SchemaError);
    }
    SECTION("wrong coefficient arity") {
        EmpiricalSpec spec;
        spec.studentTerms.push_back({"b", "income", "", Side::Student, TermScope::everywhere()});
        REQUIRE_THROWS_AS(buildUtilities(spec, m, Vector::Zero(2), shocks), InvalidInput);
    }
}

TEST_CASE("reduced preset zeroes the cross coefficients") {
    const auto cfg = DgpConfig::reduced();
    REQUIRE(cfg.betaZ[0] == 1.0);
    REQUIRE(cfg.betaZ[1] == 0.0);
    REQUIRE(cfg.betaZ[2] == 0.0);
    REQUIRE(cfg.gammaZ[2] == 1.0);
    REQUIRE(cfg.gammaZ[0] == 0.0);
}

TEST_CASE("type-scoped coefficients apply only to that type") {
    Market m;
    m.zNames = {"q"};
    for (int c = 1; c <= 2; ++c) {
        CollegeRecord col;
        col.id = c;
        col.capacity = 1;
        col.type = c == 1 ? SchoolType::NonSelecting : SchoolType::SelectingA;
        m.colleges.push_back(col);
    }
    StudentRecord s;
    s.id = 1;
    s.y = Vector::Zero(2);
    s.w = Vector::Zero(2);
    s.z = Vector(1);
    s.z << 2.0;
    m.students.push_back(s);
    m.lottery = {0.0};

    EmpiricalSpec spec;
    spec.studentTerms.push_back({"b_sel", "q", "", Side::Student, TermScope::ofType(SchoolType::SelectingA)});
    LatentUtilities shocks;
    shocks.studentU = Matrix::Zero(1, 3);
    shocks.collegeV = Matrix::Zero(2, 1);
    Vector coeffs(1);
    coeffs << 1.5;
    const auto u = buildUtilities(spec, m, coeffs, shocks);
    REQUIRE(u.studentU(0, 1) == 0.0);                  // non-selecting college untouched
    REQUIRE(u.studentU(0, 2) == Catch::Approx(3.0));   // selecting college gets the term
}
