#ifndef NTUMATCH_DGP_HPP
#define NTUMATCH_DGP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ntumatch/design.hpp"
#include "ntumatch/market.hpp"
#include "ntumatch/matching_ops.hpp"
#include "ntumatch/rng.hpp"

namespace ntumatch {

struct CovariateDist {
    double mean = 0.0;
    double var = 36.0;
};

/// Synthetic-market generator for the three-college Monte Carlo benchmark
/// family: student utility beta_d*y + beta_s*s + beta_z*z + eps, college
/// utility gamma_w*w + gamma_m*m + gamma_z*z + eta, all covariates normal.
struct DgpConfig {
    int nStudents = 3000;
    std::vector<int> capacities{750, 700, 750};
    Vector betaD, betaS, betaZ;    // per-college student coefficients
    Vector gammaW, gammaM, gammaZ; // per-college college coefficients
    CovariateDist yDist{0.0, 36.0};
    CovariateDist wDist{0.0, 36.0};
    CovariateDist sDist{5.0, 36.0};
    CovariateDist zDist{0.0, 36.0};
    CovariateDist mDist{0.0, 36.0};
    std::vector<double> shockScale;  // per-college sd of eps; default 1
    int estimateScaleCollege = 3;    // college id whose shock sd is treated unknown; 0 = none
    std::uint64_t seed = 0;

    int numColleges() const { return static_cast<int>(capacities.size()); }

    /// Benchmark design: 3 colleges, capacities {750,700,750}, beta_d = -1
    /// (normalization), every other coefficient 1.
    static DgpConfig standard() {
        DgpConfig cfg;
        const int C = cfg.numColleges();
        cfg.betaD = Vector::Constant(C, -1.0);
        cfg.betaS = Vector::Constant(C, 1.0);
        cfg.betaZ = Vector::Constant(C, 1.0);
        cfg.gammaW = Vector::Constant(C, 1.0);
        cfg.gammaM = Vector::Constant(C, 1.0);
        cfg.gammaZ = Vector::Constant(C, 1.0);
        cfg.shockScale.assign(C, 1.0);
        return cfg;
    }

    /// Reduced-dimension variant: z enters only student utility for college 1
    /// and only college 3's evaluation.
    static DgpConfig reduced() {
        DgpConfig cfg = standard();
        cfg.betaZ << 1.0, 0.0, 0.0;
        cfg.gammaZ << 0.0, 0.0, 1.0;
        return cfg;
    }

    void validate() const {
        const int C = numColleges();
        if (nStudents < 2) throw InvalidInput("nStudents too small");
        if (C < 1) throw InvalidInput("need at least one college");
        int total = 0;
        for (int q : capacities) {
            if (q < 1) throw InvalidInput("capacities must be positive");
            total += q;
        }
        if (total >= nStudents) throw InvalidInput("no excess demand: total capacity must be < nStudents");
        for (const auto* d : {&yDist, &wDist, &sDist, &zDist, &mDist})
            if (!(d->var > 0.0)) throw InvalidInput("covariate variances must be positive");
        if (betaD.size() != C || betaS.size() != C || betaZ.size() != C || gammaW.size() != C ||
            gammaM.size() != C || gammaZ.size() != C)
            throw InvalidInput("coefficient vectors must have one entry per college");
        if (static_cast<int>(shockScale.size()) != C) throw InvalidInput("shockScale needs one entry per college");
        for (double s : shockScale)
            if (!(s > 0.0)) throw InvalidInput("shock scales must be positive");
    }

    /// The generator's utility model, as an estimable spec. Coefficient order:
    /// beta_d_c, beta_s_c, beta_z_c per college, then gamma blocks.
    EmpiricalSpec spec() const {
        EmpiricalSpec s;
        const int C = numColleges();
        for (int c = 1; c <= C; ++c) {
            const std::string cs = std::to_string(c);
            s.studentTerms.push_back({"beta_d_" + cs, "y", "", Side::Student, TermScope::ofCollege(c)});
            s.studentTerms.push_back({"beta_s_" + cs, "s", "", Side::Student, TermScope::ofCollege(c)});
            s.studentTerms.push_back({"beta_z_" + cs, "z", "", Side::Student, TermScope::ofCollege(c)});
        }
        for (int c = 1; c <= C; ++c) {
            const std::string cs = std::to_string(c);
            s.collegeTerms.push_back({"gamma_w_" + cs, "w", "", Side::College, TermScope::ofCollege(c)});
            s.collegeTerms.push_back({"gamma_m_" + cs, "m", "", Side::College, TermScope::ofCollege(c)});
            s.collegeTerms.push_back({"gamma_z_" + cs, "z", "", Side::College, TermScope::ofCollege(c)});
        }
        if (estimateScaleCollege > 0)
            s.shockScales.push_back({"sigma_eps_" + std::to_string(estimateScaleCollege),
                                     TermScope::ofCollege(estimateScaleCollege), true,
                                     shockScale[estimateScaleCollege - 1]});
        return s;
    }

    Vector trueCoefficients() const {
        const int C = numColleges();
        Vector t(6 * C);
        for (int c = 0; c < C; ++c) {
            t[3 * c + 0] = betaD[c];
            t[3 * c + 1] = betaS[c];
            t[3 * c + 2] = betaZ[c];
            t[3 * C + 3 * c + 0] = gammaW[c];
            t[3 * C + 3 * c + 1] = gammaM[c];
            t[3 * C + 3 * c + 2] = gammaZ[c];
        }
        return t;
    }
};

struct SimulatedMarket {
    Market market;
    LatentUtilities utilities;
    Matching matching;
    EmpiricalSpec spec;
    Vector trueCoefficients;
    bool nonBindingWarning = false;  // some capacity did not bind in this draw
};

inline SimulatedMarket simulateMarket(const DgpConfig& cfg) {
    cfg.validate();
    const int n = cfg.nStudents;
    const int C = cfg.numColleges();

    auto master = RngStream::from_master(cfg.seed);
    auto covRng = master.substream("covariates");
    auto epsRng = master.substream("student-shocks");
    auto etaRng = master.substream("college-shocks");
    auto lotRng = master.substream("lottery");

    SimulatedMarket out;
    Market& m = out.market;
    m.zNames = {"s", "z", "m"};
    m.colleges.resize(C);
    for (int c = 0; c < C; ++c) {
        m.colleges[c].id = c + 1;
        m.colleges[c].capacity = cfg.capacities[c];
        m.colleges[c].type = SchoolType::SelectingA;
    }
    m.students.resize(n);
    const double sdY = std::sqrt(cfg.yDist.var), sdW = std::sqrt(cfg.wDist.var);
    const double sdS = std::sqrt(cfg.sDist.var), sdZ = std::sqrt(cfg.zDist.var), sdM = std::sqrt(cfg.mDist.var);
    for (int i = 0; i < n; ++i) {
        auto& s = m.students[i];
        s.id = i + 1;
        s.y.resize(C);
        s.w.resize(C);
        s.z.resize(3);
        for (int c = 0; c < C; ++c) s.y[c] = covRng.normal(cfg.yDist.mean, sdY);
        for (int c = 0; c < C; ++c) s.w[c] = covRng.normal(cfg.wDist.mean, sdW);
        s.z[0] = covRng.normal(cfg.sDist.mean, sdS);
        s.z[1] = covRng.normal(cfg.zDist.mean, sdZ);
        s.z[2] = covRng.normal(cfg.mDist.mean, sdM);
    }
    m.lottery.resize(n);
    for (int i = 0; i < n; ++i) m.lottery[i] = lotRng.uniform();
    m.validate();

    LatentUtilities shocks;
    shocks.studentU.resize(n, C + 1);
    shocks.collegeV.resize(C, n);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c <= C; ++c) shocks.studentU(i, c) = epsRng.normal();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < n; ++i) shocks.collegeV(c, i) = etaRng.normal();

    out.spec = cfg.spec();
    out.trueCoefficients = cfg.trueCoefficients();
    // DgpConfig scales are part of the truth; buildUtilities applies them.
    CompiledDesign design = compileDesign(out.spec, m);
    for (int c = 0; c < C; ++c)
        if (design.scaleGroup[c] < 0) design.fixedScale[c] = cfg.shockScale[c];
    out.utilities = buildUtilities(design, m, out.trueCoefficients, shocks);

    out.matching = deferredAcceptance(m, out.utilities);
    for (int c = 0; c < C; ++c)
        if (!out.matching.cutoffs[c].binding) out.nonBindingWarning = true;
    return out;
}

} // namespace ntumatch

#endif
