#ifndef NTUMATCH_GIBBS_HPP
#define NTUMATCH_GIBBS_HPP

#include <Eigen/Cholesky>
#include <cmath>
#include <string>
#include <vector>

#include "ntumatch/design.hpp"
#include "ntumatch/market.hpp"
#include "ntumatch/matching_ops.hpp"
#include "ntumatch/parallel.hpp"
#include "ntumatch/rng.hpp"
#include "ntumatch/truncated_normal.hpp"

namespace ntumatch {

struct GibbsConfig {
    int iterations = 50000;
    int burnIn = 20000;
    int chains = 1;
    int thin = 1;
    double priorVarScale = 100.0;   // prior variance of every coefficient
    double sigmaPriorScale = 1.0;   // \bar sigma^2 of the variance prior
    double sigmaPriorDof = 2.0;     // nu of the variance prior
    std::uint64_t seed = 0;
    int auditEvery = 0;             // >0: stability-audit the latent state every k sweeps
    // Coefficient start points are jittered around zero by this sd. Large
    // jitter can seed a sign-flipped metastable mode of the college-side
    // block that takes far more sweeps to escape than a desk-scale budget.
    double initJitterSd = 0.3;

    void validate() const {
        if (iterations < 1) throw InvalidInput("iterations must be positive");
        if (burnIn < 0 || burnIn >= iterations) throw InvalidInput("burnIn must be in [0, iterations)");
        if (chains < 1) throw InvalidInput("chains must be positive");
        if (thin < 1) throw InvalidInput("thin must be >= 1");
        if (initJitterSd < 0.0) throw InvalidInput("initJitterSd must be >= 0");
        if (!(priorVarScale > 0.0)) throw InvalidInput("priorVarScale must be positive");
        if (!(sigmaPriorScale > 0.0) || !(sigmaPriorDof > 0.0)) throw InvalidInput("bad variance prior");
    }
};

struct PosteriorChain {
    std::vector<std::string> parameterNames;
    Matrix draws;  // kept iterations x parameters
    std::uint64_t seed = 0;
    int chainIndex = 0;
    int auditChecks = 0;
    int auditViolations = 0;
    int cutoffTies = 0;

    int numKept() const { return static_cast<int>(draws.rows()); }

    Vector posteriorMean() const { return draws.colwise().mean(); }

    Vector posteriorSd() const {
        Vector m = posteriorMean();
        Vector out(draws.cols());
        for (int k = 0; k < draws.cols(); ++k)
            out[k] = std::sqrt((draws.col(k).array() - m[k]).square().sum() /
                               std::max<int>(1, static_cast<int>(draws.rows()) - 1));
        return out;
    }
};

namespace detail {

/// Marsaglia-Tsang gamma(shape,1) draw, shape >= 1.
inline double sample_gamma(double shape, RngStream& rng) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

inline double sample_chi_squared(double dof, RngStream& rng) { return 2.0 * sample_gamma(0.5 * dof, rng); }

} // namespace detail

/// Data-augmentation Gibbs sampler for the observed stable matching. Each
/// sweep redraws college-side utilities under the stability truncations, then
/// student-side utilities given the implied cutoffs, then the coefficients
/// and any free shock variance from their conjugate full conditionals.
class GibbsSampler {
  public:
    struct State {
        Matrix u;                    // n x (C+1); column 0 = outside option
        Matrix v;                    // C x n; only sampled entries meaningful
        Vector coeffs;               // global coefficient vector
        std::vector<double> sigma2;  // per shock-scale group
        std::vector<Cutoff> cutoffs;
        RngStream rng{0};
        long sweepsDone = 0;
        int cutoffTies = 0;
        int chainIndex = 0;
        // linear indices implied by coeffs; refreshed after every coefficient move
        std::vector<std::vector<double>> meanU, meanV;
    };

    GibbsSampler(const Market& market, const Matching& observed, const EmpiricalSpec& spec, GibbsConfig cfg)
        : market_(market), cfg_(cfg), design_(compileDesign(spec, market)) {
        cfg_.validate();
        const int n = market_.numStudents();
        const int C = market_.numColleges();
        if (static_cast<int>(observed.assignment.size()) != n) throw InvalidInput("observed matching size mismatch");

        matchedOption_.resize(n);
        matchedLists_.assign(C, {});
        for (int i = 0; i < n; ++i) {
            if (observed.assignment[i] == kOutsideId) {
                matchedOption_[i] = 0;
            } else {
                const int c = market_.collegeIndexById(observed.assignment[i]);
                if (!market_.eligible(i, c))
                    throw DataError("student " + std::to_string(market_.students[i].id) +
                                    " matched to a gender-restricted college");
                matchedOption_[i] = c + 1;
                matchedLists_[c].push_back(i);
            }
        }

        inMarket_.resize(n);
        for (int i = 0; i < n; ++i) inMarket_[i] = !market_.outOfMarket(i);
        for (int i = 0; i < n; ++i)
            if (!inMarket_[i] && matchedOption_[i] == 0)
                throw DataError("out-of-market student " + std::to_string(market_.students[i].id) + " is unmatched");

        // Colleges with a modeled evaluation: selecting and full in the data.
        vModeled_.assign(C, false);
        for (int c = 0; c < C; ++c) {
            const bool full = static_cast<int>(matchedLists_[c].size()) == market_.colleges[c].capacity;
            vModeled_[c] = market_.colleges[c].selecting() && full;
        }

        // v is sampled for matched students plus eligible in-market students.
        vSampled_.assign(C, std::vector<char>(n, 0));
        vRows_.assign(C, {});
        for (int c = 0; c < C; ++c) {
            if (!vModeled_[c]) continue;
            for (int i = 0; i < n; ++i) {
                const bool matchedHere = matchedOption_[i] == c + 1;
                if (matchedHere || (inMarket_[i] && market_.eligible(i, c))) {
                    vSampled_[c][i] = 1;
                    vRows_[c].push_back(i);
                }
            }
            if (vRows_[c].empty()) throw StateCorruption("modeled college with no scored students");
        }

        uRows_.clear();
        for (int i = 0; i < n; ++i)
            if (inMarket_[i]) uRows_.push_back(i);

        const int p = design_.numCoefficients();
        priorPrecision_ = Matrix::Identity(p, p) / cfg_.priorVarScale;

        // Fixed Gram blocks: coefficients and sigma move, covariates do not.
        uGram_.resize(C);
        vGram_.resize(C);
        for (int c = 0; c < C; ++c) {
            uGram_[c] = gram(design_.studentBlocks[c], uRows_);
            if (vModeled_[c]) vGram_[c] = gram(design_.collegeBlocks[c], vRows_[c]);
        }

        parameterNames_ = design_.coefficientNames;
        for (std::size_t g = 0; g < design_.scaleNames.size(); ++g)
            if (design_.scaleEstimated[g]) {
                parameterNames_.push_back(design_.scaleNames[g]);
                estimatedGroups_.push_back(static_cast<int>(g));
            }
    }

    const std::vector<std::string>& parameterNames() const { return parameterNames_; }
    const CompiledDesign& design() const { return design_; }
    const GibbsConfig& config() const { return cfg_; }

    State initState(int chainIndex) const {
        const int n = market_.numStudents();
        const int C = market_.numColleges();
        State s;
        s.chainIndex = chainIndex;
        s.rng = RngStream::from_master(cfg_.seed).substream("chain", static_cast<std::uint64_t>(chainIndex));
        const int p = design_.numCoefficients();
        s.coeffs = Vector::Zero(p);
        if (cfg_.initJitterSd > 0.0)
            for (int k = 0; k < p; ++k) s.coeffs[k] = cfg_.initJitterSd * s.rng.normal();
        s.sigma2.assign(design_.scaleNames.size(), 1.0);
        for (std::size_t g = 0; g < design_.scaleNames.size(); ++g)
            if (!design_.scaleEstimated[g]) s.sigma2[g] = design_.scaleValues[g] * design_.scaleValues[g];

        // Latent start: index plus shock, with every student's own match
        // lifted strictly to the top so the observed matching is stable under
        // the initial state no matter what the cutoffs turn out to be.
        refreshMeans(s);
        s.u = Matrix::Zero(n, C + 1);
        s.v = Matrix::Zero(C, n);
        for (int i : uRows_) {
            s.u(i, 0) = s.rng.normal();
            for (int c = 0; c < C; ++c) s.u(i, c + 1) = s.meanU[c][i] + sigmaOf(s, c) * s.rng.normal();
            const int m = matchedOption_[i];
            double best = -std::numeric_limits<double>::infinity();
            for (int o = 0; o <= C; ++o)
                if (o != m) best = std::max(best, s.u(i, o));
            s.u(i, m) = best + std::fabs(s.rng.normal()) + 1e-8;
        }
        for (int c = 0; c < C; ++c)
            for (int i : vRows_[c]) s.v(c, i) = s.meanV[c][i] + s.rng.normal();
        s.cutoffs.assign(C, Cutoff::none());
        for (int c = 0; c < C; ++c)
            if (vModeled_[c]) {
                double mn = std::numeric_limits<double>::infinity();
                for (int i : matchedLists_[c]) mn = std::min(mn, s.v(c, i));
                s.cutoffs[c] = Cutoff::at(mn);
            }
        return s;
    }

    /// Step 1: redraw college-side utilities and cutoffs.
    void updateCollegeSide(State& s) const {
        const int C = market_.numColleges();
        constexpr double inf = std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) {
            if (!vModeled_[c]) continue;
            // Partition by current student preferences: strictly-prefer-c
            // students bound the matched draws from below.
            double vBar = -inf;
            for (int i : vRows_[c]) {
                if (matchedOption_[i] == c + 1 || !inMarket_[i]) continue;
                if (s.u(i, c + 1) > s.u(i, matchedOption_[i])) vBar = std::max(vBar, s.v(c, i));
            }
            double cut = inf;
            int atMin = 0;
            for (int i : matchedLists_[c]) {
                s.v(c, i) = sample_truncated_normal(s.meanV[c][i], 1.0, vBar, inf, s.rng);
                if (s.v(c, i) < cut) {
                    cut = s.v(c, i);
                    atMin = 1;
                } else if (s.v(c, i) == cut) {
                    ++atMin;
                }
            }
            if (matchedLists_[c].empty()) throw StateCorruption("binding college lost its matched set");
            if (atMin > 1) ++s.cutoffTies;
            s.cutoffs[c] = Cutoff::at(cut);
            for (int i : vRows_[c]) {
                if (matchedOption_[i] == c + 1 || !inMarket_[i]) continue;
                if (s.u(i, c + 1) > s.u(i, matchedOption_[i]))
                    s.v(c, i) = sample_truncated_normal(s.meanV[c][i], 1.0, -inf, cut, s.rng);
                else
                    s.v(c, i) = s.meanV[c][i] + s.rng.normal();
            }
        }
    }

    /// Step 2: redraw student-side utilities given cutoffs.
    void updateStudentSide(State& s) const {
        const int C = market_.numColleges();
        constexpr double inf = std::numeric_limits<double>::infinity();
        std::vector<char> feasible(C + 1);
        for (int i : uRows_) {
            feasible[0] = 1;
            for (int c = 0; c < C; ++c) {
                const bool open = market_.eligible(i, c) &&
                                  (!vModeled_[c] || s.cutoffs[c].admits(s.v(c, i)));
                feasible[c + 1] = open ? 1 : 0;
            }
            const int m = matchedOption_[i];
            if (!feasible[m]) throw StateCorruption("matched option infeasible in student update");

            // (a) infeasible colleges: free draws
            for (int c = 0; c < C; ++c)
                if (!feasible[c + 1]) s.u(i, c + 1) = s.meanU[c][i] + sigmaOf(s, c) * s.rng.normal();

            // (b) own match: bounded below by the best feasible alternative
            double uBar = -inf;
            for (int o = 0; o <= C; ++o)
                if (o != m && feasible[o]) uBar = std::max(uBar, s.u(i, o));
            s.u(i, m) = sample_truncated_normal(optionMean(s, i, m), optionSigma(s, m), uBar, inf, s.rng);

            // (c) other feasible options: bounded above by the match
            for (int o = 0; o <= C; ++o)
                if (o != m && feasible[o])
                    s.u(i, o) = sample_truncated_normal(optionMean(s, i, o), optionSigma(s, o), -inf, s.u(i, m), s.rng);
        }
    }

    /// Step 3: conjugate regression draw for all coefficients, then the free
    /// shock variances.
    void updateParameters(State& s) const {
        const int C = market_.numColleges();
        const int p = design_.numCoefficients();
        Matrix precision = priorPrecision_;
        Vector rhs = Vector::Zero(p);
        for (int c = 0; c < C; ++c) {
            const double invVar = 1.0 / sigma2Of(s, c);
            scatterGram(design_.studentBlocks[c], uGram_[c], invVar, precision);
            scatterRhs(design_.studentBlocks[c], uRows_, s.u, c + 1, invVar, rhs);
            if (vModeled_[c]) {
                scatterGram(design_.collegeBlocks[c], vGram_[c], 1.0, precision);
                scatterRhsV(design_.collegeBlocks[c], vRows_[c], s.v, c, rhs);
            }
        }
        Eigen::LLT<Matrix> llt(precision);
        if (llt.info() != Eigen::Success) throw EstimationError("coefficient precision not positive definite");
        Vector mean = llt.solve(rhs);
        Vector z(p);
        for (int k = 0; k < p; ++k) z[k] = s.rng.normal();
        s.coeffs = mean + llt.matrixU().solve(z);

        refreshMeans(s);

        for (int g : estimatedGroups_) {
            double ssr = 0.0;
            long count = 0;
            for (int c = 0; c < C; ++c) {
                if (design_.scaleGroup[c] != g) continue;
                for (int i : uRows_) {
                    const double e = s.u(i, c + 1) - s.meanU[c][i];
                    ssr += e * e;
                    ++count;
                }
            }
            const double dof = cfg_.sigmaPriorDof + static_cast<double>(count);
            const double scale = cfg_.sigmaPriorDof * cfg_.sigmaPriorScale + ssr;
            s.sigma2[g] = scale / detail::sample_chi_squared(dof, s.rng);
        }
    }

    void sweep(State& s) const {
        updateCollegeSide(s);
        updateStudentSide(s);
        updateParameters(s);
        ++s.sweepsDone;
    }

    /// Recompute derived quantities after restoring a serialized state.
    void rebindState(State& s) const { refreshMeans(s); }

    /// Stability audit of the latent state against the observed matching.
    StabilityReport auditState(const State& s) const {
        LatentUtilities lat;
        lat.studentU = s.u;
        lat.collegeV = s.v;
        Matching obs;
        obs.assignment.resize(market_.numStudents());
        for (int i = 0; i < market_.numStudents(); ++i)
            obs.assignment[i] = matchedOption_[i] == 0 ? kOutsideId : market_.colleges[matchedOption_[i] - 1].id;
        obs.cutoffs = s.cutoffs;
        AuditOptions opts;
        opts.inert.resize(market_.numStudents());
        for (int i = 0; i < market_.numStudents(); ++i) opts.inert[i] = !inMarket_[i];
        return auditStability(market_, lat, obs, nullptr, opts);
    }

    Vector currentParameterRow(const State& s) const {
        Vector row(parameterNames_.size());
        row.head(design_.numCoefficients()) = s.coeffs;
        for (std::size_t k = 0; k < estimatedGroups_.size(); ++k)
            row[design_.numCoefficients() + static_cast<int>(k)] = std::sqrt(s.sigma2[estimatedGroups_[k]]);
        return row;
    }

    PosteriorChain run(int chainIndex = 0) const {
        State s = initState(chainIndex);
        return runFrom(s, Matrix());
    }

    /// Continue a (possibly restored) state to the configured length. Rows
    /// already collected are passed in drawsSoFar.
    PosteriorChain runFrom(State& s, Matrix drawsSoFar) const {
        const int p = static_cast<int>(parameterNames_.size());
        const int keptTarget = (cfg_.iterations - cfg_.burnIn + cfg_.thin - 1) / cfg_.thin;
        PosteriorChain chain;
        chain.parameterNames = parameterNames_;
        chain.seed = cfg_.seed;
        chain.chainIndex = s.chainIndex;
        chain.draws.resize(keptTarget, p);
        int kept = 0;
        if (drawsSoFar.size() > 0) {
            if (drawsSoFar.cols() != p) throw InvalidInput("checkpoint draw width mismatch");
            kept = static_cast<int>(drawsSoFar.rows());
            chain.draws.topRows(kept) = drawsSoFar;
        }
        while (s.sweepsDone < cfg_.iterations) {
            sweep(s);
            if (cfg_.auditEvery > 0 && s.sweepsDone % cfg_.auditEvery == 0) {
                ++chain.auditChecks;
                if (!auditState(s).stable()) ++chain.auditViolations;
            }
            if (s.sweepsDone > cfg_.burnIn && (s.sweepsDone - cfg_.burnIn - 1) % cfg_.thin == 0 && kept < keptTarget)
                chain.draws.row(kept++) = currentParameterRow(s).transpose();
        }
        chain.draws.conservativeResize(kept, p);
        chain.cutoffTies = s.cutoffTies;
        return chain;
    }

  private:
    struct GramBlock {
        Matrix xtx;  // k x k over the block's regression rows
    };

    static GramBlock gram(const CompiledDesign::Block& b, const std::vector<int>& rows) {
        const int k = static_cast<int>(b.coefIdx.size());
        GramBlock g;
        g.xtx = Matrix::Zero(k, k);
        for (int i : rows) g.xtx += b.X.row(i).transpose() * b.X.row(i);
        return g;
    }

    static void scatterGram(const CompiledDesign::Block& b, const GramBlock& g, double invVar, Matrix& precision) {
        const int k = static_cast<int>(b.coefIdx.size());
        for (int a = 0; a < k; ++a)
            for (int bb = 0; bb < k; ++bb) precision(b.coefIdx[a], b.coefIdx[bb]) += invVar * g.xtx(a, bb);
    }

    static void scatterRhs(const CompiledDesign::Block& b, const std::vector<int>& rows, const Matrix& u, int col,
                           double invVar, Vector& rhs) {
        const int k = static_cast<int>(b.coefIdx.size());
        for (int a = 0; a < k; ++a) {
            double acc = 0.0;
            for (int i : rows) acc += b.X(i, a) * u(i, col);
            rhs[b.coefIdx[a]] += invVar * acc;
        }
    }

    static void scatterRhsV(const CompiledDesign::Block& b, const std::vector<int>& rows, const Matrix& v, int c,
                            Vector& rhs) {
        const int k = static_cast<int>(b.coefIdx.size());
        for (int a = 0; a < k; ++a) {
            double acc = 0.0;
            for (int i : rows) acc += b.X(i, a) * v(c, i);
            rhs[b.coefIdx[a]] += acc;
        }
    }

    double sigma2Of(const State& s, int collegeIdx) const {
        const int g = design_.scaleGroup[collegeIdx];
        if (g < 0) return design_.fixedScale[collegeIdx] * design_.fixedScale[collegeIdx];
        return s.sigma2[g];
    }

    double sigmaOf(const State& s, int collegeIdx) const { return std::sqrt(sigma2Of(s, collegeIdx)); }

    static double optionMean(const State& s, int i, int option) { return option == 0 ? 0.0 : s.meanU[option - 1][i]; }

    double optionSigma(const State& s, int option) const { return option == 0 ? 1.0 : sigmaOf(s, option - 1); }

    /// Recompute the per-college linear indices after a coefficient move.
    void refreshMeans(State& s) const {
        const int n = market_.numStudents();
        const int C = market_.numColleges();
        s.meanU.assign(C, std::vector<double>(n, 0.0));
        s.meanV.assign(C, std::vector<double>(n, 0.0));
        for (int c = 0; c < C; ++c) {
            const auto& b = design_.studentBlocks[c];
            for (std::size_t k = 0; k < b.coefIdx.size(); ++k) {
                const double beta = s.coeffs[b.coefIdx[k]];
                for (int i = 0; i < n; ++i) s.meanU[c][i] += beta * b.X(i, static_cast<int>(k));
            }
            if (vModeled_[c]) {
                const auto& bc = design_.collegeBlocks[c];
                for (std::size_t k = 0; k < bc.coefIdx.size(); ++k) {
                    const double gamma = s.coeffs[bc.coefIdx[k]];
                    for (int i = 0; i < n; ++i) s.meanV[c][i] += gamma * bc.X(i, static_cast<int>(k));
                }
            }
        }
    }

    const Market& market_;
    GibbsConfig cfg_;
    CompiledDesign design_;
    std::vector<int> matchedOption_;            // 0 = outside, c+1 = college index c
    std::vector<std::vector<int>> matchedLists_;
    std::vector<bool> inMarket_;
    std::vector<bool> vModeled_;
    std::vector<std::vector<char>> vSampled_;
    std::vector<std::vector<int>> vRows_;
    std::vector<int> uRows_;
    Matrix priorPrecision_;
    std::vector<GramBlock> uGram_, vGram_;
    std::vector<std::string> parameterNames_;
    std::vector<int> estimatedGroups_;
};

/// One chain per entry; chains are deterministic in (data, config, seed).
inline std::vector<PosteriorChain> runChains(const Market& market, const Matching& observed,
                                             const EmpiricalSpec& spec, const GibbsConfig& cfg) {
    GibbsSampler sampler(market, observed, spec, cfg);
    std::vector<PosteriorChain> chains(cfg.chains);
    parallel_for(cfg.chains, [&](int j) { chains[j] = sampler.run(j); });
    return chains;
}

inline PosteriorChain runChain(const Market& market, const Matching& observed, const EmpiricalSpec& spec,
                               const GibbsConfig& cfg) {
    GibbsSampler sampler(market, observed, spec, cfg);
    return sampler.run(0);
}

} // namespace ntumatch

#endif
