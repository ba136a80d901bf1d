#ifndef NTUMATCH_AVERAGE_DERIVATIVE_HPP
#define NTUMATCH_AVERAGE_DERIVATIVE_HPP

#include <Eigen/SVD>
#include <string>
#include <vector>

#include "ntumatch/kernel.hpp"
#include "ntumatch/market.hpp"

namespace ntumatch {

enum class AdeModel { General, Reduced };

struct AdeOptions {
    KernelConfig kernel;
    AdeModel model = AdeModel::General;
    // Positions of the non-excluded covariates in the student z vector:
    // sColumn enters student utilities only, mColumn college utilities only,
    // zColumn both sides.
    int sColumn = 0;
    int zColumn = 1;
    int mColumn = 2;
    // Known coefficient signs of the excluded shifters (the scale
    // normalization): y enters student utility with demandSign, w enters
    // college utility with supplySign.
    double demandSign = -1.0;
    double supplySign = 1.0;
    // Reduced model: the single college (id) whose utility carries z on each side.
    int reducedYCollege = 1;
    int reducedWCollege = 3;
    double conditionNumberCutoff = 1e8;
};

/// Sample averages of the kernel-smoothed match-probability gradients, one
/// block per linear system. dSigma_dY / dSigma_dW are C x C with entry (c,d)
/// = E[d sigma_c / d (index-normalized shifter of college d)]; zColumns is
/// the C x 2 coefficient matrix of the cross system with columns ordered
/// (college-side, student-side).
struct DerivativeMatrices {
    Matrix dSigma_dY;
    Vector dSigma_dS;
    Matrix dSigma_dW;
    Vector dSigma_dM;
    Vector dSigma_dZ;
    Matrix zColumns;
    AdeModel model = AdeModel::General;
    int keptDemand = 0, keptSupply = 0, keptCross = 0;  // untrimmed point counts
};

struct RankReport {
    Matrix matrix;
    Vector singularValues;  // descending
    double conditionNumber = 0.0;
    bool passes = false;
};

inline RankReport rankReportFor(const Matrix& a, double conditionNumberCutoff = 1e8) {
    RankReport rep;
    rep.matrix = a;
    Eigen::JacobiSVD<Matrix> svd(a);
    rep.singularValues = svd.singularValues();
    const double smax = rep.singularValues.size() ? rep.singularValues[0] : 0.0;
    const double smin = rep.singularValues.size() ? rep.singularValues[rep.singularValues.size() - 1] : 0.0;
    rep.conditionNumber = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
    rep.passes = smin > 0.0 && rep.conditionNumber < conditionNumberCutoff;
    return rep;
}

struct RankDeficiencyError : EstimationError {
    RankReport report;
    RankDeficiencyError(const std::string& what, RankReport rep)
        : EstimationError(what + " (condition number " + std::to_string(rep.conditionNumber) + ")"),
          report(std::move(rep)) {}
};

namespace detail {

inline std::vector<int> matchLabels(const Market& market, const Matching& matching) {
    std::vector<int> labels(market.numStudents());
    for (int i = 0; i < market.numStudents(); ++i)
        labels[i] = matching.assignment[i] == kOutsideId ? 0 : market.collegeIndexById(matching.assignment[i]) + 1;
    return labels;
}

} // namespace detail

/// Conditional match probabilities and their gradient at one covariate point,
/// smoothing over the given feature columns. Convenience wrapper used by the
/// estimator and the rank diagnostic.
inline SigmaEstimate estimateSigma(const Market& market, const Matching& matching, const Matrix& features,
                                   const Vector& at, const KernelConfig& cfg) {
    KernelSmoother sm(features, detail::matchLabels(market, matching), market.numColleges() + 1, cfg);
    return sm.evaluate(at);
}

/// Assemble the average-derivative blocks of the three estimating systems.
/// Each block smooths the matched-college indicator over exactly the
/// covariates entering that system, so the demand and supply systems stay
/// low-dimensional while the cross system carries the full dimensionality
/// (general model) or three dimensions (reduced model).
inline DerivativeMatrices averageDerivatives(const Market& market, const Matching& matching, const AdeOptions& opt) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    const auto labels = detail::matchLabels(market, matching);

    auto meanGrads = [&](const Matrix& features) {
        KernelSmoother sm(features, labels, C + 1, opt.kernel);
        return sm.averageGradients();
    };

    DerivativeMatrices out;
    out.model = opt.model;

    {  // demand system: features (s, y_1..y_C)
        Matrix F(n, 1 + C);
        for (int i = 0; i < n; ++i) {
            F(i, 0) = market.students[i].z[opt.sColumn];
            for (int c = 0; c < C; ++c) F(i, 1 + c) = market.students[i].y[c];
        }
        auto g = meanGrads(F);
        out.keptDemand = g.keptCount;
        out.dSigma_dS.resize(C);
        out.dSigma_dY.resize(C, C);
        for (int c = 0; c < C; ++c) {
            out.dSigma_dS[c] = g.meanGradient(0, c + 1);
            for (int d = 0; d < C; ++d) out.dSigma_dY(c, d) = opt.demandSign * g.meanGradient(1 + d, c + 1);
        }
    }

    {  // supply system: features (m, w_1..w_C)
        Matrix F(n, 1 + C);
        for (int i = 0; i < n; ++i) {
            F(i, 0) = market.students[i].z[opt.mColumn];
            for (int c = 0; c < C; ++c) F(i, 1 + c) = market.students[i].w[c];
        }
        auto g = meanGrads(F);
        out.keptSupply = g.keptCount;
        out.dSigma_dM.resize(C);
        out.dSigma_dW.resize(C, C);
        for (int c = 0; c < C; ++c) {
            out.dSigma_dM[c] = g.meanGradient(0, c + 1);
            for (int d = 0; d < C; ++d) out.dSigma_dW(c, d) = opt.supplySign * g.meanGradient(1 + d, c + 1);
        }
    }

    {  // cross system
        out.dSigma_dZ.resize(C);
        out.zColumns.resize(C, 2);
        if (opt.model == AdeModel::General) {
            Matrix F(n, 1 + 2 * C);
            for (int i = 0; i < n; ++i) {
                F(i, 0) = market.students[i].z[opt.zColumn];
                for (int c = 0; c < C; ++c) {
                    F(i, 1 + c) = market.students[i].y[c];
                    F(i, 1 + C + c) = market.students[i].w[c];
                }
            }
            auto g = meanGrads(F);
            out.keptCross = g.keptCount;
            for (int c = 0; c < C; ++c) {
                out.dSigma_dZ[c] = g.meanGradient(0, c + 1);
                double wsum = 0.0, ysum = 0.0;
                for (int d = 0; d < C; ++d) {
                    ysum += opt.demandSign * g.meanGradient(1 + d, c + 1);
                    wsum += opt.supplySign * g.meanGradient(1 + C + d, c + 1);
                }
                out.zColumns(c, 0) = wsum;
                out.zColumns(c, 1) = ysum;
            }
        } else {
            const int cy = market.collegeIndexById(opt.reducedYCollege);
            const int cw = market.collegeIndexById(opt.reducedWCollege);
            Matrix F(n, 3);
            for (int i = 0; i < n; ++i) {
                F(i, 0) = market.students[i].z[opt.zColumn];
                F(i, 1) = market.students[i].y[cy];
                F(i, 2) = market.students[i].w[cw];
            }
            auto g = meanGrads(F);
            out.keptCross = g.keptCount;
            for (int c = 0; c < C; ++c) {
                out.dSigma_dZ[c] = g.meanGradient(0, c + 1);
                out.zColumns(c, 0) = opt.supplySign * g.meanGradient(2, c + 1);
                out.zColumns(c, 1) = opt.demandSign * g.meanGradient(1, c + 1);
            }
        }
    }
    return out;
}

/// Coefficient solutions. The square demand/supply systems pin beta_s and
/// gamma_m; the overdetermined cross system is solved four ways: identity-
/// weighted GMM over all rows, and each row pair.
struct SemiparamEstimates {
    Vector betaS;
    Vector gammaM;
    struct ZSolution {
        double gammaZ = 0.0;
        double betaZ = 0.0;
        std::string rows;
    };
    ZSolution gmm;
    std::vector<ZSolution> pairs;
};

namespace detail {

inline Eigen::Vector2d solve2(const Matrix& a, const Vector& b, double cutoff, const char* what) {
    auto rep = rankReportFor(a, cutoff);
    if (!rep.passes) throw RankDeficiencyError(what, rep);
    return a.colPivHouseholderQr().solve(b);
}

} // namespace detail

inline SemiparamEstimates solveCoefficients(const DerivativeMatrices& mats, const AdeOptions& opt = {}) {
    SemiparamEstimates est;
    const double cutoff = opt.conditionNumberCutoff;

    auto repY = rankReportFor(mats.dSigma_dY, cutoff);
    if (!repY.passes) throw RankDeficiencyError("demand system singular", repY);
    est.betaS = mats.dSigma_dY.colPivHouseholderQr().solve(mats.dSigma_dS);

    auto repW = rankReportFor(mats.dSigma_dW, cutoff);
    if (!repW.passes) throw RankDeficiencyError("supply system singular", repW);
    est.gammaM = mats.dSigma_dW.colPivHouseholderQr().solve(mats.dSigma_dM);

    const int C = static_cast<int>(mats.zColumns.rows());
    {
        const Matrix a = mats.zColumns.transpose() * mats.zColumns;
        const Vector b = mats.zColumns.transpose() * mats.dSigma_dZ;
        const Eigen::Vector2d x = detail::solve2(a, b, cutoff, "cross system (GMM) singular");
        est.gmm = {x[0], x[1], "all"};
    }
    for (int r1 = 0; r1 < C; ++r1) {
        for (int r2 = r1 + 1; r2 < C; ++r2) {
            Matrix a(2, 2);
            Vector b(2);
            a.row(0) = mats.zColumns.row(r1);
            a.row(1) = mats.zColumns.row(r2);
            b << mats.dSigma_dZ[r1], mats.dSigma_dZ[r2];
            const Eigen::Vector2d x =
                detail::solve2(a, b, cutoff, "cross system (row pair) singular");
            est.pairs.push_back({x[0], x[1], std::to_string(r1 + 1) + "&" + std::to_string(r2 + 1)});
        }
    }
    return est;
}

/// The rank-condition matrix of the identification argument: derivatives of
/// all match probabilities w.r.t. the excluded shifters, stacked at two
/// supply-shifter points. gradY*/gradW* are C x C with (c,d) = d sigma_c / d
/// shifter_d at the respective point.
inline RankReport rankConditionFromGradients(const Matrix& gradY1, const Matrix& gradW1, const Matrix& gradY2,
                                             const Matrix& gradW2, double conditionNumberCutoff = 1e8) {
    const int C = static_cast<int>(gradY1.rows());
    Matrix pi(2 * C, 2 * C);
    pi.block(0, 0, C, C) = gradY1;
    pi.block(0, C, C, C) = gradW1;
    pi.block(C, 0, C, C) = gradY2;
    pi.block(C, C, C, C) = gradW2;
    return rankReportFor(pi, conditionNumberCutoff);
}

/// Data route: kernel-estimate the gradients in the full (z, y, w) space at
/// the two points and assemble the rank matrix.
inline RankReport rankCondition(const Market& market, const Matching& matching, const Vector& zPoint,
                                const Vector& yPoint, const Vector& w1, const Vector& w2, const AdeOptions& opt) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    const int dz = market.zDim();
    Matrix F(n, dz + 2 * C);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < dz; ++k) F(i, k) = market.students[i].z[k];
        for (int c = 0; c < C; ++c) {
            F(i, dz + c) = market.students[i].y[c];
            F(i, dz + C + c) = market.students[i].w[c];
        }
    }
    KernelSmoother sm(F, detail::matchLabels(market, matching), C + 1, opt.kernel);
    auto gradsAt = [&](const Vector& w, Matrix& gy, Matrix& gw) {
        Vector x0(dz + 2 * C);
        x0.head(dz) = zPoint;
        x0.segment(dz, C) = yPoint;
        x0.tail(C) = w;
        const auto est = sm.evaluate(x0);
        gy.resize(C, C);
        gw.resize(C, C);
        for (int c = 0; c < C; ++c)
            for (int d = 0; d < C; ++d) {
                gy(c, d) = est.gradients(dz + d, c + 1);
                gw(c, d) = est.gradients(dz + C + d, c + 1);
            }
    };
    Matrix gy1, gw1, gy2, gw2;
    gradsAt(w1, gy1, gw1);
    gradsAt(w2, gy2, gw2);
    return rankConditionFromGradients(gy1, gw1, gy2, gw2, opt.conditionNumberCutoff);
}

} // namespace ntumatch

#endif
