#ifndef NTUMATCH_KERNEL_HPP
#define NTUMATCH_KERNEL_HPP

#include <cmath>
#include <vector>

#include "ntumatch/market.hpp"
#include "ntumatch/parallel.hpp"

namespace ntumatch {

struct KernelConfig {
    // Empty bandwidths = per-dimension Silverman rule; entries must be > 0.
    std::vector<double> bandwidths;
    double bandwidthScale = 1.0;
    double trimFraction = 0.05;  // share of lowest-density points dropped from averages

    void validate() const {
        for (double h : bandwidths)
            if (!(h > 0.0)) throw InvalidInput("bandwidths must be positive");
        if (!(trimFraction >= 0.0 && trimFraction < 0.5)) throw InvalidInput("trimFraction must be in [0, 0.5)");
        if (!(bandwidthScale > 0.0)) throw InvalidInput("bandwidthScale must be positive");
    }
};

struct SigmaEstimate {
    Vector probabilities;  // per category, sums to 1
    Matrix gradients;      // d x K, column k = gradient of category-k probability
    double density = 0.0;  // mean kernel mass at the point (trimming statistic)
    bool lowDensity = false;
};

/// Nadaraya-Watson smoother of a categorical outcome with a Gaussian product
/// kernel. Gradients are the analytic derivatives of the smoother, not finite
/// differences of it.
class KernelSmoother {
  public:
    KernelSmoother(Matrix features, std::vector<int> labels, int numCategories, const KernelConfig& cfg)
        : X_(std::move(features)), label_(std::move(labels)), K_(numCategories), cfg_(cfg) {
        cfg_.validate();
        const int n = static_cast<int>(X_.rows());
        const int d = static_cast<int>(X_.cols());
        if (n < 50) throw EstimationError("kernel smoother needs at least 50 observations");
        if (static_cast<int>(label_.size()) != n) throw InvalidInput("labels length != rows");
        for (int v : label_)
            if (v < 0 || v >= K_) throw InvalidInput("label outside category range");

        h_.resize(d);
        if (!cfg_.bandwidths.empty()) {
            if (static_cast<int>(cfg_.bandwidths.size()) != d)
                throw InvalidInput("bandwidth count != feature dimension");
            for (int k = 0; k < d; ++k) h_[k] = cfg_.bandwidths[k] * cfg_.bandwidthScale;
        } else {
            // Silverman-style: sd * (4/(d+2))^{1/(d+4)} * n^{-1/(d+4)}
            const double expo = 1.0 / (d + 4.0);
            const double factor = std::pow(4.0 / (d + 2.0), expo) * std::pow(static_cast<double>(n), -expo);
            for (int k = 0; k < d; ++k) {
                const double m = X_.col(k).mean();
                const double sd = std::sqrt((X_.col(k).array() - m).square().sum() / (n - 1));
                if (!(sd > 0.0)) throw EstimationError("degenerate feature " + std::to_string(k));
                h_[k] = sd * factor * cfg_.bandwidthScale;
            }
        }
        lo_ = X_.colwise().minCoeff();
        hi_ = X_.colwise().maxCoeff();
    }

    int dim() const { return static_cast<int>(X_.cols()); }
    int categories() const { return K_; }
    int size() const { return static_cast<int>(X_.rows()); }
    const std::vector<double>& bandwidths() const { return h_; }
    const KernelConfig& config() const { return cfg_; }

    SigmaEstimate evaluate(const Vector& x0) const {
        const int n = size(), d = dim();
        if (x0.size() != d) throw InvalidInput("evaluation point dimension mismatch");

        Vector num = Vector::Zero(K_);
        Matrix dnum = Matrix::Zero(d, K_);
        Vector ddenRow = Vector::Zero(d);
        double den = 0.0;
        std::vector<double> scaled(d);
        for (int i = 0; i < n; ++i) {
            double e = 0.0;
            for (int k = 0; k < d; ++k) {
                scaled[k] = (X_(i, k) - x0[k]) / h_[k];
                e += scaled[k] * scaled[k];
            }
            const double kot = std::exp(-0.5 * e);
            den += kot;
            num[label_[i]] += kot;
            for (int k = 0; k < d; ++k) {
                const double g = kot * scaled[k] / h_[k];
                dnum(k, label_[i]) += g;
                ddenRow[k] += g;
            }
        }

        SigmaEstimate out;
        out.probabilities.resize(K_);
        out.gradients.resize(d, K_);
        if (den <= 0.0) throw EstimationError("zero kernel mass at evaluation point");
        for (int c = 0; c < K_; ++c) {
            out.probabilities[c] = num[c] / den;
            out.gradients.col(c) = (dnum.col(c) - out.probabilities[c] * ddenRow) / den;
        }
        // normalize away accumulated rounding
        out.probabilities /= out.probabilities.sum();
        out.density = den / static_cast<double>(n);
        for (int k = 0; k < d; ++k)
            if (x0[k] < lo_[k] || x0[k] > hi_[k]) out.lowDensity = true;
        return out;
    }

    /// Gradients averaged over the sample points, dropping the trimFraction
    /// lowest-density points. Returns d x K of E[grad sigma_c] plus the mask.
    struct AverageGradients {
        Matrix meanGradient;         // d x K
        std::vector<bool> kept;      // per sample point
        int keptCount = 0;
    };

    AverageGradients averageGradients() const {
        const int n = size(), d = dim();
        std::vector<SigmaEstimate> ests(n);
        parallel_for(n, [&](int i) { ests[i] = evaluate(X_.row(i).transpose()); });

        std::vector<double> dens(n);
        for (int i = 0; i < n; ++i) dens[i] = ests[i].density;
        std::vector<double> sorted = dens;
        std::sort(sorted.begin(), sorted.end());
        const double floor = sorted[static_cast<std::size_t>(cfg_.trimFraction * n)];

        AverageGradients out;
        out.meanGradient = Matrix::Zero(d, K_);
        out.kept.assign(n, false);
        for (int i = 0; i < n; ++i) {
            if (dens[i] < floor) continue;
            out.kept[i] = true;
            ++out.keptCount;
            out.meanGradient += ests[i].gradients;
        }
        if (out.keptCount == 0) throw EstimationError("all evaluation points trimmed");
        out.meanGradient /= static_cast<double>(out.keptCount);
        return out;
    }

  private:
    Matrix X_;
    std::vector<int> label_;
    int K_;
    KernelConfig cfg_;
    std::vector<double> h_;
    Vector lo_, hi_;
};

} // namespace ntumatch

#endif
