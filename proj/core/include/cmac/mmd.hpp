#pragma once

#include <span>
#include <vector>

#include "cmac/types.hpp"

namespace cmac {

/// RBF kernel and bandwidth policy for the squared maximum mean
/// discrepancy between 1-D score distributions.
struct KernelConfig {
    enum class Bandwidth { median_heuristic, fixed };
    enum class Estimator { biased, unbiased };

    Bandwidth bandwidth_mode = Bandwidth::median_heuristic;
    double bandwidth = 1.0; // used when bandwidth_mode == fixed; must be > 0
    Estimator estimator = Estimator::biased;

    static KernelConfig fixed(double h, Estimator est = Estimator::biased) {
        return {Bandwidth::fixed, h, est};
    }
    static KernelConfig median(Estimator est = Estimator::biased) {
        return {Bandwidth::median_heuristic, 1.0, est};
    }
};

/// Alignment scores of one subgroup, the unit the fairness loss compares.
struct ScoreSet {
    SubgroupKey subgroup;
    std::vector<double> scores;
};

/// Gaussian RBF k(x, y) = exp(-(x-y)^2 / (2 h^2)).
double rbf_kernel(double x, double y, double h);

/// Median of pairwise absolute differences of the pooled sample, floored
/// at 1e-6.  An even pair count takes the mean of the two middle order
/// statistics.
double median_heuristic_bandwidth(std::span<const double> pooled);

/// Bandwidth a config resolves to for the pooled sample x ++ y.
double resolve_bandwidth(std::span<const double> x, std::span<const double> y,
                         const KernelConfig& cfg);

/// Squared MMD between two score samples.  The biased V-statistic
/// averages all kernel pairs including diagonals and is nonnegative up
/// to roundoff; the unbiased U-statistic excludes diagonals, may be
/// negative, and needs at least two points per side.
double mmd2(std::span<const double> x, std::span<const double> y,
            const KernelConfig& cfg);

inline double mmd2(const ScoreSet& x, const ScoreSet& y, const KernelConfig& cfg) {
    return mmd2(std::span<const double>(x.scores), std::span<const double>(y.scores), cfg);
}

struct MmdGradient {
    std::vector<double> dx;
    std::vector<double> dy;
};

/// Analytic partials of the biased estimator with respect to every
/// sample, holding the bandwidth constant (no gradient through the
/// median heuristic).
MmdGradient mmd2_grad(std::span<const double> x, std::span<const double> y,
                      const KernelConfig& cfg);

} // namespace cmac
