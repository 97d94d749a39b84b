#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cmac/types.hpp"

namespace cmac {

/// Standard normal CDF.
double normal_cdf(double x);

/// Mann-Whitney AUC: mean over (positive, negative) pairs of
/// [score_p > score_n] + 0.5 [score_p == score_n].  Computed via
/// midranks, which matches the pairwise enumeration exactly.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct DelongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double diff = 0.0;
    double z = 0.0;
    double p = 1.0;
    double ci_lo = 0.0; // 95% CI of auc_a - auc_b
    double ci_hi = 0.0;
};

/// Paired comparison of two models' AUCs on the same samples via
/// placement-value structural components (DeLong, DeLong & Clarke-
/// Pearson 1988; fast midrank form after Sun & Xu 2014).  Throws
/// DegenerateVariance when var(diff) < 1e-15, e.g. identical scores.
DelongResult delong_test(std::span<const double> scores_a,
                         std::span<const double> scores_b,
                         std::span<const int> labels);

struct WilcoxonResult {
    enum class Method { exact, normal_approx };
    double w = 0.0;         // min(W+, W-)
    double p = 1.0;         // two-sided
    Method method = Method::exact;
    int n_nonzero = 0;
};

/// Wilcoxon signed-rank test on paired differences.  Zeros are dropped,
/// ties midranked; exact p by full sign enumeration for n <= 12, normal
/// approximation with continuity correction and midrank-based variance
/// otherwise.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs);

struct ZTestResult {
    double z = 0.0;
    double p = 1.0;
};

/// Pooled two-proportion z-test.
ZTestResult two_prop_ztest(std::int64_t x1, std::int64_t n1,
                           std::int64_t x2, std::int64_t n2);

struct BootstrapConfig {
    int n_resamples = 10000;
    double level = 0.95;
    std::uint64_t seed = 0;
    /// Optional explicit stratum per row; defaults to each row's subgroup.
    std::optional<std::vector<SubgroupKey>> strata;
    int retry_cap = 100; // redraws per resample when the metric rejects it
};

struct BootstrapCI {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int rejected_resamples = 0;
};

/// Stratified percentile bootstrap.  Strata are resampled independently
/// with replacement preserving stratum sizes; interval endpoints are
/// nearest-rank order statistics of the resampled metric values.  Each
/// resample's random stream derives from (seed, resample index), so the
/// result is identical regardless of evaluation order.
BootstrapCI bootstrap_ci(const std::function<double(const LabeledScores&)>& metric,
                         const LabeledScores& data,
                         const BootstrapConfig& cfg);

} // namespace cmac
