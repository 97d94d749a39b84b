#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmac/stats.hpp"
#include "cmac/types.hpp"

namespace cmac {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;

    std::int64_t positives() const { return tp + fn; }
    std::int64_t negatives() const { return fp + tn; }
    std::int64_t total() const { return tp + fp + tn + fn; }
};

using ConfusionBySubgroup = std::map<SubgroupKey, ConfusionCounts>;

/// Threshold rule: a row with no explicit prediction predicts positive
/// iff score >= threshold (the boundary favors sensitivity).
ConfusionBySubgroup confusion_by_subgroup(const LabeledScores& data, double threshold = 0.5);

struct RateGap {
    double value = 0.0;
    /// Subgroups lacking the relevant class, excluded from the gap.
    std::vector<SubgroupKey> excluded;
};

/// Max pairwise |TPR(g) - TPR(g')| over subgroups with >= 1 positive.
RateGap delta_tpr(const ConfusionBySubgroup& counts);

/// Max pairwise |FPR(g) - FPR(g')| over subgroups with >= 1 negative.
RateGap delta_fpr(const ConfusionBySubgroup& counts);

/// Max pairwise gap in positive prediction rates; depends on
/// predictions only, never on true labels.
RateGap dpd(const ConfusionBySubgroup& counts);

struct DeoddsResult {
    std::map<SubgroupKey, double> per_subgroup;
    double mean = 0.0; // unweighted over included subgroups
    double pooled_tpr = 0.0;
    double pooled_fpr = 0.0;
    std::vector<SubgroupKey> excluded;
};

/// DEOdds(g) = |TPR(g) - TPR_pool| + |FPR(g) - FPR_pool| with pooled
/// micro-averaged population rates over all samples.
DeoddsResult deodds(const ConfusionBySubgroup& counts);

struct CriterionResult {
    bool pass = false;
    double worst = 0.0; // worst pairwise ratio (DF) or L_alpha (IF-alpha)
};

/// Differential fairness: every pairwise TPR ratio within
/// [e^-epsilon, e^epsilon].  A zero TPR against a positive one fails
/// with worst = +inf.
CriterionResult df_check(const ConfusionBySubgroup& counts, double epsilon = 0.5);

/// IF-alpha: L(g,g') = alpha * |dTPR| + (1-alpha) * |dTPR| / max(TPRs),
/// pass iff the worst pair stays <= gamma.  A zero max makes the
/// relative part 0.
CriterionResult if_alpha_check(const ConfusionBySubgroup& counts,
                               double alpha = 0.5, double gamma = 0.4);

/// Max pairwise gap in subgroup mean true-class certainty.
double certainty_gap(const LabeledScores& data);

/// Fraction of each subgroup's true-class certainties inside the closed
/// interval [zone_lo, zone_hi].
std::map<SubgroupKey, double> uncertainty_zone_fraction(const LabeledScores& data,
                                                        double zone_lo = 0.40,
                                                        double zone_hi = 0.60);

struct KdeOptions {
    enum class Bandwidth { silverman, fixed };
    Bandwidth mode = Bandwidth::silverman;
    double fixed_bandwidth = 0.1;
    double grid_lo = -0.1;
    double grid_hi = 1.1;
    int grid_points = 201;
};

struct KdeCurve {
    std::vector<double> x;
    std::vector<double> density;
    double bandwidth = 0.0;
    bool degenerate_fallback = false; // all-equal scores under silverman -> h = 0.01
    bool bandwidth_capped = false;    // silverman shrunk to keep grid mass ~1
};

/// Gaussian KDE sampled on the padded grid.  Silverman's rule
/// 1.06 * sd * n^(-1/5) is floored at the grid spacing (quadrature
/// accuracy) and capped so the analytic mass inside the padded range
/// stays >= 0.9995; both adjustments are flagged.
KdeCurve kde_curve(std::span<const double> scores, const KdeOptions& opts = {});

struct ImpactRow {
    SubgroupKey subgroup;
    std::int64_t positives = 0;
    std::int64_t fn_baseline = 0;
    std::int64_t fn_new = 0;
    std::int64_t prevented = 0;           // fn_baseline - fn_new; negative = harm
    std::optional<double> relative;       // prevented / fn_baseline, absent when baseline 0
};

/// Missed diagnoses prevented for one subgroup.
ImpactRow fn_prevented(const SubgroupKey& subgroup, std::int64_t positives,
                       std::int64_t fn_baseline, std::int64_t fn_new);

struct ImpactTable {
    std::vector<ImpactRow> rows;
    std::int64_t total_prevented = 0;
    std::int64_t total_fn_baseline = 0;
    std::int64_t total_fn_new = 0;
    std::int64_t total_positives = 0;
    std::optional<double> total_relative;
};

ImpactTable impact_table(const std::vector<ImpactRow>& rows);

struct ReportOptions {
    double threshold = 0.5;
    double zone_lo = 0.40;
    double zone_hi = 0.60;
    double epsilon = 0.5;
    double alpha = 0.5;
    double gamma = 0.4;
    std::optional<BootstrapConfig> bootstrap;
};

struct SubgroupReport {
    SubgroupKey key;
    std::int64_t n = 0;
    std::int64_t positives = 0;
    ConfusionCounts counts;
    std::optional<double> tpr;
    std::optional<double> fpr;
    std::optional<double> auc; // absent when the subgroup has one class
    std::optional<double> deodds;
    double positive_rate = 0.0;
    double mean_certainty = 0.0;
    double zone_fraction = 0.0;
    std::map<std::string, BootstrapCI> ci;
};

struct AggregateReport {
    std::int64_t n = 0;
    std::int64_t positives = 0;
    double auc = 0.0;
    double delta_tpr = 0.0;
    double dpd = 0.0;
    double delta_fpr = 0.0;
    double mean_deodds = 0.0;
    double certainty_gap = 0.0;
    bool df_pass = false;
    double df_worst_ratio = 0.0;
    bool if_alpha_pass = false;
    double if_alpha_worst = 0.0;
    std::map<std::string, BootstrapCI> ci;
};

struct FairnessReport {
    ReportOptions config;
    AggregateReport aggregate;
    std::vector<SubgroupReport> subgroups; // sorted by key
    std::vector<SubgroupKey> zero_positive_subgroups;
    std::vector<SubgroupKey> zero_negative_subgroups;
    std::vector<std::string> warnings;
};

/// Full per-subgroup and aggregate evaluation of scored data, with
/// stratified-bootstrap confidence intervals when requested.
FairnessReport build_report(const LabeledScores& data, const ReportOptions& options = {});

} // namespace cmac
