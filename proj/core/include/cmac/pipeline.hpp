#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmac/fairness.hpp"
#include "cmac/io.hpp"
#include "cmac/stats.hpp"
#include "cmac/types.hpp"

namespace cmac {

/// Draw a cohort and package it as a writable dataset.
FeatureDataset generate_dataset(const CohortSpec& spec);

/// Train on a feature dataset with deterministic class texts.
Checkpoint train_checkpoint(const FeatureDataset& data, const TrainConfig& cfg);

struct EvaluateOutcome {
    ScoredDataset scored;
    FairnessReport report;
    std::map<SubgroupKey, KdeCurve> kde; // true-class certainty per subgroup
};

EvaluateOutcome evaluate_checkpoint(const Checkpoint& checkpoint, const FeatureDataset& data,
                                    const ReportOptions& options);
EvaluateOutcome evaluate_scored(const ScoredDataset& scored, const ReportOptions& options);

// ---------------------------------------------------------------------------
// Comparison of a candidate run against a baseline run.
// ---------------------------------------------------------------------------

struct Comparison {
    std::int64_t n = 0;

    double auc_baseline = 0.0;
    double auc_candidate = 0.0;
    double delta_auc = 0.0; // candidate - baseline

    enum class DelongStatus { ok, degenerate_variance, requires_scored_datasets };
    DelongStatus delong_status = DelongStatus::requires_scored_datasets;
    DelongResult delong; // valid when status == ok (a = candidate, b = baseline)

    enum class TestStatus { ok, all_zero_differences, degenerate, unavailable };
    TestStatus wilcoxon_status = TestStatus::unavailable;
    WilcoxonResult wilcoxon; // paired per-subgroup DEOdds, baseline - candidate
    int wilcoxon_pairs = 0;

    struct PropTest {
        TestStatus status = TestStatus::unavailable;
        ZTestResult result;
        std::int64_t x1 = 0, n1 = 0, x2 = 0, n2 = 0; // baseline, candidate
        double value_baseline = 0.0;
        double value_candidate = 0.0;
    };
    PropTest ztest_delta_tpr; // gaps as proportions of total positives
    PropTest ztest_dpd;       // gaps as proportions of total samples

    ImpactTable impact; // baseline FNs vs candidate FNs per subgroup
};

/// Full comparison from per-sample scores; both inputs must be scored on
/// identical samples (ids, labels, subgroups), else PairingMismatch
/// listing the first ten offenders.
Comparison compare_scored(const ScoredDataset& baseline, const ScoredDataset& candidate,
                          double threshold = 0.5);

/// Comparison from two reports only; the DeLong test needs per-sample
/// scores and is reported as unavailable.
Comparison compare_reports(const FairnessReport& baseline, const FairnessReport& candidate);

std::string comparison_to_string(const Comparison& comparison);
void write_comparison(const std::string& path, const Comparison& comparison);

/// Human-readable impact table with relative reductions to one decimal,
/// e.g. "3 (60.0%)".
std::string impact_table_text(const ImpactTable& table);

// ---------------------------------------------------------------------------
// Whole experiment: generate -> split -> train (erm + cmac, all seeds)
// -> evaluate -> compare -> summary.
// ---------------------------------------------------------------------------

struct ArmSeedMetrics {
    std::string arm; // "erm" | "cmac"
    std::uint64_t seed = 0;
    double auc = 0.0;
    double delta_tpr = 0.0;
    double dpd = 0.0;
    double delta_fpr = 0.0;
    double mean_deodds = 0.0;
    double certainty_gap = 0.0;
    double zone_fraction_lowest_sep = 0.0;
};

struct SeedContrast {
    std::uint64_t seed = 0;
    double delta_tpr_relative_reduction = 0.0; // (erm - cmac) / erm
    double auc_change = 0.0;                   // cmac - erm
    double certainty_gap_change = 0.0;         // cmac - erm
    double zone_change_lowest_sep = 0.0;       // cmac - erm
};

struct ExperimentSummary {
    std::vector<std::uint64_t> seeds;
    SubgroupKey lowest_separation_subgroup;
    std::vector<ArmSeedMetrics> per_run;
    std::vector<SeedContrast> contrasts;
    double mean_delta_tpr_relative_reduction = 0.0;
    double mean_auc_change = 0.0;
    double mean_certainty_gap_change = 0.0;
    double mean_zone_change_lowest_sep = 0.0;
};

std::string summary_to_string(const ExperimentSummary& summary);

/// Runs the full protocol into out_dir (created if missing) and returns
/// the summary.  Everything is deterministic in the config, so a rerun
/// rewrites byte-identical artifacts.
ExperimentSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir);

} // namespace cmac
