#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmac/cohort.hpp"
#include "cmac/fairness.hpp"
#include "cmac/trainer.hpp"
#include "cmac/types.hpp"

namespace cmac {

/// 17-significant-digit, locale-independent rendering used by every
/// file format so outputs are byte-stable across reruns.
std::string format_double(double value);

// ---------------------------------------------------------------------------
// Dataset files: one JSON header line declaring column roles, then
// tab-separated rows.  Two kinds share the container: feature datasets
// (id, attributes, label, f0..fd-1) and scored datasets (id,
// attributes, label, score[, predicted]).
// ---------------------------------------------------------------------------

struct FeatureDataset {
    std::vector<std::string> attribute_names;
    std::vector<SampleRecord> records;
};

struct ScoredDataset {
    std::vector<std::string> attribute_names;
    LabeledScores rows;
};

enum class DatasetKind { features, scored };

DatasetKind sniff_dataset(const std::string& path);
void write_feature_dataset(const std::string& path, const FeatureDataset& dataset);
FeatureDataset read_feature_dataset(const std::string& path);
void write_scored_dataset(const std::string& path, const ScoredDataset& dataset);
ScoredDataset read_scored_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoints: canonical JSON holding the encoders, the raw class
// texts, the effective hyperparameters and the loss history.  The
// training mode is not stored; erm is exactly lambda_cmac == 0.
// ---------------------------------------------------------------------------

struct Checkpoint {
    TrainConfig config;
    TrainedModel model;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Reports: canonical JSON (sorted keys, fixed float formatting) so a
// parse -> serialize round trip is byte-identical.
// ---------------------------------------------------------------------------

std::string report_to_string(const FairnessReport& report);
void write_report(const std::string& path, const FairnessReport& report);
FairnessReport read_report(const std::string& path);

// Plot-data emitters.
void write_kde_csv(const std::string& path,
                   const std::map<SubgroupKey, KdeCurve>& curves);
void write_subgroup_metrics_csv(const std::string& path, const FairnessReport& report);
void write_history_csv(const std::string& path, const std::vector<EpochLosses>& history);

// ---------------------------------------------------------------------------
// Run configuration: strict JSON schema; unknown keys are rejected with
// the offending dotted path.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    CohortSpec cohort;
    std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
    std::uint64_t split_seed = 7;
    TrainConfig train;
    ReportOptions evaluate;
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

ExperimentConfig load_config(const std::string& path);

/// Read a whole file (throws SchemaError when missing/unreadable).
std::string slurp_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

} // namespace cmac
