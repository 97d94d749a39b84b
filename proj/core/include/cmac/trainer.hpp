#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cmac/alignment.hpp"
#include "cmac/cohort.hpp"
#include "cmac/losses.hpp"
#include "cmac/types.hpp"

namespace cmac {

/// Single linear projections followed by l2 normalization, the smallest
/// dual encoder that exercises every loss term.
struct Encoders {
    Eigen::MatrixXd image_weights; // d_in x d_emb
    Eigen::MatrixXd text_weights;  // d_in x d_emb
    double temperature = 0.07;
};

enum class TrainMode { erm, cmac };

/// What the fairness loss compares across subgroups: the batch-relative
/// alignment margins, or the bounded diagnostic certainty derived from
/// the class prototypes.
enum class FairnessScores { batch_margins, class_certainty };

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    double learning_rate = 1e-5;
    double weight_decay = 5e-5;
    double lambda_cmac = 0.5;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::cmac;
    int d_emb = 8;
    double temperature = 0.07;
    int min_subgroup_batch = 2;
    KernelConfig kernel = KernelConfig::median();
    /// Scale of the deterministic per-sample perturbation applied to the
    /// class text before encoding.  Sentences for the same diagnosis
    /// vary from patient to patient; identical text columns would also
    /// pin every correct sample's margin at an exact tie, censoring the
    /// fairness gradient.
    double text_jitter = 0.1;
    FairnessScores fairness_scores = FairnessScores::batch_margins;
    /// Contrastive-only epochs before the fairness term engages, the
    /// desk-scale stand-in for starting from a pretrained encoder.
    /// While both classes are still uncalibrated, distribution matching
    /// drifts toward each subgroup's majority class; from a warm start
    /// it targets the lagging positives instead.
    int warmup_epochs = 0;

    /// erm forces the fairness weight to zero; otherwise lambda_cmac.
    double effective_lambda() const { return mode == TrainMode::erm ? 0.0 : lambda_cmac; }
};

struct EpochLosses {
    double clip = 0.0;
    double cmac = 0.0;
    double total = 0.0;
};

struct TrainedModel {
    Encoders encoders;
    ClassPrototypes class_texts; // raw input-space class texts (d_in)
    ClassPrototypes prototypes;  // encoded class texts (d_emb) after training
    std::vector<EpochLosses> history;
    bool single_subgroup_warning = false;
};

/// Weights ~ Normal(0, 1/sqrt(d_in)); identical seed gives identical
/// matrices.
Encoders init_encoders(int d_in, int d_emb, std::uint64_t seed);

struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches;
    bool single_subgroup_warning = false;
};

/// Stratified round-robin batching: every sample appears exactly once,
/// and each batch holds at least two subgroups with at least
/// `min_subgroup_batch` members each whenever the pool allows.  A
/// single-subgroup dataset still batches but raises the warning flag
/// (the fairness loss degrades to zero).
BatchPlan make_batches(const std::vector<SampleRecord>& dataset, int batch_size,
                       std::uint64_t seed, int min_subgroup_batch = 2);

/// AdamW training of both encoders against clip + lambda * cmac.
/// Sequential and fully determined by (dataset, class_texts, cfg).
TrainedModel train(const std::vector<SampleRecord>& dataset,
                   const ClassPrototypes& class_texts,
                   const TrainConfig& cfg);

/// Forward pass on images and class prototypes only; demographic
/// attributes are copied through for report grouping and never touch
/// the scores.
LabeledScores evaluate_model(const TrainedModel& model,
                             const std::vector<SampleRecord>& dataset);

/// Deterministic unit-norm class text vectors in input space, shared by
/// every run so checkpoints across seeds stay comparable.
ClassPrototypes default_class_texts(int d_in, int num_classes);

} // namespace cmac
