#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "cmac/alignment.hpp"
#include "cmac/mmd.hpp"
#include "cmac/types.hpp"

namespace cmac {

struct LossConfig {
    double lambda_cmac = 0.5;
    double temperature = 0.07;
    KernelConfig kernel = KernelConfig::median();
    int min_subgroup_batch = 2; // a subgroup joins the pairwise MMD only with this many members
};

/// Subgroup membership of each batch index.
struct BatchAnnotations {
    std::vector<SubgroupKey> subgroup_of;
};

struct ClipResult {
    double loss = 0.0;
    Eigen::MatrixXd grad; // dloss/dS
};

/// Symmetric InfoNCE: mean cross-entropy of row softmaxes against the
/// diagonal, averaged with the column direction.  Gradient is the exact
/// softmax-minus-indicator form for both directions.
ClipResult clip_loss(const SimilarityBatch& batch);

struct CmacResult {
    double loss = 0.0;
    std::vector<double> grad; // dloss/da_i
    int eligible_pairs = 0;
};

/// Mean biased MMD^2 over all unordered pairs of subgroups with at
/// least `min_subgroup_batch` members in the batch.  Fewer than two
/// eligible subgroups gives loss 0 with zero gradient.  With the median
/// heuristic the bandwidth is resolved once from all batch scores and
/// held constant for every pair and for the gradient.
CmacResult cmac_loss(std::span<const double> scores,
                     const BatchAnnotations& groups,
                     const LossConfig& cfg);

struct TotalResult {
    double loss = 0.0;
    double clip = 0.0;
    double cmac = 0.0;
    Eigen::MatrixXd grad; // dloss/dS, fairness term composed through the margins
};

/// clip + lambda * cmac over the batch's alignment margins.  The margin
/// subgradient routes -1 to the lowest distractor index achieving the
/// row max; lambda == 0 skips the fairness path entirely so the result
/// is bit-identical to clip_loss.
TotalResult total_loss(const SimilarityBatch& batch,
                       const BatchAnnotations& groups,
                       const LossConfig& cfg);

} // namespace cmac
