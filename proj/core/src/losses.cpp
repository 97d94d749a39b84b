#include "cmac/losses.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "cmac/errors.hpp"

namespace cmac {

ClipResult clip_loss(const SimilarityBatch& batch) {
    const Eigen::MatrixXd& s = batch.matrix;
    const Eigen::Index n = s.rows();
    ClipResult out;
    out.grad = Eigen::MatrixXd::Zero(n, n);

    double loss_rows = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = s.row(i).maxCoeff();
        const Eigen::ArrayXd e = (s.row(i).array() - mx).exp();
        const double z = e.sum();
        loss_rows += -(s(i, i) - mx) + std::log(z);
        for (Eigen::Index j = 0; j < n; ++j) {
            out.grad(i, j) += (e(j) / z - (i == j ? 1.0 : 0.0)) / (2.0 * n);
        }
    }
    double loss_cols = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double mx = s.col(j).maxCoeff();
        const Eigen::ArrayXd e = (s.col(j).array() - mx).exp();
        const double z = e.sum();
        loss_cols += -(s(j, j) - mx) + std::log(z);
        for (Eigen::Index i = 0; i < n; ++i) {
            out.grad(i, j) += (e(i) / z - (i == j ? 1.0 : 0.0)) / (2.0 * n);
        }
    }
    out.loss = 0.5 * (loss_rows + loss_cols) / static_cast<double>(n);
    return out;
}

CmacResult cmac_loss(std::span<const double> scores,
                     const BatchAnnotations& groups,
                     const LossConfig& cfg) {
    if (scores.size() != groups.subgroup_of.size()) {
        throw LengthMismatch("cmac_loss: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(groups.subgroup_of.size()) + " subgroup labels");
    }
    CmacResult out;
    out.grad.assign(scores.size(), 0.0);

    std::map<SubgroupKey, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        members[groups.subgroup_of[i]].push_back(i);
    }
    std::vector<const std::vector<std::size_t>*> eligible;
    for (const auto& [key, idx] : members) {
        if (static_cast<int>(idx.size()) >= cfg.min_subgroup_batch) {
            eligible.push_back(&idx);
        }
    }
    if (eligible.size() < 2) return out;

    // One bandwidth per batch, from the pooled scores, constant w.r.t.
    // the gradient.
    KernelConfig kernel = cfg.kernel;
    if (kernel.bandwidth_mode == KernelConfig::Bandwidth::median_heuristic) {
        kernel = KernelConfig::fixed(median_heuristic_bandwidth(scores), kernel.estimator);
    }

    std::vector<double> xs, ys;
    for (std::size_t a = 0; a < eligible.size(); ++a) {
        for (std::size_t b = a + 1; b < eligible.size(); ++b) {
            const auto& ia = *eligible[a];
            const auto& ib = *eligible[b];
            xs.clear();
            ys.clear();
            for (std::size_t i : ia) xs.push_back(scores[i]);
            for (std::size_t i : ib) ys.push_back(scores[i]);
            out.loss += mmd2(xs, ys, kernel);
            const MmdGradient g = mmd2_grad(xs, ys, kernel);
            for (std::size_t k = 0; k < ia.size(); ++k) out.grad[ia[k]] += g.dx[k];
            for (std::size_t k = 0; k < ib.size(); ++k) out.grad[ib[k]] += g.dy[k];
            ++out.eligible_pairs;
        }
    }
    const double npairs = static_cast<double>(out.eligible_pairs);
    out.loss /= npairs;
    for (double& g : out.grad) g /= npairs;
    return out;
}

TotalResult total_loss(const SimilarityBatch& batch,
                       const BatchAnnotations& groups,
                       const LossConfig& cfg) {
    const Eigen::Index n = batch.matrix.rows();
    if (n < 2) {
        throw BatchTooSmall("total_loss needs a batch of at least 2");
    }
    ClipResult clip = clip_loss(batch);
    TotalResult out;
    out.clip = clip.loss;
    out.grad = std::move(clip.grad);

    if (cfg.lambda_cmac == 0.0) {
        out.loss = out.clip;
        return out;
    }

    const std::vector<double> margins = alignment_scores(batch);
    const CmacResult cmac = cmac_loss(margins, groups, cfg);
    out.cmac = cmac.loss;
    out.loss = out.clip + cfg.lambda_cmac * out.cmac;

    // a_i = S_ii - max_{j != i} S_ij; the max subgradient goes to the
    // lowest index achieving it.
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index jstar = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            if (batch.matrix(i, j) > best) {
                best = batch.matrix(i, j);
                jstar = j;
            }
        }
        const double g = cfg.lambda_cmac * cmac.grad[static_cast<std::size_t>(i)];
        out.grad(i, i) += g;
        out.grad(i, jstar) -= g;
    }
    return out;
}

} // namespace cmac
