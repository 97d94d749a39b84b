#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cmac {

/// Temperature-scaled cosine-similarity matrix of a mini-batch.
/// matrix(i, j) = <image_i, text_j> / temperature, so raw cosines in
/// [-1, 1] land in [-1/tau, 1/tau].
struct SimilarityBatch {
    Eigen::MatrixXd matrix;
    double temperature = 1.0;

    int size() const { return static_cast<int>(matrix.rows()); }
};

/// Unit text embeddings, one row per diagnostic class, in canonical
/// label order.
struct ClassPrototypes {
    Eigen::MatrixXd class_texts; // C x d, rows unit norm

    int num_classes() const { return static_cast<int>(class_texts.rows()); }
    int dim() const { return static_cast<int>(class_texts.cols()); }
};

/// Build the similarity matrix for paired image/text embeddings given as
/// matrix rows.  Rows must be unit norm within 1e-4 (they are
/// re-normalized internally) and both sides must share dimension and
/// row count.
SimilarityBatch similarity_batch(const Eigen::MatrixXd& images,
                                 const Eigen::MatrixXd& texts,
                                 double temperature);

/// Batch-relative alignment margins a_i = S_ii - max_{j != i} S_ij.
/// Positive means the own text is strictly the best match; zero means a
/// tie with the best distractor.  Needs n >= 2.
std::vector<double> alignment_scores(const SimilarityBatch& batch);

/// Class-relative diagnostic certainty: softmax probability over class
/// prototypes assigned to the correct class, strictly inside (0, 1).
std::vector<double> certainty_scores(const Eigen::MatrixXd& images,
                                     const ClassPrototypes& prototypes,
                                     const std::vector<int>& correct_class,
                                     double temperature);

/// Softmax probabilities over all classes, one row per image.
Eigen::MatrixXd class_probabilities(const Eigen::MatrixXd& images,
                                    const ClassPrototypes& prototypes,
                                    double temperature);

/// Argmax class per image; ties break toward the lowest class index.
std::vector<int> predict_labels(const Eigen::MatrixXd& images,
                                const ClassPrototypes& prototypes,
                                double temperature);

/// Re-normalize rows to unit norm, rejecting rows whose norm deviates
/// from 1 by more than 1e-4.
Eigen::MatrixXd validate_unit_rows(const Eigen::MatrixXd& rows, const char* what);

} // namespace cmac
