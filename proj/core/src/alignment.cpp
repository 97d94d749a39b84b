#include "cmac/alignment.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cmac/errors.hpp"

namespace cmac {

namespace {

constexpr double kNormTolerance = 1e-4;

void check_temperature(double tau) {
    if (!(tau > 0.0)) {
        throw NonPositiveTemperature("temperature must be positive, got " + std::to_string(tau));
    }
}

} // namespace

Eigen::MatrixXd validate_unit_rows(const Eigen::MatrixXd& rows, const char* what) {
    Eigen::MatrixXd out = rows;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (std::abs(norm - 1.0) > kNormTolerance) {
            throw NonUnitNorm(std::string(what) + " row " + std::to_string(i) +
                              " has norm " + std::to_string(norm));
        }
        out.row(i) /= norm;
    }
    return out;
}

SimilarityBatch similarity_batch(const Eigen::MatrixXd& images,
                                 const Eigen::MatrixXd& texts,
                                 double temperature) {
    check_temperature(temperature);
    if (images.rows() != texts.rows()) {
        throw DimensionMismatch("similarity_batch: " + std::to_string(images.rows()) +
                                " images vs " + std::to_string(texts.rows()) + " texts");
    }
    if (images.cols() != texts.cols()) {
        throw DimensionMismatch("similarity_batch: embedding dims differ (" +
                                std::to_string(images.cols()) + " vs " +
                                std::to_string(texts.cols()) + ")");
    }
    if (images.rows() < 1) {
        throw DimensionMismatch("similarity_batch: empty batch");
    }
    const Eigen::MatrixXd zi = validate_unit_rows(images, "image");
    const Eigen::MatrixXd zt = validate_unit_rows(texts, "text");
    return SimilarityBatch{(zi * zt.transpose()) / temperature, temperature};
}

std::vector<double> alignment_scores(const SimilarityBatch& batch) {
    const int n = batch.size();
    if (n < 2) {
        throw BatchTooSmall("alignment_scores needs a batch of at least 2, got " +
                            std::to_string(n));
    }
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            best = std::max(best, batch.matrix(i, j));
        }
        scores[static_cast<std::size_t>(i)] = batch.matrix(i, i) - best;
    }
    return scores;
}

Eigen::MatrixXd class_probabilities(const Eigen::MatrixXd& images,
                                    const ClassPrototypes& prototypes,
                                    double temperature) {
    check_temperature(temperature);
    if (prototypes.num_classes() < 2) {
        throw InvalidClassIndex("need at least two class prototypes");
    }
    if (images.cols() != prototypes.class_texts.cols()) {
        throw DimensionMismatch("class_probabilities: image dim " +
                                std::to_string(images.cols()) + " vs prototype dim " +
                                std::to_string(prototypes.class_texts.cols()));
    }
    const Eigen::MatrixXd zi = validate_unit_rows(images, "image");
    const Eigen::MatrixXd zp = validate_unit_rows(prototypes.class_texts, "prototype");
    Eigen::MatrixXd logits = (zi * zp.transpose()) / temperature;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
        logits.row(i) = e / e.sum();
    }
    return logits;
}

std::vector<double> certainty_scores(const Eigen::MatrixXd& images,
                                     const ClassPrototypes& prototypes,
                                     const std::vector<int>& correct_class,
                                     double temperature) {
    if (static_cast<Eigen::Index>(correct_class.size()) != images.rows()) {
        throw DimensionMismatch("certainty_scores: one class index per image required");
    }
    const Eigen::MatrixXd probs = class_probabilities(images, prototypes, temperature);
    std::vector<double> out(correct_class.size());
    for (std::size_t i = 0; i < correct_class.size(); ++i) {
        const int c = correct_class[i];
        if (c < 0 || c >= prototypes.num_classes()) {
            throw InvalidClassIndex("class index " + std::to_string(c) + " out of range");
        }
        out[i] = probs(static_cast<Eigen::Index>(i), c);
    }
    return out;
}

std::vector<int> predict_labels(const Eigen::MatrixXd& images,
                                const ClassPrototypes& prototypes,
                                double temperature) {
    const Eigen::MatrixXd probs = class_probabilities(images, prototypes, temperature);
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < probs.cols(); ++c) {
            if (probs(i, c) > probs(i, best)) best = c; // strict: ties keep lowest index
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

} // namespace cmac
