#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cmac/alignment.hpp"
#include "cmac/errors.hpp"
#include "cmac/rng.hpp"

using namespace cmac;

namespace {

Eigen::MatrixXd unit_rows(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
        m.row(i) /= m.row(i).norm();
    }
    return m;
}

Eigen::MatrixXd basis(int n, int d) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, d);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

} // namespace

TEST_CASE("similarity_batch on an orthonormal basis gives the identity") {
    const Eigen::MatrixXd e = basis(2, 3);
    const SimilarityBatch b = similarity_batch(e, e, 1.0);
    CHECK(b.matrix.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-12));
}

TEST_CASE("similarity_batch scales a perfect match by 1/temperature") {
    Eigen::MatrixXd v(1, 4);
    v << 0.5, 0.5, 0.5, 0.5;
    const SimilarityBatch b = similarity_batch(v, v, 0.5);
    CHECK(b.matrix(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("similarity_batch hand dot product") {
    Eigen::MatrixXd img(1, 2), txt(1, 2);
    img << 1.0, 0.0;
    txt << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const SimilarityBatch b = similarity_batch(img, txt, 1.0);
    CHECK(b.matrix(0, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
}

TEST_CASE("similarity_batch validates inputs") {
    const Eigen::MatrixXd e2 = basis(2, 3);
    const Eigen::MatrixXd e3 = basis(3, 3);
    CHECK_THROWS_AS(similarity_batch(e2, e3, 1.0), DimensionMismatch);
    CHECK_THROWS_AS(similarity_batch(e2, basis(2, 4), 1.0), DimensionMismatch);
    CHECK_THROWS_AS(similarity_batch(e2, e2, 0.0), NonPositiveTemperature);
    CHECK_THROWS_AS(similarity_batch(e2, e2, -0.1), NonPositiveTemperature);

    Eigen::MatrixXd off = e2;
    off(0, 0) = 1.01; // norm off by 1e-2 > tolerance
    CHECK_THROWS_AS(similarity_batch(off, e2, 1.0), NonUnitNorm);

    // Within tolerance the row is re-normalized, not rejected.
    Eigen::MatrixXd near_unit = e2;
    near_unit(0, 0) = 1.0 + 5e-5;
    const SimilarityBatch b = similarity_batch(near_unit, e2, 1.0);
    CHECK(b.matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("alignment_scores row margins") {
    SimilarityBatch id{Eigen::MatrixXd::Identity(2, 2), 1.0};
    CHECK(alignment_scores(id) == std::vector<double>{1.0, 1.0});

    SimilarityBatch tie{Eigen::MatrixXd(2, 2), 1.0};
    tie.matrix << 0.5, 0.5, 0.2, 0.5;
    const auto a = alignment_scores(tie);
    CHECK(a[0] == doctest::Approx(0.0));
    CHECK(a[1] == doctest::Approx(0.3));

    SimilarityBatch three{Eigen::MatrixXd(3, 3), 1.0};
    three.matrix << 0.9, 0.1, 0.4, 0.2, 0.8, 0.7, 0.0, 0.3, 0.6;
    const auto b = alignment_scores(three);
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.1));
    CHECK(b[2] == doctest::Approx(0.3));
}

TEST_CASE("alignment_scores rejects singleton batches") {
    SimilarityBatch one{Eigen::MatrixXd::Identity(1, 1), 1.0};
    CHECK_THROWS_AS(alignment_scores(one), BatchTooSmall);
}

TEST_CASE("alignment margin is positive iff the own text is strictly best") {
    const Eigen::MatrixXd img = unit_rows(6, 5, 31);
    const Eigen::MatrixXd txt = unit_rows(6, 5, 32);
    const SimilarityBatch b = similarity_batch(img, txt, 0.3);
    const auto a = alignment_scores(b);
    for (int i = 0; i < 6; ++i) {
        bool strictly_best = true;
        for (int j = 0; j < 6; ++j) {
            if (j != i && b.matrix(i, j) >= b.matrix(i, i)) strictly_best = false;
        }
        CHECK((a[static_cast<std::size_t>(i)] > 0.0) == strictly_best);
    }
}

TEST_CASE("permuting the batch permutes the alignment scores") {
    const Eigen::MatrixXd img = unit_rows(5, 4, 33);
    const Eigen::MatrixXd txt = unit_rows(5, 4, 34);
    const auto a = alignment_scores(similarity_batch(img, txt, 0.5));

    const std::vector<int> perm{3, 0, 4, 1, 2};
    Eigen::MatrixXd img_p(5, 4), txt_p(5, 4);
    for (int i = 0; i < 5; ++i) {
        img_p.row(i) = img.row(perm[static_cast<std::size_t>(i)]);
        txt_p.row(i) = txt.row(perm[static_cast<std::size_t>(i)]);
    }
    const auto ap = alignment_scores(similarity_batch(img_p, txt_p, 0.5));
    for (int i = 0; i < 5; ++i) {
        CHECK(ap[static_cast<std::size_t>(i)] ==
              doctest::Approx(a[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]));
    }
}

TEST_CASE("certainty_scores softmax arithmetic") {
    // Image equally similar to both prototypes.
    Eigen::MatrixXd img(1, 2);
    img << 1.0, 0.0;
    ClassPrototypes protos;
    protos.class_texts.resize(2, 2);
    const double r = 1.0 / std::sqrt(2.0);
    protos.class_texts << r, r, r, -r;
    CHECK(certainty_scores(img, protos, {0}, 1.0)[0] == doctest::Approx(0.5).epsilon(1e-12));

    // Similarities (1, 0) to (correct, other).
    ClassPrototypes axis;
    axis.class_texts = Eigen::MatrixXd::Identity(2, 2);
    CHECK(certainty_scores(img, axis, {0}, 1.0)[0] ==
          doctest::Approx(0.73105858).epsilon(1e-8));
    CHECK(certainty_scores(img, axis, {0}, 0.1)[0] ==
          doctest::Approx(0.9999546).epsilon(1e-7));
}

TEST_CASE("certainty over all classes sums to one") {
    const Eigen::MatrixXd img = unit_rows(8, 6, 35);
    ClassPrototypes protos;
    protos.class_texts = unit_rows(4, 6, 36);
    const Eigen::MatrixXd probs = class_probabilities(img, protos, 0.2);
    for (int i = 0; i < 8; ++i) {
        CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
        for (int c = 0; c < 4; ++c) {
            CHECK(probs(i, c) > 0.0);
            CHECK(probs(i, c) < 1.0);
        }
    }
}

TEST_CASE("certainty_scores validates classes and temperature") {
    const Eigen::MatrixXd img = unit_rows(2, 3, 37);
    ClassPrototypes protos;
    protos.class_texts = unit_rows(2, 3, 38);
    CHECK_THROWS_AS(certainty_scores(img, protos, {0, 5}, 1.0), InvalidClassIndex);
    CHECK_THROWS_AS(certainty_scores(img, protos, {0, -1}, 1.0), InvalidClassIndex);
    CHECK_THROWS_AS(certainty_scores(img, protos, {0, 1}, 0.0), NonPositiveTemperature);
    ClassPrototypes single;
    single.class_texts = unit_rows(1, 3, 39);
    CHECK_THROWS_AS(certainty_scores(img, single, {0, 0}, 1.0), InvalidClassIndex);
}

TEST_CASE("predict_labels argmax with lowest-index ties") {
    ClassPrototypes protos;
    protos.class_texts = Eigen::MatrixXd::Identity(3, 3);

    Eigen::MatrixXd own(1, 3);
    own << 1.0, 0.0, 0.0;
    CHECK(predict_labels(own, protos, 0.07) == std::vector<int>{0});

    Eigen::MatrixXd tie(1, 3);
    const double r = 1.0 / std::sqrt(2.0);
    tie << r, r, 0.0; // equal similarity to classes 0 and 1
    CHECK(predict_labels(tie, protos, 1.0) == std::vector<int>{0});

    // Similarities (0.2, 0.9, 0.5) up to normalization noise.
    Eigen::MatrixXd mixed(1, 3);
    mixed << 0.2, 0.9, 0.5;
    mixed.row(0) /= mixed.row(0).norm();
    CHECK(predict_labels(mixed, protos, 1.0) == std::vector<int>{1});
}

TEST_CASE("temperature rescaling leaves the argmax unchanged") {
    const Eigen::MatrixXd img = unit_rows(7, 5, 40);
    const Eigen::MatrixXd txt = unit_rows(7, 5, 41);
    ClassPrototypes protos;
    protos.class_texts = unit_rows(3, 5, 42);
    for (const double c : {2.0, 10.0, 0.25}) {
        const SimilarityBatch b1 = similarity_batch(img, txt, 0.2);
        const SimilarityBatch b2 = similarity_batch(img, txt, 0.2 * c);
        CHECK((b1.matrix / c).isApprox(b2.matrix, 1e-12));
        const auto a1 = alignment_scores(b1);
        const auto a2 = alignment_scores(b2);
        for (std::size_t i = 0; i < a1.size(); ++i) {
            CHECK(a2[i] == doctest::Approx(a1[i] / c).epsilon(1e-12));
        }
        CHECK(predict_labels(img, protos, 0.2) == predict_labels(img, protos, 0.2 * c));
    }
}
