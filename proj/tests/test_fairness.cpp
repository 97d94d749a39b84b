#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cmac/errors.hpp"
#include "cmac/fairness.hpp"
#include "cmac/rng.hpp"
#include "oracles.hpp"

using namespace cmac;

namespace {

ScoredRow row(std::int64_t id, const char* group, int label, double score,
              std::optional<int> predicted = std::nullopt) {
    ScoredRow r;
    r.id = id;
    r.subgroup = SubgroupKey{{group}};
    r.true_label = label;
    r.score = score;
    r.predicted = predicted;
    return r;
}

/// Counts with the requested per-subgroup TPR over `positives` positives;
/// negatives get one false positive so FPR stays defined and equal.
ConfusionBySubgroup counts_with_tprs(const std::vector<double>& tprs, std::int64_t positives = 100) {
    ConfusionBySubgroup counts;
    for (std::size_t g = 0; g < tprs.size(); ++g) {
        ConfusionCounts c;
        c.tp = static_cast<std::int64_t>(std::llround(tprs[g] * static_cast<double>(positives)));
        c.fn = positives - c.tp;
        c.fp = 10;
        c.tn = 90;
        counts[SubgroupKey{{std::string(1, static_cast<char>('a' + g))}}] = c;
    }
    return counts;
}

} // namespace

TEST_CASE("confusion_by_subgroup tallies and threshold boundary") {
    LabeledScores data{
        row(0, "g1", 1, 1.0),  row(1, "g1", 1, 0.5),  row(2, "g1", 0, 0.49),
        row(3, "g1", 0, 0.51), row(4, "g2", 1, 0.7),  row(5, "g2", 0, 0.2),
        row(6, "g2", 0, 0.5),  row(7, "g2", 1, 0.31),
    };
    const auto counts = confusion_by_subgroup(data, 0.5);
    const ConfusionCounts& g1 = counts.at(SubgroupKey{{"g1"}});
    // score 0.5 at threshold 0.5 predicts positive
    CHECK(g1.tp == 2);
    CHECK(g1.fn == 0);
    CHECK(g1.fp == 1);
    CHECK(g1.tn == 1);
    const ConfusionCounts& g2 = counts.at(SubgroupKey{{"g2"}});
    CHECK(g2.tp == 1);
    CHECK(g2.fn == 1);
    CHECK(g2.fp == 1);
    CHECK(g2.tn == 1);
}

TEST_CASE("confusion honors explicit predictions over the threshold rule") {
    LabeledScores data{row(0, "g", 1, 0.9, 0), row(1, "g", 0, 0.1, 1)};
    const auto counts = confusion_by_subgroup(data, 0.5);
    CHECK(counts.at(SubgroupKey{{"g"}}).fn == 1);
    CHECK(counts.at(SubgroupKey{{"g"}}).fp == 1);
}

TEST_CASE("all positives scored at one never miss") {
    LabeledScores data;
    for (int i = 0; i < 20; ++i) {
        data.push_back(row(i, i % 2 == 0 ? "a" : "b", 1, 1.0));
    }
    for (const auto& [key, c] : confusion_by_subgroup(data, 0.5)) CHECK(c.fn == 0);
}

TEST_CASE("delta_tpr truth table") {
    CHECK(delta_tpr(counts_with_tprs({0.7, 0.7, 0.7})).value == doctest::Approx(0.0));
    CHECK(delta_tpr(counts_with_tprs({0.86, 0.80})).value == doctest::Approx(0.06));
    CHECK(delta_tpr(counts_with_tprs({0.9, 0.5, 0.7})).value == doctest::Approx(0.4));
}

TEST_CASE("delta_tpr excludes zero-positive subgroups and flags them") {
    ConfusionBySubgroup counts = counts_with_tprs({0.9, 0.6});
    ConfusionCounts none;
    none.tn = 50;
    none.fp = 5;
    counts[SubgroupKey{{"empty"}}] = none;
    const RateGap gap = delta_tpr(counts);
    CHECK(gap.value == doctest::Approx(0.3));
    REQUIRE(gap.excluded.size() == 1);
    CHECK(gap.excluded[0] == SubgroupKey{{"empty"}});

    ConfusionBySubgroup lonely;
    lonely[SubgroupKey{{"a"}}] = counts_with_tprs({0.5}).begin()->second;
    CHECK_THROWS_AS(delta_tpr(lonely), NoEligibleSubgroups);
}

TEST_CASE("dpd depends only on predictions") {
    LabeledScores data;
    for (int i = 0; i < 10; ++i) data.push_back(row(i, "a", i % 2, i < 5 ? 0.9 : 0.1));
    for (int i = 10; i < 20; ++i) data.push_back(row(i, "b", i % 2, i < 12 ? 0.9 : 0.1));
    const double v = dpd(confusion_by_subgroup(data, 0.5)).value;
    CHECK(v == doctest::Approx(0.3)); // rates 0.5 vs 0.2

    LabeledScores relabeled = data;
    for (auto& r : relabeled) r.true_label = 1 - r.true_label;
    CHECK(dpd(confusion_by_subgroup(relabeled, 0.5)).value == doctest::Approx(v));
}

TEST_CASE("delta_fpr mirrors delta_tpr over negatives") {
    ConfusionBySubgroup counts;
    ConfusionCounts a;
    a.tp = 5;
    a.fn = 5;
    a.fp = 22;
    a.tn = 78;
    ConfusionCounts b;
    b.tp = 5;
    b.fn = 5;
    b.fp = 0;
    b.tn = 100;
    counts[SubgroupKey{{"a"}}] = a;
    counts[SubgroupKey{{"b"}}] = b;
    CHECK(delta_fpr(counts).value == doctest::Approx(0.22));

    ConfusionCounts no_negatives;
    no_negatives.tp = 4;
    no_negatives.fn = 1;
    counts[SubgroupKey{{"c"}}] = no_negatives;
    const RateGap gap = delta_fpr(counts);
    CHECK(gap.value == doctest::Approx(0.22));
    REQUIRE(gap.excluded.size() == 1);
    CHECK(gap.excluded[0] == SubgroupKey{{"c"}});
}

TEST_CASE("deodds uses pooled population rates") {
    // g1: tpr 0.9 (9/10), fpr 0.1 (1/10); g2 tuned so the pool sits at
    // tpr 0.8, fpr 0.15.
    ConfusionBySubgroup counts;
    ConfusionCounts g1;
    g1.tp = 9;
    g1.fn = 1;
    g1.fp = 1;
    g1.tn = 9;
    ConfusionCounts g2;
    g2.tp = 7;
    g2.fn = 3;
    g2.fp = 2;
    g2.tn = 8;
    counts[SubgroupKey{{"g1"}}] = g1;
    counts[SubgroupKey{{"g2"}}] = g2;
    const DeoddsResult r = deodds(counts);
    CHECK(r.pooled_tpr == doctest::Approx(0.8));
    CHECK(r.pooled_fpr == doctest::Approx(0.15));
    CHECK(r.per_subgroup.at(SubgroupKey{{"g1"}}) == doctest::Approx(0.15));
    CHECK(r.per_subgroup.at(SubgroupKey{{"g2"}}) == doctest::Approx(0.15));
    CHECK(r.mean == doctest::Approx(0.15));
}

TEST_CASE("deodds is zero for a subgroup matching the population mix") {
    ConfusionBySubgroup counts;
    ConfusionCounts c;
    c.tp = 8;
    c.fn = 2;
    c.fp = 3;
    c.tn = 7;
    counts[SubgroupKey{{"g1"}}] = c;
    counts[SubgroupKey{{"g2"}}] = c;
    const DeoddsResult r = deodds(counts);
    CHECK(r.per_subgroup.at(SubgroupKey{{"g1"}}) == doctest::Approx(0.0));
    CHECK(r.mean == doctest::Approx(0.0));
}

TEST_CASE("deodds mean matches a hand average on three subgroups") {
    ConfusionBySubgroup counts;
    ConfusionCounts a;
    a.tp = 10;
    a.fn = 0;
    a.fp = 0;
    a.tn = 10;
    ConfusionCounts b;
    b.tp = 5;
    b.fn = 5;
    b.fp = 5;
    b.tn = 5;
    ConfusionCounts c;
    c.tp = 8;
    c.fn = 2;
    c.fp = 1;
    c.tn = 9;
    counts[SubgroupKey{{"a"}}] = a;
    counts[SubgroupKey{{"b"}}] = b;
    counts[SubgroupKey{{"c"}}] = c;
    const DeoddsResult r = deodds(counts);
    const double pooled_tpr = 23.0 / 30.0;
    const double pooled_fpr = 6.0 / 30.0;
    const double da = std::abs(1.0 - pooled_tpr) + std::abs(0.0 - pooled_fpr);
    const double db = std::abs(0.5 - pooled_tpr) + std::abs(0.5 - pooled_fpr);
    const double dc = std::abs(0.8 - pooled_tpr) + std::abs(0.1 - pooled_fpr);
    CHECK(r.mean == doctest::Approx((da + db + dc) / 3.0).epsilon(1e-12));

    ConfusionBySubgroup degenerate;
    ConfusionCounts pos_only;
    pos_only.tp = 5;
    pos_only.fn = 5;
    degenerate[SubgroupKey{{"x"}}] = pos_only;
    CHECK_THROWS_AS(deodds(degenerate), DegeneratePopulation);
}

TEST_CASE("df criterion thresholds") {
    CHECK(df_check(counts_with_tprs({0.7, 0.7})).pass);
    CHECK(df_check(counts_with_tprs({0.7, 0.7})).worst == doctest::Approx(1.0));
    const CriterionResult pass = df_check(counts_with_tprs({0.8, 0.5}), 0.5);
    CHECK(pass.pass);
    CHECK(pass.worst == doctest::Approx(1.6));
    const CriterionResult fail = df_check(counts_with_tprs({0.9, 0.5}), 0.5);
    CHECK_FALSE(fail.pass);
    CHECK(fail.worst == doctest::Approx(1.8));
}

TEST_CASE("df fails unboundedly when one subgroup detects nothing") {
    const CriterionResult r = df_check(counts_with_tprs({0.0, 0.5}), 0.5);
    CHECK_FALSE(r.pass);
    CHECK(std::isinf(r.worst));
    // two zero-TPR subgroups are mutually fine
    CHECK(df_check(counts_with_tprs({0.0, 0.0})).pass);
}

TEST_CASE("if-alpha criterion thresholds") {
    CHECK(if_alpha_check(counts_with_tprs({0.6, 0.6})).pass);
    CHECK(if_alpha_check(counts_with_tprs({0.6, 0.6})).worst == doctest::Approx(0.0));
    const CriterionResult pass = if_alpha_check(counts_with_tprs({0.9, 0.6}), 0.5, 0.4);
    CHECK(pass.pass);
    CHECK(pass.worst == doctest::Approx(0.5 * 0.3 + 0.5 * (0.3 / 0.9)).epsilon(1e-9));
    const CriterionResult fail = if_alpha_check(counts_with_tprs({0.9, 0.4}), 0.5, 0.4);
    CHECK_FALSE(fail.pass);
    CHECK(fail.worst == doctest::Approx(0.5 * 0.5 + 0.5 * (0.5 / 0.9)).epsilon(1e-9));
}

TEST_CASE("certainty gap over subgroup means") {
    LabeledScores same{row(0, "a", 1, 0.7), row(1, "a", 1, 0.9), row(2, "b", 1, 0.9),
                       row(3, "b", 1, 0.7)};
    CHECK(certainty_gap(same) == doctest::Approx(0.0));

    LabeledScores gap{row(0, "a", 1, 0.9), row(1, "b", 1, 0.6)};
    CHECK(certainty_gap(gap) == doctest::Approx(0.3));

    // negatives contribute 1 - score
    LabeledScores mixed{row(0, "a", 0, 0.1), row(1, "b", 1, 0.6)};
    CHECK(certainty_gap(mixed) == doctest::Approx(0.3));

    LabeledScores three{row(0, "a", 1, 0.2), row(1, "b", 1, 0.5), row(2, "c", 1, 0.95)};
    double worst = 0.0;
    const std::vector<double> means{0.2, 0.5, 0.95};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs(means[i] - means[j]));
    }
    CHECK(certainty_gap(three) == doctest::Approx(worst));

    CHECK_THROWS_AS(certainty_gap(LabeledScores{row(0, "a", 1, 0.5)}), NoEligibleSubgroups);
}

TEST_CASE("uncertainty zone fraction with closed bounds") {
    LabeledScores data{row(0, "g", 1, 0.45), row(1, "g", 1, 0.5), row(2, "g", 1, 0.7),
                       row(3, "g", 1, 0.9)};
    CHECK(uncertainty_zone_fraction(data).at(SubgroupKey{{"g"}}) == doctest::Approx(0.5));

    LabeledScores confident{row(0, "g", 1, 1.0), row(1, "g", 1, 1.0)};
    CHECK(uncertainty_zone_fraction(confident).at(SubgroupKey{{"g"}}) == doctest::Approx(0.0));

    LabeledScores boundary{row(0, "g", 1, 0.40), row(1, "g", 1, 0.601)};
    CHECK(uncertainty_zone_fraction(boundary).at(SubgroupKey{{"g"}}) == doctest::Approx(0.5));
}

TEST_CASE("kde peak height and symmetry for a single score") {
    KdeOptions opts;
    opts.mode = KdeOptions::Bandwidth::fixed;
    opts.fixed_bandwidth = 0.05;
    const KdeCurve curve = kde_curve(std::vector<double>{0.5}, opts);
    // grid point at exactly 0.5 exists (201 points over [-0.1, 1.1])
    double peak = 0.0;
    for (std::size_t i = 0; i < curve.x.size(); ++i) peak = std::max(peak, curve.density[i]);
    CHECK(peak == doctest::Approx(1.0 / (0.05 * std::sqrt(2.0 * M_PI))).epsilon(1e-9));
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
        const double mirrored = 1.0 - curve.x[i];
        for (std::size_t j = 0; j < curve.x.size(); ++j) {
            if (std::abs(curve.x[j] - mirrored) < 1e-12) {
                CHECK(curve.density[i] == doctest::Approx(curve.density[j]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("kde integrates to one over the padded grid") {
    Rng rng(139);
    std::vector<double> scores;
    for (int i = 0; i < 100; ++i) scores.push_back(rng.uniform01());
    const KdeCurve curve = kde_curve(scores);
    CHECK(oracle::trapezoid(curve.x, curve.density) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("kde integral holds even for boundary-hugging bimodal scores") {
    std::vector<double> scores;
    for (int i = 0; i < 60; ++i) scores.push_back(i % 2 == 0 ? 0.999 : 0.001);
    const KdeCurve curve = kde_curve(scores);
    CHECK(curve.bandwidth_capped);
    const double mass = oracle::trapezoid(curve.x, curve.density);
    CHECK(mass >= 0.997);
    CHECK(mass <= 1.003);
}

TEST_CASE("kde degenerate bandwidth fallback") {
    const KdeCurve curve = kde_curve(std::vector<double>{0.3, 0.3, 0.3});
    CHECK(curve.degenerate_fallback);
    CHECK(curve.bandwidth == doctest::Approx(0.01));
}

TEST_CASE("fn_prevented reproduces the published impact rows") {
    const ImpactRow young = fn_prevented(SubgroupKey{{"0-40", "female"}}, 13, 5, 2);
    CHECK(young.prevented == 3);
    CHECK(*young.relative == doctest::Approx(0.60).epsilon(1e-12));

    const ImpactRow older = fn_prevented(SubgroupKey{{"60+", "female", "non-white"}}, 65, 44, 40);
    CHECK(older.prevented == 4);
    CHECK(*older.relative == doctest::Approx(0.0909).epsilon(1e-3));

    const ImpactRow flat = fn_prevented(SubgroupKey{{"x"}}, 30, 7, 7);
    CHECK(flat.prevented == 0);
    CHECK(*flat.relative == doctest::Approx(0.0));

    const ImpactRow zero_baseline = fn_prevented(SubgroupKey{{"x"}}, 30, 0, 0);
    CHECK_FALSE(zero_baseline.relative.has_value());

    CHECK_THROWS_AS(fn_prevented(SubgroupKey{{"x"}}, 5, 6, 1), SchemaError);
}

TEST_CASE("impact table totals for the dermatology counts") {
    const std::vector<ImpactRow> rows{
        fn_prevented(SubgroupKey{{"0-40", "female"}}, 13, 5, 2),
        fn_prevented(SubgroupKey{{"41-60", "female"}}, 55, 6, 3),
        fn_prevented(SubgroupKey{{"60+", "female"}}, 67, 12, 9),
        fn_prevented(SubgroupKey{{"0-40", "male"}}, 8, 3, 2),
        fn_prevented(SubgroupKey{{"41-60", "male"}}, 66, 10, 9),
        fn_prevented(SubgroupKey{{"60+", "male"}}, 170, 28, 21),
    };
    const ImpactTable table = impact_table(rows);
    CHECK(table.total_positives == 379);
    CHECK(table.total_fn_baseline == 64);
    CHECK(table.total_fn_new == 46);
    CHECK(table.total_prevented == 18);
    CHECK(*table.total_relative == doctest::Approx(0.281).epsilon(1e-2));
}

TEST_CASE("impact table totals for the ophthalmology counts") {
    const std::vector<ImpactRow> rows{
        fn_prevented(SubgroupKey{{"0-60", "female", "w"}}, 37, 35, 34),
        fn_prevented(SubgroupKey{{"0-60", "female", "nw"}}, 43, 35, 33),
        fn_prevented(SubgroupKey{{"60+", "female", "w"}}, 119, 86, 81),
        fn_prevented(SubgroupKey{{"60+", "female", "nw"}}, 65, 44, 40),
        fn_prevented(SubgroupKey{{"0-60", "male", "w"}}, 77, 71, 69),
        fn_prevented(SubgroupKey{{"0-60", "male", "nw"}}, 94, 81, 79),
        fn_prevented(SubgroupKey{{"60+", "male", "w"}}, 226, 158, 149),
        fn_prevented(SubgroupKey{{"60+", "male", "nw"}}, 60, 39, 36),
    };
    const ImpactTable table = impact_table(rows);
    CHECK(table.total_positives == 721);
    CHECK(table.total_fn_baseline == 549);
    CHECK(table.total_fn_new == 521);
    CHECK(table.total_prevented == 28);
    CHECK(*table.total_relative == doctest::Approx(0.051).epsilon(1e-2));

    const ImpactTable single = impact_table({rows[0]});
    CHECK(single.total_prevented == rows[0].prevented);
    CHECK(*single.total_relative == doctest::Approx(*rows[0].relative));
}

TEST_CASE("metrics are invariant under row reordering") {
    Rng rng(149);
    LabeledScores data;
    for (int i = 0; i < 60; ++i) {
        data.push_back(row(i, i % 3 == 0 ? "a" : (i % 3 == 1 ? "b" : "c"),
                           rng.uniform01() < 0.4 ? 1 : 0, rng.uniform01()));
    }
    LabeledScores shuffled = data;
    std::vector<std::size_t> order(shuffled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    LabeledScores reordered;
    for (std::size_t i : order) reordered.push_back(data[i]);

    const auto c1 = confusion_by_subgroup(data, 0.5);
    const auto c2 = confusion_by_subgroup(reordered, 0.5);
    CHECK(delta_tpr(c1).value == delta_tpr(c2).value);
    CHECK(dpd(c1).value == dpd(c2).value);
    CHECK(delta_fpr(c1).value == delta_fpr(c2).value);
    CHECK(deodds(c1).mean == deodds(c2).mean);
    CHECK(certainty_gap(data) == doctest::Approx(certainty_gap(reordered)).epsilon(1e-12));
}

TEST_CASE("build_report assembles aggregates, flags and bootstrap CIs") {
    Rng rng(151);
    LabeledScores data;
    int id = 0;
    for (const char* g : {"a", "b", "c"}) {
        for (int i = 0; i < 40; ++i) {
            const int label = rng.uniform01() < 0.45 ? 1 : 0;
            const double score =
                std::clamp(label == 1 ? 0.6 + 0.2 * rng.gaussian() : 0.3 + 0.2 * rng.gaussian(),
                           0.0, 1.0);
            data.push_back(row(id++, g, label, score));
        }
    }
    // one subgroup with no positives at all
    for (int i = 0; i < 15; ++i) data.push_back(row(id++, "neg_only", 0, 0.2));

    ReportOptions options;
    options.bootstrap = BootstrapConfig{.n_resamples = 200, .level = 0.95, .seed = 17};
    const FairnessReport report = build_report(data, options);

    CHECK(report.subgroups.size() == 4);
    CHECK(report.aggregate.n == static_cast<std::int64_t>(data.size()));
    REQUIRE(report.zero_positive_subgroups.size() == 1);
    CHECK(report.zero_positive_subgroups[0] == SubgroupKey{{"neg_only"}});
    CHECK(report.aggregate.ci.count("auc") == 1);
    CHECK(report.aggregate.ci.count("delta_tpr") == 1);
    const BootstrapCI& auc_ci = report.aggregate.ci.at("auc");
    CHECK(auc_ci.lo <= auc_ci.point);
    CHECK(auc_ci.point <= auc_ci.hi);
    for (const auto& sg : report.subgroups) {
        if (sg.key == SubgroupKey{{"neg_only"}}) {
            CHECK_FALSE(sg.tpr.has_value());
            CHECK_FALSE(sg.auc.has_value());
        } else {
            CHECK(sg.ci.count("tpr") == 1);
        }
    }
}
