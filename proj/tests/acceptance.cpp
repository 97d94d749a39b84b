// Acceptance suite: every release criterion in one binary, one pass/fail
// line each.  Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmac/cohort.hpp"
#include "cmac/errors.hpp"
#include "cmac/fairness.hpp"
#include "cmac/io.hpp"
#include "cmac/losses.hpp"
#include "cmac/mmd.hpp"
#include "cmac/pipeline.hpp"
#include "cmac/rng.hpp"
#include "cmac/stats.hpp"
#include "cmac/trainer.hpp"
#include "cmac/types.hpp"
#include "oracles.hpp"

using namespace cmac;

namespace {

namespace fs = std::filesystem;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string out_path(const std::string& name) {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "cmacmmd_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return (dir / name).string();
}

double round1(double percent) { return std::round(percent * 10.0) / 10.0; }

// --- criterion 1: clinical impact reproduction -----------------------------

struct PublishedImpactRow {
    SubgroupKey key;
    std::int64_t n_test;
    std::int64_t positives;
    std::int64_t fn_baseline;
    std::int64_t fn_new;
    double relative_percent; // published parenthetical, one decimal
};

const std::vector<PublishedImpactRow> kDermImpact = {
    {{{"0-40", "female"}}, 222, 13, 5, 2, 60.0},
    {{{"41-60", "female"}}, 459, 55, 6, 3, 50.0},
    {{{"60+", "female"}}, 248, 67, 12, 9, 25.0},
    {{{"0-40", "male"}}, 166, 8, 3, 2, 33.3},
    {{{"41-60", "male"}}, 415, 66, 10, 9, 10.0},
    {{{"60+", "male"}}, 480, 170, 28, 21, 25.0},
};

const std::vector<PublishedImpactRow> kOphImpact = {
    {{{"0-60", "female", "white"}}, 108, 37, 35, 34, 2.9},
    {{{"0-60", "female", "non-white"}}, 109, 43, 35, 33, 5.7},
    {{{"60+", "female", "white"}}, 266, 119, 86, 81, 5.8},
    {{{"60+", "female", "non-white"}}, 131, 65, 44, 40, 9.1},
    {{{"0-60", "male", "white"}}, 204, 77, 71, 69, 2.8},
    {{{"0-60", "male", "non-white"}}, 226, 94, 81, 79, 2.5},
    {{{"60+", "male", "white"}}, 472, 226, 158, 149, 5.7},
    {{{"60+", "male", "non-white"}}, 110, 60, 39, 36, 7.7},
};

/// Scored datasets whose thresholded confusion matrices reproduce the
/// published counts exactly.
std::pair<ScoredDataset, ScoredDataset> impact_fixture(
    const std::vector<PublishedImpactRow>& rows, std::size_t n_attributes) {
    ScoredDataset base, cand;
    base.attribute_names.assign(n_attributes, "a");
    for (std::size_t i = 0; i < n_attributes; ++i) {
        base.attribute_names[i] = "attr" + std::to_string(i);
    }
    cand.attribute_names = base.attribute_names;
    std::int64_t id = 0;
    for (const auto& row : rows) {
        for (std::int64_t k = 0; k < row.n_test; ++k) {
            ScoredRow a;
            a.id = id++;
            a.subgroup = row.key;
            a.true_label = k < row.positives ? 1 : 0;
            a.score = a.true_label == 1 ? (k < row.fn_baseline ? 0.1 : 0.9) : 0.1;
            ScoredRow b = a;
            b.score = b.true_label == 1 ? (k < row.fn_new ? 0.1 : 0.9) : 0.1;
            base.rows.push_back(a);
            cand.rows.push_back(b);
        }
    }
    return {base, cand};
}

Check criterion_impact() {
    Check check;
    const auto verify_table = [&](const std::vector<PublishedImpactRow>& rows,
                                  std::int64_t expect_prevented, double expect_percent,
                                  const char* name) {
        std::vector<ImpactRow> impact_rows;
        for (const auto& r : rows) {
            impact_rows.push_back(fn_prevented(r.key, r.positives, r.fn_baseline, r.fn_new));
        }
        const ImpactTable table = impact_table(impact_rows);
        check.require(table.total_prevented == expect_prevented,
                      std::string(name) + ": total prevented " +
                          std::to_string(table.total_prevented));
        check.require(table.total_relative.has_value(), std::string(name) + ": missing relative");
        const double rel_pp = 100.0 * *table.total_relative;
        check.require(std::abs(rel_pp - expect_percent) <= 0.05,
                      std::string(name) + ": relative " + std::to_string(rel_pp));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            check.require(table.rows[i].relative.has_value(), "row relative missing");
            check.require(round1(100.0 * *table.rows[i].relative) == rows[i].relative_percent,
                          std::string(name) + " row " + rows[i].key.str() + ": " +
                              std::to_string(100.0 * *table.rows[i].relative) + " vs " +
                              std::to_string(rows[i].relative_percent));
        }

        // The same counts fed through scored fixtures and the compare
        // pipeline.
        const auto [base, cand] = impact_fixture(rows, rows.front().key.values.size());
        const Comparison cmp = compare_scored(base, cand);
        check.require(cmp.impact.total_prevented == expect_prevented,
                      std::string(name) + ": pipeline prevented " +
                          std::to_string(cmp.impact.total_prevented));
        check.require(std::abs(100.0 * *cmp.impact.total_relative - expect_percent) <= 0.05,
                      std::string(name) + ": pipeline relative");
    };
    verify_table(kDermImpact, 18, 28.1, "derm");
    verify_table(kOphImpact, 28, 5.1, "oph");
    return check;
}

// --- criterion 2: gradient fidelity -----------------------------------------

Check criterion_gradients() {
    Check check;
    Rng rng(211);
    double worst_mmd = 0.0, worst_clip = 0.0, worst_cmac = 0.0, worst_total = 0.0;

    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t m = 1 + rng.next_below(8);
        const std::size_t n = 1 + rng.next_below(8);
        std::vector<double> x(m), y(n);
        for (double& v : x) v = rng.gaussian();
        for (double& v : y) v = rng.gaussian();
        const KernelConfig kernel =
            KernelConfig::fixed(resolve_bandwidth(x, y, KernelConfig::median()));
        const MmdGradient g = mmd2_grad(x, y, kernel);
        const auto fx = [&](const std::vector<double>& xs) { return mmd2(xs, y, kernel); };
        const auto fy = [&](const std::vector<double>& ys) { return mmd2(x, ys, kernel); };
        worst_mmd = std::max(worst_mmd,
                             oracle::max_relative_error(g.dx, oracle::central_difference(fx, x)));
        worst_mmd = std::max(worst_mmd,
                             oracle::max_relative_error(g.dy, oracle::central_difference(fy, y)));
    }

    const auto matrix_of = [](const std::vector<double>& v, int n) {
        Eigen::MatrixXd s(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) s(i, j) = v[static_cast<std::size_t>(i * n + j)];
        }
        return s;
    };
    const auto flat = [](const Eigen::MatrixXd& s) {
        std::vector<double> v;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            for (Eigen::Index j = 0; j < s.cols(); ++j) v.push_back(s(i, j));
        }
        return v;
    };

    for (int inst = 0; inst < 100; ++inst) {
        const int n = 2 + static_cast<int>(rng.next_below(7));
        std::vector<double> entries(static_cast<std::size_t>(n * n));
        for (double& v : entries) v = rng.gaussian();
        const SimilarityBatch batch{matrix_of(entries, n), 1.0};
        const ClipResult clip = clip_loss(batch);
        const auto f = [&](const std::vector<double>& v) {
            return clip_loss(SimilarityBatch{matrix_of(v, n), 1.0}).loss;
        };
        worst_clip = std::max(
            worst_clip,
            oracle::max_relative_error(flat(clip.grad), oracle::central_difference(f, entries)));
    }

    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 4 + rng.next_below(5);
        std::vector<double> scores(n);
        for (double& v : scores) v = rng.gaussian();
        BatchAnnotations groups;
        for (std::size_t i = 0; i < n; ++i) {
            groups.subgroup_of.push_back(SubgroupKey{{i < n / 2 ? "a" : "b"}});
        }
        LossConfig cfg;
        cfg.kernel = KernelConfig::fixed(0.8);
        const CmacResult r = cmac_loss(scores, groups, cfg);
        const auto f = [&](const std::vector<double>& v) {
            return cmac_loss(v, groups, cfg).loss;
        };
        worst_cmac = std::max(
            worst_cmac,
            oracle::max_relative_error(r.grad, oracle::central_difference(f, scores)));
    }

    for (int inst = 0; inst < 100; ++inst) {
        const int n = 4 + static_cast<int>(rng.next_below(5));
        std::vector<double> entries(static_cast<std::size_t>(n * n));
        for (double& v : entries) v = rng.gaussian();
        BatchAnnotations groups;
        for (int i = 0; i < n; ++i) {
            groups.subgroup_of.push_back(SubgroupKey{{i % 2 == 0 ? "a" : "b"}});
        }
        LossConfig cfg;
        cfg.lambda_cmac = 0.5;
        cfg.kernel = KernelConfig::fixed(0.7);
        const TotalResult r = total_loss(SimilarityBatch{matrix_of(entries, n), 1.0}, groups, cfg);
        const auto f = [&](const std::vector<double>& v) {
            return total_loss(SimilarityBatch{matrix_of(v, n), 1.0}, groups, cfg).loss;
        };
        worst_total = std::max(
            worst_total,
            oracle::max_relative_error(flat(r.grad), oracle::central_difference(f, entries)));
    }

    const auto sci = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2e", v);
        return std::string(buf);
    };
    check.require(worst_mmd <= 1e-4, "mmd2 grad rel err " + sci(worst_mmd));
    check.require(worst_clip <= 1e-4, "clip grad rel err " + sci(worst_clip));
    check.require(worst_cmac <= 1e-4, "cmac grad rel err " + sci(worst_cmac));
    check.require(worst_total <= 1e-4, "total grad rel err " + sci(worst_total));
    check.detail = "max rel err: mmd " + sci(worst_mmd) + ", clip " + sci(worst_clip) +
                   ", cmac " + sci(worst_cmac) + ", total " + sci(worst_total);
    return check;
}

// --- criterion 3: MMD properties ---------------------------------------------

Check criterion_mmd_properties() {
    Check check;
    Rng rng(307);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(1 + rng.next_below(8)), y(1 + rng.next_below(8));
        for (double& v : x) v = rng.gaussian();
        for (double& v : y) v = rng.gaussian();
        const double v = mmd2(x, y, KernelConfig::median());
        check.require(v >= -1e-12, "biased mmd2 below floor: " + std::to_string(v));
        check.require(mmd2(x, y, KernelConfig::fixed(1.0)) == mmd2(y, x, KernelConfig::fixed(1.0)),
                      "symmetry violated");
        if (!check.ok) break;
    }
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x(2 + rng.next_below(6));
        for (double& v : x) v = rng.gaussian();
        check.require(std::abs(mmd2(x, x, KernelConfig::median())) <= 1e-12,
                      "mmd2(X,X) above 1e-12");
    }
    const double hand =
        mmd2(std::vector<double>{0.0}, std::vector<double>{1.0}, KernelConfig::fixed(1.0));
    check.require(std::abs(hand - 0.78693868) <= 1e-8,
                  "hand case " + std::to_string(hand));
    return check;
}

// --- criterion 4: statistical-test oracles ----------------------------------

Check criterion_stat_oracles() {
    Check check;
    Rng rng(401);

    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 8 + rng.next_below(43);
        std::vector<double> a(n), b(n);
        std::vector<int> labels(n);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n; ++k) {
            a[k] = static_cast<double>(rng.next_below(9)) / 8.0;
            b[k] = std::min(1.0, a[k] + 0.25 * rng.gaussian());
            labels[k] = rng.uniform01() < 0.5 ? 1 : 0;
            pos += static_cast<std::size_t>(labels[k]);
        }
        if (pos < 2 || n - pos < 2) continue;
        try {
            const DelongResult r = delong_test(a, b, labels);
            const double z_oracle = oracle::delong_z_naive(a, b, labels);
            check.require(std::abs(r.z - z_oracle) <= 1e-10,
                          "delong z mismatch " + std::to_string(std::abs(r.z - z_oracle)));
        } catch (const DegenerateVariance&) {
        }
    }

    const WilcoxonResult quint = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5});
    check.require(quint.p == 0.0625, "quintuple p " + std::to_string(quint.p));
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + rng.next_below(10);
        std::vector<double> diffs(n);
        bool all_zero = true;
        for (double& v : diffs) {
            v = rng.uniform01() < 0.3 ? std::round(rng.gaussian()) : rng.gaussian();
            all_zero &= v == 0.0;
        }
        if (all_zero) diffs[0] = 0.5;
        const WilcoxonResult r = wilcoxon_signed_rank(diffs);
        const double p_oracle = oracle::wilcoxon_exact_p_dp(oracle::abs_midranks(diffs), r.w);
        check.require(r.p == p_oracle, "wilcoxon exact mismatch at n=" + std::to_string(n));
    }

    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 4 + rng.next_below(30);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t k = 0; k < n; ++k) {
            scores[k] = static_cast<double>(rng.next_below(5)) / 4.0;
            labels[k] = rng.uniform01() < 0.5 ? 1 : 0;
            (labels[k] == 1 ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[n - 1] = 0;
        check.require(roc_auc(scores, labels) == oracle::pairwise_auc(scores, labels),
                      "auc enumeration mismatch");
    }
    return check;
}

// --- criterion 5: metric truth tables ----------------------------------------

ConfusionBySubgroup tpr_counts(const std::vector<double>& tprs) {
    ConfusionBySubgroup counts;
    for (std::size_t g = 0; g < tprs.size(); ++g) {
        ConfusionCounts c;
        c.tp = static_cast<std::int64_t>(std::llround(100.0 * tprs[g]));
        c.fn = 100 - c.tp;
        c.fp = 5;
        c.tn = 95;
        counts[SubgroupKey{{std::string(1, static_cast<char>('a' + g))}}] = c;
    }
    return counts;
}

Check criterion_truth_tables() {
    Check check;
    check.require(df_check(tpr_counts({0.8, 0.5}), 0.5).pass, "df should pass {0.8, 0.5}");
    check.require(!df_check(tpr_counts({0.9, 0.5}), 0.5).pass, "df should fail {0.9, 0.5}");
    check.require(if_alpha_check(tpr_counts({0.9, 0.6}), 0.5, 0.4).pass,
                  "if-alpha should pass {0.9, 0.6}");
    check.require(!if_alpha_check(tpr_counts({0.9, 0.4}), 0.5, 0.4).pass,
                  "if-alpha should fail {0.9, 0.4}");
    const double gap = delta_tpr(tpr_counts({0.86, 0.80})).value;
    check.require(std::abs(gap - 0.06) <= 1e-12, "delta_tpr {0.86, 0.80} = " + std::to_string(gap));
    return check;
}

// --- criterion 6: erm-reduction identity --------------------------------------

Check criterion_erm_identity() {
    Check check;
    const ExperimentConfig config =
        load_config(std::string(CMACMMD_SOURCE_DIR) + "/configs/derm6.json");
    const FeatureDataset full = generate_dataset(config.cohort);
    const SplitResult split = stratified_split(full.records, config.split_fractions,
                                               config.split_seed);
    const FeatureDataset train_set{full.attribute_names, split.train};
    const FeatureDataset test_set{full.attribute_names, split.test};

    TrainConfig erm_cfg = config.train;
    erm_cfg.epochs = 8; // identity holds per step; a shorter run keeps this quick
    erm_cfg.seed = 1;
    erm_cfg.mode = TrainMode::erm;
    TrainConfig zero_cfg = erm_cfg;
    zero_cfg.mode = TrainMode::cmac;
    zero_cfg.lambda_cmac = 0.0;

    const Checkpoint ck_erm = train_checkpoint(train_set, erm_cfg);
    const Checkpoint ck_zero = train_checkpoint(train_set, zero_cfg);
    write_checkpoint(out_path("erm.ckpt.json"), ck_erm);
    write_checkpoint(out_path("zero.ckpt.json"), ck_zero);
    check.require(slurp_file(out_path("erm.ckpt.json")) == slurp_file(out_path("zero.ckpt.json")),
                  "checkpoints differ");

    write_history_csv(out_path("erm.history.csv"), ck_erm.model.history);
    write_history_csv(out_path("zero.history.csv"), ck_zero.model.history);
    check.require(slurp_file(out_path("erm.history.csv")) ==
                      slurp_file(out_path("zero.history.csv")),
                  "history summaries differ");

    ReportOptions options = config.evaluate;
    options.bootstrap.reset(); // byte identity is already decided without CIs
    const EvaluateOutcome ev_erm = evaluate_checkpoint(ck_erm, test_set, options);
    const EvaluateOutcome ev_zero = evaluate_checkpoint(ck_zero, test_set, options);
    check.require(report_to_string(ev_erm.report) == report_to_string(ev_zero.report),
                  "reports differ");
    return check;
}

// --- criterion 7: desk-scale fairness effect ----------------------------------

Check criterion_fairness_effect() {
    Check check;
    const ExperimentConfig config =
        load_config(std::string(CMACMMD_SOURCE_DIR) + "/configs/derm6.json");
    const ExperimentSummary summary = run_experiment(config, out_path("derm6_experiment"));

    const int n_seeds = static_cast<int>(summary.contrasts.size());
    int majority_rel = 0, majority_auc = 0, majority_gap = 0, majority_zone = 0;
    std::string per_seed;
    for (const auto& c : summary.contrasts) {
        majority_rel += c.delta_tpr_relative_reduction >= 0.25 ? 1 : 0;
        majority_auc += c.auc_change >= -0.02 ? 1 : 0;
        majority_gap += c.certainty_gap_change < 0.0 ? 1 : 0;
        majority_zone += c.zone_change_lowest_sep < 0.0 ? 1 : 0;
        per_seed += " seed" + std::to_string(c.seed) + "(rel " +
                    std::to_string(c.delta_tpr_relative_reduction) + ", dAUC " +
                    std::to_string(c.auc_change) + ", dgap " +
                    std::to_string(c.certainty_gap_change) + ", dzone " +
                    std::to_string(c.zone_change_lowest_sep) + ")";
    }
    const int majority = n_seeds / 2 + 1;
    check.require(summary.mean_delta_tpr_relative_reduction >= 0.25,
                  "mean delta_tpr relative reduction " +
                      std::to_string(summary.mean_delta_tpr_relative_reduction));
    check.require(majority_rel >= majority, "relative reduction majority " +
                                                std::to_string(majority_rel) + "/" +
                                                std::to_string(n_seeds));
    check.require(summary.mean_auc_change >= -0.02,
                  "mean auc change " + std::to_string(summary.mean_auc_change));
    check.require(majority_auc >= majority, "auc majority");
    check.require(summary.mean_certainty_gap_change < 0.0,
                  "mean certainty gap change " +
                      std::to_string(summary.mean_certainty_gap_change));
    check.require(majority_gap >= majority, "certainty gap majority");
    check.require(majority_zone >= majority, "uncertainty zone majority");
    check.detail = per_seed;
    return check;
}

// --- criterion 8: bootstrap correctness ----------------------------------------

Check criterion_bootstrap() {
    Check check;
    LabeledScores rows;
    for (int i = 0; i < 64; ++i) {
        ScoredRow r;
        r.id = i;
        r.subgroup = SubgroupKey{{i % 2 == 0 ? "a" : "b"}};
        r.score = static_cast<double>(i) / 64.0;
        rows.push_back(r);
    }
    BootstrapConfig cfg;
    cfg.n_resamples = 500;
    cfg.seed = 81;
    const BootstrapCI constant =
        bootstrap_ci([](const LabeledScores&) { return 0.5; }, rows, cfg);
    check.require(constant.lo == constant.hi && constant.lo == 0.5,
                  "constant metric CI not a point");

    const auto mean_score = [](const LabeledScores& d) {
        double acc = 0.0;
        for (const auto& r : d) acc += r.score;
        return acc / static_cast<double>(d.size());
    };
    const BootstrapCI a = bootstrap_ci(mean_score, rows, cfg);
    const BootstrapCI b = bootstrap_ci(mean_score, rows, cfg);
    check.require(a.lo == b.lo && a.hi == b.hi, "seed determinism broken");

    int covered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(9000 + static_cast<std::uint64_t>(trial));
        LabeledScores sample;
        for (int i = 0; i < 200; ++i) {
            ScoredRow r;
            r.id = i;
            r.subgroup = SubgroupKey{{"all"}};
            r.score = rng.uniform01() < 0.5 ? 1.0 : 0.0;
            sample.push_back(r);
        }
        BootstrapConfig trial_cfg;
        trial_cfg.n_resamples = 1000;
        trial_cfg.level = 0.95;
        trial_cfg.seed = 777 + static_cast<std::uint64_t>(trial);
        const BootstrapCI ci = bootstrap_ci(mean_score, sample, trial_cfg);
        if (ci.lo <= 0.5 && 0.5 <= ci.hi) ++covered;
    }
    check.require(covered >= 90, "coverage " + std::to_string(covered) + "/100");
    check.detail = "coverage " + std::to_string(covered) + "/100";
    return check;
}

// --- criterion 9: KDE normalization ---------------------------------------------

Check criterion_kde() {
    Check check;
    // Emitted curves from a quick end-to-end evaluation.
    const ExperimentConfig config =
        load_config(std::string(CMACMMD_SOURCE_DIR) + "/configs/derm6.json");
    const FeatureDataset full = generate_dataset(config.cohort);
    const SplitResult split = stratified_split(full.records, config.split_fractions,
                                               config.split_seed);
    TrainConfig tc = config.train;
    tc.epochs = 5;
    tc.seed = 3;
    const Checkpoint ck = train_checkpoint({full.attribute_names, split.train}, tc);
    ReportOptions options = config.evaluate;
    options.bootstrap.reset();
    const EvaluateOutcome ev =
        evaluate_checkpoint(ck, {full.attribute_names, split.test}, options);

    std::map<SubgroupKey, int> counts;
    for (const auto& row : ev.scored.rows) counts[row.subgroup] += 1;
    int checked = 0;
    for (const auto& [key, curve] : ev.kde) {
        if (counts.at(key) < 30) continue;
        const double mass = oracle::trapezoid(curve.x, curve.density);
        check.require(mass >= 0.997 && mass <= 1.003,
                      key.str() + " integral " + std::to_string(mass));
        ++checked;
    }
    check.require(checked >= 3, "too few emitted curves with n >= 30");

    // Stress shapes: extreme bimodal and tightly clustered scores.
    Rng rng(911);
    for (int i = 0; i < 30; ++i) {
        std::vector<double> scores;
        const std::size_t n = 30 + rng.next_below(200);
        const int shape = static_cast<int>(rng.next_below(3));
        for (std::size_t k = 0; k < n; ++k) {
            if (shape == 0) {
                scores.push_back(rng.uniform01() < 0.5 ? 0.999 : 0.001);
            } else if (shape == 1) {
                scores.push_back(std::clamp(0.5 + 0.05 * rng.gaussian(), 0.0, 1.0));
            } else {
                scores.push_back(rng.uniform01());
            }
        }
        const KdeCurve curve = kde_curve(scores);
        const double mass = oracle::trapezoid(curve.x, curve.density);
        check.require(mass >= 0.997 && mass <= 1.003,
                      "stress shape " + std::to_string(shape) + " integral " +
                          std::to_string(mass));
    }
    check.detail = std::to_string(checked) + " emitted curves checked";
    return check;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "clinical-impact reproduction", 1.0, criterion_impact},
        {2, "gradient fidelity", 30.0, criterion_gradients},
        {3, "MMD properties", 0.0, criterion_mmd_properties},
        {4, "statistical-test oracles", 0.0, criterion_stat_oracles},
        {5, "metric truth tables", 0.0, criterion_truth_tables},
        {6, "ERM-reduction identity", 0.0, criterion_erm_identity},
        {7, "desk-scale fairness effect", 300.0, criterion_fairness_effect},
        {8, "bootstrap correctness", 0.0, criterion_bootstrap},
        {9, "KDE normalization", 0.0, criterion_kde},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Check check;
        try {
            check = criterion.run();
        } catch (const std::exception& e) {
            check.ok = false;
            check.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criterion.budget_seconds > 0.0 && seconds > criterion.budget_seconds) {
            check.ok = false;
            check.detail += "; exceeded " + std::to_string(criterion.budget_seconds) +
                            "s budget (" + std::to_string(seconds) + "s)";
        }
        std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL",
                    criterion.id, criterion.name, seconds, check.detail.empty() ? "" : " - ",
                    check.detail.c_str());
        failures += check.ok ? 0 : 1;
    }
    return failures;
}
