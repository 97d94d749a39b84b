#include "cmac/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "cmac/errors.hpp"
#include "cmac/trainer.hpp"

namespace cmac {

using nlohmann::json;

namespace {

// Mirrors the canonical writer in io.cpp: sorted keys via nlohmann's
// ordered std::map storage, doubles through format_double.
void dump_canonical(const json& j, std::string& out);

void json_escape(const std::string& s, std::string& out) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
}

void dump_canonical(const json& j, std::string& out) {
    switch (j.type()) {
        case json::value_t::object: {
            out += '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) out += ',';
                first = false;
                json_escape(key, out);
                out += ':';
                dump_canonical(value, out);
            }
            out += '}';
            break;
        }
        case json::value_t::array: {
            out += '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i > 0) out += ',';
                dump_canonical(j[i], out);
            }
            out += ']';
            break;
        }
        case json::value_t::string:
            json_escape(j.get_ref<const std::string&>(), out);
            break;
        case json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            break;
        case json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            break;
        case json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            break;
        case json::value_t::number_float:
            out += format_double(j.get<double>());
            break;
        default:
            out += "null";
    }
}

std::string canonical(const json& j) {
    std::string out;
    dump_canonical(j, out);
    out += '\n';
    return out;
}

std::string percent_one_decimal(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
    return buf;
}

struct RunStats {
    std::int64_t n = 0;
    std::int64_t positives = 0;
    double delta_tpr = 0.0;
    double dpd = 0.0;
    ConfusionBySubgroup counts;
    std::map<SubgroupKey, double> deodds_by_key;
};

RunStats stats_from_report(const FairnessReport& report) {
    RunStats s;
    s.n = report.aggregate.n;
    s.positives = report.aggregate.positives;
    s.delta_tpr = report.aggregate.delta_tpr;
    s.dpd = report.aggregate.dpd;
    for (const auto& sg : report.subgroups) {
        s.counts[sg.key] = sg.counts;
        if (sg.deodds) s.deodds_by_key[sg.key] = *sg.deodds;
    }
    return s;
}

/// The aggregate-gap z-test treats each arm's gap as a
/// proportion: delta-TPR over total positives, DPD over total samples.
Comparison::PropTest gap_prop_test(double gap_baseline, double gap_candidate,
                                   std::int64_t n_baseline, std::int64_t n_candidate) {
    Comparison::PropTest test;
    test.value_baseline = gap_baseline;
    test.value_candidate = gap_candidate;
    test.x1 = static_cast<std::int64_t>(std::llround(gap_baseline * static_cast<double>(n_baseline)));
    test.n1 = n_baseline;
    test.x2 = static_cast<std::int64_t>(std::llround(gap_candidate * static_cast<double>(n_candidate)));
    test.n2 = n_candidate;
    try {
        test.result = two_prop_ztest(test.x1, test.n1, test.x2, test.n2);
        test.status = Comparison::TestStatus::ok;
    } catch (const DegeneratePooled&) {
        test.status = Comparison::TestStatus::degenerate;
    }
    return test;
}

void fill_shared_comparison(Comparison& cmp, const RunStats& base, const RunStats& cand) {
    cmp.ztest_delta_tpr = gap_prop_test(base.delta_tpr, cand.delta_tpr, base.positives,
                                        cand.positives);
    cmp.ztest_dpd = gap_prop_test(base.dpd, cand.dpd, base.n, cand.n);

    std::vector<double> diffs;
    for (const auto& [key, d] : base.deodds_by_key) {
        const auto it = cand.deodds_by_key.find(key);
        if (it != cand.deodds_by_key.end()) diffs.push_back(d - it->second);
    }
    cmp.wilcoxon_pairs = static_cast<int>(diffs.size());
    if (diffs.empty()) {
        cmp.wilcoxon_status = Comparison::TestStatus::unavailable;
    } else {
        try {
            cmp.wilcoxon = wilcoxon_signed_rank(diffs);
            cmp.wilcoxon_status = Comparison::TestStatus::ok;
        } catch (const AllZeroDifferences&) {
            cmp.wilcoxon_status = Comparison::TestStatus::all_zero_differences;
        }
    }

    std::vector<ImpactRow> rows;
    for (const auto& [key, cb] : base.counts) {
        const auto it = cand.counts.find(key);
        if (it == cand.counts.end()) continue;
        rows.push_back(fn_prevented(key, cb.positives(), cb.fn, it->second.fn));
    }
    cmp.impact = impact_table(rows);
}

json prop_test_to_json(const Comparison::PropTest& test) {
    json j;
    switch (test.status) {
        case Comparison::TestStatus::ok: j["status"] = "ok"; break;
        case Comparison::TestStatus::degenerate: j["status"] = "degenerate_pooled"; break;
        default: j["status"] = "unavailable";
    }
    j["value_baseline"] = test.value_baseline;
    j["value_candidate"] = test.value_candidate;
    j["x1"] = test.x1;
    j["n1"] = test.n1;
    j["x2"] = test.x2;
    j["n2"] = test.n2;
    if (test.status == Comparison::TestStatus::ok) {
        j["z"] = test.result.z;
        j["p"] = test.result.p;
    }
    return j;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Normal-approximation CI over seeds: mean +/- 1.96 sd / sqrt(k).
std::pair<double, double> seeds_ci(const std::vector<double>& v) {
    const double m = mean_of(v);
    if (v.size() < 2) return {m, m};
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    var /= static_cast<double>(v.size() - 1);
    const double half = 1.96 * std::sqrt(var / static_cast<double>(v.size()));
    return {m - half, m + half};
}

} // namespace

FeatureDataset generate_dataset(const CohortSpec& spec) {
    FeatureDataset out;
    out.attribute_names = spec.attribute_names;
    out.records = generate(spec);
    return out;
}

Checkpoint train_checkpoint(const FeatureDataset& data, const TrainConfig& cfg) {
    int num_classes = 0;
    for (const auto& rec : data.records) num_classes = std::max(num_classes, rec.label + 1);
    num_classes = std::max(num_classes, 2);
    const int d_in = static_cast<int>(data.records.front().features.size());
    Checkpoint ck;
    ck.config = cfg;
    ck.model = train(data.records, default_class_texts(d_in, num_classes), cfg);
    return ck;
}

EvaluateOutcome evaluate_checkpoint(const Checkpoint& checkpoint, const FeatureDataset& data,
                                    const ReportOptions& options) {
    EvaluateOutcome out;
    out.scored.attribute_names = data.attribute_names;
    out.scored.rows = evaluate_model(checkpoint.model, data.records);
    out.report = build_report(out.scored.rows, options);
    std::map<SubgroupKey, std::vector<double>> certainties;
    for (const auto& row : out.scored.rows) {
        certainties[row.subgroup].push_back(true_class_certainty(row));
    }
    for (const auto& [key, values] : certainties) {
        out.kde[key] = kde_curve(values);
    }
    return out;
}

EvaluateOutcome evaluate_scored(const ScoredDataset& scored, const ReportOptions& options) {
    EvaluateOutcome out;
    out.scored = scored;
    out.report = build_report(scored.rows, options);
    std::map<SubgroupKey, std::vector<double>> certainties;
    for (const auto& row : scored.rows) {
        certainties[row.subgroup].push_back(true_class_certainty(row));
    }
    for (const auto& [key, values] : certainties) {
        out.kde[key] = kde_curve(values);
    }
    return out;
}

Comparison compare_scored(const ScoredDataset& baseline, const ScoredDataset& candidate,
                          double threshold) {
    auto rows_a = baseline.rows;
    auto rows_b = candidate.rows;
    const auto by_id = [](const ScoredRow& x, const ScoredRow& y) { return x.id < y.id; };
    std::sort(rows_a.begin(), rows_a.end(), by_id);
    std::sort(rows_b.begin(), rows_b.end(), by_id);

    std::vector<std::int64_t> offenders;
    if (rows_a.size() != rows_b.size()) {
        throw PairingMismatch("compare: baseline has " + std::to_string(rows_a.size()) +
                              " rows, candidate has " + std::to_string(rows_b.size()));
    }
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        if (rows_a[i].id != rows_b[i].id || rows_a[i].true_label != rows_b[i].true_label ||
            rows_a[i].subgroup != rows_b[i].subgroup) {
            offenders.push_back(rows_a[i].id);
            if (offenders.size() >= 10) break;
        }
    }
    if (!offenders.empty()) {
        std::string msg = "compare: sample pairing mismatch on ids";
        for (std::int64_t id : offenders) msg += " " + std::to_string(id);
        throw PairingMismatch(msg);
    }

    Comparison cmp;
    cmp.n = static_cast<std::int64_t>(rows_a.size());

    std::vector<double> scores_a, scores_b;
    std::vector<int> labels;
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        scores_a.push_back(rows_a[i].score);
        scores_b.push_back(rows_b[i].score);
        labels.push_back(rows_a[i].true_label);
    }
    cmp.auc_baseline = roc_auc(scores_a, labels);
    cmp.auc_candidate = roc_auc(scores_b, labels);
    cmp.delta_auc = cmp.auc_candidate - cmp.auc_baseline;
    try {
        cmp.delong = delong_test(scores_b, scores_a, labels); // diff = candidate - baseline
        cmp.delong_status = Comparison::DelongStatus::ok;
    } catch (const DegenerateVariance&) {
        cmp.delong_status = Comparison::DelongStatus::degenerate_variance;
    }

    const FairnessReport report_a = build_report(rows_a, ReportOptions{.threshold = threshold});
    const FairnessReport report_b = build_report(rows_b, ReportOptions{.threshold = threshold});
    fill_shared_comparison(cmp, stats_from_report(report_a), stats_from_report(report_b));
    return cmp;
}

Comparison compare_reports(const FairnessReport& baseline, const FairnessReport& candidate) {
    if (baseline.aggregate.n != candidate.aggregate.n) {
        throw PairingMismatch("compare: reports cover different sample counts");
    }
    Comparison cmp;
    cmp.n = baseline.aggregate.n;
    cmp.auc_baseline = baseline.aggregate.auc;
    cmp.auc_candidate = candidate.aggregate.auc;
    cmp.delta_auc = cmp.auc_candidate - cmp.auc_baseline;
    cmp.delong_status = Comparison::DelongStatus::requires_scored_datasets;
    fill_shared_comparison(cmp, stats_from_report(baseline), stats_from_report(candidate));
    return cmp;
}

std::string comparison_to_string(const Comparison& cmp) {
    json j;
    j["schema"] = "cmacmmd.comparison";
    j["version"] = 1;
    j["n"] = cmp.n;

    json delong;
    switch (cmp.delong_status) {
        case Comparison::DelongStatus::ok: delong["status"] = "ok"; break;
        case Comparison::DelongStatus::degenerate_variance:
            delong["status"] = "degenerate_variance";
            break;
        default: delong["status"] = "requires_scored_datasets";
    }
    delong["auc_baseline"] = cmp.auc_baseline;
    delong["auc_candidate"] = cmp.auc_candidate;
    delong["delta_auc"] = cmp.delta_auc;
    if (cmp.delong_status == Comparison::DelongStatus::ok) {
        delong["z"] = cmp.delong.z;
        delong["p"] = cmp.delong.p;
        delong["ci95"] = json::array({cmp.delong.ci_lo, cmp.delong.ci_hi});
    }
    j["delong"] = std::move(delong);

    json wil;
    switch (cmp.wilcoxon_status) {
        case Comparison::TestStatus::ok: wil["status"] = "ok"; break;
        case Comparison::TestStatus::all_zero_differences:
            wil["status"] = "all_zero_differences";
            break;
        default: wil["status"] = "unavailable";
    }
    wil["n_pairs"] = cmp.wilcoxon_pairs;
    if (cmp.wilcoxon_status == Comparison::TestStatus::ok) {
        wil["w"] = cmp.wilcoxon.w;
        wil["p"] = cmp.wilcoxon.p;
        wil["method"] = cmp.wilcoxon.method == WilcoxonResult::Method::exact ? "exact"
                                                                             : "normal_approx";
    }
    j["wilcoxon_deodds"] = std::move(wil);

    j["ztest_delta_tpr"] = prop_test_to_json(cmp.ztest_delta_tpr);
    j["ztest_dpd"] = prop_test_to_json(cmp.ztest_dpd);

    json impact;
    json rows = json::array();
    for (const auto& r : cmp.impact.rows) {
        json row;
        row["subgroup"] = r.subgroup.str();
        row["positives"] = r.positives;
        row["fn_baseline"] = r.fn_baseline;
        row["fn_new"] = r.fn_new;
        row["prevented"] = r.prevented;
        row["relative"] = r.relative ? json(*r.relative) : json(nullptr);
        rows.push_back(std::move(row));
    }
    impact["rows"] = std::move(rows);
    json total;
    total["positives"] = cmp.impact.total_positives;
    total["fn_baseline"] = cmp.impact.total_fn_baseline;
    total["fn_new"] = cmp.impact.total_fn_new;
    total["prevented"] = cmp.impact.total_prevented;
    total["relative"] = cmp.impact.total_relative ? json(*cmp.impact.total_relative) : json(nullptr);
    impact["total"] = std::move(total);
    j["impact"] = std::move(impact);

    return canonical(j);
}

void write_comparison(const std::string& path, const Comparison& comparison) {
    write_text_file(path, comparison_to_string(comparison));
}

std::string impact_table_text(const ImpactTable& table) {
    std::string out = "subgroup\tpositives\tfn_baseline\tfn_new\tprevented\n";
    for (const auto& r : table.rows) {
        out += r.subgroup.str();
        out += '\t' + std::to_string(r.positives);
        out += '\t' + std::to_string(r.fn_baseline);
        out += '\t' + std::to_string(r.fn_new);
        out += '\t' + std::to_string(r.prevented);
        if (r.relative) out += " (" + percent_one_decimal(*r.relative) + ")";
        out += '\n';
    }
    out += "total\t" + std::to_string(table.total_positives);
    out += '\t' + std::to_string(table.total_fn_baseline);
    out += '\t' + std::to_string(table.total_fn_new);
    out += '\t' + std::to_string(table.total_prevented);
    if (table.total_relative) out += " (" + percent_one_decimal(*table.total_relative) + ")";
    out += '\n';
    return out;
}

std::string summary_to_string(const ExperimentSummary& summary) {
    json j;
    j["schema"] = "cmacmmd.summary";
    j["version"] = 1;
    json seeds = json::array();
    for (auto s : summary.seeds) seeds.push_back(s);
    j["seeds"] = std::move(seeds);
    j["lowest_separation_subgroup"] = summary.lowest_separation_subgroup.str();

    json runs = json::array();
    for (const auto& r : summary.per_run) {
        json row;
        row["arm"] = r.arm;
        row["seed"] = r.seed;
        row["auc"] = r.auc;
        row["delta_tpr"] = r.delta_tpr;
        row["dpd"] = r.dpd;
        row["delta_fpr"] = r.delta_fpr;
        row["mean_deodds"] = r.mean_deodds;
        row["certainty_gap"] = r.certainty_gap;
        row["zone_fraction_lowest_sep"] = r.zone_fraction_lowest_sep;
        runs.push_back(std::move(row));
    }
    j["runs"] = std::move(runs);

    // Per-arm means with a normal-approximation CI over seeds.
    for (const std::string arm : {"erm", "cmac"}) {
        std::map<std::string, std::vector<double>> cols;
        for (const auto& r : summary.per_run) {
            if (r.arm != arm) continue;
            cols["auc"].push_back(r.auc);
            cols["delta_tpr"].push_back(r.delta_tpr);
            cols["dpd"].push_back(r.dpd);
            cols["delta_fpr"].push_back(r.delta_fpr);
            cols["mean_deodds"].push_back(r.mean_deodds);
            cols["certainty_gap"].push_back(r.certainty_gap);
            cols["zone_fraction_lowest_sep"].push_back(r.zone_fraction_lowest_sep);
        }
        json stats;
        for (const auto& [name, values] : cols) {
            json cell;
            cell["mean"] = mean_of(values);
            const auto [lo, hi] = seeds_ci(values);
            cell["ci95"] = json::array({lo, hi});
            stats[name] = std::move(cell);
        }
        j["arm_stats"][arm] = std::move(stats);
    }

    json contrasts = json::array();
    for (const auto& c : summary.contrasts) {
        json row;
        row["seed"] = c.seed;
        row["delta_tpr_relative_reduction"] = c.delta_tpr_relative_reduction;
        row["auc_change"] = c.auc_change;
        row["certainty_gap_change"] = c.certainty_gap_change;
        row["zone_change_lowest_sep"] = c.zone_change_lowest_sep;
        contrasts.push_back(std::move(row));
    }
    j["cmac_vs_erm"]["per_seed"] = std::move(contrasts);
    j["cmac_vs_erm"]["mean_delta_tpr_relative_reduction"] =
        summary.mean_delta_tpr_relative_reduction;
    j["cmac_vs_erm"]["mean_auc_change"] = summary.mean_auc_change;
    j["cmac_vs_erm"]["mean_certainty_gap_change"] = summary.mean_certainty_gap_change;
    j["cmac_vs_erm"]["mean_zone_change_lowest_sep"] = summary.mean_zone_change_lowest_sep;

    return canonical(j);
}

ExperimentSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    const FeatureDataset full = generate_dataset(config.cohort);
    write_feature_dataset(path("dataset.tsv"), full);
    const SplitResult split =
        stratified_split(full.records, config.split_fractions, config.split_seed);
    const FeatureDataset train_set{full.attribute_names, split.train};
    const FeatureDataset val_set{full.attribute_names, split.val};
    const FeatureDataset test_set{full.attribute_names, split.test};
    write_feature_dataset(path("train.tsv"), train_set);
    write_feature_dataset(path("val.tsv"), val_set);
    write_feature_dataset(path("test.tsv"), test_set);

    ExperimentSummary summary;
    summary.seeds = config.seeds;
    {
        const auto lowest = std::min_element(
            config.cohort.subgroups.begin(), config.cohort.subgroups.end(),
            [](const SubgroupSpec& a, const SubgroupSpec& b) { return a.separation < b.separation; });
        summary.lowest_separation_subgroup = lowest->key;
    }

    std::map<std::pair<std::string, std::uint64_t>, ArmSeedMetrics> metrics;
    std::map<std::pair<std::string, std::uint64_t>, ScoredDataset> scored;
    for (const std::uint64_t seed : config.seeds) {
        for (const std::string arm : {"erm", "cmac"}) {
            TrainConfig tc = config.train;
            tc.seed = seed;
            tc.mode = arm == "erm" ? TrainMode::erm : TrainMode::cmac;
            const std::string stem = arm + "_seed" + std::to_string(seed);

            const Checkpoint ck = train_checkpoint(train_set, tc);
            write_checkpoint(path(stem + ".checkpoint.json"), ck);
            write_history_csv(path(stem + ".history.csv"), ck.model.history);

            const EvaluateOutcome ev = evaluate_checkpoint(ck, test_set, config.evaluate);
            write_scored_dataset(path(stem + ".scored.tsv"), ev.scored);
            write_report(path(stem + ".report.json"), ev.report);
            write_kde_csv(path(stem + ".kde.csv"), ev.kde);
            write_subgroup_metrics_csv(path(stem + ".metrics.csv"), ev.report);

            ArmSeedMetrics m;
            m.arm = arm;
            m.seed = seed;
            m.auc = ev.report.aggregate.auc;
            m.delta_tpr = ev.report.aggregate.delta_tpr;
            m.dpd = ev.report.aggregate.dpd;
            m.delta_fpr = ev.report.aggregate.delta_fpr;
            m.mean_deodds = ev.report.aggregate.mean_deodds;
            m.certainty_gap = ev.report.aggregate.certainty_gap;
            for (const auto& sg : ev.report.subgroups) {
                if (sg.key == summary.lowest_separation_subgroup) {
                    m.zone_fraction_lowest_sep = sg.zone_fraction;
                }
            }
            metrics[{arm, seed}] = m;
            scored[{arm, seed}] = ev.scored;
            summary.per_run.push_back(m);
        }
    }

    for (const std::uint64_t seed : config.seeds) {
        const Comparison cmp = compare_scored(scored[{"erm", seed}], scored[{"cmac", seed}],
                                              config.evaluate.threshold);
        write_comparison(path("compare_seed" + std::to_string(seed) + ".json"), cmp);

        const ArmSeedMetrics& erm = metrics[{"erm", seed}];
        const ArmSeedMetrics& cmac = metrics[{"cmac", seed}];
        SeedContrast c;
        c.seed = seed;
        c.delta_tpr_relative_reduction =
            erm.delta_tpr > 0.0 ? (erm.delta_tpr - cmac.delta_tpr) / erm.delta_tpr : 0.0;
        c.auc_change = cmac.auc - erm.auc;
        c.certainty_gap_change = cmac.certainty_gap - erm.certainty_gap;
        c.zone_change_lowest_sep = cmac.zone_fraction_lowest_sep - erm.zone_fraction_lowest_sep;
        summary.contrasts.push_back(c);
    }

    std::vector<double> rel, auc_change, gap_change, zone_change;
    for (const auto& c : summary.contrasts) {
        rel.push_back(c.delta_tpr_relative_reduction);
        auc_change.push_back(c.auc_change);
        gap_change.push_back(c.certainty_gap_change);
        zone_change.push_back(c.zone_change_lowest_sep);
    }
    summary.mean_delta_tpr_relative_reduction = mean_of(rel);
    summary.mean_auc_change = mean_of(auc_change);
    summary.mean_certainty_gap_change = mean_of(gap_change);
    summary.mean_zone_change_lowest_sep = mean_of(zone_change);

    write_text_file(path("summary.json"), summary_to_string(summary));
    return summary;
}

} // namespace cmac
