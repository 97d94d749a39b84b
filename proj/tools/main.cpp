// Command-line surface: generate -> train -> evaluate -> compare, plus a
// one-shot experiment runner.  Exit codes: 0 success, 2 input/schema
// error, 3 numerical failure, 4 sample-pairing mismatch.

#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmac/errors.hpp"
#include "cmac/io.hpp"
#include "cmac/pipeline.hpp"
#include "cmac/trainer.hpp"

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPairing = 4;

std::string seed_variant_path(const std::string& out, std::uint64_t seed) {
    const std::size_t dot = out.rfind('.');
    const std::string suffix = ".seed" + std::to_string(seed);
    if (dot == std::string::npos) return out + suffix;
    return out.substr(0, dot) + suffix + out.substr(dot);
}

std::string replace_extension(const std::string& out, const std::string& ext) {
    const std::size_t dot = out.rfind('.');
    return (dot == std::string::npos ? out : out.substr(0, dot)) + ext;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string token =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (token.empty()) throw cmac::SchemaError("--seeds: empty entry in \"" + csv + "\"");
        try {
            seeds.push_back(std::stoull(token));
        } catch (const std::exception&) {
            throw cmac::SchemaError("--seeds: not an integer: \"" + token + "\"");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return seeds;
}

std::pair<double, double> parse_zone(const std::string& csv) {
    const std::size_t comma = csv.find(',');
    if (comma == std::string::npos) {
        throw cmac::SchemaError("--zone: expected \"lo,hi\", got \"" + csv + "\"");
    }
    try {
        const double lo = std::stod(csv.substr(0, comma));
        const double hi = std::stod(csv.substr(comma + 1));
        if (!(lo <= hi)) throw cmac::SchemaError("--zone: lo must be <= hi");
        return {lo, hi};
    } catch (const cmac::Error&) {
        throw;
    } catch (const std::exception&) {
        throw cmac::SchemaError("--zone: expected numbers, got \"" + csv + "\"");
    }
}

/// First line of any artifact file carries its schema name.
std::string sniff_schema(const std::string& path) {
    const std::string text = cmac::slurp_file(path);
    const std::size_t eol = text.find('\n');
    const std::string line = eol == std::string::npos ? text : text.substr(0, eol);
    const std::size_t key = line.find("\"schema\":\"");
    if (key == std::string::npos) {
        throw cmac::SchemaError(path + ": missing schema declaration");
    }
    const std::size_t start = key + 10;
    const std::size_t end = line.find('"', start);
    return line.substr(start, end - start);
}

int cmd_generate(const std::string& config_path, const std::string& out_path) {
    const cmac::ExperimentConfig config = cmac::load_config(config_path);
    const cmac::FeatureDataset dataset = cmac::generate_dataset(config.cohort);
    cmac::write_feature_dataset(out_path, dataset);

    std::map<cmac::SubgroupKey, std::pair<long, long>> tally; // n, positives
    for (const auto& rec : dataset.records) {
        auto& [n, pos] = tally[rec.subgroup];
        n += 1;
        pos += rec.label == 1 ? 1 : 0;
    }
    std::printf("wrote %zu samples to %s\n", dataset.records.size(), out_path.c_str());
    std::printf("%-28s %6s %10s\n", "subgroup", "n", "prevalence");
    for (const auto& [key, np] : tally) {
        std::printf("%-28s %6ld %10.4f\n", key.str().c_str(), np.first,
                    static_cast<double>(np.second) / static_cast<double>(np.first));
    }
    return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_path, const std::optional<std::string>& mode,
              const std::optional<double>& lambda, const std::optional<std::string>& seeds_csv) {
    const cmac::ExperimentConfig config = cmac::load_config(config_path);
    const cmac::FeatureDataset dataset = cmac::read_feature_dataset(dataset_path);

    cmac::TrainConfig tc = config.train;
    if (mode) {
        if (*mode == "erm") {
            tc.mode = cmac::TrainMode::erm;
        } else if (*mode == "cmac") {
            tc.mode = cmac::TrainMode::cmac;
        } else {
            throw cmac::SchemaError("--mode: expected erm or cmac, got \"" + *mode + "\"");
        }
    }
    if (lambda) {
        if (*lambda < 0.0) throw cmac::SchemaError("--lambda: must be nonnegative");
        tc.lambda_cmac = *lambda;
    }
    std::vector<std::uint64_t> seeds{tc.seed};
    if (seeds_csv) seeds = parse_seed_list(*seeds_csv);

    for (const std::uint64_t seed : seeds) {
        tc.seed = seed;
        const std::string ckpt_path =
            seeds.size() == 1 ? out_path : seed_variant_path(out_path, seed);
        const cmac::Checkpoint ck = cmac::train_checkpoint(dataset, tc);
        cmac::write_checkpoint(ckpt_path, ck);
        cmac::write_history_csv(replace_extension(ckpt_path, ".history.csv"), ck.model.history);
        std::printf("wrote checkpoint %s (final total loss %.6f)\n", ckpt_path.c_str(),
                    ck.model.history.back().total);
        if (ck.model.single_subgroup_warning) {
            std::fprintf(stderr, "warning: dataset has a single subgroup; fairness loss was 0\n");
        }
    }
    return 0;
}

int cmd_evaluate(const std::string& input_path, const std::optional<std::string>& dataset_path,
                 const std::string& config_path, const std::string& out_path,
                 const std::optional<std::string>& kde_path,
                 const std::optional<std::string>& metrics_path,
                 const std::optional<std::string>& scored_out,
                 bool bootstrap, const std::optional<std::string>& zone_csv) {
    const cmac::ExperimentConfig config = cmac::load_config(config_path);
    cmac::ReportOptions options = config.evaluate;
    if (zone_csv) {
        const auto [lo, hi] = parse_zone(*zone_csv);
        options.zone_lo = lo;
        options.zone_hi = hi;
    }
    if (bootstrap) {
        if (!options.bootstrap) options.bootstrap = cmac::BootstrapConfig{};
    } else {
        options.bootstrap.reset();
    }

    const std::string schema = sniff_schema(input_path);
    cmac::EvaluateOutcome outcome;
    if (schema == "cmacmmd.checkpoint") {
        if (!dataset_path) {
            throw cmac::SchemaError("evaluate: a checkpoint input needs --dataset");
        }
        const cmac::Checkpoint ck = cmac::read_checkpoint(input_path);
        const cmac::FeatureDataset data = cmac::read_feature_dataset(*dataset_path);
        outcome = cmac::evaluate_checkpoint(ck, data, options);
    } else if (schema == "cmacmmd.dataset") {
        const cmac::ScoredDataset scored = cmac::read_scored_dataset(input_path);
        outcome = cmac::evaluate_scored(scored, options);
    } else {
        throw cmac::SchemaError(input_path + ": expected a checkpoint or a scored dataset");
    }

    cmac::write_report(out_path, outcome.report);
    if (kde_path) cmac::write_kde_csv(*kde_path, outcome.kde);
    if (metrics_path) cmac::write_subgroup_metrics_csv(*metrics_path, outcome.report);
    if (scored_out) cmac::write_scored_dataset(*scored_out, outcome.scored);

    std::printf("wrote report %s\n", out_path.c_str());
    std::printf("auc %.4f  delta_tpr %.4f  dpd %.4f  delta_fpr %.4f  deodds %.4f  "
                "certainty_gap %.4f  df %s  if_alpha %s\n",
                outcome.report.aggregate.auc, outcome.report.aggregate.delta_tpr,
                outcome.report.aggregate.dpd, outcome.report.aggregate.delta_fpr,
                outcome.report.aggregate.mean_deodds, outcome.report.aggregate.certainty_gap,
                outcome.report.aggregate.df_pass ? "pass" : "fail",
                outcome.report.aggregate.if_alpha_pass ? "pass" : "fail");
    return 0;
}

int cmd_compare(const std::string& baseline_path, const std::string& candidate_path,
                const std::string& out_path, double threshold) {
    const std::string schema_a = sniff_schema(baseline_path);
    const std::string schema_b = sniff_schema(candidate_path);
    if (schema_a != schema_b) {
        throw cmac::SchemaError("compare: inputs must both be scored datasets or both reports");
    }
    cmac::Comparison cmp;
    if (schema_a == "cmacmmd.dataset") {
        cmp = cmac::compare_scored(cmac::read_scored_dataset(baseline_path),
                                   cmac::read_scored_dataset(candidate_path), threshold);
    } else if (schema_a == "cmacmmd.report") {
        cmp = cmac::compare_reports(cmac::read_report(baseline_path),
                                    cmac::read_report(candidate_path));
    } else {
        throw cmac::SchemaError("compare: unsupported input schema \"" + schema_a + "\"");
    }
    cmac::write_comparison(out_path, cmp);
    std::printf("wrote comparison %s\n", out_path.c_str());
    std::printf("auc %.4f -> %.4f (delta %+.4f)\n", cmp.auc_baseline, cmp.auc_candidate,
                cmp.delta_auc);
    std::fputs(cmac::impact_table_text(cmp.impact).c_str(), stdout);
    return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir) {
    const cmac::ExperimentConfig config = cmac::load_config(config_path);
    const cmac::ExperimentSummary summary = cmac::run_experiment(config, out_dir);
    std::printf("experiment artifacts in %s\n", out_dir.c_str());
    std::printf("%-6s %6s %8s %10s %8s %14s\n", "arm", "seed", "auc", "delta_tpr", "dpd",
                "certainty_gap");
    for (const auto& r : summary.per_run) {
        std::printf("%-6s %6llu %8.4f %10.4f %8.4f %14.4f\n", r.arm.c_str(),
                    static_cast<unsigned long long>(r.seed), r.auc, r.delta_tpr, r.dpd,
                    r.certainty_gap);
    }
    std::printf("mean delta_tpr relative reduction: %.1f%%\n",
                100.0 * summary.mean_delta_tpr_relative_reduction);
    std::printf("mean auc change: %+.4f\n", summary.mean_auc_change);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CMAC-MMD fairness framework: synthetic cohorts, dual-encoder training, "
                 "intersectional evaluation and statistical comparison"};
    app.require_subcommand(1);

    std::string config_path, out_path, dataset_path, input_path, baseline_path, candidate_path;
    std::optional<std::string> opt_dataset, mode, seeds_csv, kde_path, metrics_path, scored_out,
        zone_csv;
    std::optional<double> lambda;
    bool bootstrap = false;
    double compare_threshold = 0.5;

    CLI::App* generate = app.add_subcommand("generate", "Draw a synthetic cohort dataset");
    generate->add_option("--config", config_path, "Run configuration (JSON)")->required();
    generate->add_option("--out", out_path, "Output dataset path")->required();

    CLI::App* train = app.add_subcommand("train", "Train dual encoders on a feature dataset");
    train->add_option("--dataset", dataset_path, "Feature dataset")->required();
    train->add_option("--config", config_path, "Run configuration (JSON)")->required();
    train->add_option("--out", out_path, "Checkpoint output path")->required();
    train->add_option("--mode", mode, "erm or cmac (overrides config)");
    train->add_option("--lambda", lambda, "Fairness weight (overrides config)");
    train->add_option("--seeds", seeds_csv, "Comma-separated seeds; one checkpoint each");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Fairness report from a checkpoint or "
                                                        "scored dataset");
    evaluate->add_option("--input", input_path, "Checkpoint or scored dataset")->required();
    evaluate->add_option("--dataset", opt_dataset, "Feature dataset (checkpoint input only)");
    evaluate->add_option("--config", config_path, "Run configuration (JSON)")->required();
    evaluate->add_option("--out", out_path, "Report output path (JSON)")->required();
    evaluate->add_option("--kde", kde_path, "Per-subgroup KDE curves (CSV)");
    evaluate->add_option("--metrics", metrics_path, "Per-subgroup metric table (CSV)");
    evaluate->add_option("--scored-out", scored_out, "Scored dataset output path");
    evaluate->add_flag("--bootstrap", bootstrap, "Attach bootstrap confidence intervals");
    evaluate->add_option("--zone", zone_csv, "Uncertainty zone \"lo,hi\" (overrides config)");

    CLI::App* compare = app.add_subcommand("compare", "Compare a candidate run to a baseline");
    compare->add_option("--baseline", baseline_path, "Baseline scored dataset or report")
        ->required();
    compare->add_option("--candidate", candidate_path, "Candidate scored dataset or report")
        ->required();
    compare->add_option("--out", out_path, "Comparison output path (JSON)")->required();
    compare->add_option("--threshold", compare_threshold, "Decision threshold");

    CLI::App* experiment = app.add_subcommand("experiment", "Full generate/train/evaluate/compare "
                                                            "protocol");
    experiment->add_option("--config", config_path, "Run configuration (JSON)")->required();
    experiment->add_option("--out", out_path, "Output directory")->required();

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(config_path, out_path);
        if (train->parsed()) {
            return cmd_train(dataset_path, config_path, out_path, mode, lambda, seeds_csv);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(input_path, opt_dataset, config_path, out_path, kde_path,
                                metrics_path, scored_out, bootstrap, zone_csv);
        }
        if (compare->parsed()) {
            return cmd_compare(baseline_path, candidate_path, out_path, compare_threshold);
        }
        if (experiment->parsed()) return cmd_experiment(config_path, out_path);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitSchema;
    } catch (const cmac::PairingMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitPairing;
    } catch (const cmac::NonFiniteLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const cmac::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitSchema;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitSchema;
    }
    return 0;
}
