#include "cmac/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cmac/errors.hpp"

namespace cmac {

namespace {

int effective_prediction(const ScoredRow& row, double threshold) {
    if (row.predicted) return *row.predicted;
    return row.score >= threshold ? 1 : 0;
}

/// TPR values of subgroups that have positives, in key order.
std::vector<std::pair<SubgroupKey, double>> tpr_by_subgroup(const ConfusionBySubgroup& counts,
                                                            std::vector<SubgroupKey>* excluded) {
    std::vector<std::pair<SubgroupKey, double>> out;
    for (const auto& [key, c] : counts) {
        if (c.positives() == 0) {
            if (excluded) excluded->push_back(key);
            continue;
        }
        out.emplace_back(key, static_cast<double>(c.tp) / static_cast<double>(c.positives()));
    }
    return out;
}

double minmax_gap(const std::vector<double>& values) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
}

double subgroup_auc_or_throw(const LabeledScores& rows) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(rows.size());
    labels.reserve(rows.size());
    for (const auto& r : rows) {
        scores.push_back(r.score);
        labels.push_back(r.true_label);
    }
    return roc_auc(scores, labels);
}

} // namespace

ConfusionBySubgroup confusion_by_subgroup(const LabeledScores& data, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw SchemaError("threshold must be inside (0, 1), got " + std::to_string(threshold));
    }
    ConfusionBySubgroup out;
    for (const auto& row : data) {
        ConfusionCounts& c = out[row.subgroup];
        const int yhat = effective_prediction(row, threshold);
        if (row.true_label == 1) {
            (yhat == 1 ? c.tp : c.fn)++;
        } else {
            (yhat == 1 ? c.fp : c.tn)++;
        }
    }
    return out;
}

RateGap delta_tpr(const ConfusionBySubgroup& counts) {
    RateGap gap;
    const auto tprs = tpr_by_subgroup(counts, &gap.excluded);
    if (tprs.size() < 2) {
        throw NoEligibleSubgroups("delta_tpr needs >= 2 subgroups with positives");
    }
    std::vector<double> values;
    for (const auto& [key, t] : tprs) values.push_back(t);
    gap.value = minmax_gap(values);
    return gap;
}

RateGap delta_fpr(const ConfusionBySubgroup& counts) {
    RateGap gap;
    std::vector<double> values;
    for (const auto& [key, c] : counts) {
        if (c.negatives() == 0) {
            gap.excluded.push_back(key);
            continue;
        }
        values.push_back(static_cast<double>(c.fp) / static_cast<double>(c.negatives()));
    }
    if (values.size() < 2) {
        throw NoEligibleSubgroups("delta_fpr needs >= 2 subgroups with negatives");
    }
    gap.value = minmax_gap(values);
    return gap;
}

RateGap dpd(const ConfusionBySubgroup& counts) {
    RateGap gap;
    std::vector<double> values;
    for (const auto& [key, c] : counts) {
        if (c.total() == 0) {
            gap.excluded.push_back(key);
            continue;
        }
        values.push_back(static_cast<double>(c.tp + c.fp) / static_cast<double>(c.total()));
    }
    if (values.size() < 2) {
        throw NoEligibleSubgroups("dpd needs >= 2 nonempty subgroups");
    }
    gap.value = minmax_gap(values);
    return gap;
}

DeoddsResult deodds(const ConfusionBySubgroup& counts) {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& [key, c] : counts) {
        tp += c.tp;
        fp += c.fp;
        tn += c.tn;
        fn += c.fn;
    }
    if (tp + fn == 0 || fp + tn == 0) {
        throw DegeneratePopulation("deodds needs at least one positive and one negative overall");
    }
    DeoddsResult out;
    out.pooled_tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.pooled_fpr = static_cast<double>(fp) / static_cast<double>(fp + tn);
    double sum = 0.0;
    for (const auto& [key, c] : counts) {
        if (c.positives() == 0 || c.negatives() == 0) {
            out.excluded.push_back(key);
            continue;
        }
        const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.positives());
        const double fpr = static_cast<double>(c.fp) / static_cast<double>(c.negatives());
        const double d = std::abs(tpr - out.pooled_tpr) + std::abs(fpr - out.pooled_fpr);
        out.per_subgroup[key] = d;
        sum += d;
    }
    if (out.per_subgroup.empty()) {
        throw NoEligibleSubgroups("deodds: no subgroup has both classes");
    }
    out.mean = sum / static_cast<double>(out.per_subgroup.size());
    return out;
}

CriterionResult df_check(const ConfusionBySubgroup& counts, double epsilon) {
    const auto tprs = tpr_by_subgroup(counts, nullptr);
    if (tprs.size() < 2) {
        throw NoEligibleSubgroups("df_check needs >= 2 subgroups with positives");
    }
    CriterionResult out;
    out.worst = 1.0;
    for (std::size_t a = 0; a < tprs.size(); ++a) {
        for (std::size_t b = a + 1; b < tprs.size(); ++b) {
            const double lo = std::min(tprs[a].second, tprs[b].second);
            const double hi = std::max(tprs[a].second, tprs[b].second);
            double ratio;
            if (hi == lo) {
                ratio = 1.0;
            } else if (lo == 0.0) {
                ratio = std::numeric_limits<double>::infinity();
            } else {
                ratio = hi / lo;
            }
            out.worst = std::max(out.worst, ratio);
        }
    }
    out.pass = out.worst <= std::exp(epsilon);
    return out;
}

CriterionResult if_alpha_check(const ConfusionBySubgroup& counts, double alpha, double gamma) {
    const auto tprs = tpr_by_subgroup(counts, nullptr);
    if (tprs.size() < 2) {
        throw NoEligibleSubgroups("if_alpha_check needs >= 2 subgroups with positives");
    }
    CriterionResult out;
    out.worst = 0.0;
    for (std::size_t a = 0; a < tprs.size(); ++a) {
        for (std::size_t b = a + 1; b < tprs.size(); ++b) {
            const double d_abs = std::abs(tprs[a].second - tprs[b].second);
            const double mx = std::max(tprs[a].second, tprs[b].second);
            const double d_rel = mx > 0.0 ? d_abs / mx : 0.0;
            out.worst = std::max(out.worst, alpha * d_abs + (1.0 - alpha) * d_rel);
        }
    }
    out.pass = out.worst <= gamma;
    return out;
}

double certainty_gap(const LabeledScores& data) {
    std::map<SubgroupKey, std::pair<double, std::int64_t>> acc;
    for (const auto& row : data) {
        auto& [sum, count] = acc[row.subgroup];
        sum += true_class_certainty(row);
        count += 1;
    }
    if (acc.size() < 2) {
        throw NoEligibleSubgroups("certainty_gap needs >= 2 nonempty subgroups");
    }
    std::vector<double> means;
    for (const auto& [key, sc] : acc) {
        means.push_back(sc.first / static_cast<double>(sc.second));
    }
    return minmax_gap(means);
}

std::map<SubgroupKey, double> uncertainty_zone_fraction(const LabeledScores& data,
                                                        double zone_lo, double zone_hi) {
    std::map<SubgroupKey, std::pair<std::int64_t, std::int64_t>> acc; // inside, total
    for (const auto& row : data) {
        auto& [inside, total] = acc[row.subgroup];
        const double c = true_class_certainty(row);
        if (c >= zone_lo && c <= zone_hi) inside += 1;
        total += 1;
    }
    std::map<SubgroupKey, double> out;
    for (const auto& [key, it] : acc) {
        out[key] = static_cast<double>(it.first) / static_cast<double>(it.second);
    }
    return out;
}

KdeCurve kde_curve(std::span<const double> scores, const KdeOptions& opts) {
    if (scores.empty()) {
        throw LengthMismatch("kde_curve: empty score list");
    }
    const std::size_t n = scores.size();
    const double nd = static_cast<double>(n);
    const double spacing = (opts.grid_hi - opts.grid_lo) / static_cast<double>(opts.grid_points - 1);

    KdeCurve out;
    if (opts.mode == KdeOptions::Bandwidth::fixed) {
        if (!(opts.fixed_bandwidth > 0.0)) {
            throw NonPositiveBandwidth("kde_curve: fixed bandwidth must be positive");
        }
        out.bandwidth = opts.fixed_bandwidth;
    } else {
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= nd;
        double var = 0.0;
        for (double s : scores) var += (s - mean) * (s - mean);
        const double sd = n > 1 ? std::sqrt(var / (nd - 1.0)) : 0.0;
        double h = 1.06 * sd * std::pow(nd, -0.2);
        if (h <= 0.0) {
            h = 0.01;
            out.degenerate_fallback = true;
        }
        // Mass of all kernels inside the padded range; shrink h until at
        // least 0.9995 stays in so the emitted curve integrates to ~1.
        const auto inside_mass = [&](double bw) {
            double mass = 0.0;
            for (double s : scores) {
                mass += normal_cdf((opts.grid_hi - s) / bw) - normal_cdf((opts.grid_lo - s) / bw);
            }
            return mass / nd;
        };
        const double h_floor = spacing; // below this the trapezoid rule undersamples
        if (!out.degenerate_fallback && inside_mass(h) < 0.9995) {
            double lo = h_floor, hi = h;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (inside_mass(mid) >= 0.9995 ? lo : hi) = mid;
            }
            h = lo;
            out.bandwidth_capped = true;
        }
        out.bandwidth = std::max(h, h_floor);
    }

    const double inv = 1.0 / (out.bandwidth * std::sqrt(2.0 * 3.14159265358979323846));
    out.x.resize(static_cast<std::size_t>(opts.grid_points));
    out.density.resize(static_cast<std::size_t>(opts.grid_points));
    for (int g = 0; g < opts.grid_points; ++g) {
        const double x = opts.grid_lo + spacing * static_cast<double>(g);
        double d = 0.0;
        for (double s : scores) {
            const double u = (x - s) / out.bandwidth;
            d += std::exp(-0.5 * u * u);
        }
        out.x[static_cast<std::size_t>(g)] = x;
        out.density[static_cast<std::size_t>(g)] = d * inv / nd;
    }
    return out;
}

ImpactRow fn_prevented(const SubgroupKey& subgroup, std::int64_t positives,
                       std::int64_t fn_baseline, std::int64_t fn_new) {
    if (positives < 0 || fn_baseline < 0 || fn_new < 0 ||
        fn_baseline > positives || fn_new > positives) {
        throw SchemaError("fn_prevented: need 0 <= fn <= positives for subgroup " +
                          subgroup.str());
    }
    ImpactRow row;
    row.subgroup = subgroup;
    row.positives = positives;
    row.fn_baseline = fn_baseline;
    row.fn_new = fn_new;
    row.prevented = fn_baseline - fn_new;
    if (fn_baseline > 0) {
        row.relative = static_cast<double>(row.prevented) / static_cast<double>(fn_baseline);
    }
    return row;
}

ImpactTable impact_table(const std::vector<ImpactRow>& rows) {
    ImpactTable out;
    out.rows = rows;
    for (const auto& r : rows) {
        out.total_prevented += r.prevented;
        out.total_fn_baseline += r.fn_baseline;
        out.total_fn_new += r.fn_new;
        out.total_positives += r.positives;
    }
    if (out.total_fn_baseline > 0) {
        out.total_relative = static_cast<double>(out.total_prevented) /
                             static_cast<double>(out.total_fn_baseline);
    }
    return out;
}

FairnessReport build_report(const LabeledScores& data, const ReportOptions& options) {
    if (data.empty()) {
        throw LengthMismatch("build_report: empty data");
    }
    FairnessReport report;
    report.config = options;

    const ConfusionBySubgroup counts = confusion_by_subgroup(data, options.threshold);
    const DeoddsResult deo = deodds(counts);
    const auto zones = uncertainty_zone_fraction(data, options.zone_lo, options.zone_hi);

    std::map<SubgroupKey, LabeledScores> rows_by_key;
    for (const auto& row : data) rows_by_key[row.subgroup].push_back(row);

    for (const auto& [key, c] : counts) {
        SubgroupReport sg;
        sg.key = key;
        sg.counts = c;
        sg.n = c.total();
        sg.positives = c.positives();
        if (c.positives() > 0) {
            sg.tpr = static_cast<double>(c.tp) / static_cast<double>(c.positives());
        } else {
            report.zero_positive_subgroups.push_back(key);
        }
        if (c.negatives() > 0) {
            sg.fpr = static_cast<double>(c.fp) / static_cast<double>(c.negatives());
        } else {
            report.zero_negative_subgroups.push_back(key);
        }
        if (auto it = deo.per_subgroup.find(key); it != deo.per_subgroup.end()) {
            sg.deodds = it->second;
        }
        sg.positive_rate = static_cast<double>(c.tp + c.fp) / static_cast<double>(c.total());
        double certainty_sum = 0.0;
        for (const auto& row : rows_by_key[key]) certainty_sum += true_class_certainty(row);
        sg.mean_certainty = certainty_sum / static_cast<double>(sg.n);
        sg.zone_fraction = zones.at(key);
        try {
            sg.auc = subgroup_auc_or_throw(rows_by_key[key]);
        } catch (const SingleClass&) {
            // single-class subgroup, AUC undefined
        }
        report.subgroups.push_back(std::move(sg));
    }

    AggregateReport& agg = report.aggregate;
    {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& row : data) {
            scores.push_back(row.score);
            labels.push_back(row.true_label);
        }
        agg.auc = roc_auc(scores, labels);
    }
    agg.n = static_cast<std::int64_t>(data.size());
    for (const auto& row : data) agg.positives += row.true_label == 1 ? 1 : 0;
    agg.delta_tpr = delta_tpr(counts).value;
    agg.dpd = dpd(counts).value;
    agg.delta_fpr = delta_fpr(counts).value;
    agg.mean_deodds = deo.mean;
    agg.certainty_gap = certainty_gap(data);
    const CriterionResult df = df_check(counts, options.epsilon);
    agg.df_pass = df.pass;
    agg.df_worst_ratio = df.worst;
    const CriterionResult ifa = if_alpha_check(counts, options.alpha, options.gamma);
    agg.if_alpha_pass = ifa.pass;
    agg.if_alpha_worst = ifa.worst;

    if (options.bootstrap) {
        const BootstrapConfig& bcfg = *options.bootstrap;
        const double threshold = options.threshold;
        const auto run_ci = [&](std::map<std::string, BootstrapCI>& sink, const std::string& name,
                                const std::function<double(const LabeledScores&)>& metric) {
            try {
                sink[name] = bootstrap_ci(metric, data, bcfg);
            } catch (const RetryCapExceeded&) {
                report.warnings.push_back("bootstrap CI dropped for " + name +
                                          ": retry cap exceeded");
            }
        };
        run_ci(agg.ci, "auc", [](const LabeledScores& d) {
            std::vector<double> s;
            std::vector<int> y;
            for (const auto& r : d) {
                s.push_back(r.score);
                y.push_back(r.true_label);
            }
            return roc_auc(s, y);
        });
        run_ci(agg.ci, "delta_tpr", [threshold](const LabeledScores& d) {
            return delta_tpr(confusion_by_subgroup(d, threshold)).value;
        });
        run_ci(agg.ci, "dpd", [threshold](const LabeledScores& d) {
            return dpd(confusion_by_subgroup(d, threshold)).value;
        });
        run_ci(agg.ci, "delta_fpr", [threshold](const LabeledScores& d) {
            return delta_fpr(confusion_by_subgroup(d, threshold)).value;
        });
        run_ci(agg.ci, "mean_deodds", [threshold](const LabeledScores& d) {
            return deodds(confusion_by_subgroup(d, threshold)).mean;
        });
        run_ci(agg.ci, "certainty_gap", [](const LabeledScores& d) { return certainty_gap(d); });

        for (SubgroupReport& sg : report.subgroups) {
            const SubgroupKey key = sg.key;
            const auto filter = [key](const LabeledScores& d) {
                LabeledScores rows;
                for (const auto& r : d) {
                    if (r.subgroup == key) rows.push_back(r);
                }
                return rows;
            };
            if (sg.tpr) {
                run_ci(sg.ci, "tpr", [filter, threshold](const LabeledScores& d) {
                    const auto c = confusion_by_subgroup(filter(d), threshold);
                    const auto& cc = c.begin()->second;
                    if (cc.positives() == 0) throw NoEligibleSubgroups("resample lost positives");
                    return static_cast<double>(cc.tp) / static_cast<double>(cc.positives());
                });
            }
            if (sg.fpr) {
                run_ci(sg.ci, "fpr", [filter, threshold](const LabeledScores& d) {
                    const auto c = confusion_by_subgroup(filter(d), threshold);
                    const auto& cc = c.begin()->second;
                    if (cc.negatives() == 0) throw NoEligibleSubgroups("resample lost negatives");
                    return static_cast<double>(cc.fp) / static_cast<double>(cc.negatives());
                });
            }
            if (sg.auc) {
                run_ci(sg.ci, "auc", [filter](const LabeledScores& d) {
                    return subgroup_auc_or_throw(filter(d));
                });
            }
            run_ci(sg.ci, "mean_certainty", [filter](const LabeledScores& d) {
                const LabeledScores rows = filter(d);
                double sum = 0.0;
                for (const auto& r : rows) sum += true_class_certainty(r);
                return sum / static_cast<double>(rows.size());
            });
        }
    }
    return report;
}

} // namespace cmac
