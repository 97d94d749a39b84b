#include "cmac/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "cmac/errors.hpp"
#include "cmac/rng.hpp"

namespace cmac {

namespace {

/// Midranks (1-based, ties averaged) of the input values.
std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

struct Placements {
    std::vector<double> v10; // one per positive
    std::vector<double> v01; // one per negative
    double auc = 0.0;
};

/// Placement values via midranks: V10(i) = (R(i) - R+(i)) / n_neg for
/// positives, V01(j) = 1 - (R(j) - R-(j)) / n_pos for negatives.
Placements placements(std::span<const double> scores, std::span<const int> labels) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    }
    const std::size_t m = pos.size(), n = neg.size();
    if (m == 0 || n == 0) {
        throw SingleClass("AUC requires at least one positive and one negative");
    }
    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    const std::vector<double> r_all = midranks(all);
    const std::vector<double> r_pos = midranks(pos);
    const std::vector<double> r_neg = midranks(neg);

    Placements out;
    out.v10.resize(m);
    out.v01.resize(n);
    double placement_sum = 0.0; // exact: a sum of half-integers
    for (std::size_t i = 0; i < m; ++i) {
        placement_sum += r_all[i] - r_pos[i];
        out.v10[i] = (r_all[i] - r_pos[i]) / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < n; ++j) {
        out.v01[j] = 1.0 - (r_all[m + j] - r_neg[j]) / static_cast<double>(m);
    }
    // One division keeps the value bit-identical to the pairwise
    // enumeration wins / (m * n).
    out.auc = placement_sum / static_cast<double>(m * n);
    return out;
}

double sample_cov(const std::vector<double>& a, double ma,
                  const std::vector<double>& b, double mb) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma) * (b[i] - mb);
    return acc / static_cast<double>(a.size() - 1);
}

} // namespace

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw LengthMismatch("roc_auc: scores and labels differ in length");
    }
    return placements(scores, labels).auc;
}

DelongResult delong_test(std::span<const double> scores_a,
                         std::span<const double> scores_b,
                         std::span<const int> labels) {
    if (scores_a.size() != labels.size() || scores_b.size() != labels.size()) {
        throw LengthMismatch("delong_test: paired scores must match label count");
    }
    std::size_t m = 0, n = 0;
    for (int y : labels) (y == 1 ? m : n)++;
    if (m < 2 || n < 2) {
        throw SingleClass("delong_test requires at least two positives and two negatives");
    }

    const Placements pa = placements(scores_a, labels);
    const Placements pb = placements(scores_b, labels);

    const double s10_aa = sample_cov(pa.v10, pa.auc, pa.v10, pa.auc);
    const double s10_bb = sample_cov(pb.v10, pb.auc, pb.v10, pb.auc);
    const double s10_ab = sample_cov(pa.v10, pa.auc, pb.v10, pb.auc);
    const double s01_aa = sample_cov(pa.v01, pa.auc, pa.v01, pa.auc);
    const double s01_bb = sample_cov(pb.v01, pb.auc, pb.v01, pb.auc);
    const double s01_ab = sample_cov(pa.v01, pa.auc, pb.v01, pb.auc);

    const double var = (s10_aa + s10_bb - 2.0 * s10_ab) / static_cast<double>(m) +
                       (s01_aa + s01_bb - 2.0 * s01_ab) / static_cast<double>(n);
    if (var < 1e-15) {
        throw DegenerateVariance("delong_test: variance of the AUC difference is ~0 (" +
                                 std::to_string(var) + ")");
    }
    DelongResult out;
    out.auc_a = pa.auc;
    out.auc_b = pb.auc;
    out.diff = pa.auc - pb.auc;
    const double se = std::sqrt(var);
    out.z = out.diff / se;
    out.p = 2.0 * (1.0 - normal_cdf(std::abs(out.z)));
    out.ci_lo = out.diff - 1.96 * se;
    out.ci_hi = out.diff + 1.96 * se;
    return out;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs) {
    std::vector<double> nonzero;
    for (double d : diffs) {
        if (d != 0.0) nonzero.push_back(d);
    }
    if (nonzero.empty()) {
        throw AllZeroDifferences("wilcoxon_signed_rank: all differences are zero");
    }
    const std::size_t n = nonzero.size();
    std::vector<double> abs_vals(n);
    for (std::size_t i = 0; i < n; ++i) abs_vals[i] = std::abs(nonzero[i]);
    const std::vector<double> ranks = midranks(abs_vals);

    double w_plus = 0.0, rank_sum = 0.0, rank_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nonzero[i] > 0.0) w_plus += ranks[i];
        rank_sum += ranks[i];
        rank_sq += ranks[i] * ranks[i];
    }
    const double w_minus = rank_sum - w_plus;

    WilcoxonResult out;
    out.w = std::min(w_plus, w_minus);
    out.n_nonzero = static_cast<int>(n);

    if (n <= 12) {
        // Full enumeration of the 2^n sign assignments.
        out.method = WilcoxonResult::Method::exact;
        const std::uint64_t total = 1ULL << n;
        std::uint64_t count = 0;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            double wp = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (mask & (1ULL << i)) wp += ranks[i];
            }
            if (std::min(wp, rank_sum - wp) <= out.w) ++count;
        }
        out.p = static_cast<double>(count) / static_cast<double>(total);
    } else {
        // Normal approximation; midrank variance sum(r^2)/4 carries the
        // tie correction automatically.
        out.method = WilcoxonResult::Method::normal_approx;
        const double mean = rank_sum / 2.0;
        const double sd = std::sqrt(rank_sq / 4.0);
        const double z = (out.w - mean + 0.5) / sd;
        out.p = std::min(1.0, 2.0 * normal_cdf(z));
    }
    return out;
}

ZTestResult two_prop_ztest(std::int64_t x1, std::int64_t n1,
                           std::int64_t x2, std::int64_t n2) {
    if (n1 < 1 || n2 < 1 || x1 < 0 || x2 < 0 || x1 > n1 || x2 > n2) {
        throw LengthMismatch("two_prop_ztest: need 0 <= x <= n and n >= 1");
    }
    const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
    const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
    if (pooled <= 0.0 || pooled >= 1.0) {
        throw DegeneratePooled("two_prop_ztest: pooled proportion is 0 or 1");
    }
    const double se = std::sqrt(pooled * (1.0 - pooled) *
                                (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    ZTestResult out;
    out.z = (p1 - p2) / se;
    out.p = 2.0 * (1.0 - normal_cdf(std::abs(out.z)));
    return out;
}

BootstrapCI bootstrap_ci(const std::function<double(const LabeledScores&)>& metric,
                         const LabeledScores& data,
                         const BootstrapConfig& cfg) {
    if (data.empty()) {
        throw LengthMismatch("bootstrap_ci: empty data");
    }
    if (cfg.strata && cfg.strata->size() != data.size()) {
        throw LengthMismatch("bootstrap_ci: strata assignment must match data size");
    }

    std::map<SubgroupKey, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const SubgroupKey& key = cfg.strata ? (*cfg.strata)[i] : data[i].subgroup;
        strata[key].push_back(i);
    }

    BootstrapCI out;
    out.point = metric(data);

    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(cfg.n_resamples));
    LabeledScores resample(data.size());
    for (int b = 0; b < cfg.n_resamples; ++b) {
        int attempt = 0;
        for (;;) {
            Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(b) * 1000003ULL +
                                              static_cast<std::uint64_t>(attempt)));
            std::size_t pos = 0;
            for (const auto& [key, idx] : strata) {
                for (std::size_t k = 0; k < idx.size(); ++k) {
                    resample[pos++] = data[idx[rng.next_below(idx.size())]];
                }
            }
            try {
                values.push_back(metric(resample));
                break;
            } catch (const Error&) {
                ++out.rejected_resamples;
                if (++attempt > cfg.retry_cap) {
                    throw RetryCapExceeded("bootstrap_ci: metric rejected " +
                                           std::to_string(cfg.retry_cap) +
                                           " consecutive redraws of resample " +
                                           std::to_string(b));
                }
            }
        }
    }

    std::sort(values.begin(), values.end());
    const double alpha = 1.0 - cfg.level;
    const auto nearest_rank = [&](double q) {
        const double nq = q * static_cast<double>(values.size());
        std::size_t rank = static_cast<std::size_t>(std::ceil(nq));
        if (rank < 1) rank = 1;
        if (rank > values.size()) rank = values.size();
        return values[rank - 1];
    };
    out.lo = nearest_rank(alpha / 2.0);
    out.hi = nearest_rank(1.0 - alpha / 2.0);
    return out;
}

} // namespace cmac
