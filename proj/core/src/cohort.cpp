#include "cmac/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cmac/errors.hpp"
#include "cmac/rng.hpp"

namespace cmac {

std::int64_t positive_count(int n, double prevalence) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(n) * prevalence + 0.5));
}

std::vector<SampleRecord> generate(const CohortSpec& spec) {
    if (spec.subgroups.empty()) {
        throw EmptySpec("cohort spec has no subgroups");
    }
    std::int64_t total = 0;
    for (const auto& g : spec.subgroups) {
        if (g.n < 0 || g.prevalence < 0.0 || g.prevalence > 1.0 || !(g.separation >= 0.0)) {
            throw SchemaError("invalid subgroup spec for " + g.key.str());
        }
        total += g.n;
    }
    if (total < 1) {
        throw EmptySpec("cohort spec has zero total samples");
    }
    if (spec.d_in < 2 || !(spec.noise_sigma > 0.0)) {
        throw SchemaError("cohort spec needs d_in >= 2 and noise_sigma > 0");
    }

    if (spec.d_in < static_cast<int>(spec.subgroups.size())) {
        throw SchemaError("cohort spec needs d_in >= number of subgroups");
    }

    // Each subgroup carries its own class-signal direction; the
    // directions are orthogonalized so the disease presents differently
    // in every subgroup and the encoder has to learn each one on its
    // own evidence.
    std::vector<Eigen::VectorXd> signals;
    for (std::size_t gi = 0; gi < spec.subgroups.size(); ++gi) {
        Rng rng(Rng::derive(spec.seed, 0x51641ULL + gi));
        Eigen::VectorXd v(spec.d_in);
        for (int d = 0; d < spec.d_in; ++d) v(d) = rng.gaussian();
        for (const auto& u : signals) v -= v.dot(u) * u;
        signals.push_back(v / v.norm());
    }

    std::vector<SampleRecord> records;
    records.reserve(static_cast<std::size_t>(total));
    std::int64_t next_id = 0;
    for (std::size_t gi = 0; gi < spec.subgroups.size(); ++gi) {
        const SubgroupSpec& g = spec.subgroups[gi];
        Rng rng(Rng::derive(spec.seed, gi));

        const Eigen::VectorXd& signal = signals[gi];
        Eigen::VectorXd offset(spec.d_in);
        for (int d = 0; d < spec.d_in; ++d) offset(d) = rng.gaussian();
        offset *= 2.0 * spec.noise_sigma / offset.norm();

        // Negatives sit two sigma below the decision origin along the
        // subgroup's own signal direction; positives sit `separation`
        // above them.  Low separation leaves a subgroup's positives
        // hugging the boundary while its negatives stay clear.
        const std::int64_t n_pos = positive_count(g.n, g.prevalence);
        const double neg_center = -2.0 * spec.noise_sigma;
        const double pos_center = neg_center + g.separation * spec.noise_sigma;
        for (int k = 0; k < g.n; ++k) {
            SampleRecord rec;
            rec.id = next_id++;
            rec.label = k < n_pos ? 1 : 0;
            rec.subgroup = g.key;
            rec.features = offset + (rec.label == 1 ? pos_center : neg_center) * signal;
            for (int d = 0; d < spec.d_in; ++d) {
                rec.features(d) += spec.noise_sigma * rng.gaussian();
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

SplitResult stratified_split(const std::vector<SampleRecord>& records,
                             std::array<double, 3> fractions,
                             std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw BadFractions("split fractions must be nonnegative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw BadFractions("split fractions must sum to 1, got " + std::to_string(sum));
    }

    std::map<std::pair<SubgroupKey, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < records.size(); ++i) {
        cells[{records[i].subgroup, records[i].label}].push_back(i);
    }

    SplitResult out;
    std::size_t cell_index = 0;
    for (auto& [key, idx] : cells) {
        Rng rng(Rng::derive(seed, cell_index++));
        rng.shuffle(idx);

        // Largest-remainder apportionment; remainder ties go to the
        // lowest split index.
        const double m = static_cast<double>(idx.size());
        std::array<std::size_t, 3> base{};
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            const double target = fractions[s] * m;
            base[s] = static_cast<std::size_t>(std::floor(target + 1e-9));
            rem[s] = std::max(0.0, target - static_cast<double>(base[s]));
            assigned += base[s];
        }
        std::array<std::size_t, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t leftover = idx.size() - assigned, k = 0; k < leftover; ++k) {
            base[order[k % 3]] += 1;
        }

        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            auto& sink = s == 0 ? out.train : (s == 1 ? out.val : out.test);
            for (std::size_t k = 0; k < base[s]; ++k) {
                sink.push_back(records[idx[pos++]]);
            }
        }
    }

    const auto by_id = [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; };
    std::sort(out.train.begin(), out.train.end(), by_id);
    std::sort(out.val.begin(), out.val.end(), by_id);
    std::sort(out.test.begin(), out.test.end(), by_id);
    return out;
}

CohortSpec cohort_preset(std::string_view name) {
    CohortSpec spec;
    spec.d_in = 16;
    spec.noise_sigma = 1.0;
    spec.seed = 42;
    if (name == "derm6") {
        spec.attribute_names = {"age_bin", "gender"};
        spec.d_in = 16;
        // Six age-gender cells with the published prevalence extremes
        // (0.063 for young women, 0.377 for men over 60, the largest
        // cell).  Separation falls as prevalence rises: the
        // high-prevalence elderly-male cell presents the subtlest
        // lesions, planting the certainty gap there.
        spec.subgroups = {
            {{{"0-40", "female"}}, 200, 0.063, 5.5},
            {{{"0-40", "male"}}, 190, 0.090, 5.0},
            {{{"41-60", "female"}}, 210, 0.120, 4.0},
            {{{"41-60", "male"}}, 230, 0.159, 4.0},
            {{{"60+", "female"}}, 120, 0.270, 3.2},
            {{{"60+", "male"}}, 250, 0.377, 2.0},
        };
    } else if (name == "oph8") {
        spec.attribute_names = {"age_bin", "gender", "race"};
        spec.d_in = 16;
        // Prevalence range runs from 0.266 (young non-white males) to
        // 0.769 (older non-white males); white 60+ dominates the counts
        // and the highest-prevalence cell again reads hardest.
        spec.subgroups = {
            {{{"0-60", "female", "white"}}, 160, 0.35, 4.5},
            {{{"0-60", "female", "non-white"}}, 31, 0.40, 4.0},
            {{{"0-60", "male", "white"}}, 201, 0.38, 4.5},
            {{{"0-60", "male", "non-white"}}, 19, 0.266, 5.0},
            {{{"60+", "female", "white"}}, 322, 0.45, 3.6},
            {{{"60+", "female", "non-white"}}, 120, 0.50, 3.2},
            {{{"60+", "male", "white"}}, 253, 0.55, 2.8},
            {{{"60+", "male", "non-white"}}, 94, 0.769, 2.0},
        };
    } else {
        throw UnknownSpec("unknown cohort preset: " + std::string(name));
    }
    return spec;
}

} // namespace cmac
