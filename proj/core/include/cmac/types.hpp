#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cmac {

/// Canonical intersection of demographic attribute values, e.g.
/// ("41-60", "female") or ("60+", "male", "non-white").  Attribute order
/// is fixed by the dataset; two keys compare attribute by attribute.
struct SubgroupKey {
    std::vector<std::string> values;

    auto operator<=>(const SubgroupKey&) const = default;

    /// Joined form used in file formats and report keys, e.g. "41-60|female".
    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i > 0) out += '|';
            out += values[i];
        }
        return out;
    }
};

/// One evaluated sample.  `score` is the model's probability for the
/// positive class; `predicted` may be absent, in which case consumers
/// apply their threshold rule (score >= threshold predicts positive).
struct ScoredRow {
    std::int64_t id = 0;
    SubgroupKey subgroup;
    int true_label = 0;
    double score = 0.0;
    std::optional<int> predicted;
};

using LabeledScores = std::vector<ScoredRow>;

/// Probability assigned to the sample's true class.  For the binary
/// evaluation path this is `score` for positives and `1 - score` for
/// negatives; certainty-gap and uncertainty-zone metrics are defined
/// over this quantity.
inline double true_class_certainty(const ScoredRow& row) {
    return row.true_label == 1 ? row.score : 1.0 - row.score;
}

} // namespace cmac
