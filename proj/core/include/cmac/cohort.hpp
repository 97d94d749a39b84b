#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cmac/types.hpp"

namespace cmac {

struct SubgroupSpec {
    SubgroupKey key;
    int n = 0;
    double prevalence = 0.0; // fraction of positive labels, rounded half-up to a count
    double separation = 1.0; // class-mean distance in units of noise_sigma
};

struct CohortSpec {
    std::vector<std::string> attribute_names; // e.g. {"age_bin", "gender"}
    std::vector<SubgroupSpec> subgroups;
    int d_in = 16;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;
};

struct SampleRecord {
    std::int64_t id = 0;
    Eigen::VectorXd features; // d_in
    int label = 0;
    SubgroupKey subgroup;
};

/// Draw the cohort: per subgroup, a two-Gaussian class-conditional
/// generator whose class means sit `separation * noise_sigma` apart
/// along the shared signal axis, plus a subgroup-specific offset in the
/// remaining dimensions so subgroups are identifiable from features
/// alone.  Counts and positives match the spec exactly; everything is a
/// pure function of the spec (seed included).
std::vector<SampleRecord> generate(const CohortSpec& spec);

struct SplitResult {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> val;
    std::vector<SampleRecord> test;
};

/// Stratified split by (subgroup x label) cell with largest-remainder
/// apportionment per cell; remainder ties go to the lowest split index.
SplitResult stratified_split(const std::vector<SampleRecord>& records,
                             std::array<double, 3> fractions,
                             std::uint64_t seed);

/// Cohort presets shaped after published imbalance patterns:
/// "derm6" (6 age x gender subgroups, prevalence 0.063..0.377) and
/// "oph8" (8 age x gender x race subgroups, prevalence 0.266..0.769),
/// both scaled to 1,200 samples.  Unreported cells are interpolated.
CohortSpec cohort_preset(std::string_view name);

/// Number of positive labels assigned to a subgroup: half-up rounding.
std::int64_t positive_count(int n, double prevalence);

} // namespace cmac
