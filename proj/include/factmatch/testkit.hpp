#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "factmatch/data_model.hpp"
#include "factmatch/matching.hpp"
#include "factmatch/neyman.hpp"

namespace factmatch {

/// Standard normal draw keyed by (seed, a, b, c); reproducible in any order.
double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);
/// Uniform draw in [0, 1) keyed the same way.
double keyed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Potential outcomes Y_ij(z1, z2) = g(z1, z2) + unit heterogeneity.
struct PotentialSchedule {
    enum class Family { Constant, Linear, Bilinear, Quadratic, UserTable };
    Family family = Family::Linear;
    /// Constant {c}; Linear {a1, a2}; Bilinear {a1, a2, a12}; Quadratic {a1, a2, b1, b2}
    /// for a1 z1 + a2 z2 + b1 z1^2 + b2 z2^2.
    std::vector<double> coef = {2.0, 3.0};
    /// Sd of the unit baseline.
    double noise_sd = 0.0;
    /// Sd of a unit-specific extra slope on z1, making effects heterogeneous.
    double effect_sd = 0.0;
    /// Baseline shift per unit of the unit's covariate.
    double covariate_weight = 0.0;
    std::uint64_t seed = 1;
    /// UserTable values, [stratum][unit slot][label].
    std::vector<StratumPotentials> table;

    static Family parse_family(const std::string& text);
    static std::string family_name(Family f);
    /// Schedule with the family's default coefficients and no noise.
    static PotentialSchedule standard(Family f);

    double dose_response(const DosePair& z) const;
    double outcome(std::size_t stratum, std::size_t unit, const DosePair& z, double x) const;
};

/// Stratum dose sets following the LL/LH/HL/HH pattern.
struct DoseGenerator {
    double low_min = 0.1;
    double low_max = 0.35;
    double gap = 0.4;
    double jitter = 0.03;
    /// All doses exactly 0 or 1.
    bool binary = false;
};

/// Strata with known doses and one covariate per unit; unit slot j starts at label j.
struct SyntheticStudy {
    std::vector<DoseSet> doses;
    std::vector<std::array<double, 4>> covariate;  // [stratum][unit slot]

    /// Design whose stratum i holds units "s<i>u<j>" at their starting labels.
    Design design() const;
    /// Dataset with covariate "x" and no outcomes for the design's units.
    Dataset dataset() const;
    /// Q = (1, stratum mean of x).
    Eigen::MatrixXd covariate_q() const;
};

SyntheticStudy synthetic_study(std::size_t n_strata, const DoseGenerator& gen, std::uint64_t seed);

/// [stratum][unit slot][label] potential outcomes for a study.
std::vector<StratumPotentials> potential_table(const PotentialSchedule& s, const SyntheticStudy& study);

/// Observed outcomes by label when unit slot j of stratum i takes label
/// label_permutations()[perm[i]][j].
std::vector<LabelOutcomes> observe(const std::vector<StratumPotentials>& po, const std::vector<std::uint8_t>& perm);

/// Observational dataset shaped like a county study: proportion-scale doses
/// driven by the first covariates, an optional binary exact-match column
/// "rural", and an outcome column "y".
Dataset synthetic_observational(std::size_t n, std::size_t n_covariates, std::uint64_t seed, bool with_exact);

/// Exhaustive minimum-weight perfect matching over fixed-point weights with the
/// solver's lexicographic tie-break. Throws TooLarge above 12 vertices.
PerfectMatching brute_force_matching(const WeightedGraph& g);

/// Visits all 24^I assignments in mixed-radix order. Throws TooLarge above 5 strata.
void enumerate_assignments(const std::vector<StratumPotentials>& po,
                           const std::function<void(const std::vector<std::uint8_t>&,
                                                    const std::vector<LabelOutcomes>&)>& visit);

/// Minimum-cost assignment of rows to columns of a square matrix (Hungarian method).
std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost);

struct SimReport {
    std::size_t replications = 0;
    std::array<double, 4> true_tau{};
    std::array<double, 4> mean_estimate{};
    std::array<double, 4> bias{};
    std::array<double, 4> coverage{};
    std::array<double, 4> mean_variance{};
    /// Variance of the estimates across replications.
    std::array<double, 4> mc_variance{};
};

/// Repeated uniform within-stratum assignments, scoring Wald intervals.
/// Replications run on `threads` workers with keyed draws.
SimReport simulate_coverage(const PotentialSchedule& schedule, const SyntheticStudy& study, std::size_t reps,
                            double alpha, QSpec::Kind q_kind, std::uint64_t seed, unsigned threads = 1);

}  // namespace factmatch
