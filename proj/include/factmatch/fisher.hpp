#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "factmatch/data_model.hpp"
#include "factmatch/neyman.hpp"

namespace factmatch {

enum class NullFamily { NoEffect, Linear, LinearCovariate, SingleIndex };

NullFamily parse_null_family(const std::string& text);
std::string to_string(NullFamily f);

/// Named link for the single-index family: identity, expm1, tanh, cube.
std::function<double(double)> named_link(const std::string& name);

/// Structured sharp null: Y(z) - Y(ref) = f(z; ref, x, theta) for every unit.
struct SharpNull {
    NullFamily family = NullFamily::NoEffect;
    std::vector<double> theta;
    DosePair reference;
    /// Covariate multiplying (z1 - ref.z1) in the LinearCovariate family.
    std::string covariate;
    std::string link_name = "identity";

    /// Number of parameters the family takes.
    static std::size_t dimension(NullFamily f);
    /// Throws InvalidConfig on a bad parameter vector or link.
    void validate() const;
    /// f evaluated at dose z for a unit with covariate value x.
    double effect(const DosePair& z, double x) const;
    std::string describe() const;
};

/// Outcomes with the hypothesized effect removed: Y - f(Z; ref, x, theta).
/// `d` supplies covariates and may be null unless the family needs one.
std::vector<LabelOutcomes> adjust_outcomes(const Design& design, const std::vector<LabelOutcomes>& y,
                                           const Dataset* d, const SharpNull& null);

/// The 24 permutations of the four labels in lexicographic order, identity first.
/// Under permutation p the unit observed at label L receives label p[L].
const std::array<std::array<std::uint8_t, 4>, 24>& label_permutations();

struct TestStatistic {
    enum class Kind { AbsTau, SumAbsTau, QuadraticForm };
    Kind kind = Kind::SumAbsTau;
    /// Estimands used: one entry for AbsTau, any subset for the others.
    std::vector<int> estimands = {1, 2};

    static TestStatistic abs_tau(int a);
    static TestStatistic sum_abs_tau(std::vector<int> estimands = {1, 2});
    static TestStatistic quadratic_form(std::vector<int> estimands = {1, 2, 3, 4});
    /// "abstau1".."abstau4", "sumabstau" (optionally ":1,2,3"), "quadratic".
    static TestStatistic parse(const std::string& text);
    std::string describe() const;
};

enum class TestMode { Auto, Exact, MonteCarlo };

struct TestOptions {
    TestMode mode = TestMode::Auto;
    std::uint64_t draws = 100000;
    std::uint64_t seed = 42;
    unsigned threads = 1;
};

struct RandTestResult {
    double statistic_observed = 0.0;
    double p_value = 1.0;
    bool exact = false;
    std::uint64_t draws = 0;
    std::uint64_t seed = 0;
    std::uint64_t count_ge = 0;
    std::uint64_t total = 0;
    std::string statistic;
    std::string null_description;
};

/// Largest assignment space enumerated exactly.
inline constexpr std::uint64_t kExactLimit = 10'000'000;

/// Counter-based generator: the permutation index in [0, 24) used by Monte
/// Carlo draw `draw` in stratum `stratum`.
std::uint8_t keyed_permutation(std::uint64_t seed, std::uint64_t draw, std::uint64_t stratum);
std::uint64_t splitmix64(std::uint64_t x);

/// Per-stratum contributions for every permutation, precomputed once.
class PermutationTable {
public:
    PermutationTable(const std::vector<DoseSet>& doses, const std::vector<LabelOutcomes>& adjusted,
                     const TestStatistic& stat);

    std::size_t n_strata() const { return n_; }
    /// Statistic for one assignment; `perm[i]` indexes label_permutations().
    double evaluate(const std::uint8_t* perm) const;

private:
    std::size_t n_;
    TestStatistic stat_;
    std::vector<int> used_;               // estimand indices 1..4
    std::vector<double> v_;               // [stratum][perm][estimand slot]
};

/// Exact or Monte Carlo randomization p-value with the add-one estimator for
/// Monte Carlo. T counts as extreme when T >= t_obs - 1e-9 |t_obs|.
RandTestResult randomization_test(const std::vector<DoseSet>& doses, const std::vector<LabelOutcomes>& adjusted,
                                  const TestStatistic& stat, const TestOptions& opts);

RandTestResult randomization_test(const Design& design, const std::vector<LabelOutcomes>& y, const Dataset* d,
                                  const SharpNull& null, const TestStatistic& stat, const TestOptions& opts);

struct GridAxis {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    double step = 1.0;

    std::vector<double> values() const;
};

/// Parses "t1=0:4:0.1,t2=0:6:0.1".
std::vector<GridAxis> parse_grid(const std::string& text);

struct RegionPoint {
    std::vector<double> theta;
    double p_value = 1.0;
    bool accepted = false;
};

struct ConfidenceRegion {
    double alpha = 0.05;
    std::vector<RegionPoint> points;
    std::size_t n_accepted = 0;
    /// Bounding box of accepted points; empty when nothing is accepted.
    std::vector<double> box_lo;
    std::vector<double> box_hi;
};

/// Test inversion over a grid. Every point reuses the same seeded draws.
/// Single-index points off the simplex are skipped.
ConfidenceRegion confidence_region(const Design& design, const std::vector<LabelOutcomes>& y, const Dataset* d,
                                   const SharpNull& family, const std::vector<GridAxis>& grid,
                                   const TestStatistic& stat, double alpha, const TestOptions& opts);

}  // namespace factmatch
