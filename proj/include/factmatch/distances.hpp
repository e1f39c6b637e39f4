#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "factmatch/data_model.hpp"

namespace factmatch {

struct CovariateMetric {
    enum class Kind { Mahalanobis, RankMahalanobis, Euclidean };
    Kind kind = Kind::Mahalanobis;
    /// Added to the covariance diagonal before inversion.
    double regularization = 0.0;
};

CovariateMetric::Kind parse_metric_kind(const std::string& text);
std::string to_string(CovariateMetric::Kind kind);

struct PenaltyConfig {
    double weight = 5000.0;
    double threshold_z1 = 0.05;
    double threshold_z2 = 0.05;

    /// Throws InvalidConfig unless all three are finite and positive.
    void validate() const;
};

/// A Stage 1 pair. `hi` and `lo` are dataset row indices with
/// lead dose of `hi` strictly above that of `lo`.
struct PairRecord {
    int q = 0;
    std::size_t hi = 0;
    std::size_t lo = 0;
};

/// Finite value standing in for an infinite edge cost.
double infeasible_sentinel();

/// Pairwise covariate distances (square root of the quadratic form).
/// Rows are split across `threads` workers; the result does not depend on it.
/// Throws SingularCovariance when the covariance condition number exceeds 1e12.
Eigen::MatrixXd covariate_distance(const CovariateMetric& metric, const Dataset& d, unsigned threads = 1);

/// Average ranks (1-based) of a column; ties share the mean of their ranks.
std::vector<double> average_ranks(const std::vector<double>& values);

/// delta / (dose gap)^2, with the sentinel for equal doses and on the diagonal.
Eigen::MatrixXd stage1_distance(const Eigen::MatrixXd& delta, const std::vector<double>& lead_doses);

enum class Alignment { HiHi, HiLo };

struct Stage2Value {
    double value = 0.0;
    Alignment alignment = Alignment::HiHi;
    bool penalized = false;
    bool b1 = false;
    bool b2 = false;
    bool b3 = false;
};

struct PenaltyFlags {
    bool b1 = false;
    bool b2 = false;
    bool b3 = false;
    bool any() const { return b1 || b2 || b3; }
};

/// Penalty events for a labeled quadruple (doses indexed by DoseLabel).
PenaltyFlags penalty_flags(const std::array<DosePair, 4>& by_label, const PenaltyConfig& pen, Lead lead);

/// Distance between two Stage 1 pairs: the cheaper of the two cross-pair
/// alignments plus W when any penalty event holds. Throws
/// BothAlignmentsInfeasible when both alignments have a zero gap in the
/// non-lead treatment.
Stage2Value stage2_distance(const PairRecord& qa, const PairRecord& qb, const Eigen::MatrixXd& delta, const Dataset& d,
                            const PenaltyConfig& pen, Lead lead);

}  // namespace factmatch
