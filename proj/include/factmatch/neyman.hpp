#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "factmatch/data_model.hpp"

namespace factmatch {

/// Doses of one stratum indexed by DoseLabel.
using DoseSet = std::array<DosePair, 4>;
/// Outcomes of one stratum indexed by DoseLabel.
using LabelOutcomes = std::array<double, 4>;

double zbar1_high(const DoseSet& z);  ///< mean z1 over HH, HL
double zbar1_low(const DoseSet& z);   ///< mean z1 over LH, LL
double zbar2_high(const DoseSet& z);  ///< mean z2 over HH, LH
double zbar2_low(const DoseSet& z);   ///< mean z2 over HL, LL

/// Linear weights of the stratum contribution for estimand a (1..4):
/// V = sum over labels of weight[label] * Y[label]. Throws DegenerateStratum
/// when a denominator is zero.
std::array<double, 4> contribution_weights(const DoseSet& z, int a);

/// Stratum contribution, summed in label order LL, LH, HL, HH.
double stratum_contribution(const DoseSet& z, const LabelOutcomes& y, int a);
double apply_weights(const std::array<double, 4>& w, const LabelOutcomes& y);

struct QSpec {
    enum class Kind { Ones, CovariateMeans };
    Kind kind = Kind::Ones;
    std::vector<std::string> columns;
    Eigen::MatrixXd matrix;

    std::string describe() const;
};

QSpec q_ones(std::size_t n_strata);

/// Intercept followed by within-stratum means of the named covariates (all when empty).
QSpec q_covariate_means(const Design& design, const Dataset& d, const std::vector<std::string>& columns = {});

/// Orthonormal basis of the column space of Q and its leverages.
struct Projection {
    Eigen::MatrixXd basis;
    Eigen::VectorXd leverage;
};

/// Throws TooFewStrata (I < L + 1), RankDeficientQ (relative rank tolerance
/// 1e-10) and LeverageOne (some leverage >= 1 - 1e-10).
Projection make_projection(const Eigen::MatrixXd& q);

/// I^-2 * y'(I - H)y with y_i = v_i / sqrt(1 - h_ii).
double variance_estimate(const std::vector<double>& v, const Projection& p);

struct EstimateDiagnostics {
    double max_abs_q = 0.0;
    double leverage_min = 0.0;
    double leverage_max = 0.0;
    double leverage_mean = 0.0;
    double contribution_sd = 0.0;
    /// Max leverage above 0.9.
    bool high_leverage = false;
};

struct EffectEstimate {
    int estimand = 1;
    double tau_hat = 0.0;
    double variance = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double alpha = 0.05;
    std::size_t n_strata = 0;
    std::vector<double> per_stratum_v;
    std::string q_spec;
    EstimateDiagnostics diagnostics;
};

/// Standard normal quantile.
double normal_quantile(double p);

EffectEstimate estimate_from_contributions(int a, std::vector<double> v, const QSpec& q, const Projection& p,
                                           double alpha);

/// Point estimate, variance and Wald interval for estimand a over the
/// complete strata. `outcomes[i]` holds stratum i's observed outcomes.
EffectEstimate estimate(const Design& design, const std::vector<LabelOutcomes>& outcomes, int a, const QSpec& q,
                        double alpha);

/// Potential outcomes of one stratum: [unit slot][label].
using StratumPotentials = std::array<std::array<double, 4>, 4>;

/// Finite-population estimands tau_1..tau_4 computed from every unit's four
/// potential outcomes.
std::array<double, 4> true_estimands(const std::vector<StratumPotentials>& po, const std::vector<DoseSet>& doses);

}  // namespace factmatch
