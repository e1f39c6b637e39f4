#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "factmatch/data_model.hpp"

namespace factmatch {

struct SmdResult {
    double value = 0.0;
    /// Pooled sd is zero while the means differ; value is then +-inf.
    bool zero_variance = false;
};

/// (mean_a - mean_b) / sqrt((var_a + var_b) / 2) with n-1 variances
/// (a single observation contributes variance 0).
SmdResult smd(const std::vector<double>& group_a, const std::vector<double>& group_b);

using Contrast = std::pair<DoseLabel, DoseLabel>;

/// HH-HL, HH-LH, HH-LL, HL-LH, LH-LL, HL-LL.
const std::array<Contrast, 6>& balance_contrasts();
std::string contrast_name(const Contrast& c);

enum class BalancePhase { Pre, Post };

struct BalanceRow {
    std::string name;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double smd = 0.0;
    bool zero_variance = false;
};

struct BalanceTable {
    Contrast contrast;
    BalancePhase phase = BalancePhase::Post;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    /// Every covariate, then z1 and z2.
    std::vector<BalanceRow> rows;
};

/// Groups units by their label across complete strata. Throws TooFewStrata
/// with fewer than two strata.
std::vector<BalanceTable> post_match_balance(const Design& design, const Dataset& d);

/// Pseudo-cells from median splits of z1 and z2 (strictly above the median
/// is high). Throws TooFewUnits below four units.
std::vector<BalanceTable> pre_match_balance(const Dataset& d);

/// Median with the even-n midpoint convention.
double median(std::vector<double> values);

/// CSV with columns covariate, mean_a, mean_b, smd.
std::string balance_csv(const BalanceTable& table);

/// "pre_HH-HL.csv" style file name.
std::string balance_file_name(const BalanceTable& table);

}  // namespace factmatch
