#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace factmatch {

class Config;

/// Relative dose level of a unit inside its stratum: (Z1 level, Z2 level).
enum class DoseLabel : std::uint8_t { LL = 0, LH = 1, HL = 2, HH = 3 };

inline constexpr std::array<DoseLabel, 4> kAllLabels = {DoseLabel::LL, DoseLabel::LH, DoseLabel::HL,
                                                         DoseLabel::HH};

constexpr std::size_t index_of(DoseLabel label) { return static_cast<std::size_t>(label); }
constexpr bool high_on_z1(DoseLabel label) { return label == DoseLabel::HL || label == DoseLabel::HH; }
constexpr bool high_on_z2(DoseLabel label) { return label == DoseLabel::LH || label == DoseLabel::HH; }
constexpr DoseLabel make_label(bool z1_high, bool z2_high) {
    return static_cast<DoseLabel>((z1_high ? 2 : 0) + (z2_high ? 1 : 0));
}

std::string_view to_string(DoseLabel label);
DoseLabel parse_label(std::string_view text);

/// Which treatment drives Stage 1 pairing.
enum class Lead { Z1 = 1, Z2 = 2 };

std::string_view to_string(Lead lead);

struct DosePair {
    double z1 = 0.0;
    double z2 = 0.0;

    double lead(Lead l) const { return l == Lead::Z1 ? z1 : z2; }
    double other(Lead l) const { return l == Lead::Z1 ? z2 : z1; }
    friend bool operator==(const DosePair&, const DosePair&) = default;
};

struct Unit {
    std::string id;
    std::vector<double> covariates;
    std::vector<std::string> exact_keys;
    double z1 = 0.0;
    double z2 = 0.0;
    std::optional<double> y;

    DosePair doses() const { return {z1, z2}; }
};

/// Validated, immutable collection of study units.
class Dataset {
public:
    Dataset() = default;
    /// Validates K-consistency, finiteness and id uniqueness.
    Dataset(std::vector<Unit> units, std::vector<std::string> covariate_names,
            std::vector<std::string> exact_names = {});

    std::size_t size() const { return units_.size(); }
    std::size_t n_covariates() const { return covariate_names_.size(); }
    const std::vector<Unit>& units() const { return units_; }
    const Unit& unit(std::size_t i) const { return units_[i]; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    const std::vector<std::string>& exact_names() const { return exact_names_; }

    /// Index of the unit with this id; throws if absent.
    std::size_t index_of_id(const std::string& id) const;
    bool contains_id(const std::string& id) const { return index_.count(id) != 0; }
    bool has_all_outcomes() const;

    /// Column of covariate k across all units.
    std::vector<double> covariate_column(std::size_t k) const;

private:
    std::vector<Unit> units_;
    std::vector<std::string> covariate_names_;
    std::vector<std::string> exact_names_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SchemaConfig {
    std::string id_col = "id";
    std::string z1_col = "z1";
    std::string z2_col = "z2";
    /// Empty means "every column not otherwise named".
    std::vector<std::string> covariate_cols;
    std::vector<std::string> exact_cols;
    std::optional<std::string> outcome_col;

    /// Reads the `[data]` section of a config file.
    static SchemaConfig from_config(const Config& cfg);
};

Dataset load_dataset(const std::filesystem::path& path, const SchemaConfig& schema);
Dataset parse_dataset(const std::string& csv_text, const SchemaConfig& schema,
                      const std::string& origin = "<csv>");

/// Serializes with the schema's column names; numbers use 17 significant digits.
std::string dataset_to_csv(const Dataset& d, const SchemaConfig& schema);

struct StandardizeResult {
    Dataset dataset;
    /// Names of columns that were constant and left at zero.
    std::vector<std::string> constant_columns;
};

/// Zero mean, unit sample (n-1) standard deviation per covariate column.
StandardizeResult standardize_covariates(const Dataset& d);

/// Formats a double with 17 significant digits.
std::string format_double(double v);

/// Four labeled units; arrays are indexed by DoseLabel.
struct MatchedStratum {
    int stratum_index = 0;
    std::array<std::string, 4> members;
    std::array<DosePair, 4> dose_set;

    const std::string& member(DoseLabel l) const { return members[index_of(l)]; }
    const DosePair& doses(DoseLabel l) const { return dose_set[index_of(l)]; }
};

/// Stratum left with fewer than four units; reported but never analyzed.
struct IncompleteStratum {
    std::vector<std::string> members;
    std::vector<DosePair> doses;
};

struct Design {
    std::vector<MatchedStratum> strata;
    std::vector<IncompleteStratum> incomplete;
    std::vector<std::string> trimmed_ids;
    Lead stage1_lead = Lead::Z1;
    double total_stage2_distance = 0.0;
};

}  // namespace factmatch

namespace factmatch {

/// One unit as seen by the labeling rule.
struct LabelInput {
    std::string id;
    DosePair doses;
};

/// Labels four units by relative dose level. Units are ordered by
/// (lead dose, other dose, id); the lower half is low on the lead treatment and
/// within each half the lower other dose (then id) is low on the other one.
/// Results are always (Z1 level, Z2 level). Throws DegenerateStratum when all
/// four lead doses are equal.
std::array<DoseLabel, 4> assign_labels(const std::array<LabelInput, 4>& units, Lead lead);

}  // namespace factmatch
