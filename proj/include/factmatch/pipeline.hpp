#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "factmatch/data_model.hpp"
#include "factmatch/distances.hpp"

namespace factmatch {

class Config;

enum class LeadChoice { Z1, Z2, Both };

struct PipelineConfig {
    CovariateMetric metric;
    PenaltyConfig penalty;
    /// nullopt means "auto": one parity sink per exact-match class with an odd count.
    std::optional<int> sinks_stage1;
    std::optional<int> sinks_stage2;
    LeadChoice lead = LeadChoice::Both;
    /// Standardize covariate columns before computing distances.
    bool standardize = false;
    unsigned threads = 1;

    /// Reads the `[distance]`, `[penalty]` and `[pipeline]` sections.
    static PipelineConfig from_config(const Config& cfg);
};

struct Stage1Result {
    Lead lead = Lead::Z1;
    std::vector<PairRecord> pairs;
    std::vector<std::string> trimmed_ids;
    double total_distance = 0.0;
};

struct Stage2Result {
    std::vector<MatchedStratum> strata;
    std::vector<IncompleteStratum> incomplete;
    double total_distance = 0.0;
};

/// Label of the exact-match class of each unit (all units share one class when
/// the dataset has no exact columns).
std::vector<std::string> exact_classes(const Dataset& d);

/// Covariate distances for the pipeline, standardizing first if configured.
Eigen::MatrixXd pipeline_delta(const Dataset& d, const PipelineConfig& cfg);

/// Optimal non-bipartite pairing on the lead treatment. Throws TooFewUnits,
/// ParityViolation and InfeasibleMatch.
Stage1Result run_stage1(const Dataset& d, const Eigen::MatrixXd& delta, const PipelineConfig& cfg, Lead lead);
Stage1Result run_stage1(const Dataset& d, const PipelineConfig& cfg, Lead lead);

/// Optimal pairing of Stage 1 pairs into labeled strata.
Stage2Result run_stage2(const std::vector<PairRecord>& pairs, const Dataset& d, const Eigen::MatrixXd& delta,
                        const PipelineConfig& cfg, Lead lead);

/// Labels four dataset rows; see assign_labels for the rule.
MatchedStratum label_stratum(const Dataset& d, const std::array<std::size_t, 4>& rows, Lead lead, int stratum_index);

/// Both stages, once per lead treatment when lead = Both; the run with the
/// smaller Stage 2 total wins and Z1 wins ties.
Design run_design(const Dataset& d, const PipelineConfig& cfg);

std::string design_to_json(const Design& design);
Design design_from_json(const std::string& text);
Design load_design(const std::string& path);

/// Complete-strata Design restricted to strata whose members all have outcomes.
std::vector<std::array<double, 4>> stratum_outcomes(const Design& design, const Dataset& d);

}  // namespace factmatch
