#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace factmatch {

/// Finite stand-in for an infinite (forbidden) edge cost.
inline constexpr double kInfeasibleSentinel = 1e15;

/// Weights are solved in fixed point: round-half-even of w * kWeightScale.
inline constexpr double kWeightScale = 1e6;

using FixedWeight = __int128;

/// Fixed-point image of a weight; non-finite or out-of-range values clamp to the sentinel.
FixedWeight quantize_weight(double w);

/// Complete undirected graph with a symmetric weight matrix; the diagonal is ignored.
class WeightedGraph {
public:
    WeightedGraph() = default;
    explicit WeightedGraph(std::size_t n_vertices, double fill = 0.0);

    std::size_t size() const { return n_; }
    double weight(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
    void set_weight(std::size_t i, std::size_t j, double w);

private:
    std::size_t n_ = 0;
    std::vector<double> w_;
};

struct PerfectMatching {
    /// Unordered pairs stored as (min, max), sorted ascending.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    /// mate[v] is v's partner.
    std::vector<std::size_t> mate;
    double total_weight = 0.0;
};

/// Exact minimum-weight perfect matching on a general graph (weighted blossom,
/// O(n^3)). Among equal-weight optima the lexicographically smallest sorted
/// edge list is returned. Throws OddVertexCount.
PerfectMatching min_weight_perfect_matching(const WeightedGraph& g);

/// Appends n_sinks vertices joined to every original vertex at weight 0 and to
/// each other at the sentinel. Throws ParityViolation if the total is odd.
WeightedGraph add_sinks(const WeightedGraph& g, std::size_t n_sinks);

/// Sum of the fixed-point weights of a matching (used to compare optima exactly).
FixedWeight fixed_total(const WeightedGraph& g, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

}  // namespace factmatch
