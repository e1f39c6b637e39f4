#pragma once

// Internal weighted blossom engine. Not part of the public interface.

#include <vector>

#include <cstdint>

#include "factmatch/matching.hpp"

namespace factmatch::detail {

/// Maximum-weight matching among maximum-cardinality matchings on a complete
/// graph, following the primal-dual method of Edmonds with Galil's O(n^3)
/// bookkeeping. Weights are integers; all dual arithmetic is exact.
template <class W>
class BasicBlossomMatcher {
public:
    /// `weights` is n*n row-major and symmetric.
    BasicBlossomMatcher(int n, std::vector<W> weights);

    void solve();

    /// Partner of every vertex, -1 when unmatched.
    const std::vector<int>& mate() const { return mate_vertex_; }

    /// Reduced cost of edge (i, j) under the final dual solution, including
    /// the duals of every blossom containing both endpoints. Zero means tight.
    W reduced_cost(int i, int j) const;

    /// Checks dual feasibility and complementary slackness of the final state.
    bool verify_certificate() const;

    /// True when the final duals prove that no other maximum-weight perfect
    /// matching exists: every optimum uses only tight edges, and peeling
    /// degree-one vertices of the tight graph forces the whole matching.
    /// A false result is inconclusive.
    bool unique_optimum() const;

private:
    int edge_index(int i, int j) const;  // requires i < j
    int endpoint(int p) const { return (p & 1) ? ev_[p >> 1] : eu_[p >> 1]; }
    W slack(int k) const { return dualvar_[eu_[k]] + dualvar_[ev_[k]] - 2 * ew_[k]; }

    void leaves(int b, std::vector<int>& out) const;
    void assign_label(int w, int t, int p);
    int scan_blossom(int v, int w);
    void add_blossom(int base, int k);
    void expand_blossom(int b, bool endstage);
    void augment_blossom(int b, int v);
    void augment_matching(int k);
    std::vector<int> chain(int v) const;
    void jump_start();
    void allow_edge(int k) {
        if (!allowedge_[k]) {
            allowedge_[k] = 1;
            allowed_list_.push_back(k);
        }
    }

    int n_;
    int m_;
    std::vector<int> eu_, ev_;
    std::vector<W> ew_;
    std::vector<int> row_offset_;

    std::vector<int> mate_;  // endpoint index of the partner, -1 if single
    std::vector<int> label_;
    std::vector<int> labelend_;
    std::vector<int> inblossom_;
    std::vector<int> blossomparent_;
    std::vector<std::vector<int>> blossomchilds_;
    std::vector<int> blossombase_;
    std::vector<std::vector<int>> blossomendps_;
    std::vector<int> bestedge_;
    std::vector<std::vector<int>> blossombestedges_;
    std::vector<char> has_bestedges_;
    std::vector<int> unusedblossoms_;
    std::vector<W> dualvar_;
    std::vector<char> allowedge_;
    std::vector<int> allowed_list_;
    std::vector<int> queue_;

    std::vector<int> mate_vertex_;
};

extern template class BasicBlossomMatcher<std::int64_t>;
extern template class BasicBlossomMatcher<FixedWeight>;

}  // namespace factmatch::detail
