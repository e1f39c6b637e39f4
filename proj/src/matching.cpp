#include "factmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "blossom.hpp"
#include "factmatch/error.hpp"

namespace factmatch {

FixedWeight quantize_weight(double w) {
    if (std::isnan(w) || w >= kInfeasibleSentinel) w = kInfeasibleSentinel;
    if (w <= -kInfeasibleSentinel) w = -kInfeasibleSentinel;
    // nearbyint honours the default round-to-nearest-even mode.
    return static_cast<FixedWeight>(std::nearbyint(w * kWeightScale));
}

WeightedGraph::WeightedGraph(std::size_t n_vertices, double fill)
    : n_(n_vertices), w_(n_vertices * n_vertices, fill) {}

void WeightedGraph::set_weight(std::size_t i, std::size_t j, double w) {
    w_[i * n_ + j] = w;
    w_[j * n_ + i] = w;
}

FixedWeight fixed_total(const WeightedGraph& g, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    FixedWeight total = 0;
    for (auto [i, j] : edges) total += quantize_weight(g.weight(i, j));
    return total;
}

namespace {

struct DenseSolution {
    std::vector<int> mate;
    bool unique = false;
};

template <class W>
DenseSolution run_engine(const std::vector<FixedWeight>& cost, int n, FixedWeight maxc, bool check_unique) {
    std::vector<W> w(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<W>(maxc + 1 - cost[k]);
    detail::BasicBlossomMatcher<W> engine(n, std::move(w));
    engine.solve();
    return {engine.mate(), check_unique && engine.unique_optimum()};
}

// Minimum-weight perfect matching of a dense non-negative cost matrix via the
// max-weight max-cardinality transform w' = max + 1 - w (all w' >= 1).
DenseSolution solve_dense(const std::vector<FixedWeight>& cost, int n, bool check_unique = false) {
    FixedWeight maxc = 0;
    for (FixedWeight c : cost) maxc = std::max(maxc, c);
    // The engine doubles weights and sums a few duals; keep a wide margin for int64.
    const FixedWeight int64_limit = static_cast<FixedWeight>(std::numeric_limits<std::int64_t>::max() / 64);
    DenseSolution s = maxc < int64_limit ? run_engine<std::int64_t>(cost, n, maxc, check_unique)
                                         : run_engine<FixedWeight>(cost, n, maxc, check_unique);
    for (int a = 0; a < n; ++a) {
        if (s.mate[a] < 0) throw std::logic_error("blossom: matching on a complete even graph is not perfect");
    }
    return s;
}

}  // namespace

PerfectMatching min_weight_perfect_matching(const WeightedGraph& g) {
    const std::size_t n = g.size();
    if (n == 0 || n % 2 != 0) {
        fail(ErrorKind::OddVertexCount, "perfect matching needs an even, positive vertex count (got " +
                                            std::to_string(n) + ")");
    }

    // Finite edges that split into even components can be solved one component
    // at a time; lexicographic order is preserved since each component keeps
    // the relative order of its vertices. A component that needs a forbidden
    // edge sends the whole graph to the joint solve.
    {
        std::vector<std::size_t> root(n);
        for (std::size_t v = 0; v < n; ++v) root[v] = v;
        std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
            while (root[v] != v) v = root[v] = root[root[v]];
            return v;
        };
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (g.weight(i, j) < kInfeasibleSentinel) root[find(i)] = find(j);
            }
        }
        std::vector<std::vector<std::size_t>> parts;
        std::vector<std::size_t> part_of(n, n);
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t r = find(v);
            if (part_of[r] == n) {
                part_of[r] = parts.size();
                parts.emplace_back();
            }
            parts[part_of[r]].push_back(v);
        }
        const bool even = std::all_of(parts.begin(), parts.end(), [](const auto& p) { return p.size() % 2 == 0; });
        if (parts.size() > 1 && even) {
            std::vector<std::size_t> mate(n);
            bool finite = true;
            for (const auto& part : parts) {
                WeightedGraph sub(part.size());
                for (std::size_t a = 0; a < part.size(); ++a) {
                    for (std::size_t b = a + 1; b < part.size(); ++b) sub.set_weight(a, b, g.weight(part[a], part[b]));
                }
                const PerfectMatching m = min_weight_perfect_matching(sub);
                for (auto [a, b] : m.edges) {
                    if (sub.weight(a, b) >= kInfeasibleSentinel) finite = false;
                    mate[part[a]] = part[b];
                    mate[part[b]] = part[a];
                }
                if (!finite) break;
            }
            if (finite) {
                PerfectMatching out;
                out.mate = mate;
                for (std::size_t v = 0; v < n; ++v) {
                    if (v < mate[v]) {
                        out.edges.emplace_back(v, mate[v]);
                        out.total_weight += g.weight(v, mate[v]);
                    }
                }
                return out;
            }
        }
    }

    // Shift finite costs to start at 0 and replace the sentinel by the smallest
    // value that still dominates every all-finite matching. Both maps preserve
    // the order of perfect matchings, and they keep typical costs within int64.
    const FixedWeight sentinel = quantize_weight(kInfeasibleSentinel);
    std::vector<FixedWeight> q(n * n, 0);
    FixedWeight lo = sentinel, hi = 0;
    bool any_finite = false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            q[i * n + j] = quantize_weight(g.weight(i, j));
            if (q[i * n + j] < sentinel) {
                lo = any_finite ? std::min(lo, q[i * n + j]) : q[i * n + j];
                hi = any_finite ? std::max(hi, q[i * n + j]) : q[i * n + j];
                any_finite = true;
            }
        }
    }
    if (!any_finite) lo = hi = 0;
    const FixedWeight big = static_cast<FixedWeight>(n / 2) * (hi - lo) + 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) q[i * n + j] = q[i * n + j] < sentinel ? q[i * n + j] - lo : big;
        }
    }

    // Lexicographic tie-break. With K > any penalty, K*c + penalty ranks
    // matchings by cost first. Penalising the current optimum's own edges
    // reveals whether another optimum exists; if one does, the smallest free
    // vertex takes the smallest partner compatible with optimality. A dual
    // certificate of uniqueness skips the check solve.
    std::vector<int> free(n);
    for (std::size_t i = 0; i < n; ++i) free[i] = static_cast<int>(i);
    std::vector<int> mate(n, -1);

    auto sub_costs = [&](const std::vector<int>& vs) {
        const std::size_t m = vs.size();
        std::vector<FixedWeight> c(m * m, 0);
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) c[a * m + b] = a == b ? 0 : q[vs[a] * n + vs[b]];
        }
        return c;
    };

    std::vector<FixedWeight> c = sub_costs(free);
    DenseSolution first = solve_dense(c, static_cast<int>(n), true);
    std::vector<int> local = first.mate;
    bool unique = first.unique;
    while (!free.empty()) {
        const int m = static_cast<int>(free.size());
        if (unique) {
            for (int a = 0; a < m; ++a) mate[free[a]] = free[local[a]];
            break;
        }
        const FixedWeight k = m + 1;
        std::vector<FixedWeight> perturbed(c.size());
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) {
                const std::size_t e = static_cast<std::size_t>(a) * m + b;
                perturbed[e] = a == b ? 0 : k * c[e] + (local[a] == b ? 1 : 0);
            }
        }
        if (solve_dense(perturbed, m).mate == local) {
            for (int a = 0; a < m; ++a) mate[free[a]] = free[local[a]];
            break;
        }
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) {
                const std::size_t e = static_cast<std::size_t>(a) * m + b;
                const int penalty = a == 0 ? b : (b == 0 ? a : 0);
                perturbed[e] = a == b ? 0 : k * c[e] + penalty;
            }
        }
        std::vector<int> best = solve_dense(perturbed, m).mate;
        const int partner = best[0];
        mate[free[0]] = free[partner];
        mate[free[partner]] = free[0];
        std::vector<int> rest;
        std::vector<int> rest_local(m, -1);
        for (int a = 1; a < m; ++a) {
            if (a != partner) {
                rest_local[a] = static_cast<int>(rest.size());
                rest.push_back(free[a]);
            }
        }
        local.assign(rest.size(), -1);
        for (int a = 1; a < m; ++a) {
            if (a != partner) local[rest_local[a]] = rest_local[best[a]];
        }
        free = std::move(rest);
        c = sub_costs(free);
    }

    PerfectMatching out;
    out.mate.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        out.mate[v] = static_cast<std::size_t>(mate[v]);
        if (v < out.mate[v]) {
            out.edges.emplace_back(v, out.mate[v]);
            out.total_weight += g.weight(v, out.mate[v]);
        }
    }
    return out;
}

WeightedGraph add_sinks(const WeightedGraph& g, std::size_t n_sinks) {
    const std::size_t n = g.size();
    if ((n + n_sinks) % 2 != 0) {
        fail(ErrorKind::ParityViolation, std::to_string(n) + " vertices plus " + std::to_string(n_sinks) +
                                             " sinks is odd");
    }
    WeightedGraph out(n + n_sinks, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) out.set_weight(i, j, g.weight(i, j));
    }
    for (std::size_t s = n; s < n + n_sinks; ++s) {
        for (std::size_t t = s + 1; t < n + n_sinks; ++t) out.set_weight(s, t, kInfeasibleSentinel);
    }
    return out;
}

}  // namespace factmatch
