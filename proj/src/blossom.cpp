#include "blossom.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <limits>
#include <stdexcept>

namespace factmatch::detail {

namespace {

// Python-style wrap-around indexing used by the blossom cycle walks.
inline int wrap(int j, int len) { return ((j % len) + len) % len; }

}  // namespace

template <class W>
BasicBlossomMatcher<W>::BasicBlossomMatcher(int n, std::vector<W> weights) : n_(n) {
    m_ = n * (n - 1) / 2;
    eu_.resize(m_);
    ev_.resize(m_);
    ew_.resize(m_);
    row_offset_.resize(n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        row_offset_[i] = k - (i + 1);
        for (int j = i + 1; j < n; ++j, ++k) {
            eu_[k] = i;
            ev_[k] = j;
            ew_[k] = weights[static_cast<std::size_t>(i) * n + j];
        }
    }
}

template <class W>
int BasicBlossomMatcher<W>::edge_index(int i, int j) const { return row_offset_[i] + j; }

template <class W>
void BasicBlossomMatcher<W>::leaves(int b, std::vector<int>& out) const {
    if (b < n_) {
        out.push_back(b);
        return;
    }
    for (int t : blossomchilds_[b]) leaves(t, out);
}

template <class W>
void BasicBlossomMatcher<W>::assign_label(int w, int t, int p) {
    const int b = inblossom_[w];
    label_[w] = label_[b] = t;
    labelend_[w] = labelend_[b] = p;
    bestedge_[w] = bestedge_[b] = -1;
    if (t == 1) {
        leaves(b, queue_);
    } else if (t == 2) {
        const int base = blossombase_[b];
        assign_label(endpoint(mate_[base]), 1, mate_[base] ^ 1);
    }
}

// Traces back from v and w to find either a new blossom base or an augmenting path (-1).
template <class W>
int BasicBlossomMatcher<W>::scan_blossom(int v, int w) {
    std::vector<int> path;
    int base = -1;
    while (v != -1 || w != -1) {
        int b = inblossom_[v];
        if (label_[b] & 4) {
            base = blossombase_[b];
            break;
        }
        path.push_back(b);
        label_[b] = 5;
        if (labelend_[b] == -1) {
            v = -1;
        } else {
            v = endpoint(labelend_[b]);
            b = inblossom_[v];
            v = endpoint(labelend_[b]);
        }
        if (w != -1) std::swap(v, w);
    }
    for (int b : path) label_[b] = 1;
    return base;
}

template <class W>
void BasicBlossomMatcher<W>::add_blossom(int base, int k) {
    int v = eu_[k];
    int w = ev_[k];
    const int bb = inblossom_[base];
    int bv = inblossom_[v];
    int bw = inblossom_[w];
    const int b = unusedblossoms_.back();
    unusedblossoms_.pop_back();
    blossombase_[b] = base;
    blossomparent_[b] = -1;
    blossomparent_[bb] = b;
    std::vector<int>& path = blossomchilds_[b];
    std::vector<int>& endps = blossomendps_[b];
    path.clear();
    endps.clear();
    while (bv != bb) {
        blossomparent_[bv] = b;
        path.push_back(bv);
        endps.push_back(labelend_[bv]);
        v = endpoint(labelend_[bv]);
        bv = inblossom_[v];
    }
    path.push_back(bb);
    std::reverse(path.begin(), path.end());
    std::reverse(endps.begin(), endps.end());
    endps.push_back(2 * k);
    while (bw != bb) {
        blossomparent_[bw] = b;
        path.push_back(bw);
        endps.push_back(labelend_[bw] ^ 1);
        w = endpoint(labelend_[bw]);
        bw = inblossom_[w];
    }
    label_[b] = 1;
    labelend_[b] = labelend_[bb];
    dualvar_[b] = 0;

    std::vector<int> leaf_list;
    leaves(b, leaf_list);
    for (int x : leaf_list) {
        if (label_[inblossom_[x]] == 2) queue_.push_back(x);
        inblossom_[x] = b;
    }

    std::vector<int> bestedgeto(2 * n_, -1);
    auto consider = [&](int kk) {
        int i = eu_[kk];
        int j = ev_[kk];
        if (inblossom_[j] == b) std::swap(i, j);
        const int bj = inblossom_[j];
        if (bj != b && label_[bj] == 1 && (bestedgeto[bj] == -1 || slack(kk) < slack(bestedgeto[bj]))) {
            bestedgeto[bj] = kk;
        }
    };
    for (int child : path) {
        if (!has_bestedges_[child]) {
            std::vector<int> child_leaves;
            leaves(child, child_leaves);
            for (int x : child_leaves) {
                for (int u = 0; u < n_; ++u) {
                    if (u == x) continue;
                    consider(x < u ? edge_index(x, u) : edge_index(u, x));
                }
            }
        } else {
            for (int kk : blossombestedges_[child]) consider(kk);
        }
        blossombestedges_[child].clear();
        has_bestedges_[child] = 0;
        bestedge_[child] = -1;
    }
    std::vector<int>& best = blossombestedges_[b];
    best.clear();
    for (int kk : bestedgeto) {
        if (kk != -1) best.push_back(kk);
    }
    has_bestedges_[b] = 1;
    bestedge_[b] = -1;
    for (int kk : best) {
        if (bestedge_[b] == -1 || slack(kk) < slack(bestedge_[b])) bestedge_[b] = kk;
    }
}

template <class W>
void BasicBlossomMatcher<W>::expand_blossom(int b, bool endstage) {
    // Copy: recursive expansion and relabelling below must not invalidate the iteration.
    const std::vector<int> childs = blossomchilds_[b];
    for (int s : childs) {
        blossomparent_[s] = -1;
        if (s < n_) {
            inblossom_[s] = s;
        } else if (endstage && dualvar_[s] == 0) {
            expand_blossom(s, endstage);
        } else {
            std::vector<int> leaf_list;
            leaves(s, leaf_list);
            for (int x : leaf_list) inblossom_[x] = s;
        }
    }
    if (!endstage && label_[b] == 2) {
        const std::vector<int>& endps = blossomendps_[b];
        const int len = static_cast<int>(childs.size());
        const int entrychild = inblossom_[endpoint(labelend_[b] ^ 1)];
        int j = static_cast<int>(std::find(childs.begin(), childs.end(), entrychild) - childs.begin());
        int jstep;
        int endptrick;
        if (j & 1) {
            j -= len;
            jstep = 1;
            endptrick = 0;
        } else {
            jstep = -1;
            endptrick = 1;
        }
        int p = labelend_[b];
        while (j != 0) {
            label_[endpoint(p ^ 1)] = 0;
            label_[endpoint(endps[wrap(j - endptrick, len)] ^ endptrick ^ 1)] = 0;
            assign_label(endpoint(p ^ 1), 2, p);
            allow_edge(endps[wrap(j - endptrick, len)] >> 1);
            j += jstep;
            p = endps[wrap(j - endptrick, len)] ^ endptrick;
            allow_edge(p >> 1);
            j += jstep;
        }
        int bv = childs[wrap(j, len)];
        label_[endpoint(p ^ 1)] = label_[bv] = 2;
        labelend_[endpoint(p ^ 1)] = labelend_[bv] = p;
        bestedge_[bv] = -1;
        j += jstep;
        while (childs[wrap(j, len)] != entrychild) {
            bv = childs[wrap(j, len)];
            if (label_[bv] == 1) {
                j += jstep;
                continue;
            }
            std::vector<int> leaf_list;
            leaves(bv, leaf_list);
            int found = -1;
            for (int x : leaf_list) {
                if (label_[x] != 0) {
                    found = x;
                    break;
                }
            }
            if (found != -1) {
                label_[found] = 0;
                label_[endpoint(mate_[blossombase_[bv]])] = 0;
                assign_label(found, 2, labelend_[found]);
            }
            j += jstep;
        }
    }
    label_[b] = labelend_[b] = -1;
    blossomchilds_[b].clear();
    blossomendps_[b].clear();
    blossombase_[b] = -1;
    blossombestedges_[b].clear();
    has_bestedges_[b] = 0;
    bestedge_[b] = -1;
    unusedblossoms_.push_back(b);
}

template <class W>
void BasicBlossomMatcher<W>::augment_blossom(int b, int v) {
    int t = v;
    while (blossomparent_[t] != b) t = blossomparent_[t];
    if (t >= n_) augment_blossom(t, v);
    std::vector<int>& childs = blossomchilds_[b];
    std::vector<int>& endps = blossomendps_[b];
    const int len = static_cast<int>(childs.size());
    const int i = static_cast<int>(std::find(childs.begin(), childs.end(), t) - childs.begin());
    int j = i;
    int jstep;
    int endptrick;
    if (i & 1) {
        j -= len;
        jstep = 1;
        endptrick = 0;
    } else {
        jstep = -1;
        endptrick = 1;
    }
    while (j != 0) {
        j += jstep;
        t = childs[wrap(j, len)];
        const int p = endps[wrap(j - endptrick, len)] ^ endptrick;
        if (t >= n_) augment_blossom(t, endpoint(p));
        j += jstep;
        t = childs[wrap(j, len)];
        if (t >= n_) augment_blossom(t, endpoint(p ^ 1));
        mate_[endpoint(p)] = p ^ 1;
        mate_[endpoint(p ^ 1)] = p;
    }
    std::rotate(childs.begin(), childs.begin() + i, childs.end());
    std::rotate(endps.begin(), endps.begin() + i, endps.end());
    blossombase_[b] = blossombase_[childs[0]];
}

template <class W>
void BasicBlossomMatcher<W>::augment_matching(int k) {
    const int v = eu_[k];
    const int w = ev_[k];
    const std::pair<int, int> sides[2] = {{v, 2 * k + 1}, {w, 2 * k}};
    for (auto [s, p] : sides) {
        while (true) {
            const int bs = inblossom_[s];
            if (bs >= n_) augment_blossom(bs, s);
            mate_[s] = p;
            if (labelend_[bs] == -1) break;
            const int t = endpoint(labelend_[bs]);
            const int bt = inblossom_[t];
            s = endpoint(labelend_[bt]);
            const int j = endpoint(labelend_[bt] ^ 1);
            if (bt >= n_) augment_blossom(bt, j);
            mate_[j] = labelend_[bt];
            p = labelend_[bt] ^ 1;
        }
    }
}

template <class W>
void BasicBlossomMatcher<W>::jump_start() {
    const int n = n_;
    // Feasible even vertex duals, tightened once in vertex order, then a greedy
    // matching on tight edges. Even duals keep every S-S slack even, which the
    // integer delta3 step relies on.
    auto weight = [&](int i, int j) { return ew_[i < j ? edge_index(i, j) : edge_index(j, i)]; };
    auto round_even = [](W x) { return (x % 2 == 0) ? x : x + 1; };
    for (int v = 0; v < n; ++v) {
        W best = 0;
        for (int u = 0; u < n; ++u) {
            if (u != v) best = std::max(best, weight(v, u));
        }
        dualvar_[v] = round_even(best);
    }
    for (int v = 0; v < n; ++v) {
        W need = std::numeric_limits<W>::min();
        for (int u = 0; u < n; ++u) {
            if (u != v) need = std::max(need, 2 * weight(v, u) - dualvar_[u]);
        }
        dualvar_[v] = round_even(need);
    }
    for (int v = 0; v < n; ++v) {
        if (mate_[v] != -1) continue;
        for (int u = v + 1; u < n; ++u) {
            if (mate_[u] != -1) continue;
            const int k = edge_index(v, u);
            if (slack(k) == 0) {
                mate_[v] = 2 * k + 1;
                mate_[u] = 2 * k;
                break;
            }
        }
    }
}

template <class W>
void BasicBlossomMatcher<W>::solve() {
    const int n = n_;
    mate_.assign(n, -1);
    label_.assign(2 * n, 0);
    labelend_.assign(2 * n, -1);
    inblossom_.resize(n);
    for (int i = 0; i < n; ++i) inblossom_[i] = i;
    blossomparent_.assign(2 * n, -1);
    blossomchilds_.assign(2 * n, {});
    blossombase_.assign(2 * n, -1);
    for (int i = 0; i < n; ++i) blossombase_[i] = i;
    blossomendps_.assign(2 * n, {});
    bestedge_.assign(2 * n, -1);
    blossombestedges_.assign(2 * n, {});
    has_bestedges_.assign(2 * n, 0);
    unusedblossoms_.clear();
    for (int b = n; b < 2 * n; ++b) unusedblossoms_.push_back(b);
    dualvar_.assign(2 * n, 0);
    allowedge_.assign(m_, 0);
    allowed_list_.clear();
    jump_start();
    queue_.clear();

    for (int stage = 0; stage < n; ++stage) {
        std::fill(label_.begin(), label_.end(), 0);
        std::fill(bestedge_.begin(), bestedge_.end(), -1);
        for (int b = n; b < 2 * n; ++b) {
            blossombestedges_[b].clear();
            has_bestedges_[b] = 0;
        }
        for (int k : allowed_list_) allowedge_[k] = 0;
        allowed_list_.clear();
        queue_.clear();

        for (int v = 0; v < n; ++v) {
            if (mate_[v] == -1 && label_[inblossom_[v]] == 0) assign_label(v, 1, -1);
        }

        bool augmented = false;
        while (true) {
            while (!queue_.empty() && !augmented) {
                const int v = queue_.back();
                queue_.pop_back();
                for (int w = 0; w < n; ++w) {
                    if (w == v) continue;
                    const int k = v < w ? edge_index(v, w) : edge_index(w, v);
                    const int p = v < w ? 2 * k + 1 : 2 * k;
                    if (inblossom_[v] == inblossom_[w]) continue;
                    W kslack = 0;
                    if (!allowedge_[k]) {
                        kslack = slack(k);
                        if (kslack <= 0) allow_edge(k);
                    }
                    if (allowedge_[k]) {
                        if (label_[inblossom_[w]] == 0) {
                            assign_label(w, 2, p ^ 1);
                        } else if (label_[inblossom_[w]] == 1) {
                            const int base = scan_blossom(v, w);
                            if (base >= 0) {
                                add_blossom(base, k);
                            } else {
                                augment_matching(k);
                                augmented = true;
                                break;
                            }
                        } else if (label_[w] == 0) {
                            label_[w] = 2;
                            labelend_[w] = p ^ 1;
                        }
                    } else if (label_[inblossom_[w]] == 1) {
                        const int b = inblossom_[v];
                        if (bestedge_[b] == -1 || kslack < slack(bestedge_[b])) bestedge_[b] = k;
                    } else if (label_[w] == 0) {
                        if (bestedge_[w] == -1 || kslack < slack(bestedge_[w])) bestedge_[w] = k;
                    }
                }
            }
            if (augmented) break;

            int deltatype = -1;
            W delta = 0;
            int deltaedge = -1;
            int deltablossom = -1;

            for (int v = 0; v < n; ++v) {
                if (label_[inblossom_[v]] == 0 && bestedge_[v] != -1) {
                    const W d = slack(bestedge_[v]);
                    if (deltatype == -1 || d < delta) {
                        delta = d;
                        deltatype = 2;
                        deltaedge = bestedge_[v];
                    }
                }
            }
            for (int b = 0; b < 2 * n; ++b) {
                if (blossomparent_[b] == -1 && label_[b] == 1 && bestedge_[b] != -1) {
                    const W kslack = slack(bestedge_[b]);
                    if (kslack % 2 != 0) throw std::logic_error("blossom: odd slack between S-blossoms");
                    const W d = kslack / 2;
                    if (deltatype == -1 || d < delta) {
                        delta = d;
                        deltatype = 3;
                        deltaedge = bestedge_[b];
                    }
                }
            }
            for (int b = n; b < 2 * n; ++b) {
                if (blossombase_[b] >= 0 && blossomparent_[b] == -1 && label_[b] == 2 &&
                    (deltatype == -1 || dualvar_[b] < delta)) {
                    delta = dualvar_[b];
                    deltatype = 4;
                    deltablossom = b;
                }
            }
            if (deltatype == -1) {
                // No further augmentation is possible: maximum cardinality reached.
                deltatype = 1;
                W lo = dualvar_[0];
                for (int v = 1; v < n; ++v) lo = std::min(lo, dualvar_[v]);
                delta = std::max<W>(0, lo);
            }

            for (int v = 0; v < n; ++v) {
                const int l = label_[inblossom_[v]];
                if (l == 1) {
                    dualvar_[v] -= delta;
                } else if (l == 2) {
                    dualvar_[v] += delta;
                }
            }
            for (int b = n; b < 2 * n; ++b) {
                if (blossombase_[b] >= 0 && blossomparent_[b] == -1) {
                    if (label_[b] == 1) {
                        dualvar_[b] += delta;
                    } else if (label_[b] == 2) {
                        dualvar_[b] -= delta;
                    }
                }
            }

            if (deltatype == 1) {
                break;
            } else if (deltatype == 2) {
                allow_edge(deltaedge);
                int i = eu_[deltaedge];
                int j = ev_[deltaedge];
                if (label_[inblossom_[i]] == 0) std::swap(i, j);
                queue_.push_back(i);
            } else if (deltatype == 3) {
                allow_edge(deltaedge);
                queue_.push_back(eu_[deltaedge]);
            } else {
                expand_blossom(deltablossom, false);
            }
        }

        if (!augmented) break;

        for (int b = n; b < 2 * n; ++b) {
            if (blossomparent_[b] == -1 && blossombase_[b] >= 0 && label_[b] == 1 && dualvar_[b] == 0) {
                expand_blossom(b, true);
            }
        }
    }

    mate_vertex_.assign(n, -1);
    for (int v = 0; v < n; ++v) {
        if (mate_[v] >= 0) mate_vertex_[v] = endpoint(mate_[v]);
    }
}

template <class W>
std::vector<int> BasicBlossomMatcher<W>::chain(int v) const {
    std::vector<int> out{v};
    while (blossomparent_[out.back()] != -1) out.push_back(blossomparent_[out.back()]);
    std::reverse(out.begin(), out.end());
    return out;
}

template <class W>
W BasicBlossomMatcher<W>::reduced_cost(int i, int j) const {
    if (i > j) std::swap(i, j);
    const int k = edge_index(i, j);
    W s = slack(k);
    const std::vector<int> ci = chain(i);
    const std::vector<int> cj = chain(j);
    for (std::size_t t = 0; t < ci.size() && t < cj.size(); ++t) {
        if (ci[t] != cj[t]) break;
        s += 2 * dualvar_[ci[t]];
    }
    return s;
}

template <class W>
bool BasicBlossomMatcher<W>::verify_certificate() const {
    for (int b = n_; b < 2 * n_; ++b) {
        if (blossombase_[b] >= 0 && dualvar_[b] < 0) return false;
    }
    for (int i = 0; i < n_; ++i) {
        for (int j = i + 1; j < n_; ++j) {
            const W s = reduced_cost(i, j);
            if (s < 0) return false;
            if (mate_vertex_[i] == j && s != 0) return false;
        }
    }
    // Blossoms carrying positive dual must be full: (|B| - 1) / 2 matched edges inside.
    for (int b = n_; b < 2 * n_; ++b) {
        if (blossombase_[b] < 0 || dualvar_[b] <= 0) continue;
        std::vector<int> leaf_list;
        leaves(b, leaf_list);
        std::vector<char> inside(n_, 0);
        for (int x : leaf_list) inside[x] = 1;
        int matched_inside = 0;
        for (int x : leaf_list) {
            if (mate_vertex_[x] >= 0 && inside[mate_vertex_[x]] && x < mate_vertex_[x]) ++matched_inside;
        }
        if (2 * matched_inside + 1 != static_cast<int>(leaf_list.size())) return false;
    }
    return true;
}

namespace {

// Edmonds' cardinality search from `root` in graph g under `match`, ignoring
// the edge root-target. True when it reaches `target`, the only other exposed
// vertex.
bool augmenting_path_exists(const std::vector<std::vector<int>>& g, const std::vector<int>& match, int root,
                            int target) {
    const int n = static_cast<int>(g.size());
    std::vector<int> parent(n, -1), base(n);
    std::vector<char> used(n, 0), blossom(n, 0);
    for (int i = 0; i < n; ++i) base[i] = i;
    auto lca = [&](int a, int b) {
        std::vector<char> seen(n, 0);
        while (true) {
            a = base[a];
            seen[a] = 1;
            if (match[a] == -1) break;
            a = parent[match[a]];
        }
        while (true) {
            b = base[b];
            if (seen[b]) return b;
            b = parent[match[b]];
        }
    };
    auto mark_path = [&](int v, int b, int child) {
        while (base[v] != b) {
            blossom[base[v]] = blossom[base[match[v]]] = 1;
            parent[v] = child;
            child = match[v];
            v = parent[match[v]];
        }
    };
    std::vector<int> queue{root};
    used[root] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int v = queue[head];
        for (int to : g[v]) {
            if ((v == root && to == target) || (v == target && to == root)) continue;
            if (base[v] == base[to] || match[v] == to) continue;
            if (to == root || (match[to] != -1 && parent[match[to]] != -1)) {
                const int cur = lca(v, to);
                std::fill(blossom.begin(), blossom.end(), 0);
                mark_path(v, cur, to);
                mark_path(to, cur, v);
                for (int i = 0; i < n; ++i) {
                    if (blossom[base[i]]) {
                        base[i] = cur;
                        if (!used[i]) {
                            used[i] = 1;
                            queue.push_back(i);
                        }
                    }
                }
            } else if (parent[to] == -1) {
                parent[to] = v;
                if (match[to] == -1) return to == target;
                used[match[to]] = 1;
                queue.push_back(match[to]);
            }
        }
    }
    return false;
}

// True when g has a matching other than `match` on the same vertices: peels
// forced pairs, then looks for an alternating cycle through each remaining
// matched pair. Vertices with match -1 must have no edges.
bool has_alternating_cycle(const std::vector<std::vector<int>>& g, std::vector<int> match) {
    const int n = static_cast<int>(g.size());
    std::vector<int> degree(n);
    std::vector<char> removed(n, 0);
    std::vector<int> stack;
    int left = 0;
    for (int v = 0; v < n; ++v) {
        if (match[v] == -1) {
            removed[v] = 1;
            continue;
        }
        ++left;
        degree[v] = static_cast<int>(g[v].size());
        if (degree[v] == 1) stack.push_back(v);
    }
    auto drop = [&](int v) {
        removed[v] = 1;
        --left;
        for (int x : g[v]) {
            if (!removed[x] && --degree[x] == 1) stack.push_back(x);
        }
    };
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        if (removed[u] || degree[u] != 1) continue;
        drop(u);
        drop(match[u]);
    }
    if (left == 0) return false;

    std::vector<int> core;
    std::vector<int> local(n, -1);
    for (int v = 0; v < n; ++v) {
        if (!removed[v]) {
            local[v] = static_cast<int>(core.size());
            core.push_back(v);
        }
    }
    const int c = static_cast<int>(core.size());
    std::vector<std::vector<int>> h(c);
    std::vector<int> m(c);
    for (int a = 0; a < c; ++a) {
        m[a] = local[match[core[a]]];
        for (int x : g[core[a]]) {
            if (!removed[x]) h[a].push_back(local[x]);
        }
    }
    for (int a = 0; a < c; ++a) {
        const int b = m[a];
        if (a > b) continue;
        m[a] = m[b] = -1;
        const bool found = augmenting_path_exists(h, m, a, b);
        m[a] = b;
        m[b] = a;
        if (found) return true;
    }
    return false;
}

}  // namespace

template <class W>
bool BasicBlossomMatcher<W>::unique_optimum() const {
    const int n = n_;
    for (int v = 0; v < n; ++v) {
        if (mate_vertex_[v] < 0) return false;
    }
    std::vector<std::vector<int>> chains(n);
    for (int v = 0; v < n; ++v) chains[v] = chain(v);
    // Tight graph; give up once it is much denser than the matching itself.
    const std::size_t limit = 16 * static_cast<std::size_t>(n);
    std::size_t n_tight = 0;
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i) {
        const auto& ci = chains[i];
        for (int j = i + 1; j < n; ++j) {
            W s = slack(edge_index(i, j));
            const auto& cj = chains[j];
            for (std::size_t t = 0; t < ci.size() && t < cj.size() && ci[t] == cj[t]; ++t) s += 2 * dualvar_[ci[t]];
            if (s != 0) continue;
            if (++n_tight > limit) return false;
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
    }

    // Every optimum uses tight edges only and is full inside each blossom of
    // positive dual. Such blossoms are contracted level by level: an optimum
    // other than M shows up as an alternating cycle at some level, or as a
    // second tight edge beside a matched one between the same two nodes.
    std::vector<int> node_of(n, -1), stamp(n, -1);
    int next_stamp = 0;
    std::function<bool(const std::vector<int>&, int)> level = [&](const std::vector<int>& items, int exposed) {
        std::vector<int> nodes;
        std::function<void(int)> expand = [&](int b) {
            if (b < n || dualvar_[b] > 0) {
                nodes.push_back(b);
            } else {
                for (int t : blossomchilds_[b]) expand(t);
            }
        };
        for (int b : items) expand(b);
        const int c = static_cast<int>(nodes.size());
        const int id = next_stamp++;
        std::vector<std::vector<int>> members(c);
        for (int a = 0; a < c; ++a) {
            leaves(nodes[a], members[a]);
            for (int v : members[a]) {
                node_of[v] = a;
                stamp[v] = id;
            }
        }
        const int ex = exposed >= 0 ? node_of[exposed] : -1;
        std::vector<int> nmatch(c, -1), outer(c, -1);
        for (int a = 0; a < c; ++a) {
            for (int v : members[a]) {
                if (v == exposed) continue;
                const int b = node_of[mate_vertex_[v]];
                if (b != a) {
                    nmatch[a] = b;
                    outer[a] = v;
                }
            }
        }
        std::vector<std::vector<int>> g(c);
        for (int a = 0; a < c; ++a) {
            if (a == ex) continue;
            for (int v : members[a]) {
                for (int x : adj[v]) {
                    if (stamp[x] != id) continue;
                    const int b = node_of[x];
                    if (b == a || b == ex) continue;
                    if (nmatch[a] == b && x != mate_vertex_[v]) return false;
                    g[a].push_back(b);
                }
            }
            std::sort(g[a].begin(), g[a].end());
            g[a].erase(std::unique(g[a].begin(), g[a].end()), g[a].end());
        }
        if (has_alternating_cycle(g, nmatch)) return false;
        for (int a = 0; a < c; ++a) {
            if (nodes[a] < n) continue;
            if (!level(blossomchilds_[nodes[a]], a == ex ? exposed : outer[a])) return false;
        }
        return true;
    };
    std::vector<int> top;
    for (int v = 0; v < n; ++v) top.push_back(inblossom_[v]);
    std::sort(top.begin(), top.end());
    top.erase(std::unique(top.begin(), top.end()), top.end());
    return level(top, -1);
}

template class BasicBlossomMatcher<std::int64_t>;
template class BasicBlossomMatcher<FixedWeight>;

}  // namespace factmatch::detail
