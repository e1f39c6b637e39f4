#include "factmatch/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include "factmatch/error.hpp"
#include "factmatch/fisher.hpp"

namespace factmatch {

double keyed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const std::uint64_t v = splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b) ^ c);
    return static_cast<double>(v >> 11) * 0x1.0p-53;
}

double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // Box-Muller on two keyed uniforms; u1 is shifted away from 0.
    const double u1 = keyed_uniform(seed, a, b, 2 * c) + 0x1.0p-54;
    const double u2 = keyed_uniform(seed, a, b, 2 * c + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PotentialSchedule::Family PotentialSchedule::parse_family(const std::string& text) {
    if (text == "constant") return Family::Constant;
    if (text == "linear") return Family::Linear;
    if (text == "bilinear") return Family::Bilinear;
    if (text == "quadratic") return Family::Quadratic;
    fail(ErrorKind::InvalidConfig, "unknown schedule '" + text + "' (constant, linear, bilinear, quadratic)");
}

std::string PotentialSchedule::family_name(Family f) {
    switch (f) {
        case Family::Constant: return "constant";
        case Family::Linear: return "linear";
        case Family::Bilinear: return "bilinear";
        case Family::Quadratic: return "quadratic";
        case Family::UserTable: return "table";
    }
    return "?";
}

PotentialSchedule PotentialSchedule::standard(Family f) {
    PotentialSchedule s;
    s.family = f;
    switch (f) {
        case Family::Constant: s.coef = {5.0}; break;
        case Family::Linear: s.coef = {2.0, 3.0}; break;
        case Family::Bilinear: s.coef = {2.0, 3.0, 4.0}; break;
        case Family::Quadratic: s.coef = {1.0, 1.0, 2.0, -1.0}; break;
        case Family::UserTable: s.coef.clear(); break;
    }
    return s;
}

double PotentialSchedule::dose_response(const DosePair& z) const {
    auto c = [&](std::size_t k) { return k < coef.size() ? coef[k] : 0.0; };
    switch (family) {
        case Family::Constant: return c(0);
        case Family::Linear: return c(0) * z.z1 + c(1) * z.z2;
        case Family::Bilinear: return c(0) * z.z1 + c(1) * z.z2 + c(2) * z.z1 * z.z2;
        case Family::Quadratic: return c(0) * z.z1 + c(1) * z.z2 + c(2) * z.z1 * z.z1 + c(3) * z.z2 * z.z2;
        case Family::UserTable: break;
    }
    fail(ErrorKind::InvalidConfig, "a user table has no closed-form dose response");
}

double PotentialSchedule::outcome(std::size_t stratum, std::size_t unit, const DosePair& z, double x) const {
    double y = dose_response(z) + covariate_weight * x;
    if (noise_sd > 0.0) y += noise_sd * keyed_normal(seed, 11, stratum, unit);
    if (effect_sd > 0.0) y += effect_sd * keyed_normal(seed, 12, stratum, unit) * z.z1;
    return y;
}

Design SyntheticStudy::design() const {
    Design d;
    for (std::size_t i = 0; i < doses.size(); ++i) {
        MatchedStratum s;
        s.stratum_index = static_cast<int>(i) + 1;
        for (std::size_t j = 0; j < 4; ++j) s.members[j] = "s" + std::to_string(i + 1) + "u" + std::to_string(j + 1);
        s.dose_set = doses[i];
        d.strata.push_back(s);
    }
    return d;
}

Dataset SyntheticStudy::dataset() const {
    std::vector<Unit> units;
    const Design d = design();
    for (std::size_t i = 0; i < doses.size(); ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            Unit u;
            u.id = d.strata[i].members[j];
            u.z1 = doses[i][j].z1;
            u.z2 = doses[i][j].z2;
            u.covariates = {covariate[i][j]};
            units.push_back(u);
        }
    }
    return Dataset(std::move(units), {"x"});
}

Eigen::MatrixXd SyntheticStudy::covariate_q() const {
    Eigen::MatrixXd q(static_cast<Eigen::Index>(doses.size()), 2);
    for (std::size_t i = 0; i < doses.size(); ++i) {
        q(static_cast<Eigen::Index>(i), 0) = 1.0;
        q(static_cast<Eigen::Index>(i), 1) =
            (covariate[i][0] + covariate[i][1] + covariate[i][2] + covariate[i][3]) / 4.0;
    }
    return q;
}

SyntheticStudy synthetic_study(std::size_t n_strata, const DoseGenerator& gen, std::uint64_t seed) {
    SyntheticStudy s;
    for (std::size_t i = 0; i < n_strata; ++i) {
        DoseSet z;
        if (gen.binary) {
            for (DoseLabel l : kAllLabels) z[index_of(l)] = {high_on_z1(l) ? 1.0 : 0.0, high_on_z2(l) ? 1.0 : 0.0};
        } else {
            const double base1 = gen.low_min + (gen.low_max - gen.low_min) * keyed_uniform(seed, 1, i, 0);
            const double base2 = gen.low_min + (gen.low_max - gen.low_min) * keyed_uniform(seed, 1, i, 1);
            for (DoseLabel l : kAllLabels) {
                const std::size_t k = index_of(l);
                const double j1 = gen.jitter * keyed_uniform(seed, 2, i, k);
                const double j2 = gen.jitter * keyed_uniform(seed, 3, i, k);
                z[k] = {base1 + (high_on_z1(l) ? gen.gap : 0.0) + j1, base2 + (high_on_z2(l) ? gen.gap : 0.0) + j2};
            }
        }
        s.doses.push_back(z);
        std::array<double, 4> x{};
        for (std::size_t j = 0; j < 4; ++j) x[j] = keyed_normal(seed, 4, i, j);
        s.covariate.push_back(x);
    }
    return s;
}

std::vector<StratumPotentials> potential_table(const PotentialSchedule& s, const SyntheticStudy& study) {
    if (s.family == PotentialSchedule::Family::UserTable) {
        if (s.table.size() != study.doses.size()) {
            fail(ErrorKind::InvalidConfig, "user table has the wrong number of strata");
        }
        return s.table;
    }
    std::vector<StratumPotentials> po(study.doses.size());
    for (std::size_t i = 0; i < study.doses.size(); ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            for (std::size_t l = 0; l < 4; ++l) po[i][j][l] = s.outcome(i, j, study.doses[i][l], study.covariate[i][j]);
        }
    }
    return po;
}

std::vector<LabelOutcomes> observe(const std::vector<StratumPotentials>& po, const std::vector<std::uint8_t>& perm) {
    const auto& perms = label_permutations();
    std::vector<LabelOutcomes> out(po.size());
    for (std::size_t i = 0; i < po.size(); ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            const std::size_t label = perms[perm[i]][j];
            out[i][label] = po[i][j][label];
        }
    }
    return out;
}

Dataset synthetic_observational(std::size_t n, std::size_t k, std::uint64_t seed, bool with_exact) {
    auto logistic = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
    auto round4 = [](double v) { return std::nearbyint(v * 1e4) / 1e4; };
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("x" + std::to_string(c + 1));
    std::vector<Unit> units;
    for (std::size_t i = 0; i < n; ++i) {
        Unit u;
        char id[32];
        std::snprintf(id, sizeof id, "u%05zu", i + 1);
        u.id = id;
        for (std::size_t c = 0; c < k; ++c) u.covariates.push_back(round4(keyed_normal(seed, 21, i, c)));
        auto x = [&](std::size_t c) { return c < k ? u.covariates[c] : 0.0; };
        u.z1 = round4(logistic(0.6 * x(0) - 0.3 * x(1) + 0.8 * keyed_normal(seed, 22, i, 0)));
        u.z2 = round4(logistic(0.5 * x(2) + 0.4 * x(0) + 0.8 * keyed_normal(seed, 22, i, 1)));
        if (with_exact) u.exact_keys = {keyed_uniform(seed, 23, i, 0) < 0.3 ? "1" : "0"};
        u.y = round4(1.0 + 2.0 * u.z1 + 3.0 * u.z2 + 1.5 * u.z1 * u.z2 + 0.5 * x(0) + 0.3 * x(1) +
                     0.5 * keyed_normal(seed, 24, i, 0));
        units.push_back(std::move(u));
    }
    return Dataset(std::move(units), names, with_exact ? std::vector<std::string>{"rural"} : std::vector<std::string>{});
}

namespace {

struct BruteState {
    std::size_t n = 0;
    std::vector<FixedWeight> q;
    std::vector<char> used;
    std::vector<std::pair<std::size_t, std::size_t>> current, best;
    FixedWeight best_cost = 0;
    bool have_best = false;

    void search(FixedWeight cost) {
        std::size_t v = 0;
        while (v < n && used[v]) ++v;
        if (v == n) {
            if (!have_best || cost < best_cost) {
                best_cost = cost;
                best = current;
                have_best = true;
            }
            return;
        }
        used[v] = 1;
        for (std::size_t u = v + 1; u < n; ++u) {
            if (used[u]) continue;
            used[u] = 1;
            current.emplace_back(v, u);
            search(cost + q[v * n + u]);
            current.pop_back();
            used[u] = 0;
        }
        used[v] = 0;
    }
};

}  // namespace

PerfectMatching brute_force_matching(const WeightedGraph& g) {
    const std::size_t n = g.size();
    if (n > 12) fail(ErrorKind::TooLarge, "brute-force matching is limited to 12 vertices, got " + std::to_string(n));
    if (n == 0 || n % 2 != 0) fail(ErrorKind::OddVertexCount, "brute-force matching needs an even vertex count");
    BruteState st;
    st.n = n;
    st.q.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) st.q[i * n + j] = quantize_weight(g.weight(i, j));
        }
    }
    st.used.assign(n, 0);
    st.search(0);
    PerfectMatching m;
    m.edges = st.best;
    m.mate.assign(n, 0);
    for (auto [a, b] : m.edges) {
        m.mate[a] = b;
        m.mate[b] = a;
        m.total_weight += g.weight(a, b);
    }
    return m;
}

void enumerate_assignments(const std::vector<StratumPotentials>& po,
                           const std::function<void(const std::vector<std::uint8_t>&,
                                                    const std::vector<LabelOutcomes>&)>& visit) {
    const std::size_t n = po.size();
    if (n > 5) fail(ErrorKind::TooLarge, "enumeration is limited to 5 strata, got " + std::to_string(n));
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 24;
    std::vector<std::uint8_t> perm(n, 0);
    for (std::uint64_t t = 0; t < total; ++t) {
        std::uint64_t x = t;
        for (std::size_t i = 0; i < n; ++i) {
            perm[i] = static_cast<std::uint8_t>(x % 24);
            x /= 24;
        }
        visit(perm, observe(po, perm));
    }
}

std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) fail(ErrorKind::InvalidConfig, "assignment cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

SimReport simulate_coverage(const PotentialSchedule& schedule, const SyntheticStudy& study, std::size_t reps,
                            double alpha, QSpec::Kind q_kind, std::uint64_t seed, unsigned threads) {
    if (reps < 100) fail(ErrorKind::InvalidConfig, "simulation needs at least 100 replications");
    const std::size_t n = study.doses.size();
    const std::vector<StratumPotentials> po = potential_table(schedule, study);
    const std::array<double, 4> truth = true_estimands(po, study.doses);

    QSpec q = q_ones(n);
    if (q_kind == QSpec::Kind::CovariateMeans) {
        q.kind = QSpec::Kind::CovariateMeans;
        q.columns = {"x"};
        q.matrix = study.covariate_q();
    }
    const Projection proj = make_projection(q.matrix);
    if (!(alpha > 0.0 && alpha < 0.5)) fail(ErrorKind::InvalidConfig, "alpha must lie in (0, 0.5)");
    const double z = normal_quantile(1.0 - alpha / 2.0);

    std::vector<std::array<std::array<double, 4>, 4>> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 1; a <= 4; ++a) weights[i][a - 1] = contribution_weights(study.doses[i], a);
    }

    struct Rep {
        std::array<double, 4> tau{}, var{};
        std::array<bool, 4> covered{};
    };
    std::vector<Rep> results(reps);
    auto run = [&](std::size_t lo, std::size_t hi) {
        std::vector<std::uint8_t> perm(n);
        std::vector<double> v(n);
        for (std::size_t r = lo; r < hi; ++r) {
            for (std::size_t i = 0; i < n; ++i) perm[i] = keyed_permutation(seed, r, i);
            const std::vector<LabelOutcomes> y = observe(po, perm);
            for (int a = 0; a < 4; ++a) {
                for (std::size_t i = 0; i < n; ++i) v[i] = apply_weights(weights[i][a], y[i]);
                const double tau = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
                const double var = variance_estimate(v, proj);
                const double half = z * std::sqrt(var);
                results[r].tau[a] = tau;
                results[r].var[a] = var;
                results[r].covered[a] = tau - half <= truth[a] && truth[a] <= tau + half;
            }
        }
    };
    threads = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, reps)));
    if (threads == 1) {
        run(0, reps);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (reps + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t lo = std::min(reps, t * chunk);
            const std::size_t hi = std::min(reps, lo + chunk);
            pool.emplace_back(run, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    SimReport rep;
    rep.replications = reps;
    rep.true_tau = truth;
    for (int a = 0; a < 4; ++a) {
        double sum = 0.0, sum_var = 0.0;
        std::size_t covered = 0;
        for (const Rep& r : results) {
            sum += r.tau[a];
            sum_var += r.var[a];
            covered += r.covered[a] ? 1 : 0;
        }
        const double mean = sum / static_cast<double>(reps);
        double ss = 0.0;
        for (const Rep& r : results) ss += (r.tau[a] - mean) * (r.tau[a] - mean);
        rep.mean_estimate[a] = mean;
        rep.bias[a] = mean - truth[a];
        rep.coverage[a] = static_cast<double>(covered) / static_cast<double>(reps);
        rep.mean_variance[a] = sum_var / static_cast<double>(reps);
        rep.mc_variance[a] = ss / static_cast<double>(reps - 1);
    }
    return rep;
}

}  // namespace factmatch
