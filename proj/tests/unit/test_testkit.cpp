#include <algorithm>
#include <cmath>
#include <random>

#include "factmatch/fisher.hpp"
#include "factmatch/pipeline.hpp"
#include "factmatch/testkit.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace factmatch;
using testing::kind_of;

namespace {

WeightedGraph random_graph(std::size_t n, std::mt19937_64& rng, bool integer_weights) {
    WeightedGraph g(n);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> k(0, 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) g.set_weight(i, j, integer_weights ? k(rng) : u(rng));
    }
    return g;
}

}  // namespace

TEST_CASE("keyed draws are reproducible and roughly standard") {
    CHECK(keyed_uniform(5, 1, 2, 3) == keyed_uniform(5, 1, 2, 3));
    CHECK(keyed_uniform(5, 1, 2, 3) != keyed_uniform(5, 1, 2, 4));
    double s = 0.0, ss = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = keyed_uniform(9, 0, 0, i);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double z = keyed_normal(9, 1, 0, i);
        s += z;
        ss += z * z;
    }
    CHECK(std::abs(s / n) < 0.05);
    CHECK(std::abs(ss / n - 1.0) < 0.05);
}

TEST_CASE("schedule families parse and evaluate") {
    CHECK(PotentialSchedule::parse_family("bilinear") == PotentialSchedule::Family::Bilinear);
    CHECK(kind_of([] { PotentialSchedule::parse_family("cubic"); }) == ErrorKind::InvalidConfig);
    const auto lin = PotentialSchedule::standard(PotentialSchedule::Family::Linear);
    CHECK(lin.dose_response({0.5, 1.0}) == doctest::Approx(2.0 * 0.5 + 3.0 * 1.0));
    const auto bil = PotentialSchedule::standard(PotentialSchedule::Family::Bilinear);
    CHECK(bil.dose_response({0.5, 1.0}) == doctest::Approx(1.0 + 3.0 + 4.0 * 0.5));
    const auto con = PotentialSchedule::standard(PotentialSchedule::Family::Constant);
    CHECK(con.outcome(0, 0, {0.2, 0.9}, 3.0) == 5.0);
}

TEST_CASE("brute force matching handles the smallest graphs") {
    WeightedGraph g(4);
    g.set_weight(0, 1, 1);
    g.set_weight(2, 3, 1);
    g.set_weight(0, 2, 5);
    g.set_weight(1, 3, 5);
    g.set_weight(0, 3, 0.5);
    g.set_weight(1, 2, 0.5);
    const auto m = brute_force_matching(g);
    REQUIRE(m.edges.size() == 2);
    CHECK(m.edges[0] == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(m.edges[1] == std::pair<std::size_t, std::size_t>{1, 2});
    CHECK(m.total_weight == doctest::Approx(1.0));
    CHECK(kind_of([] { brute_force_matching(WeightedGraph(14)); }) == ErrorKind::TooLarge);
    CHECK(kind_of([] { brute_force_matching(WeightedGraph(5)); }) == ErrorKind::OddVertexCount);
}

TEST_CASE("blossom solver agrees with brute force, ties included") {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 * (2 + rep % 5);
        const auto g = random_graph(n, rng, rep % 2 == 0);
        const auto a = min_weight_perfect_matching(g);
        const auto b = brute_force_matching(g);
        CHECK(fixed_total(g, a.edges) == fixed_total(g, b.edges));
        CHECK(a.edges == b.edges);
    }
}

TEST_CASE("hungarian assignment matches exhaustive search") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 2 + rep % 5;
        Eigen::MatrixXd c(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) c(i, j) = u(rng);
        const auto p = hungarian_assignment(c);
        double got = 0.0;
        for (int i = 0; i < n; ++i) got += c(i, p[i]);
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        double best = 1e300;
        do {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += c(i, perm[i]);
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("enumeration visits every assignment once") {
    DoseGenerator gen;
    for (std::size_t i = 1; i <= 3; ++i) {
        const auto study = synthetic_study(i, gen, 1);
        const auto po = potential_table(PotentialSchedule::standard(PotentialSchedule::Family::Linear), study);
        std::size_t count = 0;
        enumerate_assignments(po, [&](const auto&, const auto&) { ++count; });
        CHECK(count == static_cast<std::size_t>(std::pow(24.0, static_cast<double>(i))));
    }
    const auto big = synthetic_study(6, gen, 1);
    const auto po = potential_table(PotentialSchedule::standard(PotentialSchedule::Family::Linear), big);
    CHECK(kind_of([&] { enumerate_assignments(po, [](const auto&, const auto&) {}); }) == ErrorKind::TooLarge);
}

TEST_CASE("estimators are unbiased over all assignments of a small study") {
    DoseGenerator gen;
    const auto study = synthetic_study(2, gen, 11);
    auto schedule = PotentialSchedule::standard(PotentialSchedule::Family::Bilinear);
    schedule.noise_sd = 1.0;
    schedule.effect_sd = 0.7;
    schedule.seed = 4;
    const auto po = potential_table(schedule, study);
    std::vector<oracle::Doses> doses(study.doses.begin(), study.doses.end());
    std::vector<oracle::Potentials> opo(po.begin(), po.end());
    const auto truth = oracle::estimands(opo, doses);
    const auto lib_truth = true_estimands(po, study.doses);
    std::array<double, 4> sum{};
    std::size_t count = 0;
    enumerate_assignments(po, [&](const auto&, const std::vector<LabelOutcomes>& y) {
        for (int a = 1; a <= 4; ++a) {
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += oracle::contribution(doses[i], y[i], a);
            sum[a - 1] += s / static_cast<double>(y.size());
        }
        ++count;
    });
    for (int a = 0; a < 4; ++a) {
        CHECK(sum[a] / static_cast<double>(count) == doctest::Approx(truth[a]).epsilon(1e-10));
        CHECK(lib_truth[a] == doctest::Approx(truth[a]).epsilon(1e-12));
    }
}

TEST_CASE("synthetic study slots carry their starting labels") {
    DoseGenerator gen;
    const auto study = synthetic_study(5, gen, 8);
    const auto design = study.design();
    REQUIRE(design.strata.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& s = design.strata[i];
        CHECK(s.stratum_index == static_cast<int>(i + 1));
        std::array<LabelInput, 4> in;
        for (std::size_t j = 0; j < 4; ++j) in[j] = {s.members[j], s.dose_set[j]};
        const auto labels = assign_labels(in, Lead::Z1);
        for (std::size_t j = 0; j < 4; ++j) CHECK(index_of(labels[j]) == j);
    }
    DoseGenerator bin;
    bin.binary = true;
    const auto b = synthetic_study(3, bin, 8);
    for (const auto& d : b.doses) {
        CHECK(d[0] == DosePair{0, 0});
        CHECK(d[3] == DosePair{1, 1});
    }
    CHECK(study.dataset().size() == 20);
    CHECK(study.covariate_q().cols() == 2);
}

TEST_CASE("observed outcomes follow the permutation") {
    DoseGenerator gen;
    const auto study = synthetic_study(1, gen, 2);
    const auto po = potential_table(PotentialSchedule::standard(PotentialSchedule::Family::Linear), study);
    const auto perms = label_permutations();
    for (std::uint8_t p = 0; p < 24; ++p) {
        const auto y = observe(po, {p});
        for (std::size_t j = 0; j < 4; ++j) CHECK(y[0][perms[p][j]] == po[0][j][perms[p][j]]);
    }
}

TEST_CASE("constant potential outcomes give zero bias and full coverage") {
    DoseGenerator gen;
    const auto study = synthetic_study(30, gen, 5);
    const auto r = simulate_coverage(PotentialSchedule::standard(PotentialSchedule::Family::Constant), study, 100,
                                     0.05, QSpec::Kind::Ones, 1);
    for (int a = 0; a < 4; ++a) {
        CHECK(std::abs(r.bias[a]) < 1e-9);
        CHECK(r.coverage[a] == 1.0);
    }
}

TEST_CASE("coverage simulation is reproducible across thread counts") {
    DoseGenerator gen;
    const auto study = synthetic_study(40, gen, 6);
    auto schedule = PotentialSchedule::standard(PotentialSchedule::Family::Linear);
    schedule.noise_sd = 1.0;
    schedule.effect_sd = 0.5;
    const auto a = simulate_coverage(schedule, study, 120, 0.05, QSpec::Kind::CovariateMeans, 9, 1);
    const auto b = simulate_coverage(schedule, study, 120, 0.05, QSpec::Kind::CovariateMeans, 9, 4);
    CHECK(a.mean_estimate == b.mean_estimate);
    CHECK(a.coverage == b.coverage);
    CHECK(a.mean_variance == b.mean_variance);
    CHECK(kind_of([&] { simulate_coverage(schedule, study, 50, 0.05, QSpec::Kind::Ones, 9); }) ==
          ErrorKind::InvalidConfig);
    CHECK(kind_of([&] { simulate_coverage(schedule, study, 100, 0.7, QSpec::Kind::Ones, 9); }) ==
          ErrorKind::InvalidConfig);
}

TEST_CASE("observational generator is deterministic and shaped as documented") {
    const auto d = synthetic_observational(50, 4, 3, true);
    const auto e = synthetic_observational(50, 4, 3, true);
    REQUIRE(d.size() == 50);
    CHECK(d.n_covariates() == 4);
    CHECK(d.exact_names() == std::vector<std::string>{"rural"});
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.unit(i).z1 == e.unit(i).z1);
        CHECK(d.unit(i).z1 > 0.0);
        CHECK(d.unit(i).z1 < 1.0);
        CHECK(d.unit(i).y.has_value());
    }
}

TEST_CASE("graphs split by forbidden edges match the joint optimum") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 12;
        WeightedGraph g(n);
        std::vector<int> group(n);
        for (std::size_t i = 0; i < n; ++i) group[i] = static_cast<int>(rng() % 3);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool same = group[i] == group[j];
                const bool stuck = rep % 4 == 0 && (i == 0 || j == 0) && j != 11;
                g.set_weight(i, j, same && !stuck ? std::floor(u(rng)) : kInfeasibleSentinel);
            }
        }
        const auto a = min_weight_perfect_matching(g);
        const auto b = brute_force_matching(g);
        CHECK(fixed_total(g, a.edges) == fixed_total(g, b.edges));
        CHECK(a.edges == b.edges);
    }
}
