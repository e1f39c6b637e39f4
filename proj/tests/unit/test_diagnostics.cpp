#include <cmath>
#include <numeric>

#include "factmatch/diagnostics.hpp"
#include "factmatch/pipeline.hpp"
#include "factmatch/testkit.hpp"
#include "helpers.hpp"

using namespace factmatch;
using testing::kind_of;
using testing::unit;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double var(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.size() > 1 ? s / (v.size() - 1) : 0.0;
}

Design three_strata() {
    Design d;
    for (int i = 0; i < 3; ++i) {
        MatchedStratum s;
        s.stratum_index = i + 1;
        for (int l = 0; l < 4; ++l) {
            s.members[l] = "s" + std::to_string(i) + "l" + std::to_string(l);
            s.dose_set[l] = {high_on_z1(DoseLabel(l)) ? 0.8 : 0.2, high_on_z2(DoseLabel(l)) ? 0.7 : 0.3};
        }
        d.strata.push_back(s);
    }
    return d;
}

}  // namespace

TEST_CASE("smd examples") {
    CHECK(smd({1, 2, 3}, {1, 2, 3}).value == 0.0);
    CHECK(smd({1, 3}, {0, 2}).value == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(smd({0, 2}, {-3, 5}).value == 0.0);
    const SmdResult z = smd({1, 1}, {2, 2});
    CHECK(z.zero_variance);
    CHECK(std::isinf(z.value));
    const SmdResult c = smd({4, 4}, {4, 4});
    CHECK_FALSE(c.zero_variance);
    CHECK(c.value == 0.0);
}

TEST_CASE("smd is antisymmetric and scale free") {
    const std::vector<double> a = {0.3, 1.9, 2.2, 5.1}, b = {1.0, 0.1, -0.7};
    CHECK(smd(a, b).value == doctest::Approx(-smd(b, a).value));
    std::vector<double> a3, b3;
    for (double x : a) a3.push_back(-3 * x);
    for (double x : b) b3.push_back(-3 * x);
    CHECK(smd(a, b).value == doctest::Approx(-smd(a3, b3).value));
    std::vector<double> a7 = a, b7 = b;
    for (double& x : a7) x *= 7;
    for (double& x : b7) x *= 7;
    CHECK(smd(a, b).value == doctest::Approx(smd(a7, b7).value));
}

TEST_CASE("post-match balance on a three-stratum fixture") {
    const Design design = three_strata();
    std::vector<Unit> units;
    for (const MatchedStratum& s : design.strata) {
        for (int l = 0; l < 4; ++l) {
            const double x = std::sin(s.stratum_index * 3.0 + l * 1.7) + l;
            units.push_back(unit(s.members[l], s.dose_set[l].z1, s.dose_set[l].z2, {x, 2.0}));
        }
    }
    const Dataset d = testing::dataset(units, 2);
    const auto tables = post_match_balance(design, d);
    REQUIRE(tables.size() == 6);
    for (const BalanceTable& t : tables) {
        CHECK(t.phase == BalancePhase::Post);
        CHECK(t.n_a == 3);
        REQUIRE(t.rows.size() == 4);
        CHECK(t.rows[0].name == "x1");
        CHECK(t.rows[2].name == "z1");
        CHECK(t.rows[3].name == "z2");
        std::vector<double> ga, gb;
        for (const MatchedStratum& s : design.strata) {
            ga.push_back(d.unit(d.index_of_id(s.member(t.contrast.first))).covariates[0]);
            gb.push_back(d.unit(d.index_of_id(s.member(t.contrast.second))).covariates[0]);
        }
        CHECK(t.rows[0].mean_a == doctest::Approx(mean(ga)));
        CHECK(t.rows[0].mean_b == doctest::Approx(mean(gb)));
        CHECK(t.rows[0].smd == doctest::Approx((mean(ga) - mean(gb)) / std::sqrt((var(ga) + var(gb)) / 2)));
        CHECK(t.rows[1].smd == 0.0);
        CHECK_FALSE(t.rows[1].zero_variance);
        // Dose columns: constant within label, so any difference is flagged.
        const bool z1_differs = high_on_z1(t.contrast.first) != high_on_z1(t.contrast.second);
        CHECK(t.rows[2].zero_variance == z1_differs);
        if (!z1_differs) CHECK(t.rows[2].smd == 0.0);
    }
    CHECK(contrast_name(tables[0].contrast) == "HH-HL");
    CHECK(balance_file_name(tables[0]) == "post_HH-HL.csv");
    CHECK(balance_csv(tables[0]).rfind("covariate,mean_a,mean_b,smd\nx1,", 0) == 0);
}

TEST_CASE("copied covariates across labels balance exactly") {
    const Design design = three_strata();
    std::vector<Unit> units;
    for (const MatchedStratum& s : design.strata) {
        for (int l = 0; l < 4; ++l) {
            units.push_back(unit(s.members[l], s.dose_set[l].z1, s.dose_set[l].z2, {double(s.stratum_index) * 1.5}));
        }
    }
    for (const BalanceTable& t : post_match_balance(design, testing::dataset(units))) CHECK(t.rows[0].smd == 0.0);
}

TEST_CASE("post-match balance needs two strata") {
    Design one = three_strata();
    one.strata.resize(1);
    std::vector<Unit> units;
    for (int l = 0; l < 4; ++l) units.push_back(unit(one.strata[0].members[l], 0, 0));
    CHECK(kind_of([&] { post_match_balance(one, testing::dataset(units)); }) == ErrorKind::TooFewStrata);
}

TEST_CASE("median split pseudo-cells") {
    std::vector<Unit> units;
    for (int i = 0; i < 16; ++i) units.push_back(unit("u" + std::to_string(i), (i % 4) * 0.25, (i / 4) * 0.25, {5.0}));
    const auto tables = pre_match_balance(testing::dataset(units));
    REQUIRE(tables.size() == 6);
    for (const BalanceTable& t : tables) {
        CHECK(t.phase == BalancePhase::Pre);
        CHECK(std::abs(int(t.n_a) - 4) <= 1);
        CHECK(std::abs(int(t.n_b) - 4) <= 1);
        CHECK(t.rows[0].smd == 0.0);
        CHECK_FALSE(t.rows[0].zero_variance);
    }
    CHECK(median({3, 1, 2, 10}) == 2.5);
    CHECK(kind_of([] { pre_match_balance(testing::dataset({unit("a", 0, 0), unit("b", 1, 1)})); }) ==
          ErrorKind::TooFewUnits);
}

TEST_CASE("independent covariates are nearly balanced before matching") {
    // Pseudo-cells hold about 100 units, so each SMD has sd near 0.14; the
    // bound is checked as a rate over many seeds rather than for every value.
    std::size_t total = 0, within = 0;
    double sum_abs = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::vector<Unit> units;
        for (int i = 0; i < 400; ++i) {
            units.push_back(unit("u" + std::to_string(i), keyed_uniform(seed, 0, i, 0), keyed_uniform(seed, 0, i, 1),
                                 {keyed_normal(seed, 1, i, 0), keyed_normal(seed, 1, i, 1), keyed_normal(seed, 1, i, 2)}));
        }
        for (const BalanceTable& t : pre_match_balance(testing::dataset(units, 3))) {
            for (std::size_t k = 0; k < 3; ++k) {
                ++total;
                within += std::abs(t.rows[k].smd) < 0.3 ? 1 : 0;
                sum_abs += std::abs(t.rows[k].smd);
            }
        }
    }
    CHECK(double(within) / total >= 0.9);
    CHECK(sum_abs / total < 0.15);
}

TEST_CASE("matched dose contrasts isolate the differing treatment") {
    const Dataset d = synthetic_observational(400, 6, 4, true);
    PipelineConfig cfg;
    const Design design = run_design(d, cfg);
    for (const BalanceTable& t : post_match_balance(design, d)) {
        if (contrast_name(t.contrast) != "HH-LH") continue;
        const BalanceRow& z1 = t.rows[t.rows.size() - 2];
        const BalanceRow& z2 = t.rows[t.rows.size() - 1];
        CHECK(std::abs(z2.smd) < std::abs(z1.smd));
    }
}
