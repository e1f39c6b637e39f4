#include <cmath>

#include "factmatch/neyman.hpp"
#include "factmatch/testkit.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace factmatch;
using testing::kind_of;

namespace {

const DoseSet kBinary = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
const DoseSet kWorked = {{{0.31, 0.30}, {0.35, 0.82}, {0.74, 0.23}, {0.86, 0.71}}};

Design design_of(const std::vector<DoseSet>& doses) {
    Design d;
    for (std::size_t i = 0; i < doses.size(); ++i) {
        MatchedStratum s;
        s.stratum_index = int(i) + 1;
        s.dose_set = doses[i];
        for (int l = 0; l < 4; ++l) s.members[l] = "s" + std::to_string(i) + "_" + std::to_string(l);
        d.strata.push_back(s);
    }
    return d;
}

DoseSet random_doses(std::uint64_t seed, std::size_t i) {
    DoseGenerator gen;
    return synthetic_study(1, gen, seed * 1000 + i).doses[0];
}

}  // namespace

TEST_CASE("binary pure main effect") {
    const LabelOutcomes y = {0, 0, 1, 1};
    CHECK(stratum_contribution(kBinary, y, 1) == 1.0);
    CHECK(stratum_contribution(kBinary, y, 3) == 0.0);
    CHECK(stratum_contribution(kBinary, y, 2) == 0.0);
}

TEST_CASE("binary pure interaction") {
    const LabelOutcomes y = {0, 0, 0, 1};
    CHECK(stratum_contribution(kBinary, y, 3) == 1.0);
    CHECK(stratum_contribution(kBinary, y, 4) == 1.0);
}

TEST_CASE("worked doses with outcome z1 + z2") {
    LabelOutcomes y;
    for (int l = 0; l < 4; ++l) y[l] = kWorked[l].z1 + kWorked[l].z2;
    CHECK(zbar1_high(kWorked) == doctest::Approx(0.80));
    CHECK(zbar1_low(kWorked) == doctest::Approx(0.33));
    CHECK(stratum_contribution(kWorked, y, 1) == doctest::Approx(0.38 / 0.47));
    for (int a = 1; a <= 4; ++a) {
        CHECK(stratum_contribution(kWorked, y, a) == doctest::Approx(oracle::contribution(kWorked, y, a)).epsilon(1e-13));
    }
}

TEST_CASE("contributions agree with the definition on random strata") {
    for (std::size_t i = 0; i < 200; ++i) {
        const DoseSet z = random_doses(3, i);
        LabelOutcomes y;
        for (int l = 0; l < 4; ++l) y[l] = keyed_normal(5, i, l, 0) * 3;
        for (int a = 1; a <= 4; ++a) {
            CHECK(stratum_contribution(z, y, a) == doctest::Approx(oracle::contribution(z, y, a)).epsilon(1e-12));
        }
    }
}

TEST_CASE("zero denominators are degenerate") {
    DoseSet z = kWorked;
    z[index_of(DoseLabel::LH)].z1 = z[index_of(DoseLabel::HH)].z1;
    CHECK(kind_of([&] { contribution_weights(z, 3); }) == ErrorKind::DegenerateStratum);
    CHECK_NOTHROW(contribution_weights(z, 1));
}

TEST_CASE("constant contributions give a zero-width interval") {
    std::vector<DoseSet> doses(6, kBinary);
    const Design design = design_of(doses);
    const std::vector<LabelOutcomes> y(6, LabelOutcomes{0, 0, 2.5, 2.5});
    const EffectEstimate e = estimate(design, y, 1, q_ones(6), 0.05);
    CHECK(e.tau_hat == 2.5);
    CHECK(e.variance == doctest::Approx(0.0));
    CHECK(e.ci_low == doctest::Approx(2.5));
    CHECK(e.ci_high == doctest::Approx(2.5));
    CHECK(e.n_strata == 6);
    CHECK(e.q_spec == "ones");
}

TEST_CASE("ones projection reduces to the classic variance") {
    std::vector<DoseSet> doses;
    std::vector<LabelOutcomes> y;
    for (std::size_t i = 0; i < 5; ++i) {
        doses.push_back(random_doses(9, i));
        y.push_back({keyed_normal(9, i, 0, 0), keyed_normal(9, i, 1, 0), 1 + keyed_normal(9, i, 2, 0), 2 + keyed_normal(9, i, 3, 0)});
    }
    const Design design = design_of(doses);
    for (int a = 1; a <= 4; ++a) {
        const EffectEstimate e = estimate(design, y, a, q_ones(5), 0.05);
        CHECK(std::abs(e.variance - oracle::neyman_variance(e.per_stratum_v)) < 1e-12);
        CHECK(e.ci_low <= e.tau_hat);
        CHECK(e.tau_hat <= e.ci_high);
        CHECK(e.ci_high - e.tau_hat == doctest::Approx(1.959963984540054 * std::sqrt(e.variance)));
    }
}

TEST_CASE("collinear covariate means are rank deficient") {
    Eigen::MatrixXd q(6, 2);
    q.col(0).setOnes();
    q.col(1).setConstant(3.0);
    CHECK(kind_of([&] { make_projection(q); }) == ErrorKind::RankDeficientQ);
    CHECK(kind_of([&] { make_projection(Eigen::MatrixXd::Ones(1, 1)); }) == ErrorKind::TooFewStrata);
}

TEST_CASE("hat matrix algebra") {
    Eigen::MatrixXd q(12, 3);
    for (int i = 0; i < 12; ++i) {
        q(i, 0) = 1;
        q(i, 1) = std::sin(i * 0.9);
        q(i, 2) = i * i * 0.1;
    }
    const Projection p = make_projection(q);
    const Eigen::MatrixXd h = p.basis * p.basis.transpose();
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h * h - h).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(h.trace() == doctest::Approx(3.0));
    const Eigen::MatrixXd explicit_h = q * (q.transpose() * q).inverse() * q.transpose();
    CHECK((h - explicit_h).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 0; i < 12; ++i) {
        CHECK(p.leverage(i) >= 0.0);
        CHECK(p.leverage(i) < 1.0);
        CHECK(p.leverage(i) == doctest::Approx(h(i, i)));
    }
}

TEST_CASE("location and scale equivariance, nonnegative variance") {
    std::vector<DoseSet> doses;
    std::vector<LabelOutcomes> y;
    for (std::size_t i = 0; i < 9; ++i) {
        doses.push_back(random_doses(13, i));
        y.push_back({keyed_normal(13, i, 0, 0), keyed_normal(13, i, 1, 0), keyed_normal(13, i, 2, 0), keyed_normal(13, i, 3, 0)});
    }
    const Design design = design_of(doses);
    std::vector<LabelOutcomes> shifted = y, scaled = y;
    for (auto& s : shifted) for (double& v : s) v += 4.25;
    for (auto& s : scaled) for (double& v : s) v *= -2.0;
    Eigen::MatrixXd qm(9, 2);
    for (int i = 0; i < 9; ++i) { qm(i, 0) = 1; qm(i, 1) = std::cos(i); }
    QSpec q;
    q.kind = QSpec::Kind::CovariateMeans;
    q.matrix = qm;
    for (int a = 1; a <= 4; ++a) {
        const EffectEstimate e = estimate(design, y, a, q, 0.1);
        const EffectEstimate es = estimate(design, shifted, a, q, 0.1);
        const EffectEstimate ec = estimate(design, scaled, a, q, 0.1);
        CHECK(es.tau_hat == doctest::Approx(e.tau_hat).epsilon(1e-12));
        CHECK(ec.tau_hat == doctest::Approx(-2.0 * e.tau_hat).epsilon(1e-12));
        CHECK(ec.variance == doctest::Approx(4.0 * e.variance).epsilon(1e-12));
        CHECK(e.variance >= 0.0);
        for (std::size_t i = 0; i < 9; ++i) CHECK(ec.per_stratum_v[i] == doctest::Approx(-2.0 * e.per_stratum_v[i]));
    }
}

TEST_CASE("alpha must lie in (0, 0.5)") {
    const Design design = design_of({kBinary, kBinary, kBinary});
    const std::vector<LabelOutcomes> y(3, LabelOutcomes{0, 1, 2, 3});
    CHECK(kind_of([&] { estimate(design, y, 1, q_ones(3), 0.0); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([&] { estimate(design, y, 1, q_ones(3), 0.5); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("true estimands for simple schedules") {
    const std::vector<DoseSet> doses = {kBinary, kBinary};
    std::vector<StratumPotentials> constant(2), product(2), linear(2);
    const DoseSet grid = {{{0.2, 0.3}, {0.2, 0.9}, {0.7, 0.3}, {0.7, 0.9}}};
    for (auto& s : constant) for (auto& u : s) u.fill(5.0);
    for (std::size_t i = 0; i < 2; ++i) {
        for (int j = 0; j < 4; ++j) {
            for (int l = 0; l < 4; ++l) {
                product[i][j][l] = kBinary[l].z1 * kBinary[l].z2;
                linear[i][j][l] = 2 * grid[l].z1 + 3 * grid[l].z2 + j;
            }
        }
    }
    const auto c = true_estimands(constant, doses);
    for (double t : c) CHECK(t == 0.0);
    const auto p = true_estimands(product, doses);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
    CHECK(p[2] == doctest::Approx(1.0));
    CHECK(p[3] == doctest::Approx(1.0));
    const auto l = true_estimands(linear, {grid, grid});
    CHECK(l[0] == doctest::Approx(2.0));
    CHECK(l[1] == doctest::Approx(3.0));
    CHECK(std::abs(l[2]) < 1e-12);
    CHECK(std::abs(l[3]) < 1e-12);
}

TEST_CASE("true estimands agree with the definition on random schedules") {
    std::vector<DoseSet> doses;
    std::vector<StratumPotentials> po;
    for (std::size_t i = 0; i < 20; ++i) {
        doses.push_back(random_doses(17, i));
        StratumPotentials s;
        for (int j = 0; j < 4; ++j) for (int l = 0; l < 4; ++l) s[j][l] = keyed_normal(17, i, j, l);
        po.push_back(s);
    }
    const auto a = true_estimands(po, doses);
    const auto b = oracle::estimands(po, doses);
    for (int k = 0; k < 4; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
}

TEST_CASE("covariate-mean Q prepends an intercept") {
    const SyntheticStudy study = synthetic_study(8, DoseGenerator{}, 4);
    const Design design = study.design();
    const QSpec q = q_covariate_means(design, study.dataset());
    REQUIRE(q.matrix.cols() == 2);
    CHECK((q.matrix - study.covariate_q()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(q.describe() == "covmeans(x)");
}
