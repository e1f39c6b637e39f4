#include <cmath>

#include "factmatch/distances.hpp"
#include "helpers.hpp"

using namespace factmatch;
using testing::kind_of;
using testing::unit;

TEST_CASE("identical covariates are at distance zero") {
    const Dataset d = testing::dataset({unit("a", 0, 0, {1, 2}), unit("b", 0, 0, {1, 2}), unit("c", 0, 0, {3, 1})}, 2);
    const Eigen::MatrixXd m = covariate_distance({CovariateMetric::Kind::Euclidean, 0.0}, d);
    CHECK(m(0, 1) == 0.0);
    CHECK(m(0, 0) == 0.0);
}

TEST_CASE("euclidean 3-4-5") {
    const Dataset d = testing::dataset({unit("a", 0, 0, {0, 0}), unit("b", 0, 0, {3, 4})}, 2);
    CHECK(covariate_distance({CovariateMetric::Kind::Euclidean, 0.0}, d)(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("mahalanobis equals euclidean under identity sample covariance") {
    // Columns with mean 0, sample variance 1 and zero covariance.
    const double s = std::sqrt(0.75);
    const Dataset d = testing::dataset(
        {unit("a", 0, 0, {s, s}), unit("b", 0, 0, {s, -s}), unit("c", 0, 0, {-s, s}), unit("d", 0, 0, {-s, -s})}, 2);
    const Eigen::MatrixXd m = covariate_distance({CovariateMetric::Kind::Mahalanobis, 0.0}, d);
    const Eigen::MatrixXd e = covariate_distance({CovariateMetric::Kind::Euclidean, 0.0}, d);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(m(i, j) == doctest::Approx(e(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("distance matrices are symmetric, nonnegative and thread independent") {
    std::vector<Unit> units;
    for (int i = 0; i < 30; ++i) {
        units.push_back(unit("u" + std::to_string(i), 0, 0, {std::sin(i * 1.3), std::cos(i * 0.7) + i * 0.01, i * 0.1}));
    }
    const Dataset d = testing::dataset(units, 3);
    for (auto kind : {CovariateMetric::Kind::Mahalanobis, CovariateMetric::Kind::RankMahalanobis,
                      CovariateMetric::Kind::Euclidean}) {
        const Eigen::MatrixXd a = covariate_distance({kind, 0.0}, d, 1);
        const Eigen::MatrixXd b = covariate_distance({kind, 0.0}, d, 4);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.minCoeff() >= 0.0);
        CHECK(a.diagonal().cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("rank mahalanobis is invariant under monotone transforms") {
    std::vector<Unit> raw, mono;
    for (int i = 0; i < 12; ++i) {
        const double a = std::sin(i * 2.1), b = std::cos(i * 1.1);
        raw.push_back(unit("u" + std::to_string(i), 0, 0, {a, b}));
        mono.push_back(unit("u" + std::to_string(i), 0, 0, {std::exp(a), b * b * b}));
    }
    const CovariateMetric m{CovariateMetric::Kind::RankMahalanobis, 0.0};
    const Eigen::MatrixXd x = covariate_distance(m, testing::dataset(raw, 2));
    const Eigen::MatrixXd y = covariate_distance(m, testing::dataset(mono, 2));
    CHECK((x - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("average ranks share ties") {
    const auto r = average_ranks({3.0, 1.0, 3.0, 2.0});
    CHECK(r == std::vector<double>{3.5, 1.0, 3.5, 2.0});
}

TEST_CASE("collinear covariates are singular unless regularized") {
    std::vector<Unit> units;
    for (int i = 0; i < 6; ++i) units.push_back(unit("u" + std::to_string(i), 0, 0, {double(i), 2.0 * i}));
    const Dataset d = testing::dataset(units, 2);
    CHECK(kind_of([&] { covariate_distance({CovariateMetric::Kind::Mahalanobis, 0.0}, d); }) ==
          ErrorKind::SingularCovariance);
    CHECK_NOTHROW(covariate_distance({CovariateMetric::Kind::Mahalanobis, 0.1}, d));
}

TEST_CASE("stage 1 distance") {
    Eigen::MatrixXd delta(3, 3);
    delta << 0, 2, 1, 2, 0, 3, 1, 3, 0;
    const Eigen::MatrixXd s = stage1_distance(delta, {0.3, 0.8, 0.3});
    CHECK(s(0, 1) == doctest::Approx(8.0));
    CHECK(s(1, 0) == s(0, 1));
    CHECK(s(0, 2) == infeasible_sentinel());
    CHECK(s(1, 1) == infeasible_sentinel());
    CHECK(infeasible_sentinel() == 1e15);

    const Eigen::MatrixXd b = stage1_distance(delta, {0.0, 1.0, 1.0});
    CHECK(b(0, 1) == 2.0);
    CHECK(b(0, 2) == 1.0);

    const Eigen::MatrixXd scaled = stage1_distance(delta * 3.0, {0.3, 0.8, 0.1});
    const Eigen::MatrixXd base = stage1_distance(delta, {0.3, 0.8, 0.1});
    CHECK(scaled(0, 1) == doctest::Approx(3.0 * base(0, 1)));
    CHECK(scaled(1, 2) == doctest::Approx(3.0 * base(1, 2)));
}

namespace {

struct Quad {
    Dataset d;
    Eigen::MatrixXd delta;
};

Quad quad(const std::array<DosePair, 4>& z, double off_diagonal = 1.0) {
    std::vector<Unit> units;
    for (int i = 0; i < 4; ++i) units.push_back(unit("u" + std::to_string(i + 1), z[i].z1, z[i].z2));
    Eigen::MatrixXd delta = Eigen::MatrixXd::Constant(4, 4, off_diagonal);
    delta.diagonal().setZero();
    return {testing::dataset(units), delta};
}

}  // namespace

TEST_CASE("worked quadruple triggers the first-treatment penalty") {
    const Quad q = quad({{{0.31, 0.30}, {0.35, 0.82}, {0.74, 0.23}, {0.86, 0.71}}});
    const PairRecord a{0, 2, 0}, b{1, 3, 1};
    const PenaltyConfig pen;
    const Stage2Value v = stage2_distance(a, b, q.delta, q.d, pen, Lead::Z1);
    CHECK(v.b1);
    CHECK(v.penalized);

    auto term = [&](std::size_t i, std::size_t j) {
        const Unit& x = q.d.unit(i);
        const Unit& y = q.d.unit(j);
        return (q.delta(i, j) + (x.z1 - y.z1) * (x.z1 - y.z1)) / ((x.z2 - y.z2) * (x.z2 - y.z2));
    };
    const double hihi = term(2, 3) + term(0, 1);
    const double hilo = term(2, 1) + term(0, 3);
    CHECK(v.value == doctest::Approx(std::min(hihi, hilo) + 5000.0).epsilon(1e-14));
    CHECK(v.alignment == (hihi <= hilo ? Alignment::HiHi : Alignment::HiLo));
}

TEST_CASE("close, interleaved pairs are not penalized") {
    const Quad q = quad({{{0.80, 0.20}, {0.20, 0.21}, {0.81, 0.70}, {0.21, 0.71}}});
    const Stage2Value v = stage2_distance({0, 0, 1}, {1, 2, 3}, q.delta, q.d, PenaltyConfig{}, Lead::Z1);
    CHECK_FALSE(v.b1);
    CHECK_FALSE(v.b2);
    CHECK_FALSE(v.b3);
    CHECK_FALSE(v.penalized);
}

TEST_CASE("hand fixture picks the cheaper alignment") {
    // a=(1,1) b=(0,1) c=(1,0) e=(0,0); pairs (a,b) and (c,e) under lead z1.
    Quad q = quad({{{1, 1}, {0, 1}, {1, 0}, {0, 0}}});
    q.delta(0, 2) = q.delta(2, 0) = 1.5;  // a-c
    q.delta(1, 3) = q.delta(3, 1) = 1.5;  // b-e
    q.delta(0, 3) = q.delta(3, 0) = 0.1;  // a-e
    q.delta(1, 2) = q.delta(2, 1) = 0.1;  // b-c
    const Stage2Value v = stage2_distance({0, 0, 1}, {1, 2, 3}, q.delta, q.d, PenaltyConfig{}, Lead::Z1);
    CHECK(v.value == doctest::Approx(2.2));
    CHECK(v.alignment == Alignment::HiLo);
    CHECK_FALSE(v.penalized);
}

TEST_CASE("stage 2 distance is symmetric in its pairs and penalties add exactly W") {
    for (int t = 0; t < 50; ++t) {
        std::array<DosePair, 4> z;
        for (int i = 0; i < 4; ++i) z[i] = {0.1 + 0.8 * std::abs(std::sin(t * 7.1 + i * 3.3)), 0.1 + 0.8 * std::abs(std::cos(t * 5.3 + i * 1.7))};
        if (z[0].z1 < z[1].z1) std::swap(z[0], z[1]);
        if (z[2].z1 < z[3].z1) std::swap(z[2], z[3]);
        const Quad q = quad(z, 0.5);
        const PairRecord a{0, 0, 1}, b{1, 2, 3};
        PenaltyConfig pen;
        Stage2Value v1, v2;
        try {
            v1 = stage2_distance(a, b, q.delta, q.d, pen, Lead::Z1);
            v2 = stage2_distance(b, a, q.delta, q.d, pen, Lead::Z1);
        } catch (const Error&) {
            continue;
        }
        CHECK(v1.value == v2.value);
        pen.weight = 1e-300;
        const Stage2Value v0 = stage2_distance(a, b, q.delta, q.d, pen, Lead::Z1);
        const double diff = v1.value - v0.value;
        CHECK((diff == doctest::Approx(0.0) || diff == doctest::Approx(5000.0)));
        CHECK((diff > 1.0) == v1.penalized);
    }
}

TEST_CASE("equal second doses make both alignments infeasible") {
    const Quad q = quad({{{0.9, 0.5}, {0.1, 0.5}, {0.8, 0.5}, {0.2, 0.5}}});
    CHECK(kind_of([&] { stage2_distance({0, 0, 1}, {1, 2, 3}, q.delta, q.d, PenaltyConfig{}, Lead::Z1); }) ==
          ErrorKind::BothAlignmentsInfeasible);
}

TEST_CASE("binary quadruples never trigger the gap penalties") {
    const std::array<DosePair, 4> by_label = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
    for (double t : {0.001, 0.05, 0.5, 0.999}) {
        const PenaltyFlags f = penalty_flags(by_label, {5000.0, t, t}, Lead::Z1);
        CHECK_FALSE(f.b1);
        CHECK_FALSE(f.b2);
        CHECK_FALSE(f.b3);
    }
}

TEST_CASE("two-pattern quadruples trigger the pattern penalty") {
    // High-lead units both have larger z2 than both low-lead units.
    const std::array<DosePair, 4> by_label = {{{0.2, 0.1}, {0.21, 0.2}, {0.8, 0.6}, {0.81, 0.7}}};
    CHECK(penalty_flags(by_label, PenaltyConfig{}, Lead::Z1).b3);
    const std::array<DosePair, 4> tie = {{{0.2, 0.1}, {0.21, 0.6}, {0.8, 0.6}, {0.81, 0.7}}};
    CHECK_FALSE(penalty_flags(tie, PenaltyConfig{}, Lead::Z1).b3);
}

TEST_CASE("penalty config validation") {
    CHECK(kind_of([] { PenaltyConfig{-1.0, 0.05, 0.05}.validate(); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { PenaltyConfig{1.0, 0.0, 0.05}.validate(); }) == ErrorKind::InvalidConfig);
    CHECK(parse_metric_kind("rank_mahalanobis") == CovariateMetric::Kind::RankMahalanobis);
}
