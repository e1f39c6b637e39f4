#include "factmatch/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "factmatch/error.hpp"
#include "factmatch/matching.hpp"

namespace factmatch {

CovariateMetric::Kind parse_metric_kind(const std::string& text) {
    if (text == "mahalanobis") return CovariateMetric::Kind::Mahalanobis;
    if (text == "rank_mahalanobis" || text == "rank-mahalanobis") return CovariateMetric::Kind::RankMahalanobis;
    if (text == "euclidean") return CovariateMetric::Kind::Euclidean;
    fail(ErrorKind::InvalidConfig, "unknown distance kind '" + text + "' (mahalanobis, rank_mahalanobis, euclidean)");
}

std::string to_string(CovariateMetric::Kind kind) {
    switch (kind) {
        case CovariateMetric::Kind::Mahalanobis: return "mahalanobis";
        case CovariateMetric::Kind::RankMahalanobis: return "rank_mahalanobis";
        case CovariateMetric::Kind::Euclidean: return "euclidean";
    }
    return "?";
}

void PenaltyConfig::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!ok(weight)) fail(ErrorKind::InvalidConfig, "penalty.w must be finite and positive");
    if (!ok(threshold_z1)) fail(ErrorKind::InvalidConfig, "penalty.threshold_z1 must be finite and positive");
    if (!ok(threshold_z2)) fail(ErrorKind::InvalidConfig, "penalty.threshold_z2 must be finite and positive");
}

double infeasible_sentinel() { return kInfeasibleSentinel; }

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

template <class F>
void parallel_rows(std::size_t n, unsigned threads, F&& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

Eigen::MatrixXd covariate_distance(const CovariateMetric& metric, const Dataset& d, unsigned threads) {
    const std::size_t n = d.size();
    const std::size_t k = d.n_covariates();
    if (n < 2) fail(ErrorKind::TooFewUnits, "covariate distance needs at least 2 units");
    if (!std::isfinite(metric.regularization) || metric.regularization < 0.0) {
        fail(ErrorKind::InvalidConfig, "distance.regularization must be finite and non-negative");
    }
    Eigen::MatrixXd x(n, k);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> col = d.covariate_column(c);
        if (metric.kind == CovariateMetric::Kind::RankMahalanobis) col = average_ranks(col);
        for (std::size_t i = 0; i < n; ++i) x(i, c) = col[i];
    }

    // Whitening turns the Mahalanobis form into a plain Euclidean norm.
    Eigen::MatrixXd z = x;
    if (metric.kind != CovariateMetric::Kind::Euclidean && k > 0) {
        const Eigen::RowVectorXd mean = x.colwise().mean();
        const Eigen::MatrixXd centered = x.rowwise() - mean;
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
        cov.diagonal().array() += metric.regularization;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12) {
            fail(ErrorKind::SingularCovariance,
                 "covariate covariance is singular (condition number " +
                     (lo > 0.0 ? format_double(hi / lo) : std::string("inf")) +
                     "); drop collinear or constant columns or raise distance.regularization");
        }
        const Eigen::VectorXd inv_sqrt = eig.eigenvalues().array().rsqrt();
        z = x * eig.eigenvectors() * inv_sqrt.asDiagonal();
    }

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    parallel_rows(n, threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double diff = z(i, c) - z(j, c);
                s += diff * diff;
            }
            out(i, j) = std::sqrt(s);
        }
    });
    // Use one triangle so the matrix is exactly symmetric.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) out(j, i) = out(i, j);
    }
    return out;
}

Eigen::MatrixXd stage1_distance(const Eigen::MatrixXd& delta, const std::vector<double>& lead_doses) {
    const Eigen::Index n = delta.rows();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, i) = kInfeasibleSentinel;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double gap = lead_doses[i] - lead_doses[j];
            double v = gap == 0.0 ? kInfeasibleSentinel : delta(i, j) / (gap * gap);
            if (!(v < kInfeasibleSentinel)) v = kInfeasibleSentinel;
            out(i, j) = out(j, i) = v;
        }
    }
    return out;
}

PenaltyFlags penalty_flags(const std::array<DosePair, 4>& z, const PenaltyConfig& pen, Lead lead) {
    const DosePair& ll = z[index_of(DoseLabel::LL)];
    const DosePair& lh = z[index_of(DoseLabel::LH)];
    const DosePair& hl = z[index_of(DoseLabel::HL)];
    const DosePair& hh = z[index_of(DoseLabel::HH)];
    PenaltyFlags f;
    f.b1 = std::abs(hh.z1 - hl.z1) > pen.threshold_z1 || std::abs(lh.z1 - ll.z1) > pen.threshold_z1;
    f.b2 = std::abs(hh.z2 - lh.z2) > pen.threshold_z2 || std::abs(hl.z2 - ll.z2) > pen.threshold_z2;
    // Only two dose patterns: the high-lead units sit entirely above or below
    // the low-lead units on the other treatment.
    double a1, a2, b1, b2;
    if (lead == Lead::Z1) {
        a1 = hh.z2, a2 = hl.z2, b1 = lh.z2, b2 = ll.z2;
    } else {
        a1 = hh.z1, a2 = lh.z1, b1 = hl.z1, b2 = ll.z1;
    }
    const double a_min = std::min(a1, a2), a_max = std::max(a1, a2);
    const double b_min = std::min(b1, b2), b_max = std::max(b1, b2);
    f.b3 = a_min > b_max || a_max < b_min;
    return f;
}

namespace {

// One cross-pair term; false when the gap in the other treatment is zero.
bool pair_term(std::size_t u, std::size_t v, const Eigen::MatrixXd& delta, const Dataset& d, Lead lead, double& out) {
    const DosePair zu = d.unit(u).doses();
    const DosePair zv = d.unit(v).doses();
    const double other_gap = zu.other(lead) - zv.other(lead);
    if (other_gap == 0.0) return false;
    const double lead_gap = zu.lead(lead) - zv.lead(lead);
    out = (delta(u, v) + lead_gap * lead_gap) / (other_gap * other_gap);
    return true;
}

}  // namespace

Stage2Value stage2_distance(const PairRecord& qa, const PairRecord& qb, const Eigen::MatrixXd& delta, const Dataset& d,
                            const PenaltyConfig& pen, Lead lead) {
    double a1 = 0, a2 = 0, b1 = 0, b2 = 0;
    const bool ok_a = pair_term(qa.hi, qb.hi, delta, d, lead, a1) && pair_term(qa.lo, qb.lo, delta, d, lead, a2);
    const bool ok_b = pair_term(qa.hi, qb.lo, delta, d, lead, b1) && pair_term(qa.lo, qb.hi, delta, d, lead, b2);
    if (!ok_a && !ok_b) {
        fail(ErrorKind::BothAlignmentsInfeasible, "pairs " + std::to_string(qa.q) + " and " + std::to_string(qb.q) +
                                                      ": both alignments have a zero " +
                                                      std::string(to_string(lead == Lead::Z1 ? Lead::Z2 : Lead::Z1)) +
                                                      " gap");
    }
    Stage2Value r;
    const double va = a1 + a2;
    const double vb = b1 + b2;
    if (ok_a && (!ok_b || va <= vb)) {
        r.value = va;
        r.alignment = Alignment::HiHi;
    } else {
        r.value = vb;
        r.alignment = Alignment::HiLo;
    }

    const std::array<std::size_t, 4> idx = {qa.hi, qa.lo, qb.hi, qb.lo};
    std::array<LabelInput, 4> in;
    for (int t = 0; t < 4; ++t) in[t] = {d.unit(idx[t]).id, d.unit(idx[t]).doses()};
    const std::array<DoseLabel, 4> labels = assign_labels(in, lead);
    std::array<DosePair, 4> by_label;
    for (int t = 0; t < 4; ++t) by_label[index_of(labels[t])] = in[t].doses;
    const PenaltyFlags f = penalty_flags(by_label, pen, lead);
    r.b1 = f.b1;
    r.b2 = f.b2;
    r.b3 = f.b3;
    r.penalized = f.any();
    if (r.penalized) r.value += pen.weight;
    return r;
}

}  // namespace factmatch
