#include "factmatch/neyman.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>

#include "factmatch/error.hpp"

namespace factmatch {

namespace {

const DosePair& at(const DoseSet& z, DoseLabel l) { return z[index_of(l)]; }

void require_nonzero(double denom, const char* what) {
    if (denom == 0.0) fail(ErrorKind::DegenerateStratum, std::string("zero denominator: ") + what);
}

}  // namespace

double zbar1_high(const DoseSet& z) { return (at(z, DoseLabel::HH).z1 + at(z, DoseLabel::HL).z1) / 2.0; }
double zbar1_low(const DoseSet& z) { return (at(z, DoseLabel::LH).z1 + at(z, DoseLabel::LL).z1) / 2.0; }
double zbar2_high(const DoseSet& z) { return (at(z, DoseLabel::HH).z2 + at(z, DoseLabel::LH).z2) / 2.0; }
double zbar2_low(const DoseSet& z) { return (at(z, DoseLabel::HL).z2 + at(z, DoseLabel::LL).z2) / 2.0; }

std::array<double, 4> contribution_weights(const DoseSet& z, int a) {
    using L = DoseLabel;
    std::array<double, 4> w{};
    auto put = [&](L l, double v) { w[index_of(l)] = v; };
    const double d1 = zbar1_high(z) - zbar1_low(z);
    const double d2 = zbar2_high(z) - zbar2_low(z);
    switch (a) {
        case 1: {
            require_nonzero(d1, "mean high z1 minus mean low z1");
            const double c = 0.5 / d1;
            put(L::HH, c), put(L::HL, c), put(L::LH, -c), put(L::LL, -c);
            break;
        }
        case 2: {
            require_nonzero(d2, "mean high z2 minus mean low z2");
            const double c = 0.5 / d2;
            put(L::HH, c), put(L::LH, c), put(L::HL, -c), put(L::LL, -c);
            break;
        }
        case 3: {
            const double gh = at(z, L::HH).z1 - at(z, L::LH).z1;
            const double gl = at(z, L::HL).z1 - at(z, L::LL).z1;
            require_nonzero(d2, "mean high z2 minus mean low z2");
            require_nonzero(gh, "z1(HH) - z1(LH)");
            require_nonzero(gl, "z1(HL) - z1(LL)");
            const double ch = 1.0 / (gh * d2);
            const double cl = 1.0 / (gl * d2);
            put(L::HH, ch), put(L::LH, -ch), put(L::HL, -cl), put(L::LL, cl);
            break;
        }
        case 4: {
            const double gh = at(z, L::HH).z2 - at(z, L::HL).z2;
            const double gl = at(z, L::LH).z2 - at(z, L::LL).z2;
            require_nonzero(d1, "mean high z1 minus mean low z1");
            require_nonzero(gh, "z2(HH) - z2(HL)");
            require_nonzero(gl, "z2(LH) - z2(LL)");
            const double ch = 1.0 / (gh * d1);
            const double cl = 1.0 / (gl * d1);
            put(L::HH, ch), put(L::HL, -ch), put(L::LH, -cl), put(L::LL, cl);
            break;
        }
        default: fail(ErrorKind::InvalidConfig, "estimand index must be 1..4, got " + std::to_string(a));
    }
    return w;
}

double apply_weights(const std::array<double, 4>& w, const LabelOutcomes& y) {
    double s = 0.0;
    for (DoseLabel l : kAllLabels) s += w[index_of(l)] * y[index_of(l)];
    return s;
}

double stratum_contribution(const DoseSet& z, const LabelOutcomes& y, int a) {
    return apply_weights(contribution_weights(z, a), y);
}

std::string QSpec::describe() const {
    if (kind == Kind::Ones) return "ones";
    std::string s = "covmeans(";
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
    return s + ")";
}

QSpec q_ones(std::size_t n_strata) {
    QSpec q;
    q.matrix = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n_strata), 1);
    return q;
}

QSpec q_covariate_means(const Design& design, const Dataset& d, const std::vector<std::string>& columns) {
    QSpec q;
    q.kind = QSpec::Kind::CovariateMeans;
    q.columns = columns.empty() ? d.covariate_names() : columns;
    std::vector<std::size_t> idx;
    for (const auto& c : q.columns) {
        auto it = std::find(d.covariate_names().begin(), d.covariate_names().end(), c);
        if (it == d.covariate_names().end()) fail(ErrorKind::MissingColumn, "Q column '" + c + "' is not a covariate");
        idx.push_back(static_cast<std::size_t>(it - d.covariate_names().begin()));
    }
    const auto n = static_cast<Eigen::Index>(design.strata.size());
    q.matrix.resize(n, static_cast<Eigen::Index>(idx.size()) + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        q.matrix(i, 0) = 1.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            double s = 0.0;
            for (DoseLabel l : kAllLabels) s += d.unit(d.index_of_id(design.strata[i].member(l))).covariates[idx[k]];
            q.matrix(i, static_cast<Eigen::Index>(k) + 1) = s / 4.0;
        }
    }
    return q;
}

Projection make_projection(const Eigen::MatrixXd& q) {
    const Eigen::Index n = q.rows();
    const Eigen::Index l = q.cols();
    if (n < l + 1) {
        fail(ErrorKind::TooFewStrata, "need more strata than Q columns: I = " + std::to_string(n) +
                                          ", L = " + std::to_string(l));
    }
    if (!q.allFinite()) fail(ErrorKind::NonFiniteValue, "Q has non-finite entries");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(q);
    qr.setThreshold(1e-10);
    if (qr.rank() < l) {
        fail(ErrorKind::RankDeficientQ, "Q has rank " + std::to_string(qr.rank()) + " < " + std::to_string(l) +
                                            " columns (collinear covariate means?)");
    }
    Projection p;
    p.basis = qr.householderQ() * Eigen::MatrixXd::Identity(n, l);
    p.leverage = p.basis.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (p.leverage(i) >= 1.0 - 1e-10) {
            fail(ErrorKind::LeverageOne, "stratum " + std::to_string(i + 1) + " has leverage " +
                                             format_double(p.leverage(i)) + " (at or near 1)");
        }
    }
    return p;
}

double variance_estimate(const std::vector<double>& v, const Projection& p) {
    const Eigen::Index n = p.basis.rows();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = v[i] / std::sqrt(1.0 - p.leverage(i));
    const Eigen::VectorXd r = y - p.basis * (p.basis.transpose() * y);
    return r.squaredNorm() / (static_cast<double>(n) * static_cast<double>(n));
}

double normal_quantile(double prob) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, prob);
}

EffectEstimate estimate_from_contributions(int a, std::vector<double> v, const QSpec& q, const Projection& p,
                                           double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) {
        fail(ErrorKind::InvalidConfig, "alpha must lie in (0, 0.5), got " + format_double(alpha));
    }
    const std::size_t n = v.size();
    EffectEstimate e;
    e.estimand = a;
    e.alpha = alpha;
    e.n_strata = n;
    e.q_spec = q.describe();
    e.tau_hat = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    e.variance = variance_estimate(v, p);
    e.se = std::sqrt(e.variance);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    e.ci_low = e.tau_hat - z * e.se;
    e.ci_high = e.tau_hat + z * e.se;

    EstimateDiagnostics& dg = e.diagnostics;
    dg.max_abs_q = q.matrix.cwiseAbs().maxCoeff();
    dg.leverage_min = p.leverage.minCoeff();
    dg.leverage_max = p.leverage.maxCoeff();
    dg.leverage_mean = p.leverage.mean();
    double ss = 0.0;
    for (double x : v) ss += (x - e.tau_hat) * (x - e.tau_hat);
    dg.contribution_sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    dg.high_leverage = dg.leverage_max > 0.9;
    e.per_stratum_v = std::move(v);
    return e;
}

EffectEstimate estimate(const Design& design, const std::vector<LabelOutcomes>& outcomes, int a, const QSpec& q,
                        double alpha) {
    const std::size_t n = design.strata.size();
    if (outcomes.size() != n) fail(ErrorKind::MissingOutcome, "outcome rows do not match the number of strata");
    if (static_cast<std::size_t>(q.matrix.rows()) != n) {
        fail(ErrorKind::InvalidConfig, "Q has " + std::to_string(q.matrix.rows()) + " rows for " + std::to_string(n) +
                                           " strata");
    }
    const Projection p = make_projection(q.matrix);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            v[i] = stratum_contribution(design.strata[i].dose_set, outcomes[i], a);
        } catch (const Error& err) {
            fail(err.kind(), "stratum " + std::to_string(design.strata[i].stratum_index) + ": " + err.what());
        }
    }
    return estimate_from_contributions(a, std::move(v), q, p, alpha);
}

std::array<double, 4> true_estimands(const std::vector<StratumPotentials>& po, const std::vector<DoseSet>& doses) {
    using L = DoseLabel;
    if (po.size() != doses.size() || po.empty()) {
        fail(ErrorKind::InvalidConfig, "potential-outcome table and dose sets must be nonempty and the same size");
    }
    std::array<double, 4> sum{};
    for (std::size_t i = 0; i < po.size(); ++i) {
        const DoseSet& z = doses[i];
        const double d1 = zbar1_high(z) - zbar1_low(z);
        const double d2 = zbar2_high(z) - zbar2_low(z);
        const double g1h = at(z, L::HH).z1 - at(z, L::LH).z1;
        const double g1l = at(z, L::HL).z1 - at(z, L::LL).z1;
        const double g2h = at(z, L::HH).z2 - at(z, L::HL).z2;
        const double g2l = at(z, L::LH).z2 - at(z, L::LL).z2;
        for (double g : {d1, d2, g1h, g1l, g2h, g2l}) {
            if (g == 0.0) fail(ErrorKind::DegenerateStratum, "stratum " + std::to_string(i + 1) + " has a zero dose gap");
        }
        for (const auto& unit : po[i]) {
            auto y = [&](L l) { return unit[index_of(l)]; };
            const double high1 = (y(L::HH) + y(L::HL)) / 2.0;
            const double low1 = (y(L::LH) + y(L::LL)) / 2.0;
            const double high2 = (y(L::HH) + y(L::LH)) / 2.0;
            const double low2 = (y(L::HL) + y(L::LL)) / 2.0;
            const double lambda1_h = (y(L::HH) - y(L::LH)) / g1h;
            const double lambda1_l = (y(L::HL) - y(L::LL)) / g1l;
            const double lambda2_h = (y(L::HH) - y(L::HL)) / g2h;
            const double lambda2_l = (y(L::LH) - y(L::LL)) / g2l;
            sum[0] += (high1 - low1) / d1;
            sum[1] += (high2 - low2) / d2;
            sum[2] += (lambda1_h - lambda1_l) / d2;
            sum[3] += (lambda2_h - lambda2_l) / d1;
        }
    }
    for (double& s : sum) s /= 4.0 * static_cast<double>(po.size());
    return sum;
}

}  // namespace factmatch
