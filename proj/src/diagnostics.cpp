#include "factmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "factmatch/error.hpp"

namespace factmatch {

namespace {

bool all_equal(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// A constant group keeps its exact value so that rounding cannot fake a spread.
double mean_of(const std::vector<double>& v) {
    if (all_equal(v)) return v.front();
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double var_of(const std::vector<double>& v, double m) {
    if (v.size() < 2 || all_equal(v)) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

SmdResult smd(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) fail(ErrorKind::InvalidConfig, "smd needs two nonempty groups");
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double pooled = std::sqrt((var_of(a, ma) + var_of(b, mb)) / 2.0);
    SmdResult r;
    if (pooled == 0.0) {
        if (ma == mb) return r;
        r.zero_variance = true;
        r.value = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        return r;
    }
    r.value = (ma - mb) / pooled;
    return r;
}

const std::array<Contrast, 6>& balance_contrasts() {
    using L = DoseLabel;
    static const std::array<Contrast, 6> all = {Contrast{L::HH, L::HL}, Contrast{L::HH, L::LH},
                                                Contrast{L::HH, L::LL}, Contrast{L::HL, L::LH},
                                                Contrast{L::LH, L::LL}, Contrast{L::HL, L::LL}};
    return all;
}

std::string contrast_name(const Contrast& c) {
    return std::string(to_string(c.first)) + "-" + std::string(to_string(c.second));
}

namespace {

std::vector<BalanceTable> tables_from_groups(const Dataset& d, const std::array<std::vector<std::size_t>, 4>& groups,
                                             BalancePhase phase) {
    std::vector<std::string> names = d.covariate_names();
    names.push_back("z1");
    names.push_back("z2");
    auto value = [&](std::size_t row, std::size_t k) {
        const Unit& u = d.unit(row);
        if (k < d.n_covariates()) return u.covariates[k];
        return k == d.n_covariates() ? u.z1 : u.z2;
    };
    std::vector<BalanceTable> out;
    for (const Contrast& c : balance_contrasts()) {
        BalanceTable t;
        t.contrast = c;
        t.phase = phase;
        const auto& ga = groups[index_of(c.first)];
        const auto& gb = groups[index_of(c.second)];
        t.n_a = ga.size();
        t.n_b = gb.size();
        for (std::size_t k = 0; k < names.size(); ++k) {
            std::vector<double> va, vb;
            for (std::size_t r : ga) va.push_back(value(r, k));
            for (std::size_t r : gb) vb.push_back(value(r, k));
            BalanceRow row;
            row.name = names[k];
            if (!va.empty()) row.mean_a = mean_of(va);
            if (!vb.empty()) row.mean_b = mean_of(vb);
            if (!va.empty() && !vb.empty()) {
                const SmdResult s = smd(va, vb);
                row.smd = s.value;
                row.zero_variance = s.zero_variance;
            } else {
                row.smd = std::numeric_limits<double>::quiet_NaN();
            }
            t.rows.push_back(row);
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

std::vector<BalanceTable> post_match_balance(const Design& design, const Dataset& d) {
    if (design.strata.size() < 2) {
        fail(ErrorKind::TooFewStrata, "post-match balance needs at least 2 complete strata, design has " +
                                          std::to_string(design.strata.size()));
    }
    std::array<std::vector<std::size_t>, 4> groups;
    for (const MatchedStratum& s : design.strata) {
        for (DoseLabel l : kAllLabels) groups[index_of(l)].push_back(d.index_of_id(s.member(l)));
    }
    return tables_from_groups(d, groups, BalancePhase::Post);
}

double median(std::vector<double> v) {
    if (v.empty()) fail(ErrorKind::InvalidConfig, "median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<BalanceTable> pre_match_balance(const Dataset& d) {
    if (d.size() < 4) fail(ErrorKind::TooFewUnits, "pre-match balance needs at least 4 units");
    std::vector<double> z1, z2;
    for (const Unit& u : d.units()) {
        z1.push_back(u.z1);
        z2.push_back(u.z2);
    }
    const double m1 = median(z1);
    const double m2 = median(z2);
    std::array<std::vector<std::size_t>, 4> groups;
    for (std::size_t i = 0; i < d.size(); ++i) {
        groups[index_of(make_label(z1[i] > m1, z2[i] > m2))].push_back(i);
    }
    return tables_from_groups(d, groups, BalancePhase::Pre);
}

std::string balance_csv(const BalanceTable& t) {
    std::ostringstream out;
    out << "covariate,mean_a,mean_b,smd\n";
    for (const BalanceRow& r : t.rows) {
        out << r.name << ',' << format_double(r.mean_a) << ',' << format_double(r.mean_b) << ','
            << format_double(r.smd) << '\n';
    }
    return out.str();
}

std::string balance_file_name(const BalanceTable& t) {
    return std::string(t.phase == BalancePhase::Pre ? "pre_" : "post_") + contrast_name(t.contrast) + ".csv";
}

}  // namespace factmatch
