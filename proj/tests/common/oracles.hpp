#pragma once

// Reference computations written straight from the estimand and estimator
// definitions, kept separate from the library code they check.

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "factmatch/data_model.hpp"

namespace oracle {

using Doses = std::array<factmatch::DosePair, 4>;  // by label LL, LH, HL, HH
using Outcomes = std::array<double, 4>;             // by label
using Potentials = std::array<std::array<double, 4>, 4>;  // [unit][label]

enum { LL = 0, LH = 1, HL = 2, HH = 3 };

inline double zbar1_h(const Doses& z) { return (z[HH].z1 + z[HL].z1) / 2; }
inline double zbar1_l(const Doses& z) { return (z[LH].z1 + z[LL].z1) / 2; }
inline double zbar2_h(const Doses& z) { return (z[HH].z2 + z[LH].z2) / 2; }
inline double zbar2_l(const Doses& z) { return (z[HL].z2 + z[LL].z2) / 2; }

/// Stratum contribution for estimand a (1..4) from outcomes observed at each label.
inline double contribution(const Doses& z, const Outcomes& y, int a) {
    switch (a) {
        case 1: return ((y[HH] + y[HL]) / 2 - (y[LH] + y[LL]) / 2) / (zbar1_h(z) - zbar1_l(z));
        case 2: return ((y[HH] + y[LH]) / 2 - (y[HL] + y[LL]) / 2) / (zbar2_h(z) - zbar2_l(z));
        case 3:
            return ((y[HH] - y[LH]) / (z[HH].z1 - z[LH].z1) - (y[HL] - y[LL]) / (z[HL].z1 - z[LL].z1)) /
                   (zbar2_h(z) - zbar2_l(z));
        default:
            return ((y[HH] - y[HL]) / (z[HH].z2 - z[HL].z2) - (y[LH] - y[LL]) / (z[LH].z2 - z[LL].z2)) /
                   (zbar1_h(z) - zbar1_l(z));
    }
}

/// Unit-level effect for estimand a from one unit's four potential outcomes.
inline double unit_effect(const Doses& z, const std::array<double, 4>& po, int a) {
    switch (a) {
        case 1: return ((po[HH] + po[HL]) / 2 - (po[LH] + po[LL]) / 2) / (zbar1_h(z) - zbar1_l(z));
        case 2: return ((po[HH] + po[LH]) / 2 - (po[HL] + po[LL]) / 2) / (zbar2_h(z) - zbar2_l(z));
        case 3: {
            const double lh = (po[HH] - po[LH]) / (z[HH].z1 - z[LH].z1);
            const double ll = (po[HL] - po[LL]) / (z[HL].z1 - z[LL].z1);
            return (lh - ll) / (zbar2_h(z) - zbar2_l(z));
        }
        default: {
            const double lh = (po[HH] - po[HL]) / (z[HH].z2 - z[HL].z2);
            const double ll = (po[LH] - po[LL]) / (z[LH].z2 - z[LL].z2);
            return (lh - ll) / (zbar1_h(z) - zbar1_l(z));
        }
    }
}

inline std::array<double, 4> estimands(const std::vector<Potentials>& po, const std::vector<Doses>& z) {
    std::array<double, 4> t{};
    for (int a = 1; a <= 4; ++a) {
        double s = 0.0;
        for (std::size_t i = 0; i < po.size(); ++i) {
            for (int j = 0; j < 4; ++j) s += unit_effect(z[i], po[i][j], a);
        }
        t[a - 1] = s / (4.0 * po.size());
    }
    return t;
}

/// All 24 orderings of {0,1,2,3}; perm[j] is the label given to unit j.
inline std::vector<std::array<int, 4>> all_orders() {
    std::vector<std::array<int, 4>> out;
    std::array<int, 4> p = {0, 1, 2, 3};
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

/// Sum over the pair (V_i - Vbar)^2 / (I (I - 1)).
inline double neyman_variance(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (double(v.size()) * (v.size() - 1));
}

}  // namespace oracle
