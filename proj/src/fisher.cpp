#include "factmatch/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "factmatch/error.hpp"

namespace factmatch {

NullFamily parse_null_family(const std::string& text) {
    if (text == "noeffect" || text == "none") return NullFamily::NoEffect;
    if (text == "linear") return NullFamily::Linear;
    if (text == "linear_covariate" || text == "linear-covariate") return NullFamily::LinearCovariate;
    if (text == "single_index" || text == "single-index" || text == "sim") return NullFamily::SingleIndex;
    fail(ErrorKind::InvalidConfig, "unknown null family '" + text +
                                       "' (noeffect, linear, linear_covariate, single_index)");
}

std::string to_string(NullFamily f) {
    switch (f) {
        case NullFamily::NoEffect: return "noeffect";
        case NullFamily::Linear: return "linear";
        case NullFamily::LinearCovariate: return "linear_covariate";
        case NullFamily::SingleIndex: return "single_index";
    }
    return "?";
}

std::function<double(double)> named_link(const std::string& name) {
    if (name == "identity") return [](double u) { return u; };
    if (name == "expm1") return [](double u) { return std::expm1(u); };
    if (name == "tanh") return [](double u) { return std::tanh(u); };
    if (name == "cube") return [](double u) { return u * u * u; };
    fail(ErrorKind::InvalidConfig, "unknown link '" + name + "' (identity, expm1, tanh, cube)");
}

std::size_t SharpNull::dimension(NullFamily f) {
    switch (f) {
        case NullFamily::NoEffect: return 0;
        case NullFamily::Linear: return 2;
        case NullFamily::LinearCovariate: return 3;
        case NullFamily::SingleIndex: return 3;
    }
    return 0;
}

void SharpNull::validate() const {
    if (theta.size() != dimension(family)) {
        fail(ErrorKind::InvalidConfig, to_string(family) + " null takes " + std::to_string(dimension(family)) +
                                           " parameters, got " + std::to_string(theta.size()));
    }
    for (double t : theta) {
        if (!std::isfinite(t)) fail(ErrorKind::InvalidConfig, "null parameters must be finite");
    }
    if (!std::isfinite(reference.z1) || !std::isfinite(reference.z2)) {
        fail(ErrorKind::InvalidConfig, "reference doses must be finite");
    }
    if (family == NullFamily::LinearCovariate && covariate.empty()) {
        fail(ErrorKind::InvalidConfig, "linear_covariate null needs a covariate name");
    }
    if (family == NullFamily::SingleIndex) {
        double sum = 0.0;
        for (double t : theta) {
            if (t < 0.0 || t > 1.0) fail(ErrorKind::InvalidConfig, "single-index weights must lie in [0, 1]");
            sum += t;
        }
        if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::InvalidConfig, "single-index weights must sum to 1");
        if (std::abs(named_link(link_name)(0.0)) > 1e-12) {
            fail(ErrorKind::InvalidConfig, "link must vanish at 0 so the effect is zero at the reference dose");
        }
    }
}

double SharpNull::effect(const DosePair& z, double x) const {
    const double d1 = z.z1 - reference.z1;
    const double d2 = z.z2 - reference.z2;
    switch (family) {
        case NullFamily::NoEffect: return 0.0;
        case NullFamily::Linear: return theta[0] * d1 + theta[1] * d2;
        case NullFamily::LinearCovariate: return theta[0] * d1 + theta[1] * d2 + theta[2] * x * d1;
        case NullFamily::SingleIndex: {
            const double index = theta[0] * d1 + theta[1] * d2 + theta[2] * (z.z1 * z.z2 - reference.z1 * reference.z2);
            return named_link(link_name)(index);
        }
    }
    return 0.0;
}

std::string SharpNull::describe() const {
    std::ostringstream s;
    s << to_string(family);
    if (!theta.empty()) {
        s << " theta=(";
        for (std::size_t i = 0; i < theta.size(); ++i) s << (i ? "," : "") << format_double(theta[i]);
        s << ") ref=(" << format_double(reference.z1) << "," << format_double(reference.z2) << ")";
    }
    if (family == NullFamily::LinearCovariate) s << " covariate=" << covariate;
    if (family == NullFamily::SingleIndex) s << " link=" << link_name;
    return s.str();
}

std::vector<LabelOutcomes> adjust_outcomes(const Design& design, const std::vector<LabelOutcomes>& y,
                                           const Dataset* d, const SharpNull& null) {
    null.validate();
    if (y.size() != design.strata.size()) fail(ErrorKind::MissingOutcome, "outcome rows do not match the strata");
    std::size_t cov = 0;
    if (null.family == NullFamily::LinearCovariate) {
        if (!d) fail(ErrorKind::InvalidConfig, "linear_covariate null needs the dataset");
        auto it = std::find(d->covariate_names().begin(), d->covariate_names().end(), null.covariate);
        if (it == d->covariate_names().end()) {
            fail(ErrorKind::MissingColumn, "covariate '" + null.covariate + "' not in dataset");
        }
        cov = static_cast<std::size_t>(it - d->covariate_names().begin());
    }
    std::vector<LabelOutcomes> out = y;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const MatchedStratum& s = design.strata[i];
        for (DoseLabel l : kAllLabels) {
            double x = 0.0;
            if (null.family == NullFamily::LinearCovariate) x = d->unit(d->index_of_id(s.member(l))).covariates[cov];
            out[i][index_of(l)] = y[i][index_of(l)] - null.effect(s.doses(l), x);
        }
    }
    return out;
}

const std::array<std::array<std::uint8_t, 4>, 24>& label_permutations() {
    static const auto table = [] {
        std::array<std::array<std::uint8_t, 4>, 24> t{};
        std::array<std::uint8_t, 4> p = {0, 1, 2, 3};
        int k = 0;
        do {
            t[k++] = p;
        } while (std::next_permutation(p.begin(), p.end()));
        return t;
    }();
    return table;
}

TestStatistic TestStatistic::abs_tau(int a) { return {Kind::AbsTau, {a}}; }
TestStatistic TestStatistic::sum_abs_tau(std::vector<int> estimands) { return {Kind::SumAbsTau, std::move(estimands)}; }
TestStatistic TestStatistic::quadratic_form(std::vector<int> estimands) {
    return {Kind::QuadraticForm, std::move(estimands)};
}

TestStatistic TestStatistic::parse(const std::string& text) {
    auto list = [&](const std::string& tail, std::vector<int> fallback) {
        if (tail.empty()) return fallback;
        std::vector<int> out;
        std::stringstream ss(tail);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.size() != 1 || tok[0] < '1' || tok[0] > '4') {
                fail(ErrorKind::InvalidConfig, "statistic estimands must be drawn from 1..4");
            }
            out.push_back(tok[0] - '0');
        }
        return out;
    };
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head.size() == 7 && head.rfind("abstau", 0) == 0 && head[6] >= '1' && head[6] <= '4') {
        return abs_tau(head[6] - '0');
    }
    if (head == "sumabstau") return sum_abs_tau(list(tail, {1, 2}));
    if (head == "quadratic") return quadratic_form(list(tail, {1, 2, 3, 4}));
    fail(ErrorKind::InvalidConfig, "unknown statistic '" + text + "' (abstau1..abstau4, sumabstau, quadratic)");
}

std::string TestStatistic::describe() const {
    std::string list;
    for (std::size_t i = 0; i < estimands.size(); ++i) list += (i ? "," : "") + std::to_string(estimands[i]);
    switch (kind) {
        case Kind::AbsTau: return "abstau" + list;
        case Kind::SumAbsTau: return "sumabstau:" + list;
        case Kind::QuadraticForm: return "quadratic:" + list;
    }
    return "?";
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint8_t keyed_permutation(std::uint64_t seed, std::uint64_t draw, std::uint64_t stratum) {
    // Largest multiple of 24 representable; values at or above it are redrawn.
    constexpr std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 24 * 24;
    const std::uint64_t base = splitmix64(splitmix64(splitmix64(seed) ^ draw) ^ stratum);
    for (std::uint64_t counter = 0;; ++counter) {
        const std::uint64_t v = splitmix64(base ^ splitmix64(counter));
        if (v < limit) return static_cast<std::uint8_t>(v % 24);
    }
}

PermutationTable::PermutationTable(const std::vector<DoseSet>& doses, const std::vector<LabelOutcomes>& adjusted,
                                   const TestStatistic& stat)
    : n_(doses.size()), stat_(stat), used_(stat.estimands) {
    if (used_.empty()) fail(ErrorKind::InvalidConfig, "test statistic uses no estimands");
    if (stat.kind == TestStatistic::Kind::AbsTau && used_.size() != 1) {
        fail(ErrorKind::InvalidConfig, "abstau takes exactly one estimand");
    }
    if (stat.kind == TestStatistic::Kind::QuadraticForm && n_ < 2) {
        fail(ErrorKind::TooFewStrata, "quadratic statistic needs at least 2 strata");
    }
    if (adjusted.size() != n_) fail(ErrorKind::MissingOutcome, "outcome rows do not match the strata");
    const auto& perms = label_permutations();
    const std::size_t k = used_.size();
    v_.assign(n_ * 24 * k, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t s = 0; s < k; ++s) {
            std::array<double, 4> w;
            try {
                w = contribution_weights(doses[i], used_[s]);
            } catch (const Error& e) {
                fail(e.kind(), "stratum " + std::to_string(i + 1) + ": " + e.what());
            }
            for (std::size_t p = 0; p < 24; ++p) {
                double acc = 0.0;
                for (std::size_t l = 0; l < 4; ++l) acc += w[perms[p][l]] * adjusted[i][l];
                v_[(i * 24 + p) * k + s] = acc;
            }
        }
    }
}

double PermutationTable::evaluate(const std::uint8_t* perm) const {
    const std::size_t k = used_.size();
    const double n = static_cast<double>(n_);
    double total = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_; ++i) sum += v_[(i * 24 + perm[i]) * k + s];
        const double tau = sum / n;
        if (stat_.kind != TestStatistic::Kind::QuadraticForm) {
            total += std::abs(tau);
            continue;
        }
        double ss = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double dv = v_[(i * 24 + perm[i]) * k + s] - tau;
            ss += dv * dv;
        }
        const double var = ss / (n * (n - 1.0));
        if (var > 0.0) {
            total += tau * tau / var;
        } else if (tau != 0.0) {
            total += std::numeric_limits<double>::infinity();
        }
    }
    return total;
}

namespace {

template <class Body>
std::uint64_t parallel_count(std::uint64_t total, unsigned threads, Body&& body) {
    threads = static_cast<unsigned>(std::max<std::uint64_t>(1, std::min<std::uint64_t>(threads, total)));
    if (threads == 1) return body(0, total);
    std::vector<std::uint64_t> counts(threads, 0);
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (total + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::uint64_t lo = std::min(total, t * chunk);
        const std::uint64_t hi = std::min(total, lo + chunk);
        pool.emplace_back([&, t, lo, hi] { counts[t] = body(lo, hi); });
    }
    for (auto& th : pool) th.join();
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

}  // namespace

RandTestResult randomization_test(const std::vector<DoseSet>& doses, const std::vector<LabelOutcomes>& adjusted,
                                  const TestStatistic& stat, const TestOptions& opts) {
    const std::size_t n = doses.size();
    if (n == 0) fail(ErrorKind::TooFewStrata, "randomization test needs at least one complete stratum");
    const PermutationTable table(doses, adjusted, stat);

    std::uint64_t space = 1;
    bool fits = true;
    for (std::size_t i = 0; i < n && fits; ++i) {
        space *= 24;
        fits = space <= kExactLimit;
    }
    bool exact = false;
    switch (opts.mode) {
        case TestMode::Exact:
            if (!fits) {
                fail(ErrorKind::ExactTooLarge, "24^" + std::to_string(n) + " assignments exceed the exact limit of " +
                                                   std::to_string(kExactLimit) + "; use Monte Carlo");
            }
            exact = true;
            break;
        case TestMode::MonteCarlo: exact = false; break;
        case TestMode::Auto: exact = fits; break;
    }

    const std::vector<std::uint8_t> identity(n, 0);
    const double t_obs = table.evaluate(identity.data());
    const double threshold = t_obs - 1e-9 * std::abs(t_obs);

    RandTestResult r;
    r.statistic_observed = t_obs;
    r.exact = exact;
    r.statistic = stat.describe();
    if (exact) {
        r.total = space;
        r.count_ge = parallel_count(space, opts.threads, [&](std::uint64_t lo, std::uint64_t hi) {
            std::vector<std::uint8_t> perm(n);
            std::uint64_t count = 0;
            for (std::uint64_t t = lo; t < hi; ++t) {
                std::uint64_t x = t;
                for (std::size_t i = 0; i < n; ++i) {
                    perm[i] = static_cast<std::uint8_t>(x % 24);
                    x /= 24;
                }
                if (table.evaluate(perm.data()) >= threshold) ++count;
            }
            return count;
        });
        r.p_value = static_cast<double>(r.count_ge) / static_cast<double>(space);
        return r;
    }
    if (opts.draws < 100) fail(ErrorKind::InvalidConfig, "Monte Carlo needs at least 100 draws");
    r.draws = opts.draws;
    r.seed = opts.seed;
    r.total = opts.draws;
    r.count_ge = parallel_count(opts.draws, opts.threads, [&](std::uint64_t lo, std::uint64_t hi) {
        std::vector<std::uint8_t> perm(n);
        std::uint64_t count = 0;
        for (std::uint64_t draw = lo; draw < hi; ++draw) {
            for (std::size_t i = 0; i < n; ++i) perm[i] = keyed_permutation(opts.seed, draw, i);
            if (table.evaluate(perm.data()) >= threshold) ++count;
        }
        return count;
    });
    r.p_value = static_cast<double>(1 + r.count_ge) / static_cast<double>(opts.draws + 1);
    return r;
}

namespace {

std::vector<DoseSet> design_doses(const Design& design) {
    std::vector<DoseSet> out;
    for (const MatchedStratum& s : design.strata) out.push_back(s.dose_set);
    return out;
}

}  // namespace

RandTestResult randomization_test(const Design& design, const std::vector<LabelOutcomes>& y, const Dataset* d,
                                  const SharpNull& null, const TestStatistic& stat, const TestOptions& opts) {
    RandTestResult r = randomization_test(design_doses(design), adjust_outcomes(design, y, d, null), stat, opts);
    r.null_description = null.describe();
    return r;
}

std::vector<double> GridAxis::values() const {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(step) || step <= 0.0) {
        fail(ErrorKind::InvalidConfig, "grid axis '" + name + "' needs finite bounds and a positive step");
    }
    std::vector<double> out;
    if (hi < lo) return out;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) out.push_back(lo + static_cast<double>(k) * step);
    return out;
}

std::vector<GridAxis> parse_grid(const std::string& text) {
    std::vector<GridAxis> axes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorKind::InvalidConfig, "grid item '" + item + "' must look like t1=lo:hi:step");
        GridAxis a;
        a.name = item.substr(0, eq);
        std::stringstream range(item.substr(eq + 1));
        std::string part;
        std::vector<double> nums;
        while (std::getline(range, part, ':')) {
            try {
                std::size_t used = 0;
                nums.push_back(std::stod(part, &used));
                if (used != part.size()) throw std::invalid_argument(part);
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidConfig, "grid item '" + item + "' has a non-numeric bound");
            }
        }
        if (nums.size() != 3) fail(ErrorKind::InvalidConfig, "grid item '" + item + "' must look like t1=lo:hi:step");
        a.lo = nums[0];
        a.hi = nums[1];
        a.step = nums[2];
        (void)a.values();
        axes.push_back(a);
    }
    return axes;
}

ConfidenceRegion confidence_region(const Design& design, const std::vector<LabelOutcomes>& y, const Dataset* d,
                                   const SharpNull& family, const std::vector<GridAxis>& grid,
                                   const TestStatistic& stat, double alpha, const TestOptions& opts) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        fail(ErrorKind::InvalidConfig, "alpha must lie in (0, 1), got " + format_double(alpha));
    }
    const std::size_t dim = SharpNull::dimension(family.family);
    if (dim == 0) fail(ErrorKind::InvalidConfig, "the no-effect family has no parameters to invert over");
    if (grid.size() != dim) {
        fail(ErrorKind::InvalidConfig, to_string(family.family) + " needs a " + std::to_string(dim) +
                                           "-dimensional grid, got " + std::to_string(grid.size()));
    }
    std::vector<std::vector<double>> values;
    std::size_t total = 1;
    for (const GridAxis& a : grid) {
        values.push_back(a.values());
        total *= values.back().size();
    }
    if (total == 0) fail(ErrorKind::EmptyGrid, "the parameter grid has no points");

    const std::vector<DoseSet> doses = design_doses(design);
    ConfidenceRegion region;
    region.alpha = alpha;
    std::vector<std::size_t> idx(dim, 0);
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t x = t;
        for (std::size_t k = dim; k-- > 0;) {
            idx[k] = x % values[k].size();
            x /= values[k].size();
        }
        SharpNull null = family;
        null.theta.assign(dim, 0.0);
        for (std::size_t k = 0; k < dim; ++k) null.theta[k] = values[k][idx[k]];
        if (family.family == NullFamily::SingleIndex) {
            const double sum = std::accumulate(null.theta.begin(), null.theta.end(), 0.0);
            const bool in_box = std::all_of(null.theta.begin(), null.theta.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
            if (!in_box || std::abs(sum - 1.0) > 1e-9) continue;
        }
        const RandTestResult r = randomization_test(doses, adjust_outcomes(design, y, d, null), stat, opts);
        RegionPoint p;
        p.theta = null.theta;
        p.p_value = r.p_value;
        p.accepted = r.p_value >= alpha;
        if (p.accepted) {
            if (region.n_accepted == 0) {
                region.box_lo = p.theta;
                region.box_hi = p.theta;
            }
            for (std::size_t k = 0; k < dim; ++k) {
                region.box_lo[k] = std::min(region.box_lo[k], p.theta[k]);
                region.box_hi[k] = std::max(region.box_hi[k], p.theta[k]);
            }
            ++region.n_accepted;
        }
        region.points.push_back(std::move(p));
    }
    if (region.points.empty()) fail(ErrorKind::EmptyGrid, "no grid point satisfies the family's constraints");
    return region;
}

}  // namespace factmatch
