#include "factmatch/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "factmatch/config.hpp"
#include "factmatch/error.hpp"

namespace factmatch {

std::string_view to_string(DoseLabel label) {
    switch (label) {
        case DoseLabel::LL: return "LL";
        case DoseLabel::LH: return "LH";
        case DoseLabel::HL: return "HL";
        case DoseLabel::HH: return "HH";
    }
    return "??";
}

DoseLabel parse_label(std::string_view text) {
    for (DoseLabel l : kAllLabels) {
        if (to_string(l) == text) return l;
    }
    fail(ErrorKind::InvalidConfig, "unknown dose label '" + std::string(text) + "'");
}

std::string_view to_string(Lead lead) { return lead == Lead::Z1 ? "z1" : "z2"; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Dataset::Dataset(std::vector<Unit> units, std::vector<std::string> covariate_names,
                 std::vector<std::string> exact_names)
    : units_(std::move(units)), covariate_names_(std::move(covariate_names)), exact_names_(std::move(exact_names)) {
    const std::size_t k = covariate_names_.size();
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = units_[i];
        if (u.covariates.size() != k) {
            fail(ErrorKind::InvalidConfig, "unit '" + u.id + "' has " + std::to_string(u.covariates.size()) +
                                               " covariates, expected " + std::to_string(k));
        }
        if (u.exact_keys.size() != exact_names_.size()) {
            fail(ErrorKind::InvalidConfig, "unit '" + u.id + "' has the wrong number of exact-match keys");
        }
        if (!std::isfinite(u.z1) || !std::isfinite(u.z2)) {
            fail(ErrorKind::NonFiniteValue, "unit '" + u.id + "' has a non-finite dose");
        }
        for (double x : u.covariates) {
            if (!std::isfinite(x)) fail(ErrorKind::NonFiniteValue, "unit '" + u.id + "' has a non-finite covariate");
        }
        if (u.y && !std::isfinite(*u.y)) {
            fail(ErrorKind::NonFiniteValue, "unit '" + u.id + "' has a non-finite outcome");
        }
        if (!index_.emplace(u.id, i).second) {
            fail(ErrorKind::DuplicateId, "duplicate unit id '" + u.id + "'");
        }
    }
}

std::size_t Dataset::index_of_id(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorKind::InvalidConfig, "unknown unit id '" + id + "'");
    return it->second;
}

bool Dataset::has_all_outcomes() const {
    return std::all_of(units_.begin(), units_.end(), [](const Unit& u) { return u.y.has_value(); });
}

std::vector<double> Dataset::covariate_column(std::size_t k) const {
    std::vector<double> col(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) col[i] = units_[i].covariates[k];
    return col;
}

SchemaConfig SchemaConfig::from_config(const Config& cfg) {
    SchemaConfig s;
    s.id_col = cfg.string_or("data.id_col", s.id_col);
    s.z1_col = cfg.string_or("data.z1_col", s.z1_col);
    s.z2_col = cfg.string_or("data.z2_col", s.z2_col);
    if (auto cols = cfg.get_list("data.covariate_cols")) s.covariate_cols = *cols;
    if (auto cols = cfg.get_list("data.exact_cols")) s.exact_cols = *cols;
    if (auto y = cfg.get_string("data.outcome_col"); y && !y->empty()) s.outcome_col = *y;
    return s;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_finite(const std::string& text, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        fail(ErrorKind::NonFiniteValue,
             "row " + std::to_string(row) + ", column '" + column + "': '" + text + "' is not a finite number");
    }
    return v;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "na"; }

}  // namespace

Dataset parse_dataset(const std::string& csv_text, const SchemaConfig& schema, const std::string& origin) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::MissingColumn, origin + ": empty file, no header row");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = strip(h);

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) fail(ErrorKind::MissingColumn, origin + ": column '" + name + "' not found");
        return static_cast<std::size_t>(it - header.begin());
    };

    const std::size_t id_c = column(schema.id_col);
    const std::size_t z1_c = column(schema.z1_col);
    const std::size_t z2_c = column(schema.z2_col);
    std::optional<std::size_t> y_c;
    if (schema.outcome_col) y_c = column(*schema.outcome_col);
    std::vector<std::size_t> exact_c;
    for (const auto& name : schema.exact_cols) exact_c.push_back(column(name));

    std::vector<std::string> cov_names = schema.covariate_cols;
    if (cov_names.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            bool taken = c == id_c || c == z1_c || c == z2_c || (y_c && c == *y_c) ||
                         std::find(exact_c.begin(), exact_c.end(), c) != exact_c.end();
            if (!taken) cov_names.push_back(header[c]);
        }
    }
    std::vector<std::size_t> cov_c;
    for (const auto& name : cov_names) cov_c.push_back(column(name));

    std::vector<Unit> units;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (strip(line).empty()) continue;
        ++row;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            fail(ErrorKind::MissingColumn, origin + ": row " + std::to_string(row) + " has " +
                                               std::to_string(fields.size()) + " fields, header has " +
                                               std::to_string(header.size()));
        }
        for (auto& f : fields) f = strip(f);
        Unit u;
        u.id = fields[id_c];
        u.z1 = parse_finite(fields[z1_c], row, schema.z1_col);
        u.z2 = parse_finite(fields[z2_c], row, schema.z2_col);
        u.covariates.reserve(cov_c.size());
        for (std::size_t k = 0; k < cov_c.size(); ++k) {
            u.covariates.push_back(parse_finite(fields[cov_c[k]], row, cov_names[k]));
        }
        for (std::size_t c : exact_c) u.exact_keys.push_back(fields[c]);
        if (y_c && !is_missing_token(fields[*y_c])) u.y = parse_finite(fields[*y_c], row, *schema.outcome_col);
        units.push_back(std::move(u));
    }

    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!seen.emplace(units[i].id, i + 1).second) {
            fail(ErrorKind::DuplicateId, origin + ": id '" + units[i].id + "' appears in rows " +
                                             std::to_string(seen[units[i].id]) + " and " + std::to_string(i + 1));
        }
    }
    return Dataset(std::move(units), std::move(cov_names), schema.exact_cols);
}

Dataset load_dataset(const std::filesystem::path& path, const SchemaConfig& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), schema, path.string());
}

std::string dataset_to_csv(const Dataset& d, const SchemaConfig& schema) {
    std::ostringstream out;
    out << schema.id_col << ',' << schema.z1_col << ',' << schema.z2_col;
    for (const auto& name : d.covariate_names()) out << ',' << name;
    for (const auto& name : d.exact_names()) out << ',' << name;
    if (schema.outcome_col) out << ',' << *schema.outcome_col;
    out << '\n';
    for (const Unit& u : d.units()) {
        out << u.id << ',' << format_double(u.z1) << ',' << format_double(u.z2);
        for (double x : u.covariates) out << ',' << format_double(x);
        for (const auto& key : u.exact_keys) out << ',' << key;
        if (schema.outcome_col) out << ',' << (u.y ? format_double(*u.y) : std::string("NA"));
        out << '\n';
    }
    return out.str();
}

StandardizeResult standardize_covariates(const Dataset& d) {
    const std::size_t n = d.size();
    if (n < 2) fail(ErrorKind::TooFewUnits, "standardization needs at least 2 units");
    std::vector<Unit> units = d.units();
    StandardizeResult result;
    for (std::size_t k = 0; k < d.n_covariates(); ++k) {
        std::vector<double> col = d.covariate_column(k);
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double x : col) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        // Relative test so that a constant column with rounding noise in the mean still counts as constant.
        const double scale = std::max(std::abs(mean), 1.0);
        const bool constant = !(sd > 1e-14 * scale);
        if (constant) result.constant_columns.push_back(d.covariate_names()[k]);
        for (std::size_t i = 0; i < n; ++i) {
            units[i].covariates[k] = constant ? 0.0 : (col[i] - mean) / sd;
        }
    }
    result.dataset = Dataset(std::move(units), d.covariate_names(), d.exact_names());
    return result;
}

std::array<DoseLabel, 4> assign_labels(const std::array<LabelInput, 4>& units, Lead lead) {
    const double first = units[0].doses.lead(lead);
    if (std::all_of(units.begin(), units.end(), [&](const LabelInput& u) { return u.doses.lead(lead) == first; })) {
        fail(ErrorKind::DegenerateStratum, "all four " + std::string(to_string(lead)) + " doses equal (" +
                                               units[0].id + ", " + units[1].id + ", " + units[2].id + ", " +
                                               units[3].id + ")");
    }
    std::array<int, 4> order = {0, 1, 2, 3};
    auto by_lead = [&](int a, int b) {
        const DosePair& x = units[a].doses;
        const DosePair& y = units[b].doses;
        if (x.lead(lead) != y.lead(lead)) return x.lead(lead) < y.lead(lead);
        if (x.other(lead) != y.other(lead)) return x.other(lead) < y.other(lead);
        return units[a].id < units[b].id;
    };
    auto by_other = [&](int a, int b) {
        const DosePair& x = units[a].doses;
        const DosePair& y = units[b].doses;
        if (x.other(lead) != y.other(lead)) return x.other(lead) < y.other(lead);
        return units[a].id < units[b].id;
    };
    std::sort(order.begin(), order.end(), by_lead);
    std::sort(order.begin(), order.begin() + 2, by_other);
    std::sort(order.begin() + 2, order.end(), by_other);

    std::array<DoseLabel, 4> labels{};
    for (int rank = 0; rank < 4; ++rank) {
        const bool lead_high = rank >= 2;
        const bool other_high = rank % 2 == 1;
        labels[order[rank]] = lead == Lead::Z1 ? make_label(lead_high, other_high) : make_label(other_high, lead_high);
    }
    return labels;
}

}  // namespace factmatch
