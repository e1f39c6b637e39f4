#include "factmatch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include "json.hpp"
#include <sstream>
#include <thread>

#include "factmatch/config.hpp"
#include "factmatch/error.hpp"
#include "factmatch/matching.hpp"

namespace factmatch {

namespace {

std::optional<int> parse_sinks(const Config& cfg, const std::string& key) {
    if (!cfg.contains(key)) return std::nullopt;
    const std::string text = *cfg.get_string(key);
    if (text == "auto") return std::nullopt;
    const long long v = *cfg.get_int(key);
    if (v < 0) fail(ErrorKind::InvalidConfig, key + " must be \"auto\" or a non-negative integer");
    return static_cast<int>(v);
}

LeadChoice parse_lead(const std::string& text) {
    if (text == "z1") return LeadChoice::Z1;
    if (text == "z2") return LeadChoice::Z2;
    if (text == "both") return LeadChoice::Both;
    fail(ErrorKind::InvalidConfig, "pipeline.lead must be z1, z2 or both (got '" + text + "')");
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& cfg) {
    PipelineConfig p;
    p.metric.kind = parse_metric_kind(cfg.string_or("distance.kind", "mahalanobis"));
    p.metric.regularization = cfg.double_or("distance.regularization", 0.0);
    p.standardize = cfg.bool_or("distance.standardize", false);
    p.penalty.weight = cfg.double_or("penalty.w", p.penalty.weight);
    p.penalty.threshold_z1 = cfg.double_or("penalty.threshold_z1", p.penalty.threshold_z1);
    p.penalty.threshold_z2 = cfg.double_or("penalty.threshold_z2", p.penalty.threshold_z2);
    p.penalty.validate();
    p.sinks_stage1 = parse_sinks(cfg, "pipeline.sinks_stage1");
    p.sinks_stage2 = parse_sinks(cfg, "pipeline.sinks_stage2");
    p.lead = parse_lead(cfg.string_or("pipeline.lead", "both"));
    const long long threads = cfg.int_or("pipeline.threads", 1);
    if (threads < 1) fail(ErrorKind::InvalidConfig, "pipeline.threads must be at least 1");
    p.threads = static_cast<unsigned>(threads);
    return p;
}

std::vector<std::string> exact_classes(const Dataset& d) {
    std::vector<std::string> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::string key;
        for (const auto& k : d.unit(i).exact_keys) {
            key += k;
            key.push_back('\x1f');
        }
        out[i] = key;
    }
    return out;
}

Eigen::MatrixXd pipeline_delta(const Dataset& d, const PipelineConfig& cfg) {
    if (cfg.standardize) return covariate_distance(cfg.metric, standardize_covariates(d).dataset, cfg.threads);
    return covariate_distance(cfg.metric, d, cfg.threads);
}

namespace {

struct SinkPlan {
    WeightedGraph graph;
    std::size_t n_real = 0;
};

// Appends sinks to a graph over `classes`. Auto mode gives every class with an
// odd member count its own sink, reachable at zero cost only from that class.
SinkPlan with_sinks(const WeightedGraph& g, const std::vector<std::string>& classes, std::optional<int> sinks,
                    const std::string& stage) {
    const std::size_t n = g.size();
    std::vector<std::string> sink_class;  // empty string: joins every class
    std::vector<char> sink_any;
    if (sinks) {
        if ((n + static_cast<std::size_t>(*sinks)) % 2 != 0) {
            fail(ErrorKind::ParityViolation, stage + ": " + std::to_string(n) + " vertices plus " +
                                                 std::to_string(*sinks) + " sinks is odd");
        }
        sink_class.assign(static_cast<std::size_t>(*sinks), std::string());
        sink_any.assign(sink_class.size(), 1);
    } else {
        std::map<std::string, std::size_t> counts;
        for (const auto& c : classes) ++counts[c];
        for (const auto& [c, count] : counts) {
            if (count % 2 == 1) {
                sink_class.push_back(c);
                sink_any.push_back(0);
            }
        }
    }
    SinkPlan plan;
    plan.n_real = n;
    plan.graph = add_sinks(g, sink_class.size());
    for (std::size_t s = 0; s < sink_class.size(); ++s) {
        if (sink_any[s]) continue;
        for (std::size_t i = 0; i < n; ++i) {
            if (classes[i] != sink_class[s]) plan.graph.set_weight(i, n + s, kInfeasibleSentinel);
        }
    }
    return plan;
}

[[noreturn]] void infeasible(const std::string& stage, const std::string& detail) {
    fail(ErrorKind::InfeasibleMatch, stage + ": " + detail);
}

std::string stage_name(int stage, Lead lead) {
    return "Stage " + std::to_string(stage) + " (lead " + std::string(to_string(lead)) + ")";
}

}  // namespace

Stage1Result run_stage1(const Dataset& d, const Eigen::MatrixXd& delta, const PipelineConfig& cfg, Lead lead) {
    const std::string stage = stage_name(1, lead);
    const std::size_t n = d.size();
    if (n < 4) fail(ErrorKind::TooFewUnits, stage + ": need at least 4 units, got " + std::to_string(n));
    std::vector<double> doses(n);
    for (std::size_t i = 0; i < n; ++i) doses[i] = d.unit(i).doses().lead(lead);
    const Eigen::MatrixXd dist = stage1_distance(delta, doses);
    const std::vector<std::string> classes = exact_classes(d);

    WeightedGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            g.set_weight(i, j, classes[i] == classes[j] ? dist(i, j) : kInfeasibleSentinel);
        }
    }
    const SinkPlan plan = with_sinks(g, classes, cfg.sinks_stage1, stage);
    const PerfectMatching m = min_weight_perfect_matching(plan.graph);

    Stage1Result r;
    r.lead = lead;
    std::size_t real_pairs = 0;
    for (auto [i, j] : m.edges) {
        if (plan.graph.weight(i, j) >= kInfeasibleSentinel) {
            if (i < n && j < n && doses[i] == doses[j]) {
                infeasible(stage, "units '" + d.unit(i).id + "' and '" + d.unit(j).id + "' share " +
                                      std::string(to_string(lead)) + " dose " + format_double(doses[i]) +
                                      " and no feasible pairing exists");
            }
            infeasible(stage, "no perfect pairing avoids forbidden edges (equal doses, exact-match "
                              "classes, or sinks)");
        }
        if (j >= n) {
            r.trimmed_ids.push_back(d.unit(i).id);
            continue;
        }
        PairRecord p;
        p.q = static_cast<int>(real_pairs++);
        p.hi = doses[i] > doses[j] ? i : j;
        p.lo = doses[i] > doses[j] ? j : i;
        r.pairs.push_back(p);
        r.total_distance += dist(i, j);
    }
    std::sort(r.trimmed_ids.begin(), r.trimmed_ids.end(),
              [&](const std::string& a, const std::string& b) { return d.index_of_id(a) < d.index_of_id(b); });
    if (r.pairs.size() < 2) {
        fail(ErrorKind::TooFewUnits, stage + ": Stage 1 produced " + std::to_string(r.pairs.size()) +
                                         " pair(s), need at least 2");
    }
    return r;
}

Stage1Result run_stage1(const Dataset& d, const PipelineConfig& cfg, Lead lead) {
    return run_stage1(d, pipeline_delta(d, cfg), cfg, lead);
}

MatchedStratum label_stratum(const Dataset& d, const std::array<std::size_t, 4>& rows, Lead lead, int stratum_index) {
    std::array<LabelInput, 4> in;
    for (int t = 0; t < 4; ++t) in[t] = {d.unit(rows[t]).id, d.unit(rows[t]).doses()};
    const std::array<DoseLabel, 4> labels = assign_labels(in, lead);
    MatchedStratum s;
    s.stratum_index = stratum_index;
    for (int t = 0; t < 4; ++t) {
        s.members[index_of(labels[t])] = in[t].id;
        s.dose_set[index_of(labels[t])] = in[t].doses;
    }
    return s;
}

Stage2Result run_stage2(const std::vector<PairRecord>& pairs, const Dataset& d, const Eigen::MatrixXd& delta,
                        const PipelineConfig& cfg, Lead lead) {
    const std::string stage = stage_name(2, lead);
    const std::size_t q = pairs.size();
    if (q < 2) fail(ErrorKind::TooFewUnits, stage + ": need at least 2 pairs, got " + std::to_string(q));
    const std::vector<std::string> unit_classes = exact_classes(d);
    std::vector<std::string> classes(q);
    for (std::size_t a = 0; a < q; ++a) classes[a] = unit_classes[pairs[a].hi];

    WeightedGraph g(q);
    std::vector<double> rows_done(q, 0.0);
    auto fill_row = [&](std::size_t a) {
        for (std::size_t b = a + 1; b < q; ++b) {
            double w = kInfeasibleSentinel;
            if (classes[a] == classes[b]) {
                try {
                    w = stage2_distance(pairs[a], pairs[b], delta, d, cfg.penalty, lead).value;
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::BothAlignmentsInfeasible) throw;
                }
                if (!(w < kInfeasibleSentinel)) w = kInfeasibleSentinel;
            }
            g.set_weight(a, b, w);
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(q)));
    if (threads == 1) {
        for (std::size_t a = 0; a < q; ++a) fill_row(a);
    } else {
        // Each worker writes disjoint (a, b > a) cells, so no synchronization is needed.
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t a = t; a < q; a += threads) fill_row(a);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    const SinkPlan plan = with_sinks(g, classes, cfg.sinks_stage2, stage);
    const PerfectMatching m = min_weight_perfect_matching(plan.graph);

    Stage2Result r;
    for (auto [a, b] : m.edges) {
        if (plan.graph.weight(a, b) >= kInfeasibleSentinel) {
            infeasible(stage, "no perfect pairing of pairs avoids forbidden edges (zero-gap alignments, "
                              "exact-match classes, or sinks)");
        }
        if (b >= q) {
            const PairRecord& p = pairs[a];
            IncompleteStratum inc;
            for (std::size_t row : {p.lo, p.hi}) {
                inc.members.push_back(d.unit(row).id);
                inc.doses.push_back(d.unit(row).doses());
            }
            r.incomplete.push_back(std::move(inc));
            continue;
        }
        const std::array<std::size_t, 4> rows = {pairs[a].hi, pairs[a].lo, pairs[b].hi, pairs[b].lo};
        r.strata.push_back(label_stratum(d, rows, lead, static_cast<int>(r.strata.size()) + 1));
        r.total_distance += g.weight(a, b);
    }
    return r;
}

namespace {

struct RunOutcome {
    std::optional<Design> design;
    std::exception_ptr error;
};

RunOutcome run_one(const Dataset& d, const Eigen::MatrixXd& delta, const PipelineConfig& cfg, Lead lead) {
    RunOutcome out;
    try {
        Stage1Result s1 = run_stage1(d, delta, cfg, lead);
        Stage2Result s2 = run_stage2(s1.pairs, d, delta, cfg, lead);
        Design design;
        design.strata = std::move(s2.strata);
        design.incomplete = std::move(s2.incomplete);
        design.trimmed_ids = std::move(s1.trimmed_ids);
        design.stage1_lead = lead;
        design.total_stage2_distance = s2.total_distance;
        out.design = std::move(design);
    } catch (const Error&) {
        out.error = std::current_exception();
    }
    return out;
}

std::string message_of(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& ex) {
        return ex.what();
    }
}

ErrorKind kind_of(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const Error& ex) {
        return ex.kind();
    }
}

}  // namespace

Design run_design(const Dataset& d, const PipelineConfig& cfg) {
    cfg.penalty.validate();
    const Eigen::MatrixXd delta = pipeline_delta(d, cfg);
    if (cfg.lead != LeadChoice::Both) {
        RunOutcome r = run_one(d, delta, cfg, cfg.lead == LeadChoice::Z1 ? Lead::Z1 : Lead::Z2);
        if (r.error) std::rethrow_exception(r.error);
        return std::move(*r.design);
    }
    RunOutcome r1, r2;
    if (cfg.threads > 1) {
        PipelineConfig half = cfg;
        half.threads = std::max(1u, cfg.threads / 2);
        std::thread worker([&] { r2 = run_one(d, delta, half, Lead::Z2); });
        r1 = run_one(d, delta, half, Lead::Z1);
        worker.join();
    } else {
        r1 = run_one(d, delta, cfg, Lead::Z1);
        r2 = run_one(d, delta, cfg, Lead::Z2);
    }
    if (r1.error && r2.error) {
        const ErrorKind k = kind_of(r1.error) == ErrorKind::InfeasibleMatch || kind_of(r2.error) == ErrorKind::InfeasibleMatch
                                ? ErrorKind::InfeasibleMatch
                                : kind_of(r1.error);
        fail(k, "both lead runs failed. lead z1: " + message_of(r1.error) + " | lead z2: " + message_of(r2.error));
    }
    if (r1.error) return std::move(*r2.design);
    if (r2.error) return std::move(*r1.design);
    if (r2.design->total_stage2_distance < r1.design->total_stage2_distance) return std::move(*r2.design);
    return std::move(*r1.design);
}

using ojson = nlohmann::ordered_json;

std::string design_to_json(const Design& design) {
    ojson j;
    j["format"] = "factmatch-design";
    j["version"] = 1;
    j["stage1_lead"] = std::string(to_string(design.stage1_lead));
    j["total_stage2_distance"] = design.total_stage2_distance;
    j["n_strata"] = design.strata.size();
    j["n_incomplete"] = design.incomplete.size();
    j["n_trimmed"] = design.trimmed_ids.size();
    ojson strata = ojson::array();
    for (const MatchedStratum& s : design.strata) {
        ojson js;
        js["stratum_index"] = s.stratum_index;
        ojson units = ojson::array();
        for (DoseLabel l : kAllLabels) {
            ojson u;
            u["label"] = std::string(to_string(l));
            u["id"] = s.member(l);
            u["z1"] = s.doses(l).z1;
            u["z2"] = s.doses(l).z2;
            units.push_back(u);
        }
        js["units"] = units;
        strata.push_back(js);
    }
    j["strata"] = strata;
    ojson inc = ojson::array();
    for (const IncompleteStratum& s : design.incomplete) {
        ojson units = ojson::array();
        for (std::size_t t = 0; t < s.members.size(); ++t) {
            units.push_back({{"id", s.members[t]}, {"z1", s.doses[t].z1}, {"z2", s.doses[t].z2}});
        }
        inc.push_back({{"units", units}});
    }
    j["incomplete"] = inc;
    j["trimmed_ids"] = design.trimmed_ids;
    return j.dump(2) + "\n";
}

Design design_from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("design file is not valid JSON: ") + e.what());
    }
    Design d;
    try {
        const std::string lead = j.at("stage1_lead").get<std::string>();
        if (lead != "z1" && lead != "z2") fail(ErrorKind::InvalidConfig, "design stage1_lead must be z1 or z2");
        d.stage1_lead = lead == "z1" ? Lead::Z1 : Lead::Z2;
        d.total_stage2_distance = j.at("total_stage2_distance").get<double>();
        for (const auto& js : j.at("strata")) {
            MatchedStratum s;
            s.stratum_index = js.at("stratum_index").get<int>();
            std::array<bool, 4> seen{};
            for (const auto& u : js.at("units")) {
                const DoseLabel l = parse_label(u.at("label").get<std::string>());
                if (seen[index_of(l)]) fail(ErrorKind::InvalidConfig, "design stratum repeats a label");
                seen[index_of(l)] = true;
                s.members[index_of(l)] = u.at("id").get<std::string>();
                s.dose_set[index_of(l)] = {u.at("z1").get<double>(), u.at("z2").get<double>()};
            }
            if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
                fail(ErrorKind::InvalidConfig, "design stratum " + std::to_string(s.stratum_index) +
                                                   " does not carry all four labels");
            }
            d.strata.push_back(std::move(s));
        }
        for (const auto& js : j.at("incomplete")) {
            IncompleteStratum s;
            for (const auto& u : js.at("units")) {
                s.members.push_back(u.at("id").get<std::string>());
                s.doses.push_back({u.at("z1").get<double>(), u.at("z2").get<double>()});
            }
            d.incomplete.push_back(std::move(s));
        }
        d.trimmed_ids = j.at("trimmed_ids").get<std::vector<std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("malformed design file: ") + e.what());
    }
    return d;
}

Design load_design(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open design " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return design_from_json(buf.str());
}

std::vector<std::array<double, 4>> stratum_outcomes(const Design& design, const Dataset& d) {
    std::vector<std::array<double, 4>> out;
    out.reserve(design.strata.size());
    for (const MatchedStratum& s : design.strata) {
        std::array<double, 4> y{};
        for (DoseLabel l : kAllLabels) {
            const std::string& id = s.member(l);
            if (!d.contains_id(id)) {
                fail(ErrorKind::MissingOutcome, "stratum " + std::to_string(s.stratum_index) + ": unit '" + id +
                                                    "' is not in the dataset");
            }
            const Unit& u = d.unit(d.index_of_id(id));
            if (!u.y) {
                fail(ErrorKind::MissingOutcome, "stratum " + std::to_string(s.stratum_index) + ": unit '" + id +
                                                    "' has no outcome");
            }
            y[index_of(l)] = *u.y;
        }
        out.push_back(y);
    }
    return out;
}

}  // namespace factmatch
