#include "factmatch/cli.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "factmatch/config.hpp"
#include "factmatch/data_model.hpp"
#include "factmatch/diagnostics.hpp"
#include "factmatch/error.hpp"
#include "factmatch/fisher.hpp"
#include "factmatch/neyman.hpp"
#include "factmatch/pipeline.hpp"
#include "factmatch/testkit.hpp"
#include "json.hpp"

namespace factmatch::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (item.empty()) continue;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            fail(ErrorKind::InvalidConfig, what + ": '" + item + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

// Shared state of one invocation.
struct Context {
    std::optional<std::string> config_path;
    std::vector<std::string> sets;
    std::optional<unsigned> threads;
    Config cfg;
    std::string started;
    std::map<std::string, std::string> input_hashes;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    void build_config(const std::vector<std::pair<std::string, const std::optional<std::string>*>>& flags) {
        if (config_path) {
            const std::string text = read_file(*config_path);
            input_hashes[*config_path] = sha256_hex(text);
            cfg = Config::parse(text, *config_path);
        }
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) fail(ErrorKind::InvalidConfig, "--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [key, value] : flags) {
            if (value->has_value()) cfg.set(key, **value);
        }
        if (threads) cfg.set("pipeline.threads", std::to_string(*threads));
    }

    unsigned worker_count() const {
        const long long t = cfg.int_or("pipeline.threads", 1);
        if (t < 1) fail(ErrorKind::InvalidConfig, "threads must be at least 1");
        return static_cast<unsigned>(t);
    }

    std::string config_hash() const {
        std::string canon;
        for (const auto& [k, v] : cfg.raw()) canon += k + "=" + v + "\n";
        return sha256_hex(canon);
    }

    Dataset dataset(const std::string& path) {
        const std::string text = read_file(path);
        input_hashes[path] = sha256_hex(text);
        SchemaConfig schema = SchemaConfig::from_config(cfg);
        if (!cfg.contains("data.outcome_col")) {
            // An outcome column named "y" is picked up unless configured otherwise.
            std::string header = text.substr(0, text.find('\n'));
            if (!header.empty() && header.back() == '\r') header.pop_back();
            std::istringstream cols(header);
            std::string c;
            while (std::getline(cols, c, ',')) {
                if (c == "y") schema.outcome_col = "y";
            }
        }
        return parse_dataset(text, schema, path);
    }

    Design design(const std::string& path) {
        const std::string text = read_file(path);
        input_hashes[path] = sha256_hex(text);
        return design_from_json(text);
    }

    void manifest(const std::string& command, const std::string& path, std::optional<std::uint64_t> seed) const {
        ordered_json m;
        m["tool"] = "factmatch";
        m["version"] = FACTMATCH_VERSION;
        m["command"] = command;
        m["config_sha256"] = config_hash();
        m["inputs"] = ordered_json::object();
        for (const auto& [k, v] : input_hashes) m["inputs"][k] = v;
        if (seed) m["seed"] = *seed; else m["seed"] = nullptr;
        m["threads"] = worker_count();
        m["started_utc"] = started;
        m["finished_utc"] = utc_now();
        write_file(path, m.dump(2) + "\n");
    }

    void emit(const std::optional<std::string>& path, const std::string& text, const std::string& command,
              std::optional<std::uint64_t> seed) {
        if (path) {
            write_file(*path, text);
            manifest(command, *path + ".manifest.json", seed);
        } else {
            *out << text;
        }
    }
};

std::uint64_t seed_of(const Config& cfg) {
    const long long s = cfg.int_or("inference.seed", 42);
    if (s < 0) fail(ErrorKind::InvalidConfig, "seed must be non-negative");
    return static_cast<std::uint64_t>(s);
}

int cmd_match(Context& ctx, const std::string& input, const std::string& output) {
    const Dataset d = ctx.dataset(input);
    PipelineConfig pc = PipelineConfig::from_config(ctx.cfg);
    pc.threads = ctx.worker_count();
    bool off_scale = false;
    for (const Unit& u : d.units()) {
        if (u.z1 < 0.0 || u.z1 > 1.0 || u.z2 < 0.0 || u.z2 > 1.0) off_scale = true;
    }
    if (off_scale) {
        *ctx.err << "factmatch: warning: doses are not on a 0-1 scale; penalty thresholds "
                 << pc.penalty.threshold_z1 << "/" << pc.penalty.threshold_z2
                 << " assume proportions, consider rescaling penalty.threshold_z1 and penalty.threshold_z2\n";
    }
    const Design design = run_design(d, pc);
    write_file(output, design_to_json(design));
    ctx.manifest("match", output + ".manifest.json", std::nullopt);
    *ctx.out << "matched " << design.strata.size() << " strata (" << design.incomplete.size() << " incomplete, "
             << design.trimmed_ids.size() << " trimmed), lead " << to_string(design.stage1_lead) << "\n";
    return kExitOk;
}

int cmd_balance(Context& ctx, const std::string& design_path, const std::string& input, const std::string& out_dir) {
    const Design design = ctx.design(design_path);
    const Dataset d = ctx.dataset(input);
    fs::create_directories(out_dir);
    std::size_t files = 0;
    for (const BalanceTable& t : pre_match_balance(d)) {
        write_file((fs::path(out_dir) / balance_file_name(t)).string(), balance_csv(t));
        ++files;
    }
    for (const BalanceTable& t : post_match_balance(design, d)) {
        write_file((fs::path(out_dir) / balance_file_name(t)).string(), balance_csv(t));
        ++files;
    }
    ctx.manifest("balance", (fs::path(out_dir) / "manifest.json").string(), std::nullopt);
    *ctx.out << "wrote " << files << " balance tables to " << out_dir << "\n";
    return kExitOk;
}

ordered_json estimate_json(const EffectEstimate& e) {
    ordered_json j;
    j["estimand"] = "tau" + std::to_string(e.estimand);
    j["tau_hat"] = e.tau_hat;
    j["se"] = e.se;
    j["variance"] = e.variance;
    j["ci"] = {e.ci_low, e.ci_high};
    j["alpha"] = e.alpha;
    j["I"] = e.n_strata;
    j["q_spec"] = e.q_spec;
    ordered_json diag;
    diag["max_abs_q"] = e.diagnostics.max_abs_q;
    diag["leverage_min"] = e.diagnostics.leverage_min;
    diag["leverage_max"] = e.diagnostics.leverage_max;
    diag["leverage_mean"] = e.diagnostics.leverage_mean;
    diag["contribution_sd"] = e.diagnostics.contribution_sd;
    diag["high_leverage"] = e.diagnostics.high_leverage;
    j["diagnostics"] = diag;
    return j;
}

QSpec q_from_config(const Config& cfg, const Design& design, const Dataset& d) {
    const std::string q = cfg.string_or("inference.q", "ones");
    if (q == "ones") return q_ones(design.strata.size());
    if (q == "covmeans") {
        return q_covariate_means(design, d, cfg.get_list("inference.q_columns").value_or(std::vector<std::string>{}));
    }
    fail(ErrorKind::InvalidConfig, "unknown q '" + q + "' (ones, covmeans)");
}

int cmd_estimate(Context& ctx, const std::string& design_path, const std::string& input,
                 const std::optional<std::string>& out) {
    const Design design = ctx.design(design_path);
    const Dataset d = ctx.dataset(input);
    const std::vector<LabelOutcomes> y = stratum_outcomes(design, d);
    const QSpec q = q_from_config(ctx.cfg, design, d);
    const double alpha = ctx.cfg.double_or("inference.alpha", 0.05);
    ordered_json j;
    j["format"] = "factmatch-estimates";
    j["version"] = FACTMATCH_VERSION;
    j["n_strata"] = design.strata.size();
    j["n_incomplete_excluded"] = design.incomplete.size();
    j["estimates"] = ordered_json::array();
    for (int a = 1; a <= 4; ++a) j["estimates"].push_back(estimate_json(estimate(design, y, a, q, alpha)));
    ctx.emit(out, j.dump(2) + "\n", "estimate", std::nullopt);
    return kExitOk;
}

SharpNull null_from_config(const Config& cfg, const std::string& family_key) {
    SharpNull n;
    n.family = parse_null_family(cfg.string_or(family_key, "noeffect"));
    n.theta = parse_numbers(cfg.string_or("inference.theta", ""), "theta");
    const std::vector<double> ref = parse_numbers(cfg.string_or("inference.ref", "0,0"), "ref");
    if (ref.size() != 2) fail(ErrorKind::InvalidConfig, "ref needs two values");
    n.reference = {ref[0], ref[1]};
    n.covariate = cfg.string_or("inference.covariate", "");
    n.link_name = cfg.string_or("inference.link", "identity");
    return n;
}

TestOptions options_from_config(const Config& cfg, unsigned threads) {
    TestOptions o;
    const std::string mode = cfg.string_or("inference.mode", "auto");
    if (mode == "auto") o.mode = TestMode::Auto;
    else if (mode == "exact") o.mode = TestMode::Exact;
    else if (mode == "mc" || mode == "montecarlo") o.mode = TestMode::MonteCarlo;
    else fail(ErrorKind::InvalidConfig, "unknown test mode '" + mode + "' (auto, exact, mc)");
    const long long draws = cfg.int_or("inference.draws", 100000);
    if (draws < 1) fail(ErrorKind::InvalidConfig, "draws must be positive");
    o.draws = static_cast<std::uint64_t>(draws);
    o.seed = seed_of(cfg);
    o.threads = threads;
    return o;
}

TestStatistic stat_from_config(const Config& cfg, NullFamily family) {
    if (auto s = cfg.get_string("inference.stat")) return TestStatistic::parse(*s);
    return family == NullFamily::NoEffect ? TestStatistic::quadratic_form() : TestStatistic::sum_abs_tau();
}

int cmd_test(Context& ctx, const std::string& design_path, const std::string& input,
             const std::optional<std::string>& out) {
    const Design design = ctx.design(design_path);
    const Dataset d = ctx.dataset(input);
    const std::vector<LabelOutcomes> y = stratum_outcomes(design, d);
    const SharpNull null = null_from_config(ctx.cfg, "inference.null");
    const TestStatistic stat = stat_from_config(ctx.cfg, null.family);
    const TestOptions opts = options_from_config(ctx.cfg, ctx.worker_count());
    const RandTestResult r = randomization_test(design, y, &d, null, stat, opts);
    ordered_json j;
    j["format"] = "factmatch-test";
    j["version"] = FACTMATCH_VERSION;
    j["null"] = r.null_description;
    j["statistic"] = r.statistic;
    j["statistic_observed"] = r.statistic_observed;
    j["p_value"] = r.p_value;
    j["exact"] = r.exact;
    j["draws"] = r.draws;
    j["seed"] = r.seed;
    j["count_ge"] = r.count_ge;
    j["total"] = r.total;
    j["n_strata"] = design.strata.size();
    ctx.emit(out, j.dump(2) + "\n", "test", opts.seed);
    return kExitOk;
}

int cmd_invert(Context& ctx, const std::string& design_path, const std::string& input,
               const std::optional<std::string>& out) {
    const Design design = ctx.design(design_path);
    const Dataset d = ctx.dataset(input);
    const std::vector<LabelOutcomes> y = stratum_outcomes(design, d);
    SharpNull family = null_from_config(ctx.cfg, "inference.family");
    const auto grid_text = ctx.cfg.get_string("inference.grid");
    if (!grid_text) fail(ErrorKind::InvalidConfig, "invert needs --grid");
    const std::vector<GridAxis> grid = parse_grid(*grid_text);
    const TestStatistic stat = stat_from_config(ctx.cfg, family.family);
    const TestOptions opts = options_from_config(ctx.cfg, ctx.worker_count());
    const double alpha = ctx.cfg.double_or("inference.alpha", 0.05);
    const ConfidenceRegion region = confidence_region(design, y, &d, family, grid, stat, alpha, opts);
    std::string csv;
    for (const GridAxis& a : grid) csv += a.name + ",";
    csv += "p_value\n";
    for (const RegionPoint& p : region.points) {
        if (!p.accepted) continue;
        for (double t : p.theta) csv += shortest(t) + ",";
        csv += shortest(p.p_value) + "\n";
    }
    ctx.emit(out, csv, "invert", opts.seed);
    *ctx.err << "accepted " << region.n_accepted << " of " << region.points.size() << " grid points\n";
    return kExitOk;
}

int cmd_simulate(Context& ctx, const std::optional<std::string>& out) {
    const Config& cfg = ctx.cfg;
    PotentialSchedule schedule =
        PotentialSchedule::standard(PotentialSchedule::parse_family(cfg.string_or("simulate.schedule", "linear")));
    if (auto c = cfg.get_string("simulate.coef")) schedule.coef = parse_numbers(*c, "coef");
    schedule.noise_sd = cfg.double_or("simulate.noise_sd", 1.0);
    schedule.effect_sd = cfg.double_or("simulate.effect_sd", 0.5);
    schedule.covariate_weight = cfg.double_or("simulate.covariate_weight", 1.0);
    const std::uint64_t seed = seed_of(cfg);
    schedule.seed = seed;
    const long long n = cfg.int_or("simulate.i", 200);
    const long long reps = cfg.int_or("simulate.reps", 1000);
    if (n < 1 || reps < 1) fail(ErrorKind::InvalidConfig, "simulate needs positive --i and --reps");
    DoseGenerator gen;
    gen.binary = cfg.bool_or("simulate.binary", false);
    const SyntheticStudy study = synthetic_study(static_cast<std::size_t>(n), gen, seed);
    const std::string q = cfg.string_or("inference.q", "ones");
    QSpec::Kind kind = QSpec::Kind::Ones;
    if (q == "covmeans") kind = QSpec::Kind::CovariateMeans;
    else if (q != "ones") fail(ErrorKind::InvalidConfig, "unknown q '" + q + "' (ones, covmeans)");
    const double alpha = cfg.double_or("inference.alpha", 0.05);
    const SimReport r = simulate_coverage(schedule, study, static_cast<std::size_t>(reps), alpha, kind, seed,
                                          ctx.worker_count());
    ordered_json j;
    j["format"] = "factmatch-simulation";
    j["version"] = FACTMATCH_VERSION;
    j["schedule"] = PotentialSchedule::family_name(schedule.family);
    j["coef"] = schedule.coef;
    j["noise_sd"] = schedule.noise_sd;
    j["effect_sd"] = schedule.effect_sd;
    j["I"] = n;
    j["replications"] = r.replications;
    j["alpha"] = alpha;
    j["q"] = q;
    j["seed"] = seed;
    j["estimands"] = ordered_json::array();
    for (int a = 0; a < 4; ++a) {
        ordered_json e;
        e["estimand"] = "tau" + std::to_string(a + 1);
        e["true_tau"] = r.true_tau[a];
        e["mean_estimate"] = r.mean_estimate[a];
        e["bias"] = r.bias[a];
        e["coverage"] = r.coverage[a];
        e["mean_variance"] = r.mean_variance[a];
        e["mc_variance"] = r.mc_variance[a];
        j["estimands"].push_back(e);
    }
    ctx.emit(out, j.dump(2) + "\n", "simulate", seed);
    return kExitOk;
}

int exit_code_for(ErrorKind k) {
    return k == ErrorKind::InfeasibleMatch || k == ErrorKind::DegenerateStratum ? kExitInfeasible : kExitError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    ctx.started = utc_now();

    CLI::App app{"Two-stage matched designs for two-treatment observational studies", "factmatch"};
    app.set_version_flag("--version", std::string(FACTMATCH_VERSION));
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.fallthrough();
    app.add_option("--config", ctx.config_path, "TOML-style config file");
    app.add_option("--set", ctx.sets, "Override a config key (key=value), repeatable");
    app.add_option("--threads", ctx.threads, "Worker threads")->check(CLI::PositiveNumber);

    std::string input, output, design_path, out_dir;
    std::optional<std::string> out_file;

    auto* match = app.add_subcommand("match", "Build the two-stage matched design");
    match->add_option("--input", input, "Unit CSV")->required();
    match->add_option("--output", output, "Design JSON")->required();

    auto* balance = app.add_subcommand("balance", "Write pre- and post-match balance tables");
    balance->add_option("--design", design_path, "Design JSON")->required();
    balance->add_option("--input", input, "Unit CSV")->required();
    balance->add_option("--out", out_dir, "Output directory")->required();

    std::optional<std::string> q, alpha, null_family, theta, ref, stat, draws, seed, mode, family, grid, covariate,
        link;
    auto* est = app.add_subcommand("estimate", "Estimate the four factorial effects");
    est->add_option("--design", design_path, "Design JSON")->required();
    est->add_option("--input", input, "Unit CSV with outcomes")->required();
    est->add_option("--q", q, "ones | covmeans");
    est->add_option("--alpha", alpha, "Interval level");
    est->add_option("--out", out_file, "Output JSON (stdout when omitted)");

    auto add_test_options = [&](CLI::App* sub) {
        sub->add_option("--design", design_path, "Design JSON")->required();
        sub->add_option("--input", input, "Unit CSV with outcomes")->required();
        sub->add_option("--ref", ref, "Reference dose \"z1,z2\"");
        sub->add_option("--stat", stat, "abstau1..abstau4 | sumabstau[:list] | quadratic[:list]");
        sub->add_option("--draws", draws, "Monte Carlo draws");
        sub->add_option("--seed", seed, "Random seed");
        sub->add_option("--mode", mode, "auto | exact | mc");
        sub->add_option("--covariate", covariate, "Covariate for linear_covariate");
        sub->add_option("--link", link, "identity | expm1 | tanh | cube");
        sub->add_option("--out", out_file, "Output file (stdout when omitted)");
    };
    auto* test = app.add_subcommand("test", "Randomization test of a sharp null");
    add_test_options(test);
    test->add_option("--null", null_family, "noeffect | linear | linear_covariate | single_index");
    test->add_option("--theta", theta, "Null parameters \"t1,t2\"");

    auto* invert = app.add_subcommand("invert", "Confidence region by test inversion");
    add_test_options(invert);
    invert->add_option("--family", family, "linear | linear_covariate | single_index");
    invert->add_option("--grid", grid, "\"t1=lo:hi:step,t2=lo:hi:step\"");
    invert->add_option("--alpha", alpha, "Test level");

    std::optional<std::string> schedule, n_strata, reps, coef, noise_sd, effect_sd;
    bool binary = false;
    auto* sim = app.add_subcommand("simulate", "Coverage simulation with a known schedule");
    sim->add_option("--schedule", schedule, "constant | linear | bilinear | quadratic");
    sim->add_option("--i", n_strata, "Number of strata");
    sim->add_option("--reps", reps, "Replications");
    sim->add_option("--alpha", alpha, "Interval level");
    sim->add_option("--q", q, "ones | covmeans");
    sim->add_option("--seed", seed, "Random seed");
    sim->add_option("--coef", coef, "Schedule coefficients");
    sim->add_option("--noise-sd", noise_sd, "Sd of unit baselines");
    sim->add_option("--effect-sd", effect_sd, "Sd of unit-specific z1 slopes");
    sim->add_flag("--binary", binary, "Binary doses");
    sim->add_option("--out", out_file, "Output JSON (stdout when omitted)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        const std::vector<std::pair<std::string, const std::optional<std::string>*>> flags = {
            {"inference.q", &q},           {"inference.alpha", &alpha},     {"inference.null", &null_family},
            {"inference.theta", &theta},   {"inference.ref", &ref},         {"inference.stat", &stat},
            {"inference.draws", &draws},   {"inference.seed", &seed},       {"inference.mode", &mode},
            {"inference.family", &family}, {"inference.grid", &grid},       {"inference.covariate", &covariate},
            {"inference.link", &link},     {"simulate.schedule", &schedule}, {"simulate.i", &n_strata},
            {"simulate.reps", &reps},      {"simulate.coef", &coef},        {"simulate.noise_sd", &noise_sd},
            {"simulate.effect_sd", &effect_sd}};
        ctx.build_config(flags);
        if (binary) ctx.cfg.set("simulate.binary", "true");

        if (*match) return cmd_match(ctx, input, output);
        if (*balance) return cmd_balance(ctx, design_path, input, out_dir);
        if (*est) return cmd_estimate(ctx, design_path, input, out_file);
        if (*test) return cmd_test(ctx, design_path, input, out_file);
        if (*invert) {
            if (!ctx.cfg.contains("inference.family")) ctx.cfg.set("inference.family", "linear");
            return cmd_invert(ctx, design_path, input, out_file);
        }
        if (*sim) return cmd_simulate(ctx, out_file);
    } catch (const Error& e) {
        err << "factmatch: error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "factmatch: error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace factmatch::cli
