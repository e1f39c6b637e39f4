#include "factmatch/examples.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "factmatch/cli.hpp"
#include "factmatch/error.hpp"

namespace factmatch {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Splits a command line on whitespace; double quotes group words.
std::vector<std::string> split_words(const std::string& line) {
    std::vector<std::string> words;
    std::string cur;
    bool quoted = false, have = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            have = true;
        } else if (!quoted && (c == ' ' || c == '\t')) {
            if (have) words.push_back(cur);
            cur.clear();
            have = false;
        } else {
            cur.push_back(c);
            have = true;
        }
    }
    if (quoted) fail(ErrorKind::InvalidConfig, "unbalanced quote in: " + line);
    if (have) words.push_back(cur);
    return words;
}

std::vector<std::pair<std::string, std::string>> read_expected(const fs::path& p) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string hash, file;
        row >> hash >> file;
        if (hash.size() != 64 || file.empty()) fail(ErrorKind::InvalidConfig, "malformed checksum line: " + line);
        out.emplace_back(file, hash);
    }
    return out;
}

struct CwdGuard {
    fs::path saved = fs::current_path();
    ~CwdGuard() { fs::current_path(saved); }
};

ExampleReport run_commands(const fs::path& bundle, const fs::path& workdir) {
    ExampleReport report;
    const auto start = std::chrono::steady_clock::now();
    const fs::path src = fs::absolute(bundle);
    fs::create_directories(workdir);
    for (const auto& entry : fs::directory_iterator(src)) {
        if (entry.is_regular_file()) {
            fs::copy_file(entry.path(), workdir / entry.path().filename(), fs::copy_options::overwrite_existing);
        }
    }
    CwdGuard guard;
    fs::current_path(workdir);
    std::istringstream in(slurp("commands.txt"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> words = split_words(line);
        if (words.empty()) continue;
        if (words.front() != "factmatch") fail(ErrorKind::InvalidConfig, "command must start with factmatch: " + line);
        words.erase(words.begin());
        std::ostringstream out, err;
        const int code = cli::run(words, out, err);
        report.commands.push_back(line);
        report.exit_codes.push_back(code);
        if (code != 0) fail(ErrorKind::Io, "command failed (exit " + std::to_string(code) + "): " + line + "\n" + err.str());
        // Commands without --out print their result; keep stdout next to the command index.
        if (!out.str().empty()) {
            std::ofstream log("out/stdout_" + std::to_string(report.commands.size()) + ".txt", std::ios::binary);
            log << out.str();
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace

bool ExampleReport::passed() const {
    for (const ExampleCheck& c : checks) {
        if (!c.ok) return false;
    }
    return !checks.empty();
}

ExampleReport run_examples(const fs::path& bundle, const fs::path& workdir) {
    const auto expected = read_expected(bundle / "expected.sha256");
    fs::create_directories(workdir / "out");
    ExampleReport report = run_commands(bundle, workdir);
    for (const auto& [file, hash] : expected) {
        ExampleCheck c;
        c.file = file;
        c.expected = hash;
        const fs::path p = workdir / file;
        c.actual = fs::exists(p) ? cli::sha256_hex(slurp(p)) : std::string("missing");
        c.ok = c.actual == c.expected;
        report.checks.push_back(c);
    }
    return report;
}

ExampleReport verify_examples(const fs::path& bundle, const fs::path& workdir) {
    ExampleReport report = run_examples(bundle, workdir);
    for (const ExampleCheck& c : report.checks) {
        if (!c.ok) {
            fail(ErrorKind::ChecksumMismatch, c.file + ": expected " + c.expected + ", got " + c.actual);
        }
    }
    if (report.checks.empty()) fail(ErrorKind::ChecksumMismatch, "no checksums listed in expected.sha256");
    return report;
}

void record_examples(const fs::path& bundle, const fs::path& workdir) {
    const auto listed = read_expected(bundle / "expected.sha256");
    fs::create_directories(workdir / "out");
    run_commands(bundle, workdir);
    std::ofstream out(bundle / "expected.sha256", std::ios::binary);
    for (const auto& [file, hash] : listed) out << cli::sha256_hex(slurp(workdir / file)) << "  " << file << "\n";
}

}  // namespace factmatch
