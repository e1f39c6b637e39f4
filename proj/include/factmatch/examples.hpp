#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace factmatch {

struct ExampleCheck {
    std::string file;
    std::string expected;
    std::string actual;
    bool ok = false;
};

struct ExampleReport {
    std::vector<std::string> commands;
    std::vector<int> exit_codes;
    std::vector<ExampleCheck> checks;
    double seconds = 0.0;

    bool passed() const;
};

/// Copies the bundle into `workdir`, runs every line of `commands.txt` there
/// through the CLI and compares the outputs against `expected.sha256`.
/// Lines starting with '#' and blank lines are skipped; the leading word
/// "factmatch" is the program name.
ExampleReport run_examples(const std::filesystem::path& bundle, const std::filesystem::path& workdir);

/// Like run_examples but throws ChecksumMismatch on any differing output and
/// Io when a command fails.
ExampleReport verify_examples(const std::filesystem::path& bundle, const std::filesystem::path& workdir);

/// Runs the commands and rewrites `expected.sha256` from the outputs.
void record_examples(const std::filesystem::path& bundle, const std::filesystem::path& workdir);

}  // namespace factmatch
