#include <iostream>

#include "CLI11.hpp"
#include "factmatch/error.hpp"
#include "factmatch/examples.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Re-run the documented example commands and compare output checksums", "verify_examples"};
    std::string bundle = "docs/examples";
    std::string workdir = "examples_work";
    bool record = false;
    app.add_option("--bundle", bundle, "Example bundle directory");
    app.add_option("--workdir", workdir, "Scratch directory for outputs");
    app.add_flag("--record", record, "Rewrite expected.sha256 from the current outputs");
    CLI11_PARSE(app, argc, argv);
    try {
        if (record) {
            factmatch::record_examples(bundle, workdir);
            std::cout << "recorded checksums in " << bundle << "/expected.sha256\n";
            return 0;
        }
        const factmatch::ExampleReport r = factmatch::run_examples(bundle, workdir);
        for (const auto& c : r.checks) std::cout << (c.ok ? "ok       " : "MISMATCH ") << c.file << "\n";
        std::cout << r.commands.size() << " commands in " << r.seconds << " s\n";
        if (!r.passed()) {
            std::cerr << "verify_examples: ChecksumMismatch\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "verify_examples: " << e.what() << "\n";
        return 1;
    }
}
