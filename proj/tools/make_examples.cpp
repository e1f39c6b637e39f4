#include <charconv>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "factmatch/data_model.hpp"
#include "factmatch/testkit.hpp"

// Writes the synthetic medium-sized example dataset.
int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic observational dataset", "make_examples"};
    std::size_t n = 400, k = 18;
    std::uint64_t seed = 2024;
    std::string out = "medium.csv";
    app.add_option("--n", n, "Units");
    app.add_option("--k", k, "Covariates");
    app.add_option("--seed", seed, "Seed");
    app.add_option("--out", out, "Output CSV");
    CLI11_PARSE(app, argc, argv);
    const factmatch::Dataset d = factmatch::synthetic_observational(n, k, seed, true);
    auto num = [](double v) {
        char buf[64];
        auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    std::ofstream f(out, std::ios::binary);
    f << "id,z1,z2";
    for (const auto& c : d.covariate_names()) f << ',' << c;
    f << ",rural,y\n";
    for (const auto& u : d.units()) {
        f << u.id << ',' << num(u.z1) << ',' << num(u.z2);
        for (double x : u.covariates) f << ',' << num(x);
        f << ',' << u.exact_keys.at(0) << ',' << num(*u.y) << '\n';
    }
    std::cout << "wrote " << d.size() << " units to " << out << "\n";
    return f ? 0 : 1;
}
