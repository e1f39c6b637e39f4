#pragma once

#include <functional>
#include <string>

#include "doctest.h"
#include "factmatch/data_model.hpp"
#include "factmatch/error.hpp"

namespace testing {

inline factmatch::ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const factmatch::Error& e) {
        return e.kind();
    }
    FAIL("expected a factmatch::Error");
    return factmatch::ErrorKind::Io;
}

inline std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const factmatch::Error& e) {
        return e.what();
    }
    FAIL("expected a factmatch::Error");
    return {};
}

inline factmatch::Unit unit(const std::string& id, double z1, double z2, std::vector<double> x = {0.0},
                            std::optional<double> y = std::nullopt) {
    factmatch::Unit u;
    u.id = id;
    u.z1 = z1;
    u.z2 = z2;
    u.covariates = std::move(x);
    u.y = y;
    return u;
}

inline factmatch::Dataset dataset(std::vector<factmatch::Unit> units, std::size_t k = 1) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("x" + std::to_string(i + 1));
    return factmatch::Dataset(std::move(units), names);
}

}  // namespace testing
