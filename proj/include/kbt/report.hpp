#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kbt/kernels.hpp"

namespace kbt {

// Outcome of one calibrated test run. replicates is kept sorted ascending and
// may be cleared by callers that do not want to carry the bootstrap sample.
struct TestReport {
    std::string test;
    std::size_t n = 0;
    double statistic = 0.0;
    double critical_value = 0.0;
    double p_value = 1.0;
    bool reject = false;
    double alpha = 0.05;
    std::size_t M = 0;
    KernelEcho kernel;
    std::string scheme = "rademacher";
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
    std::vector<double> replicates;
    // test-specific numeric settings (group sizes, regression degree, ...),
    // serialized in this order
    std::vector<std::pair<std::string, double>> details;
};

}  // namespace kbt
