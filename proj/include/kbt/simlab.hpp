#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbt/gcm.hpp"
#include "kbt/logrank.hpp"
#include "kbt/mmd.hpp"
#include "kbt/parallel.hpp"
#include "kbt/rng.hpp"

namespace kbt {

// Outcome of one rejection-rate sweep over a parameter grid, with Wald
// binomial 95% half-widths so desk-scale runs stay interpretable.
struct ExperimentResult {
    std::vector<double> param_grid;
    std::vector<double> rates;
    std::vector<double> ci_half_width;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::string config_echo;
};

// Conditional-independence benchmark, scalar z:
//   Z ~ N(0,1), X = Z + U1 sin(5 Z), Y = Z^2 + gamma U1 + (1-gamma) U2.
// gamma = 0 gives conditional independence; gamma > 0 routes the shared U1
// into Y. The plain GCM stays blind for every gamma because
// E(eps_X eps_Y | Z) = gamma sin(5 Z) integrates to zero against N(0,1).
inline CondSample gen_data1(std::size_t n, double gamma, const RngStream& rng) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("gen_data1: gamma must lie in [0, 1]");
    if (n < 1) throw std::invalid_argument("gen_data1: n must be >= 1");
    CondSample s;
    const auto en = static_cast<Eigen::Index>(n);
    s.x.resize(en);
    s.y.resize(en);
    s.z.resize(en, 1);
    auto eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < en; ++i) {
        const double z = normal(eng);
        const double u1 = normal(eng);
        const double u2 = normal(eng);
        s.z(i, 0) = z;
        s.x(i) = z + u1 * std::sin(5.0 * z);
        s.y(i) = z * z + gamma * u1 + (1.0 - gamma) * u2;
    }
    return s;
}

// Growing-dimension benchmark:
//   Z ~ N(0, I_d), U ~ N(0, I_d),
//   X = Z_1 + (1/sqrt_d) sum_j U_j Z_j,  Y = Z_2 + (1/sqrt_d) sum_j U_j.
// The residual product has E(eps_X eps_Y | Z) = (1/d) sum_j Z_j, a signal
// that thins out as d grows.
inline CondSample gen_data2(std::size_t n, std::size_t d, const RngStream& rng) {
    if (d < 2) throw std::invalid_argument("gen_data2: d must be >= 2");
    if (n < 1) throw std::invalid_argument("gen_data2: n must be >= 1");
    CondSample s;
    const auto en = static_cast<Eigen::Index>(n);
    const auto ed = static_cast<Eigen::Index>(d);
    s.x.resize(en);
    s.y.resize(en);
    s.z.resize(en, ed);
    auto eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    const double root_d = std::sqrt(static_cast<double>(d));
    Vector u(ed);
    for (Eigen::Index i = 0; i < en; ++i) {
        for (Eigen::Index j = 0; j < ed; ++j) s.z(i, j) = normal(eng);
        for (Eigen::Index j = 0; j < ed; ++j) u(j) = normal(eng);
        s.x(i) = s.z(i, 0) + u.dot(s.z.row(i)) / root_d;
        s.y(i) = s.z(i, 1) + u.sum() / root_d;
    }
    return s;
}

// N(0,1) versus N(shift,1), scalar points.
inline TwoSample gen_two_sample(std::size_t n0, std::size_t n1, double shift,
                                const RngStream& rng) {
    if (n0 < 1 || n1 < 1) throw std::invalid_argument("gen_two_sample: group sizes must be >= 1");
    TwoSample s;
    s.x.resize(static_cast<Eigen::Index>(n0), 1);
    s.y.resize(static_cast<Eigen::Index>(n1), 1);
    auto eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) s.x(i, 0) = normal(eng);
    for (Eigen::Index i = 0; i < s.y.rows(); ++i) s.y(i, 0) = shift + normal(eng);
    return s;
}

// Exponential survival with exponential censoring: group 0 event times are
// Exp(1), group 1 Exp(rate1); censoring Exp(cens_l) per group. rate1 = 1 with
// cens0 != cens1 is the "equal survival laws, unequal censoring" null.
inline CensoredSample gen_survival(std::size_t n0, std::size_t n1, double rate1, double cens0,
                                   double cens1, const RngStream& rng) {
    if (n0 < 1 || n1 < 1) throw std::invalid_argument("gen_survival: group sizes must be >= 1");
    if (!(rate1 > 0.0) || !(cens0 > 0.0) || !(cens1 > 0.0))
        throw std::invalid_argument("gen_survival: rates must be positive");
    CensoredSample s;
    s.obs.reserve(n0 + n1);
    auto eng = rng.engine();
    std::exponential_distribution<double> event0(1.0), event1(rate1);
    std::exponential_distribution<double> censor0(cens0), censor1(cens1);
    for (std::size_t i = 0; i < n0; ++i) {
        const double t = event0(eng), c = censor0(eng);
        s.obs.push_back(CensoredObs{std::min(t, c), t <= c, 0});
    }
    for (std::size_t i = 0; i < n1; ++i) {
        const double t = event1(eng), c = censor1(eng);
        s.obs.push_back(CensoredObs{std::min(t, c), t <= c, 1});
    }
    return s;
}

// Rejection rate per grid point over reps independent repetitions. run_one
// draws its dataset and runs one calibrated test; repetition r at grid index
// g always sees the stream (seed, g, r), so results do not depend on the
// thread count and any failure is reported with its (grid, repetition)
// coordinates instead of surfacing partial rates.
template <typename RunOne>
ExperimentResult rejection_rate(const std::vector<double>& grid, std::size_t reps,
                                std::uint64_t seed, RunOne&& run_one, unsigned threads = 1,
                                std::string config_echo = "") {
    if (grid.empty()) throw std::invalid_argument("rejection_rate: empty grid");
    if (reps < 1) throw std::invalid_argument("rejection_rate: reps must be >= 1");
    const std::size_t total = grid.size() * reps;
    std::vector<unsigned char> rejected(total, 0);
    std::mutex err_mutex;
    std::optional<std::pair<std::size_t, std::string>> first_error;
    parallel_for_blocks(total, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t k = lo; k < hi; ++k) {
            const std::size_t g = k / reps, r = k % reps;
            try {
                const RngStream stream = RngStream{seed, 0}.sub(g).sub(r);
                rejected[k] = run_one(grid[g], stream) ? 1 : 0;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error || k < first_error->first) first_error = {{k, e.what()}};
                return;
            }
        }
    });
    if (first_error) {
        const std::size_t g = first_error->first / reps, r = first_error->first % reps;
        throw std::runtime_error("experiment failed at grid point " + std::to_string(g) +
                                 " (value " + std::to_string(grid[g]) + "), repetition " +
                                 std::to_string(r) + ": " + first_error->second);
    }
    ExperimentResult out;
    out.param_grid = grid;
    out.reps = reps;
    out.seed = seed;
    out.config_echo = std::move(config_echo);
    out.rates.resize(grid.size());
    out.ci_half_width.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sum = 0.0;
        for (std::size_t r = 0; r < reps; ++r) sum += rejected[g * reps + r];
        const double p = sum / static_cast<double>(reps);
        out.rates[g] = p;
        out.ci_half_width[g] = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
    }
    return out;
}

}  // namespace kbt
