#pragma once

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbt/functional.hpp"
#include "kbt/parallel.hpp"
#include "kbt/report.hpp"
#include "kbt/rng.hpp"

namespace kbt {

enum class WeightScheme { Rademacher, Gaussian };

inline const char* scheme_name(WeightScheme s) {
    return s == WeightScheme::Rademacher ? "rademacher" : "gaussian";
}

inline WeightScheme parse_scheme(const std::string& name) {
    if (name == "rademacher") return WeightScheme::Rademacher;
    if (name == "gaussian") return WeightScheme::Gaussian;
    throw std::invalid_argument("unknown weight scheme: " + name);
}

// n i.i.d. weights with mean 0 and variance 1, drawn from the given stream.
inline Vector gen_weights(WeightScheme scheme, std::size_t n, const RngStream& rng) {
    Vector w(static_cast<Eigen::Index>(n));
    auto eng = rng.engine();
    if (scheme == WeightScheme::Rademacher) {
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w(i) = (eng() >> 63) ? 1.0 : -1.0;  // top bit as a fair coin
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(eng);
    }
    return w;
}

// M wild bootstrap statistics. builder maps a weight vector of length
// n_weights to the perturbed representer; the replicate value is its squared
// norm. Replicate b draws its weights from RngStream{seed, b}, so the output
// does not depend on how replicates are scheduled across threads.
template <typename Builder>
std::vector<double> wild_replicates(Builder&& builder, const KernelSpec& spec, std::size_t M,
                                    std::size_t n_weights, WeightScheme scheme, std::uint64_t seed,
                                    unsigned threads = 1) {
    validate(spec);
    std::vector<double> out(M);
    std::mutex err_mutex;
    std::optional<std::pair<std::size_t, std::string>> first_error;
    parallel_for_blocks(M, threads, [&](std::size_t lo, std::size_t hi) {
        GramCache cache;
        for (std::size_t b = lo; b < hi; ++b) {
            try {
                const Vector w = gen_weights(scheme, n_weights, RngStream{seed, b});
                out[b] = norm_sq(builder(w), spec, &cache);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error || b < first_error->first) first_error = {{b, e.what()}};
                return;
            }
        }
    });
    if (first_error)
        throw std::runtime_error("wild bootstrap replicate " + std::to_string(first_error->first) +
                                 ": " + first_error->second);
    return out;
}

// Turn a statistic and its bootstrap sample into a decision. The critical
// value is the order statistic at 1-based position ceil((1 - alpha) * M) of
// the ascending replicates; rejection requires strict exceedance; the p-value
//   (1 + #{b : replicate_b >= statistic}) / (M + 1)
// counts ties in the replicates' favour and never reaches 0.
inline TestReport calibrate(double statistic, std::vector<double> replicates, double alpha) {
    if (replicates.empty()) throw std::invalid_argument("calibrate: no replicates");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("calibrate: alpha must lie strictly between 0 and 1");
    if (!std::isfinite(statistic)) throw std::invalid_argument("calibrate: statistic is not finite");
    const std::size_t M = replicates.size();
    std::sort(replicates.begin(), replicates.end());
    // the small shift guards against (1 - alpha) * M landing just above an
    // integer it equals mathematically
    const double raw_pos = std::ceil((1.0 - alpha) * static_cast<double>(M) - 1e-9);
    const std::size_t pos = std::clamp<std::size_t>(static_cast<std::size_t>(raw_pos), 1, M);
    TestReport r;
    r.statistic = statistic;
    r.alpha = alpha;
    r.M = M;
    r.critical_value = replicates[pos - 1];
    const auto ge = std::lower_bound(replicates.begin(), replicates.end(), statistic);
    const auto count_ge = static_cast<double>(replicates.end() - ge);
    r.p_value = (1.0 + count_ge) / (static_cast<double>(M) + 1.0);
    r.reject = statistic > r.critical_value;
    r.replicates = std::move(replicates);
    return r;
}

}  // namespace kbt
