#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "kbt/bootstrap.hpp"

namespace kbt {

// Two independent samples over a shared domain, one point per row.
struct TwoSample {
    Matrix x;  // group 0, n0 points
    Matrix y;  // group 1, n1 points
};

inline void check_shape(const TwoSample& s) {
    if (s.x.rows() < 1 || s.y.rows() < 1)
        throw std::invalid_argument("two-sample: both groups must be non-empty");
    if (s.x.cols() != s.y.cols())
        throw std::invalid_argument("two-sample: groups have different dimensions");
}

inline Matrix pooled_points(const TwoSample& s) {
    Matrix p(s.x.rows() + s.y.rows(), s.x.cols());
    p << s.x, s.y;
    return p;
}

// Representer of S_n(w) = sqrt(n) * (mean_x w - mean_y w): coefficient
// sqrt(n)/n0 on each x_i and -sqrt(n)/n1 on each y_j. Its squared norm is
// Psi_n = n * MMD^2 between the two empirical measures.
inline PointMassFunctional mmd_coefficients(const TwoSample& s) {
    check_shape(s);
    const Eigen::Index n0 = s.x.rows(), n1 = s.y.rows();
    const double n = static_cast<double>(n0 + n1);
    PointMassFunctional f;
    f.points = pooled_points(s);
    f.coefficients.resize(n0 + n1);
    f.coefficients.head(n0).setConstant(std::sqrt(n) / static_cast<double>(n0));
    f.coefficients.tail(n1).setConstant(-std::sqrt(n) / static_cast<double>(n1));
    return f;
}

inline double mmd_statistic(const TwoSample& s, const KernelSpec& spec,
                            GramCache* cache = nullptr) {
    return norm_sq(mmd_coefficients(s), spec, cache);
}

// Wild bootstrap coefficients. Raw weights (U over group 0, V over group 1)
// are centered within their own group:
//   W_i^X = U_i - mean(U),  W_j^Y = V_j - mean(V),
// and enter with the same sqrt(n)/n0, -sqrt(n)/n1 scaling as the statistic.
inline auto mmd_wild_builder(const TwoSample& s) {
    check_shape(s);
    const Eigen::Index n0 = s.x.rows(), n1 = s.y.rows();
    const double n = static_cast<double>(n0 + n1);
    const double cx = std::sqrt(n) / static_cast<double>(n0);
    const double cy = -std::sqrt(n) / static_cast<double>(n1);
    return [points = pooled_points(s), n0, n1, cx, cy](const Vector& w) {
        if (w.size() != n0 + n1)
            throw std::invalid_argument("mmd wild builder: weight length must be n0 + n1");
        PointMassFunctional f;
        f.points = points;
        f.coefficients.resize(n0 + n1);
        f.coefficients.head(n0) = cx * (w.head(n0).array() - w.head(n0).mean());
        f.coefficients.tail(n1) = cy * (w.tail(n1).array() - w.tail(n1).mean());
        return f;
    };
}

inline TestReport mmd_test(const TwoSample& s, const ResolvedKernel& kernel, WeightScheme scheme,
                           std::size_t M, double alpha, std::uint64_t seed, unsigned threads = 1,
                           bool keep_replicates = true) {
    check_shape(s);
    const std::size_t n0 = static_cast<std::size_t>(s.x.rows());
    const std::size_t n1 = static_cast<std::size_t>(s.y.rows());
    const std::size_t n = n0 + n1;
    GramCache cache;
    const double statistic = mmd_statistic(s, kernel.spec, &cache);
    auto replicates =
        wild_replicates(mmd_wild_builder(s), kernel.spec, M, n, scheme, seed, threads);
    TestReport r = calibrate(statistic, std::move(replicates), alpha);
    r.test = "mmd";
    r.n = n;
    r.kernel = kernel.echo;
    r.scheme = scheme_name(scheme);
    r.seed = seed;
    r.details = {{"n0", static_cast<double>(n0)}, {"n1", static_cast<double>(n1)}};
    if (static_cast<double>(std::min(n0, n1)) / static_cast<double>(n) < 0.05)
        r.warnings.push_back("severe group imbalance: min(n0, n1) < 5% of n");
    if (!keep_replicates) r.replicates.clear();
    return r;
}

// Convenience overload: resolves the kernel on the pooled sample.
inline TestReport mmd_test(const TwoSample& s, const KernelChoice& choice, WeightScheme scheme,
                           std::size_t M, double alpha, std::uint64_t seed, unsigned threads = 1,
                           bool keep_replicates = true) {
    check_shape(s);
    return mmd_test(s, resolve_kernel(choice, pooled_points(s)), scheme, M, alpha, seed, threads,
                    keep_replicates);
}

}  // namespace kbt
