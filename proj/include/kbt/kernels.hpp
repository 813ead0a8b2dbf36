#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbt/parallel.hpp"
#include "kbt/rng.hpp"

namespace kbt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelFamily { SquaredExponential, Constant, RationalQuadratic };

// A fully resolved kernel: any data-dependent lengthscale choice (median
// heuristic) happens before a KernelSpec is built, so evaluation is pure.
struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    double lengthscale_sq = 1.0;  // l^2; unused by the constant family
    double rq_alpha = 1.0;        // rational-quadratic shape; unused otherwise
};

inline const char* family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::SquaredExponential: return "squared-exponential";
        case KernelFamily::Constant: return "constant";
        case KernelFamily::RationalQuadratic: return "rational-quadratic";
    }
    return "?";
}

inline KernelFamily parse_family(const std::string& name) {
    if (name == "squared-exponential" || name == "se") return KernelFamily::SquaredExponential;
    if (name == "constant" || name == "const") return KernelFamily::Constant;
    if (name == "rational-quadratic" || name == "rq") return KernelFamily::RationalQuadratic;
    throw std::invalid_argument("unknown kernel family: " + name);
}

inline void validate(const KernelSpec& spec) {
    if (spec.family != KernelFamily::Constant &&
        !(spec.lengthscale_sq > 0.0 && std::isfinite(spec.lengthscale_sq)))
        throw std::invalid_argument("kernel lengthscale_sq must be positive and finite");
    if (spec.family == KernelFamily::RationalQuadratic &&
        !(spec.rq_alpha > 0.0 && std::isfinite(spec.rq_alpha)))
        throw std::invalid_argument("kernel rq_alpha must be positive and finite");
}

// k(u, v) as a function of the squared Euclidean distance r2 = ||u - v||^2:
//   squared-exponential  exp(-r2 / l^2)
//   constant             1
//   rational-quadratic   (1 + r2 / (alpha * l^2))^(-alpha)
// All three are bounded by 1, so Condition (i) |k| <= kappa holds with kappa = 1.
inline double eval_kernel_r2(const KernelSpec& spec, double r2) {
    switch (spec.family) {
        case KernelFamily::Constant: return 1.0;
        case KernelFamily::SquaredExponential: return std::exp(-r2 / spec.lengthscale_sq);
        case KernelFamily::RationalQuadratic:
            return std::pow(1.0 + r2 / (spec.rq_alpha * spec.lengthscale_sq), -spec.rq_alpha);
    }
    return 0.0;
}

template <typename A, typename B>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<A>& u,
                   const Eigen::MatrixBase<B>& v) {
    if (u.size() != v.size()) throw std::invalid_argument("eval_kernel: dimension mismatch");
    return eval_kernel_r2(spec, (u - v).squaredNorm());
}

// Median of the n(n-1)/2 pairwise squared distances ||z_i - z_j||^2, i < j.
// Even counts average the two middle order statistics. Returns the value to
// use directly as lengthscale_sq.
inline double median_heuristic(const Matrix& points) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw std::invalid_argument("median_heuristic: need at least two points");
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            d2.push_back((points.row(i) - points.row(j)).squaredNorm());
    const std::size_t m = d2.size();
    auto mid = d2.begin() + m / 2;
    std::nth_element(d2.begin(), mid, d2.end());
    double med = *mid;
    if (m % 2 == 0) {
        // lower middle = max of the left partition
        double lo = *std::max_element(d2.begin(), mid);
        med = 0.5 * (lo + med);
    }
    if (!(med > 0.0))
        throw std::invalid_argument("median_heuristic: degenerate sample (median distance is zero)");
    return med;
}

namespace detail {

inline std::uint64_t hash_points(const Matrix& points) {
    std::uint64_t h = mix64(0x9ae16a3b2f90404fULL ^ static_cast<std::uint64_t>(points.rows()));
    h = mix64(h ^ static_cast<std::uint64_t>(points.cols()));
    const double* p = points.data();
    const std::size_t len = static_cast<std::size_t>(points.size());
    for (std::size_t i = 0; i < len; ++i) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(double));
        std::memcpy(&bits, p + i, sizeof(bits));
        h = mix64(h ^ bits);
    }
    return h;
}

}  // namespace detail

// Kernel matrix over one point set, with a fingerprint of the inputs so
// downstream caches can recognise repeated point sets.
struct GramMatrix {
    Matrix entries;
    std::uint64_t points_hash = 0;
};

// Each unordered pair is evaluated once and mirrored, so the result is exactly
// symmetric and the diagonal is k(x, x) with r2 = 0 exactly.
inline GramMatrix gram(const KernelSpec& spec, const Matrix& points, unsigned threads = 1) {
    validate(spec);
    const Eigen::Index n = points.rows();
    GramMatrix g;
    g.entries.resize(n, n);
    g.points_hash = detail::hash_points(points);
    parallel_for_blocks(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            for (Eigen::Index j = ei; j < n; ++j) {
                const double v = eval_kernel_r2(spec, (points.row(ei) - points.row(j)).squaredNorm());
                g.entries(ei, j) = v;
                g.entries(j, ei) = v;
            }
        }
    });
    return g;
}

// A kernel request as it arrives from configuration: the lengthscale is
// either a fixed value or, when absent, resolved by the median heuristic on
// the points the kernel will actually see.
struct KernelChoice {
    KernelFamily family = KernelFamily::SquaredExponential;
    std::optional<double> lengthscale_sq;  // empty = median heuristic
    double rq_alpha = 1.0;
};

// How the kernel was chosen, echoed in reports so a run can be reproduced
// from its output alone.
struct KernelEcho {
    std::string family = "squared-exponential";
    double lengthscale_sq = 1.0;
    std::string rule = "fixed";  // "fixed" | "median-heuristic" | "none"
};

struct ResolvedKernel {
    KernelSpec spec;
    KernelEcho echo;
};

inline ResolvedKernel resolve_kernel(const KernelChoice& choice, const Matrix& points) {
    ResolvedKernel r;
    r.spec.family = choice.family;
    r.spec.rq_alpha = choice.rq_alpha;
    r.echo.family = family_name(choice.family);
    if (choice.family == KernelFamily::Constant) {
        r.echo.lengthscale_sq = 0.0;
        r.echo.rule = "none";
        return r;
    }
    if (choice.lengthscale_sq) {
        r.spec.lengthscale_sq = *choice.lengthscale_sq;
        r.echo.rule = "fixed";
    } else {
        r.spec.lengthscale_sq = median_heuristic(points);
        r.echo.rule = "median-heuristic";
    }
    r.echo.lengthscale_sq = r.spec.lengthscale_sq;
    validate(r.spec);
    return r;
}

// Rectangular kernel matrix K[i][j] = k(a_i, b_j) between two point sets.
inline Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
    validate(spec);
    if (a.cols() != b.cols()) throw std::invalid_argument("cross_gram: dimension mismatch");
    Matrix k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            k(i, j) = eval_kernel_r2(spec, (a.row(i) - b.row(j)).squaredNorm());
    return k;
}

}  // namespace kbt
