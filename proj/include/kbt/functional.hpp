#pragma once

#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbt/kernels.hpp"

namespace kbt {

// A finite linear combination of kernel point evaluations,
//   f = sum_i c_i k(., x_i),
// which is how every statistic here enters the RKHS: the supremum of a linear
// functional over the unit ball is the norm of its representer, and for
// point-mass representers that norm has the closed form below.
struct PointMassFunctional {
    Matrix points;        // one point per row
    Vector coefficients;  // same length as rows(points)
};

inline void check_shape(const PointMassFunctional& f) {
    if (f.points.rows() != f.coefficients.size())
        throw std::invalid_argument("functional: points/coefficients length mismatch");
}

// sum_i c_i g(x_i) for an arbitrary pointwise evaluator g(row) -> double.
template <typename G>
double apply(const PointMassFunctional& f, G&& g) {
    check_shape(f);
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.points.rows(); ++i)
        s += f.coefficients(i) * g(f.points.row(i));
    return s;
}

// Single-slot cache for the kernel matrix of the most recent point set. Wild
// bootstrap replicates reuse one point set with fresh coefficients, so one
// slot already removes the quadratic cost from the inner loop. Hits compare
// the full point matrix byte for byte, not just the fingerprint.
class GramCache {
  public:
    const Matrix& gram_for(const KernelSpec& spec, const Matrix& points, unsigned threads = 1) {
        const std::uint64_t h = detail::hash_points(points);
        if (valid_ && h == hash_ && same_spec(spec) && points.rows() == points_.rows() &&
            points.cols() == points_.cols() &&
            std::memcmp(points.data(), points_.data(),
                        sizeof(double) * static_cast<std::size_t>(points.size())) == 0)
            return gram_;
        GramMatrix g = gram(spec, points, threads);
        points_ = points;
        gram_ = std::move(g.entries);
        hash_ = g.points_hash;
        spec_ = spec;
        valid_ = true;
        return gram_;
    }

  private:
    bool same_spec(const KernelSpec& s) const {
        return s.family == spec_.family && s.lengthscale_sq == spec_.lengthscale_sq &&
               s.rq_alpha == spec_.rq_alpha;
    }
    bool valid_ = false;
    KernelSpec spec_;
    Matrix points_;
    Matrix gram_;
    std::uint64_t hash_ = 0;
};

// c^T K c without the nonnegativity clamp; tiny negative values can appear
// through round-off even though K is positive semidefinite.
inline double norm_sq_raw(const PointMassFunctional& f, const KernelSpec& spec,
                          GramCache* cache = nullptr) {
    check_shape(f);
    if (f.points.rows() == 0) return 0.0;
    if (cache != nullptr) {
        const Matrix& k = cache->gram_for(spec, f.points);
        return f.coefficients.dot(k * f.coefficients);
    }
    const GramMatrix g = gram(spec, f.points);
    return f.coefficients.dot(g.entries * f.coefficients);
}

// ||f||^2 = c^T K c, clamped to [0, inf).
inline double norm_sq(const PointMassFunctional& f, const KernelSpec& spec,
                      GramCache* cache = nullptr) {
    return std::max(0.0, norm_sq_raw(f, spec, cache));
}

// <f, g> = c_f^T K_fg c_g with K_fg[i][j] = k(x_i^f, x_j^g).
inline double cross_inner(const PointMassFunctional& f, const PointMassFunctional& g,
                          const KernelSpec& spec) {
    check_shape(f);
    check_shape(g);
    if (f.points.rows() == 0 || g.points.rows() == 0) return 0.0;
    const Matrix k = cross_gram(spec, f.points, g.points);
    return f.coefficients.dot(k * g.coefficients);
}

inline PointMassFunctional scale(PointMassFunctional f, double a) {
    f.coefficients *= a;
    return f;
}

// Formal sum; point lists are concatenated, duplicates are kept.
inline PointMassFunctional add(const PointMassFunctional& f, const PointMassFunctional& g) {
    check_shape(f);
    check_shape(g);
    if (f.points.rows() == 0) return g;
    if (g.points.rows() == 0) return f;
    if (f.points.cols() != g.points.cols())
        throw std::invalid_argument("add: functionals live on different point dimensions");
    PointMassFunctional out;
    out.points.resize(f.points.rows() + g.points.rows(), f.points.cols());
    out.points << f.points, g.points;
    out.coefficients.resize(f.coefficients.size() + g.coefficients.size());
    out.coefficients << f.coefficients, g.coefficients;
    return out;
}

// Merge bitwise-identical points by summing their coefficients, keeping first
// occurrence order. Norms and applications are unchanged.
inline PointMassFunctional consolidate(const PointMassFunctional& f) {
    check_shape(f);
    const Eigen::Index n = f.points.rows(), d = f.points.cols();
    std::map<std::string, Eigen::Index> slot;
    std::vector<Eigen::Index> keep;
    std::vector<double> coef;
    keep.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string key(sizeof(double) * static_cast<std::size_t>(d), '\0');
        for (Eigen::Index j = 0; j < d; ++j)
            std::memcpy(key.data() + sizeof(double) * static_cast<std::size_t>(j), &f.points(i, j),
                        sizeof(double));
        auto [it, inserted] = slot.try_emplace(key, static_cast<Eigen::Index>(keep.size()));
        if (inserted) {
            keep.push_back(i);
            coef.push_back(f.coefficients(i));
        } else {
            coef[static_cast<std::size_t>(it->second)] += f.coefficients(i);
        }
    }
    PointMassFunctional out;
    out.points.resize(static_cast<Eigen::Index>(keep.size()), d);
    out.coefficients.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.points.row(static_cast<Eigen::Index>(r)) = f.points.row(keep[r]);
        out.coefficients(static_cast<Eigen::Index>(r)) = coef[r];
    }
    return out;
}

}  // namespace kbt
