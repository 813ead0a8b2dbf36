#pragma once

#include <Eigen/QR>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbt/bootstrap.hpp"

namespace kbt {

// Conditional-independence sample: does X depend on Y once Z is accounted for.
struct CondSample {
    Vector x;
    Vector y;
    Matrix z;  // n rows, d columns
};

inline void check_shape(const CondSample& s) {
    if (s.x.size() < 1) throw std::invalid_argument("conditional sample: empty");
    if (s.y.size() != s.x.size() || s.z.rows() != s.x.size())
        throw std::invalid_argument("conditional sample: x, y, z length mismatch");
    if (s.z.cols() < 1) throw std::invalid_argument("conditional sample: z must have d >= 1");
}

// Polynomial regression setup for the residual fits. An empty degree picks
// the default: degree 2 for scalar z, degree 1 otherwise.
struct RegressionConfig {
    std::optional<int> degree;
    bool interactions = true;
    bool intercept = true;
};

inline int resolved_degree(const RegressionConfig& cfg, Eigen::Index d) {
    if (cfg.degree) {
        if (*cfg.degree < 0) throw std::invalid_argument("regression degree must be >= 0");
        return *cfg.degree;
    }
    return d == 1 ? 2 : 1;
}

namespace detail {

// Multi-indices of total degree exactly k over d coordinates, first
// coordinate's exponent descending: k=2, d=2 gives (2,0), (1,1), (0,2).
inline void monomials_of_degree(int k, Eigen::Index d, std::vector<int>& expo,
                                std::vector<std::vector<int>>& out) {
    const auto pos = static_cast<Eigen::Index>(expo.size());
    if (pos == d - 1) {
        expo.push_back(k);
        out.push_back(expo);
        expo.pop_back();
        return;
    }
    for (int e = k; e >= 0; --e) {
        expo.push_back(e);
        monomials_of_degree(k - e, d, expo, out);
        expo.pop_back();
    }
}

}  // namespace detail

// Design matrix: intercept column, then monomials of the z coordinates of
// total degree 1..degree. With interactions off only pure powers z_j^k are
// kept. d = 2, degree 2 with interactions: (1, z1, z2, z1^2, z1*z2, z2^2).
inline Matrix poly_design(const Matrix& z, const RegressionConfig& cfg) {
    const Eigen::Index n = z.rows(), d = z.cols();
    const int degree = resolved_degree(cfg, d);
    std::vector<std::vector<int>> expos;
    for (int k = 1; k <= degree; ++k) {
        if (cfg.interactions) {
            std::vector<int> scratch;
            detail::monomials_of_degree(k, d, scratch, expos);
        } else {
            for (Eigen::Index j = 0; j < d; ++j) {
                std::vector<int> e(static_cast<std::size_t>(d), 0);
                e[static_cast<std::size_t>(j)] = k;
                expos.push_back(std::move(e));
            }
        }
    }
    const Eigen::Index p = static_cast<Eigen::Index>(expos.size()) + (cfg.intercept ? 1 : 0);
    Matrix design(n, p);
    Eigen::Index col = 0;
    if (cfg.intercept) design.col(col++).setOnes();
    for (const auto& e : expos) {
        Vector v = Vector::Ones(n);
        for (Eigen::Index j = 0; j < d; ++j)
            for (int rep = 0; rep < e[static_cast<std::size_t>(j)]; ++rep)
                v.array() *= z.col(j).array();
        design.col(col++) = v;
    }
    return design;
}

// Residuals of the two regressions (x on z and y on z). fit_x, fit_y are the
// fitted values; a_f_hat, a_g_hat are filled by attach_truth when the true
// regression functions are known (simulation diagnostics).
struct ResidualSet {
    Vector eps_x, eps_y;
    Vector fit_x, fit_y;
    std::optional<double> a_f_hat, a_g_hat;
    std::vector<std::string> warnings;
};

// Least squares via a rank-revealing orthogonal factorization; rank-deficient
// designs get the minimal-norm solution and a warning instead of an error, so
// a degenerate simulated draw cannot abort a batch run.
inline ResidualSet fit_residuals(const CondSample& s, const RegressionConfig& cfg) {
    check_shape(s);
    if (!s.x.allFinite() || !s.y.allFinite() || !s.z.allFinite())
        throw std::invalid_argument("fit_residuals: non-finite values in input");
    const Matrix design = poly_design(s.z, cfg);
    ResidualSet r;
    if (design.cols() >= s.x.size())
        r.warnings.push_back("saturated regression design (columns >= n); residuals interpolate");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
    if (cod.rank() < design.cols())
        r.warnings.push_back("rank-deficient regression design; minimal-norm solution used");
    r.fit_x = design * cod.solve(s.x);
    r.fit_y = design * cod.solve(s.y);
    r.eps_x = s.x - r.fit_x;
    r.eps_y = s.y - r.fit_y;
    return r;
}

// In-sample mean squared distance between the fitted and the true regression
// functions, evaluated at the sample's own z points.
inline void attach_truth(ResidualSet& r, const Vector& f_true, const Vector& g_true) {
    if (f_true.size() != r.fit_x.size() || g_true.size() != r.fit_y.size())
        throw std::invalid_argument("attach_truth: length mismatch");
    r.a_f_hat = (r.fit_x - f_true).squaredNorm() / static_cast<double>(f_true.size());
    r.a_g_hat = (r.fit_y - g_true).squaredNorm() / static_cast<double>(g_true.size());
}

// Representer of S_n(w) = (1/sqrt(n)) sum_i w(Z_i) eps_X_i eps_Y_i: point Z_i
// with coefficient eps_X_i * eps_Y_i / sqrt(n).
inline PointMassFunctional kgcm_coefficients(const ResidualSet& r, const Matrix& z) {
    if (r.eps_x.size() != z.rows() || r.eps_y.size() != z.rows())
        throw std::invalid_argument("kgcm_coefficients: length mismatch");
    PointMassFunctional f;
    f.points = z;
    f.coefficients =
        (r.eps_x.array() * r.eps_y.array() / std::sqrt(static_cast<double>(z.rows()))).matrix();
    return f;
}

// Wild bootstrap: coefficient i is multiplied by the raw weight W_i. No
// centering happens here; only the MMD bootstrap centers its weights.
inline auto kgcm_wild_builder(const ResidualSet& r, const Matrix& z) {
    const PointMassFunctional base = kgcm_coefficients(r, z);
    return [base](const Vector& w) {
        if (w.size() != base.coefficients.size())
            throw std::invalid_argument("kgcm wild builder: weight length must be n");
        PointMassFunctional f;
        f.points = base.points;
        f.coefficients = base.coefficients.cwiseProduct(w);
        return f;
    };
}

using WeightFn = std::function<double(const Eigen::RowVectorXd&)>;

// The fixed-weight baseline family: constant 1 plus sign(z_j) per coordinate.
inline std::vector<WeightFn> wgcm_standard_weights(Eigen::Index d) {
    std::vector<WeightFn> fns;
    fns.emplace_back([](const Eigen::RowVectorXd&) { return 1.0; });
    for (Eigen::Index j = 0; j < d; ++j)
        fns.emplace_back([j](const Eigen::RowVectorXd& z) {
            return z(j) > 0.0 ? 1.0 : (z(j) < 0.0 ? -1.0 : 0.0);
        });
    return fns;
}

namespace detail {

// Column j holds w_j(Z_i) * eps_X_i * eps_Y_i / sqrt(n), so column sums are
// the per-weight statistics S_n(w_j).
inline Matrix wgcm_terms(const ResidualSet& r, const Matrix& z,
                         const std::vector<WeightFn>& weight_fns) {
    if (r.eps_x.size() != z.rows() || r.eps_y.size() != z.rows())
        throw std::invalid_argument("wgcm: length mismatch");
    if (weight_fns.empty()) throw std::invalid_argument("wgcm: need at least one weight function");
    const Eigen::Index n = z.rows();
    const Vector prod = (r.eps_x.array() * r.eps_y.array()).matrix() /
                        std::sqrt(static_cast<double>(n));
    Matrix a(n, static_cast<Eigen::Index>(weight_fns.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd zi = z.row(i);
        for (std::size_t j = 0; j < weight_fns.size(); ++j)
            a(i, static_cast<Eigen::Index>(j)) = weight_fns[j](zi) * prod(i);
    }
    return a;
}

}  // namespace detail

// Baseline statistic: max_j |S_n(w_j)| over the fixed weight functions. A
// single constant weight gives the plain GCM numerator sqrt(n) * mean(eps_X
// eps_Y).
inline double wgcm_statistic(const ResidualSet& r, const Matrix& z,
                             const std::vector<WeightFn>& weight_fns) {
    return detail::wgcm_terms(r, z, weight_fns).colwise().sum().cwiseAbs().maxCoeff();
}

// Calibrated baseline test: the wild bootstrap perturbs each residual product
// with a raw weight and the same max-|.| aggregation is applied per
// replicate. Reported as "gcm" for the single constant weight, else "wgcm".
inline TestReport wgcm_test(const CondSample& s, const RegressionConfig& cfg,
                            const std::vector<WeightFn>& weight_fns, WeightScheme scheme,
                            std::size_t M, double alpha, std::uint64_t seed, unsigned threads = 1,
                            bool keep_replicates = true) {
    check_shape(s);
    const ResidualSet res = fit_residuals(s, cfg);
    const Matrix a = detail::wgcm_terms(res, s.z, weight_fns);
    const double statistic = a.colwise().sum().cwiseAbs().maxCoeff();
    const std::size_t n = static_cast<std::size_t>(s.x.size());
    std::vector<double> replicates(M);
    parallel_for_blocks(M, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            const Vector w = gen_weights(scheme, n, RngStream{seed, b});
            replicates[b] = (a.transpose() * w).cwiseAbs().maxCoeff();
        }
    });
    TestReport r = calibrate(statistic, std::move(replicates), alpha);
    r.test = weight_fns.size() == 1 ? "gcm" : "wgcm";
    r.n = n;
    r.kernel = KernelEcho{"none", 0.0, "none"};
    r.scheme = scheme_name(scheme);
    r.seed = seed;
    r.details = {{"degree", static_cast<double>(resolved_degree(cfg, s.z.cols()))},
                 {"interactions", cfg.interactions ? 1.0 : 0.0},
                 {"weights", static_cast<double>(weight_fns.size())}};
    r.warnings = res.warnings;
    if (!keep_replicates) r.replicates.clear();
    return r;
}

inline TestReport kgcm_test(const CondSample& s, const RegressionConfig& cfg,
                            const ResolvedKernel& kernel, WeightScheme scheme, std::size_t M,
                            double alpha, std::uint64_t seed, unsigned threads = 1,
                            bool keep_replicates = true) {
    check_shape(s);
    const ResidualSet res = fit_residuals(s, cfg);
    GramCache cache;
    const double statistic = norm_sq(kgcm_coefficients(res, s.z), kernel.spec, &cache);
    auto replicates = wild_replicates(kgcm_wild_builder(res, s.z), kernel.spec, M,
                                      static_cast<std::size_t>(s.x.size()), scheme, seed, threads);
    TestReport r = calibrate(statistic, std::move(replicates), alpha);
    r.test = "kgcm";
    r.n = static_cast<std::size_t>(s.x.size());
    r.kernel = kernel.echo;
    r.scheme = scheme_name(scheme);
    r.seed = seed;
    r.details = {{"d", static_cast<double>(s.z.cols())},
                 {"degree", static_cast<double>(resolved_degree(cfg, s.z.cols()))},
                 {"interactions", cfg.interactions ? 1.0 : 0.0}};
    r.warnings = res.warnings;
    if (!keep_replicates) r.replicates.clear();
    return r;
}

// Convenience overload: resolves the kernel on the conditioning points z.
inline TestReport kgcm_test(const CondSample& s, const RegressionConfig& cfg,
                            const KernelChoice& choice, WeightScheme scheme, std::size_t M,
                            double alpha, std::uint64_t seed, unsigned threads = 1,
                            bool keep_replicates = true) {
    check_shape(s);
    return kgcm_test(s, cfg, resolve_kernel(choice, s.z), scheme, M, alpha, seed, threads,
                     keep_replicates);
}

}  // namespace kbt
