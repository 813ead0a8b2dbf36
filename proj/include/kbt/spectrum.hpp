#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kbt/functional.hpp"
#include "kbt/rng.hpp"

namespace kbt {

// Empirical spectrum of the covariance operator behind the weighted
// chi-square limit: eigenvalues of the representer Gram divided by the number
// of representer samples.
struct SpectrumEstimate {
    std::vector<double> eigenvalues;  // sorted descending, clamped >= 0
    double trace = 0.0;               // sum of the reported eigenvalues
    std::size_t B = 0;
    std::size_t clamped = 0;  // how many eigenvalues were clamped at zero
};

// Gram of representers: G[a][b] = <f_a, f_b>. When every functional lives on
// the same point set (the wild bootstrap case: same points, fresh
// coefficients) the kernel matrix is assembled once and G = C^T K C column by
// column; otherwise each pair goes through cross_inner, which is quadratic in
// the point counts per pair.
inline Matrix representer_gram(const std::vector<PointMassFunctional>& fs, const KernelSpec& spec,
                               unsigned threads = 1) {
    if (fs.empty()) throw std::invalid_argument("representer_gram: need at least one functional");
    for (const auto& f : fs) check_shape(f);
    const auto B = static_cast<Eigen::Index>(fs.size());
    Matrix g(B, B);

    bool shared = true;
    for (const auto& f : fs) {
        if (f.points.rows() != fs[0].points.rows() || f.points.cols() != fs[0].points.cols() ||
            std::memcmp(f.points.data(), fs[0].points.data(),
                        sizeof(double) * static_cast<std::size_t>(f.points.size())) != 0) {
            shared = false;
            break;
        }
    }
    if (shared && fs[0].points.rows() > 0) {
        const GramMatrix k = gram(spec, fs[0].points, threads);
        Matrix c(fs[0].points.rows(), B);
        for (Eigen::Index b = 0; b < B; ++b) c.col(b) = fs[static_cast<std::size_t>(b)].coefficients;
        const Matrix t = k.entries * c;
        for (Eigen::Index a = 0; a < B; ++a)
            for (Eigen::Index b = a; b < B; ++b) g(a, b) = g(b, a) = c.col(a).dot(t.col(b));
        return g;
    }
    for (Eigen::Index a = 0; a < B; ++a)
        for (Eigen::Index b = a; b < B; ++b)
            g(a, b) = g(b, a) =
                cross_inner(fs[static_cast<std::size_t>(a)], fs[static_cast<std::size_t>(b)], spec);
    return g;
}

// Eigenvalues of G/B, clamped at zero and sorted descending. B defaults to
// the matrix order, the right normalization when G comes straight from
// representer_gram. The trace identity sum(lambda) = mean of the diagonal
// (the B statistic values) is what ties the spectrum to the bootstrap.
inline SpectrumEstimate estimate_eigenvalues(const Matrix& g, std::size_t B = 0) {
    if (g.rows() != g.cols() || g.rows() < 1)
        throw std::invalid_argument("estimate_eigenvalues: G must be square and non-empty");
    if (B == 0) B = static_cast<std::size_t>(g.rows());
    const double scale = 1.0 + g.cwiseAbs().maxCoeff();
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9 * scale)
        throw std::invalid_argument("estimate_eigenvalues: G is not symmetric");
    const Matrix s = 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("estimate_eigenvalues: eigensolver failed");
    SpectrumEstimate est;
    est.B = B;
    const Vector lam = solver.eigenvalues() / static_cast<double>(B);
    est.eigenvalues.assign(lam.data(), lam.data() + lam.size());
    std::sort(est.eigenvalues.begin(), est.eigenvalues.end(), std::greater<double>());
    for (double& v : est.eigenvalues) {
        if (v < 0.0) {
            v = 0.0;
            ++est.clamped;
        }
        est.trace += v;
    }
    return est;
}

// Monte-Carlo draws from sum_i lambda_i * Z_i^2 with Z_i i.i.d. standard
// normal, fresh normals per draw.
inline std::vector<double> sample_weighted_chisq(const std::vector<double>& lambdas,
                                                 std::size_t draws, const RngStream& rng) {
    for (double l : lambdas)
        if (!(l >= 0.0) || !std::isfinite(l))
            throw std::invalid_argument("sample_weighted_chisq: lambdas must be nonnegative");
    std::vector<double> out(draws, 0.0);
    auto eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < draws; ++d) {
        double s = 0.0;
        for (double l : lambdas) {
            const double z = normal(eng);
            s += l * z * z;
        }
        out[d] = s;
    }
    return out;
}

// Two-sample Kolmogorov-Smirnov distance: sup over x of |F_a(x) - F_b(x)|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

}  // namespace kbt
