#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "kbt/gcm.hpp"
#include "kbt/simlab.hpp"

using namespace kbt;

namespace reference {

// Brute-force quadratic form over the residual-product coefficients.
double kgcm_norm(const ResidualSet& r, const Matrix& z, const KernelSpec& spec) {
    const double n = static_cast<double>(z.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.rows(); ++j)
            acc += r.eps_x(i) * r.eps_y(i) * r.eps_x(j) * r.eps_y(j) *
                   eval_kernel(spec, z.row(i), z.row(j)) / n;
    return acc;
}

}  // namespace reference

namespace {

CondSample random_cond(std::mt19937_64& eng, Eigen::Index n, Eigen::Index d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    CondSample s;
    s.x.resize(n);
    s.y.resize(n);
    s.z.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) s.z(i, j) = normal(eng);
        s.x(i) = s.z.row(i).sum() + 0.5 * normal(eng);
        s.y(i) = s.z(i, 0) * s.z(i, 0) + normal(eng);
    }
    return s;
}

}  // namespace

TEST_CASE("resolved degree defaults and validation") {
    CHECK(resolved_degree(RegressionConfig{}, 1) == 2);
    CHECK(resolved_degree(RegressionConfig{}, 2) == 1);
    CHECK(resolved_degree(RegressionConfig{}, 20) == 1);
    CHECK(resolved_degree(RegressionConfig{3, true, true}, 5) == 3);
    CHECK_THROWS_AS(resolved_degree(RegressionConfig{-1, true, true}, 1), std::invalid_argument);
}

TEST_CASE("polynomial design matrices, by hand") {
    Matrix z1(1, 1);
    z1 << 2.0;
    const Matrix d0 = poly_design(z1, RegressionConfig{0, true, true});
    REQUIRE(d0.cols() == 1);
    CHECK(d0(0, 0) == 1.0);

    const Matrix d2 = poly_design(z1, RegressionConfig{2, true, true});
    REQUIRE(d2.cols() == 3);
    CHECK(d2(0, 0) == 1.0);
    CHECK(d2(0, 1) == 2.0);
    CHECK(d2(0, 2) == 4.0);

    Matrix z2(1, 2);
    z2 << 2.0, 3.0;
    const Matrix full = poly_design(z2, RegressionConfig{2, true, true});
    REQUIRE(full.cols() == 6);  // 1, z1, z2, z1^2, z1 z2, z2^2
    CHECK(full(0, 0) == 1.0);
    CHECK(full(0, 1) == 2.0);
    CHECK(full(0, 2) == 3.0);
    CHECK(full(0, 3) == 4.0);
    CHECK(full(0, 4) == 6.0);
    CHECK(full(0, 5) == 9.0);

    const Matrix pure = poly_design(z2, RegressionConfig{2, false, true});
    REQUIRE(pure.cols() == 5);  // 1, z1, z2, z1^2, z2^2
    CHECK(pure(0, 3) == 4.0);
    CHECK(pure(0, 4) == 9.0);

    const Matrix no_icept = poly_design(z2, RegressionConfig{1, true, false});
    REQUIRE(no_icept.cols() == 2);
    CHECK(no_icept(0, 0) == 2.0);
    CHECK(no_icept(0, 1) == 3.0);
}

TEST_CASE("quadratic truth is fitted exactly by the default scalar config") {
    std::mt19937_64 eng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    CondSample s;
    const Eigen::Index n = 40;
    s.x.resize(n);
    s.y.resize(n);
    s.z.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = normal(eng);
        s.z(i, 0) = z;
        s.x(i) = 3.0 - 2.0 * z + 0.5 * z * z;
        s.y(i) = -1.0 + 0.25 * z * z;
    }
    const ResidualSet r = fit_residuals(s, RegressionConfig{});
    CHECK(r.eps_x.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(r.eps_y.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(r.warnings.empty());

    Vector f_true(n), g_true(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        f_true(i) = 3.0 - 2.0 * s.z(i, 0) + 0.5 * s.z(i, 0) * s.z(i, 0);
        g_true(i) = -1.0 + 0.25 * s.z(i, 0) * s.z(i, 0);
    }
    ResidualSet rt = r;
    attach_truth(rt, f_true, g_true);
    REQUIRE(rt.a_f_hat.has_value());
    CHECK(*rt.a_f_hat <= 1e-18);
    CHECK(*rt.a_g_hat <= 1e-18);
}

TEST_CASE("residuals are orthogonal to the design columns") {
    std::mt19937_64 eng(5);
    const CondSample s = random_cond(eng, 50, 2);
    const RegressionConfig cfg{2, true, true};
    const ResidualSet r = fit_residuals(s, cfg);
    const Matrix design = poly_design(s.z, cfg);
    CHECK((design.transpose() * r.eps_x).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((design.transpose() * r.eps_y).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(((r.fit_x + r.eps_x) - s.x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("degenerate designs warn instead of aborting") {
    // saturated: n = 3 scalar points with the default quadratic fit
    CondSample tiny;
    tiny.x.resize(3);
    tiny.x << 1.0, 2.0, 0.5;
    tiny.y.resize(3);
    tiny.y << 0.0, 1.0, -1.0;
    tiny.z.resize(3, 1);
    tiny.z << 0.0, 1.0, 2.0;
    const ResidualSet sat = fit_residuals(tiny, RegressionConfig{});
    REQUIRE_FALSE(sat.warnings.empty());
    CHECK(sat.warnings[0].find("saturated") != std::string::npos);
    CHECK(sat.eps_x.cwiseAbs().maxCoeff() <= 1e-9);  // interpolation

    // rank deficient: duplicated conditioning coordinate
    std::mt19937_64 eng(7);
    CondSample dup = random_cond(eng, 30, 2);
    dup.z.col(1) = dup.z.col(0);
    const ResidualSet r = fit_residuals(dup, RegressionConfig{1, true, true});
    bool warned = false;
    for (const auto& w : r.warnings) warned = warned || w.find("rank-deficient") != std::string::npos;
    CHECK(warned);
    CHECK(r.eps_x.allFinite());
    const Matrix design = poly_design(dup.z, RegressionConfig{1, true, true});
    CHECK((design.transpose() * r.eps_x).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("non-finite inputs are rejected") {
    std::mt19937_64 eng(9);
    CondSample s = random_cond(eng, 10, 1);
    s.x(3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit_residuals(s, RegressionConfig{}), std::invalid_argument);
    s.x(3) = 0.0;
    s.z(5, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(fit_residuals(s, RegressionConfig{}), std::invalid_argument);
}

TEST_CASE("constant kernel collapses to n times the squared mean residual product") {
    std::mt19937_64 eng(11);
    const CondSample s = random_cond(eng, 35, 1);
    const ResidualSet r = fit_residuals(s, RegressionConfig{});
    const double psi =
        norm_sq(kgcm_coefficients(r, s.z), KernelSpec{KernelFamily::Constant, 1.0, 1.0});

    const double n = 35.0;
    const double mean_prod = (r.eps_x.array() * r.eps_y.array()).mean();
    CHECK(psi == Catch::Approx(n * mean_prod * mean_prod).epsilon(1e-10).margin(1e-14));

    // and the single-constant-weight baseline is its square root
    const double gcm = wgcm_statistic(r, s.z, {[](const Eigen::RowVectorXd&) { return 1.0; }});
    CHECK(gcm * gcm == Catch::Approx(psi).epsilon(1e-10).margin(1e-14));
}

TEST_CASE("quadratic form matches the brute double sum on random instances") {
    std::mt19937_64 eng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const auto n = static_cast<Eigen::Index>(5 + eng() % 25);
        const auto d = static_cast<Eigen::Index>(1 + eng() % 3);
        const CondSample s = random_cond(eng, n, d);
        const ResidualSet r = fit_residuals(s, RegressionConfig{1, true, true});
        const KernelSpec spec{KernelFamily::SquaredExponential, 0.3 + 0.2 * (rep % 5), 1.0};
        CHECK(norm_sq(kgcm_coefficients(r, s.z), spec) ==
              Catch::Approx(reference::kgcm_norm(r, s.z, spec)).epsilon(1e-10).margin(1e-13));
    }
}

TEST_CASE("wild builder uses raw, uncentered weights") {
    std::mt19937_64 eng(15);
    const CondSample s = random_cond(eng, 20, 1);
    const ResidualSet r = fit_residuals(s, RegressionConfig{});
    const PointMassFunctional base = kgcm_coefficients(r, s.z);
    auto builder = kgcm_wild_builder(r, s.z);

    const PointMassFunctional same = builder(Vector::Ones(20));
    CHECK((same.coefficients - base.coefficients).cwiseAbs().maxCoeff() == 0.0);
    // a constant raw weight scales the functional (no centering to kill it)
    const PointMassFunctional doubled = builder(Vector::Constant(20, 2.0));
    CHECK((doubled.coefficients - 2.0 * base.coefficients).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK_THROWS_AS(builder(Vector::Ones(19)), std::invalid_argument);

    // conditional second moment of S*(w): raw unit-variance weights give
    // sum_i c_i^2 w(z_i)^2
    const KernelSpec spec{KernelFamily::SquaredExponential, 1.0, 1.0};
    Eigen::RowVectorXd z0(1);
    z0 << 0.0;
    auto omega = [&](const auto& z) { return eval_kernel(spec, z, z0); };
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 20; ++i)
        expected += base.coefficients(i) * base.coefficients(i) *
                    std::pow(omega(base.points.row(i)), 2);
    double sum_sq = 0.0;
    const std::size_t draws = 5000;
    for (std::size_t b = 0; b < draws; ++b) {
        const double sw =
            apply(builder(gen_weights(WeightScheme::Rademacher, 20, RngStream{33, b})), omega);
        sum_sq += sw * sw;
    }
    CHECK(sum_sq / static_cast<double>(draws) == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("wgcm standard weights and hand-computed max statistic") {
    const auto fns = wgcm_standard_weights(2);
    REQUIRE(fns.size() == 3);
    Eigen::RowVectorXd z(2);
    z << -0.5, 0.0;
    CHECK(fns[0](z) == 1.0);
    CHECK(fns[1](z) == -1.0);
    CHECK(fns[2](z) == 0.0);

    ResidualSet r;
    r.eps_x.resize(3);
    r.eps_x << 1.0, 2.0, 3.0;
    r.eps_y.resize(3);
    r.eps_y << 1.0, 1.0, 1.0;
    Matrix zz(3, 1);
    zz << -1.0, 0.0, 2.0;
    // products (1,2,3)/sqrt(3): S(1) = 6/sqrt(3), S(sign) = (-1 + 0 + 3)/sqrt(3)
    const double stat = wgcm_statistic(r, zz, wgcm_standard_weights(1));
    CHECK(stat == Catch::Approx(6.0 / std::sqrt(3.0)).epsilon(1e-14));
}

TEST_CASE("kgcm scale equivariance and matched-seed decision invariance") {
    std::mt19937_64 eng(17);
    CondSample s = random_cond(eng, 40, 1);
    const KernelChoice fixed{KernelFamily::SquaredExponential, 1.0, 1.0};
    const TestReport r1 =
        kgcm_test(s, RegressionConfig{}, fixed, WeightScheme::Rademacher, 60, 0.05, 21);
    CondSample scaled = s;
    scaled.x *= 3.0;
    const TestReport r2 =
        kgcm_test(scaled, RegressionConfig{}, fixed, WeightScheme::Rademacher, 60, 0.05, 21);
    CHECK(r2.statistic == Catch::Approx(9.0 * r1.statistic).epsilon(1e-12));
    CHECK(r2.p_value == r1.p_value);
    CHECK(r2.reject == r1.reject);
}

TEST_CASE("kgcm_test report wiring and determinism") {
    std::mt19937_64 eng(19);
    const CondSample s = random_cond(eng, 30, 2);
    const TestReport r = kgcm_test(s, RegressionConfig{}, KernelChoice{},
                                   WeightScheme::Rademacher, 100, 0.05, 5, 1);
    CHECK(r.test == "kgcm");
    CHECK(r.n == 30);
    CHECK(r.kernel.rule == "median-heuristic");
    REQUIRE(r.details.size() == 3);
    CHECK(r.details[0].second == 2.0);  // d
    CHECK(r.details[1].second == 1.0);  // default degree for d > 1
    CHECK(std::is_sorted(r.replicates.begin(), r.replicates.end()));
    CHECK(r.reject == (r.statistic > r.critical_value));

    const TestReport r4 = kgcm_test(s, RegressionConfig{}, KernelChoice{},
                                    WeightScheme::Rademacher, 100, 0.05, 5, 4);
    CHECK(r4.statistic == r.statistic);
    CHECK(r4.replicates == r.replicates);
}

TEST_CASE("wgcm_test naming and p-value granularity") {
    std::mt19937_64 eng(21);
    const CondSample s = random_cond(eng, 25, 2);
    const TestReport gcm = wgcm_test(s, RegressionConfig{}, {wgcm_standard_weights(2)[0]},
                                     WeightScheme::Rademacher, 40, 0.05, 9);
    CHECK(gcm.test == "gcm");
    CHECK(gcm.details[2].second == 1.0);
    const TestReport wg = wgcm_test(s, RegressionConfig{}, wgcm_standard_weights(2),
                                    WeightScheme::Rademacher, 40, 0.05, 9);
    CHECK(wg.test == "wgcm");
    CHECK(wg.details[2].second == 3.0);
    CHECK(wg.statistic >= gcm.statistic - 1e-15);  // max over a superset of weights

    const TestReport one = wgcm_test(s, RegressionConfig{}, wgcm_standard_weights(2),
                                     WeightScheme::Rademacher, 1, 0.05, 9);
    CHECK((one.p_value == 0.5 || one.p_value == 1.0));
}

TEST_CASE("kgcm detects the hidden-confounder alternative", "[slow]") {
    // gamma = 1 routes the shared noise into both X and Y; a short
    // lengthscale picks up the sin(5z) signature that the plain GCM misses
    std::size_t rejections = 0;
    const KernelChoice kern{KernelFamily::SquaredExponential, 0.1, 1.0};
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const CondSample s = gen_data1(100, 1.0, RngStream{23, rep});
        const TestReport r = kgcm_test(s, RegressionConfig{}, kern, WeightScheme::Rademacher,
                                       199, 0.05, RngStream{23, 5000 + rep}.scalar(), 1, false);
        rejections += r.reject;
    }
    CHECK(static_cast<double>(rejections) / 50.0 >= 0.5);
}
