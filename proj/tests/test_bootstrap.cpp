#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "kbt/bootstrap.hpp"

using namespace kbt;

TEST_CASE("gen_weights is deterministic per stream and varies across streams") {
    const Vector a = gen_weights(WeightScheme::Rademacher, 64, RngStream{7, 3});
    const Vector b = gen_weights(WeightScheme::Rademacher, 64, RngStream{7, 3});
    const Vector c = gen_weights(WeightScheme::Rademacher, 64, RngStream{7, 4});
    CHECK((a.array() == b.array()).all());
    CHECK_FALSE((a.array() == c.array()).all());

    const Vector g1 = gen_weights(WeightScheme::Gaussian, 64, RngStream{7, 3});
    const Vector g2 = gen_weights(WeightScheme::Gaussian, 64, RngStream{7, 3});
    CHECK((g1.array() == g2.array()).all());
}

TEST_CASE("rademacher weights are fair signs") {
    const Vector w = gen_weights(WeightScheme::Rademacher, 20000, RngStream{11, 0});
    for (Eigen::Index i = 0; i < w.size(); ++i) CHECK(std::abs(w(i)) == 1.0);
    CHECK(std::abs(w.mean()) < 3.0 / std::sqrt(20000.0));
}

TEST_CASE("gaussian weights have mean 0 and variance 1") {
    const Vector w = gen_weights(WeightScheme::Gaussian, 20000, RngStream{13, 0});
    const double mean = w.mean();
    const double var = (w.array() - mean).square().sum() / (20000.0 - 1.0);
    CHECK(std::abs(mean) < 3.0 / std::sqrt(20000.0));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / 20000.0));
}

TEST_CASE("calibrate: order-statistic critical value and tie-respecting p-value") {
    std::vector<double> reps(100);
    std::iota(reps.begin(), reps.end(), 1.0);  // 1..100

    const TestReport r = calibrate(96.0, reps, 0.05);
    CHECK(r.M == 100);
    CHECK(r.critical_value == 95.0);
    CHECK(r.reject);
    // replicates >= 96: {96..100}, so (1 + 5) / 101
    CHECK(r.p_value == Catch::Approx(6.0 / 101.0).epsilon(1e-15));
    CHECK(std::is_sorted(r.replicates.begin(), r.replicates.end()));

    // alpha = 0.1: (1 - alpha) * M = 90 exactly; position must be 90, not 91
    const TestReport r2 = calibrate(96.0, reps, 0.1);
    CHECK(r2.critical_value == 90.0);
}

TEST_CASE("calibrate: all replicates tied at the statistic") {
    std::vector<double> reps(50, 2.5);
    const TestReport r = calibrate(2.5, reps, 0.05);
    CHECK(r.p_value == 1.0);
    CHECK_FALSE(r.reject);  // strict exceedance required
    CHECK(r.critical_value == 2.5);
}

TEST_CASE("calibrate: extreme statistics hit the p-value bounds") {
    std::vector<double> reps(99);
    std::iota(reps.begin(), reps.end(), 1.0);

    const TestReport high = calibrate(1000.0, reps, 0.05);
    CHECK(high.p_value == Catch::Approx(1.0 / 100.0).epsilon(1e-15));
    CHECK(high.reject);

    const TestReport low = calibrate(0.0, reps, 0.05);
    CHECK(low.p_value == 1.0);
    CHECK_FALSE(low.reject);
}

TEST_CASE("calibrate: p-value stays within [1/(M+1), 1] and matches a direct count") {
    std::mt19937_64 eng(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> reps(40);
        for (auto& v : reps) v = unif(eng);
        const double stat = unif(eng);
        const TestReport r = calibrate(stat, reps, 0.05);
        std::size_t count = 0;
        for (double v : reps) count += (v >= stat);
        CHECK(r.p_value == Catch::Approx((1.0 + count) / 41.0).epsilon(1e-15));
        CHECK(r.p_value >= 1.0 / 41.0);
        CHECK(r.p_value <= 1.0);
        CHECK(r.reject == (stat > r.critical_value));
    }
}

TEST_CASE("calibrate rejects invalid input") {
    CHECK_THROWS_AS(calibrate(1.0, {}, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(calibrate(1.0, {1.0, 2.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(calibrate(1.0, {1.0, 2.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(calibrate(std::nan(""), {1.0, 2.0}, 0.05), std::invalid_argument);
}

namespace {

// tiny single-point builder: replicate value is (sum of signed weights)^2
// under the constant kernel scaled into one coefficient
PointMassFunctional weight_sum_functional(const Vector& w) {
    PointMassFunctional f;
    f.points.resize(1, 1);
    f.points(0, 0) = 0.0;
    f.coefficients.resize(1);
    f.coefficients(0) = w.sum() / std::sqrt(static_cast<double>(w.size()));
    return f;
}

}  // namespace

TEST_CASE("wild_replicates is schedule independent and seed deterministic") {
    const KernelSpec spec{KernelFamily::SquaredExponential, 1.0, 1.0};
    const auto r1 = wild_replicates(weight_sum_functional, spec, 64, 32,
                                    WeightScheme::Rademacher, 99, 1);
    const auto r3 = wild_replicates(weight_sum_functional, spec, 64, 32,
                                    WeightScheme::Rademacher, 99, 3);
    const auto r8 = wild_replicates(weight_sum_functional, spec, 64, 32,
                                    WeightScheme::Rademacher, 99, 8);
    CHECK(r1 == r3);
    CHECK(r1 == r8);

    const auto other_seed = wild_replicates(weight_sum_functional, spec, 64, 32,
                                            WeightScheme::Rademacher, 100, 1);
    CHECK(r1 != other_seed);
}

TEST_CASE("wild_replicates replicate values use per-replicate streams") {
    const KernelSpec spec{KernelFamily::SquaredExponential, 1.0, 1.0};
    const auto all = wild_replicates(weight_sum_functional, spec, 8, 16,
                                     WeightScheme::Gaussian, 5, 1);
    for (std::size_t b = 0; b < 8; ++b) {
        const Vector w = gen_weights(WeightScheme::Gaussian, 16, RngStream{5, b});
        CHECK(all[b] == norm_sq(weight_sum_functional(w), spec));
    }
}

TEST_CASE("wild_replicates surfaces builder failures with the replicate index") {
    const KernelSpec spec{KernelFamily::SquaredExponential, 1.0, 1.0};
    auto exploding = [](const Vector& w) -> PointMassFunctional {
        throw std::runtime_error("boom");
        return weight_sum_functional(w);
    };
    CHECK_THROWS_WITH(
        wild_replicates(exploding, spec, 16, 4, WeightScheme::Rademacher, 1, 3),
        Catch::Matchers::ContainsSubstring("replicate 0") &&
            Catch::Matchers::ContainsSubstring("boom"));
}

TEST_CASE("rng sub-streams are order sensitive and reproducible") {
    const RngStream root{42, 0};
    CHECK(root.sub(1).sub(2).scalar() != root.sub(2).sub(1).scalar());
    CHECK(root.sub(1).scalar() == RngStream{42, 0}.sub(1).scalar());
    auto e1 = root.engine(), e2 = root.engine();
    CHECK(e1() == e2());
}
