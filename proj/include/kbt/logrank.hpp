#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kbt/bootstrap.hpp"

namespace kbt {

// One right-censored observation: time = min(survival, censoring), event
// tells which of the two was observed.
struct CensoredObs {
    double time = 0.0;
    bool event = false;
    int group = 0;  // 0 or 1
};

struct CensoredSample {
    std::vector<CensoredObs> obs;
};

inline void check_shape(const CensoredSample& s) {
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < s.obs.size(); ++i) {
        const CensoredObs& o = s.obs[i];
        if (!(o.time >= 0.0) || !std::isfinite(o.time))
            throw std::invalid_argument("censored sample: time at index " + std::to_string(i) +
                                        " must be finite and nonnegative");
        if (o.group != 0 && o.group != 1)
            throw std::invalid_argument("censored sample: group at index " + std::to_string(i) +
                                        " must be 0 or 1");
        (o.group == 0 ? n0 : n1) += 1;
    }
    if (n0 < 1 || n1 < 1)
        throw std::invalid_argument("censored sample: both groups must be non-empty");
}

inline std::size_t group_count(const CensoredSample& s, int g) {
    std::size_t c = 0;
    for (const auto& o : s.obs) c += (o.group == g);
    return c;
}

inline std::size_t event_count(const CensoredSample& s) {
    std::size_t c = 0;
    for (const auto& o : s.obs) c += o.event;
    return c;
}

// At-risk counts Y_l(t) = #{i : X_i >= t, g_i = l}; the inequality is closed,
// so a subject is at risk at its own observed time.
struct RiskSnapshot {
    double t = 0.0;
    double y0 = 0.0;
    double y1 = 0.0;
    double y() const { return y0 + y1; }
};

inline RiskSnapshot at_risk(const CensoredSample& s, double t) {
    RiskSnapshot r;
    r.t = t;
    for (const auto& o : s.obs) {
        if (o.time >= t) (o.group == 0 ? r.y0 : r.y1) += 1.0;
    }
    return r;
}

namespace detail {

// Sorted observed times per group, for O(log n) at-risk counts in the
// O(#events) coefficient pass.
struct RiskIndex {
    std::vector<double> t0, t1;

    explicit RiskIndex(const CensoredSample& s) {
        for (const auto& o : s.obs) (o.group == 0 ? t0 : t1).push_back(o.time);
        std::sort(t0.begin(), t0.end());
        std::sort(t1.begin(), t1.end());
    }

    RiskSnapshot at(double t) const {
        RiskSnapshot r;
        r.t = t;
        r.y0 = static_cast<double>(t0.end() - std::lower_bound(t0.begin(), t0.end(), t));
        r.y1 = static_cast<double>(t1.end() - std::lower_bound(t1.begin(), t1.end(), t));
        return r;
    }
};

}  // namespace detail

// Representer of the weighted log-rank statistic
//   S_n(w) = sqrt(n/(n0*n1)) * Integral w(x) L(x) (dN0/Y0 - dN1/Y1),
//   L(t) = Y0(t) Y1(t) / Y(t).
// The integral is a finite sum over events: an event of group g at time t
// contributes the point t with coefficient
//   s_g * sqrt(n/(n0*n1)) * L(t) / Y_g(t),  s_0 = +1, s_1 = -1.
// Y_g(t) >= 1 there (the subject itself is at risk), and events with the
// opposite group exhausted get coefficient 0 through L = 0. Censored
// observations contribute no point.
inline PointMassFunctional logrank_coefficients(const CensoredSample& s) {
    check_shape(s);
    const double n0 = static_cast<double>(group_count(s, 0));
    const double n1 = static_cast<double>(group_count(s, 1));
    const double scale = std::sqrt((n0 + n1) / (n0 * n1));
    const detail::RiskIndex risk(s);
    std::vector<double> times, coefs;
    for (const auto& o : s.obs) {
        if (!o.event) continue;
        const RiskSnapshot r = risk.at(o.time);
        const double ell = r.y0 * r.y1 / r.y();
        const double yg = o.group == 0 ? r.y0 : r.y1;
        const double sg = o.group == 0 ? 1.0 : -1.0;
        times.push_back(o.time);
        coefs.push_back(sg * scale * ell / yg);
    }
    PointMassFunctional f;
    f.points = Eigen::Map<const Vector>(times.data(), static_cast<Eigen::Index>(times.size()));
    f.coefficients =
        Eigen::Map<const Vector>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    return f;
}

// Wild bootstrap: each event's coefficient is multiplied by its subject's raw
// weight (the counting processes are perturbed, the at-risk processes are
// not). Weights are indexed by observation; censored subjects' weights are
// never read.
inline auto logrank_wild_builder(const CensoredSample& s) {
    check_shape(s);
    const PointMassFunctional base = logrank_coefficients(s);
    std::vector<Eigen::Index> event_obs;
    for (std::size_t i = 0; i < s.obs.size(); ++i)
        if (s.obs[i].event) event_obs.push_back(static_cast<Eigen::Index>(i));
    const auto n = static_cast<Eigen::Index>(s.obs.size());
    return [base, event_obs, n](const Vector& w) {
        if (w.size() != n)
            throw std::invalid_argument("logrank wild builder: weight length must be n");
        PointMassFunctional f;
        f.points = base.points;
        f.coefficients.resize(base.coefficients.size());
        for (Eigen::Index k = 0; k < f.coefficients.size(); ++k)
            f.coefficients(k) = base.coefficients(k) * w(event_obs[static_cast<std::size_t>(k)]);
        return f;
    };
}

// Pooled Kaplan-Meier distribution estimate evaluated at each observed time,
//   F(t) = 1 - prod over event times u <= t of (1 - dN(u)/Y(u)),
// replacing every time by F(time). Monotone, so the order of times (and in
// particular every at-risk count at event times) is preserved, while the data
// are rescaled into [0, 1].
inline CensoredSample km_transform(const CensoredSample& s) {
    check_shape(s);
    std::vector<double> event_times;
    for (const auto& o : s.obs)
        if (o.event) event_times.push_back(o.time);
    std::sort(event_times.begin(), event_times.end());
    event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

    const detail::RiskIndex risk(s);
    std::vector<double> d_count(event_times.size(), 0.0);
    for (const auto& o : s.obs) {
        if (!o.event) continue;
        const auto it = std::lower_bound(event_times.begin(), event_times.end(), o.time);
        d_count[static_cast<std::size_t>(it - event_times.begin())] += 1.0;
    }
    // survival after each distinct event time (prefix products)
    std::vector<double> surv(event_times.size());
    double prod = 1.0;
    for (std::size_t k = 0; k < event_times.size(); ++k) {
        const double y = risk.at(event_times[k]).y();
        prod *= 1.0 - d_count[k] / y;
        surv[k] = prod;
    }
    CensoredSample out = s;
    for (auto& o : out.obs) {
        const auto it = std::upper_bound(event_times.begin(), event_times.end(), o.time);
        o.time = it == event_times.begin() ? 0.0 : 1.0 - surv[static_cast<std::size_t>(it - event_times.begin()) - 1];
    }
    return out;
}

// Event times, after the optional KM transform, as kernel input points; this
// is the set a median-heuristic lengthscale should be resolved on.
inline Matrix logrank_kernel_points(const CensoredSample& s, bool use_km_transform) {
    check_shape(s);
    const CensoredSample* work = &s;
    CensoredSample transformed;
    if (use_km_transform) {
        transformed = km_transform(s);
        work = &transformed;
    }
    std::vector<double> times;
    for (const auto& o : work->obs)
        if (o.event) times.push_back(o.time);
    return Eigen::Map<const Vector>(times.data(), static_cast<Eigen::Index>(times.size()));
}

inline TestReport logrank_test(const CensoredSample& s, const ResolvedKernel& kernel,
                               WeightScheme scheme, std::size_t M, double alpha,
                               std::uint64_t seed, bool use_km_transform = false,
                               unsigned threads = 1, bool keep_replicates = true) {
    check_shape(s);
    const CensoredSample work = use_km_transform ? km_transform(s) : s;
    GramCache cache;
    const double statistic = norm_sq(logrank_coefficients(work), kernel.spec, &cache);
    auto replicates = wild_replicates(logrank_wild_builder(work), kernel.spec, M, work.obs.size(),
                                      scheme, seed, threads);
    TestReport r = calibrate(statistic, std::move(replicates), alpha);
    r.test = "logrank";
    r.n = s.obs.size();
    r.kernel = kernel.echo;
    r.scheme = scheme_name(scheme);
    r.seed = seed;
    r.details = {{"n0", static_cast<double>(group_count(s, 0))},
                 {"n1", static_cast<double>(group_count(s, 1))},
                 {"events", static_cast<double>(event_count(s))},
                 {"km_transform", use_km_transform ? 1.0 : 0.0}};
    if (event_count(s) == 0)
        r.warnings.push_back("no observed events; the statistic is identically zero");
    if (!keep_replicates) r.replicates.clear();
    return r;
}

// Convenience overload: resolves the kernel on the (possibly transformed)
// event times. With fewer than two events the median heuristic has no pairs,
// but the lengthscale is also irrelevant (only K(t,t) = 1 can enter), so a
// unit lengthscale is substituted and the degenerate statistic still reports.
inline TestReport logrank_test(const CensoredSample& s, const KernelChoice& choice,
                               WeightScheme scheme, std::size_t M, double alpha,
                               std::uint64_t seed, bool use_km_transform = false,
                               unsigned threads = 1, bool keep_replicates = true) {
    check_shape(s);
    ResolvedKernel kernel;
    if (event_count(s) < 2 && !choice.lengthscale_sq &&
        choice.family != KernelFamily::Constant) {
        kernel.spec = KernelSpec{choice.family, 1.0, choice.rq_alpha};
        kernel.echo = KernelEcho{family_name(choice.family), 1.0, "none"};
    } else {
        kernel = resolve_kernel(choice, logrank_kernel_points(s, use_km_transform));
    }
    return logrank_test(s, kernel, scheme, M, alpha, seed, use_km_transform, threads,
                        keep_replicates);
}

}  // namespace kbt
