#pragma once

// The two benchmark systems, their safe sets and hand-derived generator forms.
//
//   example1:  f = (-0.6 x1 - x2, x1^3),  g = (0, x2)^T,  h = 1 - x1^2 - x2^2
//   acc:       x = (v, z),  f = (-F_r(v)/M, v_f - v),  g = (1/M, 0)^T,
//              F_r(v) = f0 + f1 v + f2 v^2,  h = (z - D)^5,  CLF V = (v - v_d)^2

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bscbf/barrier.hpp"
#include "bscbf/error.hpp"
#include "bscbf/sde.hpp"

namespace bscbf {

using Model2 = SdeModel<2, 1, 2>;

struct AccParams {
    double f0 = 0.1;
    double f1 = 5.0;
    double f2 = 0.25;
    double M = 1650.0;
    double v_d = 22.0;
    double D = 10.0;
    double v_f = 13.89;  // front vehicle, 50 km/h

    double drag(double v) const { return f0 + f1 * v + f2 * v * v; }
};

inline const std::vector<std::string>& benchmark_names() {
    static const std::vector<std::string> names{"example1", "acc"};
    return names;
}

namespace detail {
inline std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
}

inline void check_benchmark_name(const std::string& name) {
    for (const auto& n : benchmark_names())
        if (n == name) return;
    fail(ErrorKind::Configuration,
         "unknown benchmark '" + name + "'; valid names: " + join(benchmark_names()));
}

inline AccParams acc_params(const std::map<std::string, double>& params) {
    AccParams p;
    const std::map<std::string, double*> slots{{"f0", &p.f0}, {"f1", &p.f1}, {"f2", &p.f2}, {"M", &p.M},
                                               {"v_d", &p.v_d}, {"D", &p.D}, {"v_f", &p.v_f}};
    for (const auto& [k, v] : params) {
        auto it = slots.find(k);
        if (it == slots.end())
            fail(ErrorKind::Configuration, "unknown acc parameter '" + k + "'; valid: f0, f1, f2, M, v_d, D, v_f");
        *it->second = v;
    }
    require(p.M > 0.0, ErrorKind::Configuration, "acc: M must be positive");
    return p;
}

template <class T>
std::array<T, 4> diag2(double s1, double s2) {
    return {T(s1), T(0.0), T(0.0), T(s2)};
}
}  // namespace detail

inline Model2 example1_model(const Vec<2>& sigma) {
    const double s1 = sigma[0], s2 = sigma[1];
    return Model2(
        Model2::Drift([](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            return std::array<T, 2>{-0.6 * x[0] - x[1], x[0] * x[0] * x[0]};
        }),
        Model2::ControlMatrix([](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            return std::array<T, 2>{T(0.0), x[1]};
        }),
        Model2::Diffusion([s1, s2](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            return detail::diag2<T>(s1, s2);
        }),
        "example1");
}

inline Model2 acc_model(const Vec<2>& sigma, const AccParams& p) {
    const double s1 = sigma[0], s2 = sigma[1];
    return Model2(
        Model2::Drift([p](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            const T drag = p.f0 + p.f1 * x[0] + p.f2 * x[0] * x[0];
            return std::array<T, 2>{-drag / p.M, p.v_f - x[0]};
        }),
        Model2::ControlMatrix([p](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            return std::array<T, 2>{T(1.0 / p.M), T(0.0)};
        }),
        Model2::Diffusion([s1, s2](const auto& x) {
            using T = typename std::decay_t<decltype(x)>::value_type;
            return detail::diag2<T>(s1, s2);
        }),
        "acc");
}

inline Model2 benchmark(const std::string& name, const Vec<2>& sigma,
                        const std::map<std::string, double>& params = {}) {
    detail::check_benchmark_name(name);
    require(sigma.allFinite(), ErrorKind::Configuration, "benchmark: sigma must be finite");
    if (name == "example1") {
        require(params.empty(), ErrorKind::Configuration, "example1 takes no parameters");
        return example1_model(sigma);
    }
    return acc_model(sigma, detail::acc_params(params));
}

// Safe sets ------------------------------------------------------------------

inline ScalarFn<2> example1_h_fn() {
    return ScalarFn<2>([](const auto& x) { return 1.0 - x[0] * x[0] - x[1] * x[1]; });
}

inline ScalarField<2> example1_h_analytic() {
    return ScalarField<2>::analytic([](const Vec<2>& x) { return 1.0 - x.squaredNorm(); },
                                    [](const Vec<2>& x) { return Vec<2>(-2.0 * x); },
                                    [](const Vec<2>&) { return Mat<2, 2>(-2.0 * Mat<2, 2>::Identity()); },
                                    example1_h_fn());
}

inline ScalarFn<2> acc_h_fn(double D) {
    return ScalarFn<2>([D](const auto& x) { return ipow(x[1] - D, 5); });
}

inline ScalarField<2> acc_h_analytic(double D) {
    return ScalarField<2>::analytic(
        [D](const Vec<2>& x) { return std::pow(x[1] - D, 5); },
        [D](const Vec<2>& x) { return Vec<2>(0.0, 5.0 * std::pow(x[1] - D, 4)); },
        [D](const Vec<2>& x) {
            Mat<2, 2> H = Mat<2, 2>::Zero();
            H(1, 1) = 20.0 * std::pow(x[1] - D, 3);
            return H;
        },
        acc_h_fn(D));
}

inline ScalarFn<2> acc_clf_fn(double v_d) {
    return ScalarFn<2>([v_d](const auto& x) { return (x[0] - v_d) * (x[0] - v_d); });
}

// Hand-derived generator forms -----------------------------------------------

struct AffineForm {
    double c0;
    double c1;
};

/// Generator of h = 1 - x1^2 - x2^2 along example1.
inline AffineForm example1_generator(const Vec<2>& x, const Vec<2>& sigma) {
    const double x1 = x[0], x2 = x[1];
    return {1.2 * x1 * x1 + 2.0 * x1 * x2 - 2.0 * x1 * x1 * x1 * x2 - (sigma[0] * sigma[0] + sigma[1] * sigma[1]),
            -2.0 * x2 * x2};
}

/// Hand expansion carrying a unit x1*x2 coefficient and 2*sigma2^2 as the
/// diffusion term; retained only for comparison runs.
inline AffineForm example1_generator_hand_expanded(const Vec<2>& x, const Vec<2>& sigma) {
    const double x1 = x[0], x2 = x[1];
    return {1.2 * x1 * x1 + x1 * x2 - 2.0 * x1 * x1 * x1 * x2 - (sigma[1] * sigma[1] + sigma[1] * sigma[1]),
            -2.0 * x2 * x2};
}

/// b_1 = A h for the acc barrier, including the Ito term 10 sigma2^2 (z-D)^3.
inline double acc_b1(const Vec<2>& x, const Vec<2>& sigma, const AccParams& p) {
    const double e = x[1] - p.D;
    return 5.0 * std::pow(e, 4) * (p.v_f - x[0]) + 10.0 * sigma[1] * sigma[1] * std::pow(e, 3);
}

/// b_1 without the Ito term.
inline double acc_b1_hand_expanded(const Vec<2>& x, const AccParams& p) {
    return 5.0 * std::pow(x[1] - p.D, 4) * (p.v_f - x[0]);
}

/// Generator of b_1 (the top constraint for r = 2).
inline AffineForm acc_b2(const Vec<2>& x, const Vec<2>& sigma, const AccParams& p) {
    const double e = x[1] - p.D;
    const double w = p.v_f - x[0];
    const double s2 = sigma[1] * sigma[1];
    return {5.0 * std::pow(e, 4) * p.drag(x[0]) / p.M + 20.0 * std::pow(e, 3) * w * w +
                60.0 * s2 * e * e * w + 30.0 * s2 * s2 * e,
            -5.0 * std::pow(e, 4) / p.M};
}

/// Hand expansion of the second-level generator with a (z-D)^4/M control
/// coefficient and a 120 (z-D)(sigma1^2 + sigma2^2) diffusion term.
inline AffineForm acc_b2_hand_expanded(const Vec<2>& x, const Vec<2>& sigma, const AccParams& p) {
    const double e = x[1] - p.D;
    const double w = p.v_f - x[0];
    return {5.0 * std::pow(e, 4) * p.drag(x[0]) / p.M + 20.0 * std::pow(e, 3) * w * w +
                120.0 * e * (sigma[0] * sigma[0] + sigma[1] * sigma[1]),
            -std::pow(e, 4) / p.M};
}

// Problem bundles -------------------------------------------------------------

/// A benchmark together with everything needed to control and verify it.
struct BenchmarkProblem {
    std::string name;
    Model2 model;
    Vec<2> sigma;
    ScalarField<2> h;
    int relative_degree = 1;
    std::optional<ScalarField<2>> clf;
    AccParams acc;            // meaningful for "acc" only
    Vec<2> sup_lo, sup_hi;    // box for level-set suprema
    Vec<2> probe_lo, probe_hi;  // identification probes and evaluation points
    double u1 = 0.0, u2 = 1.0;  // paired controls for drift data
};

inline BenchmarkProblem benchmark_problem(const std::string& name, const Vec<2>& sigma,
                                          const std::map<std::string, double>& params = {}) {
    BenchmarkProblem pb;
    pb.name = name;
    pb.model = benchmark(name, sigma, params);
    pb.sigma = sigma;
    if (name == "example1") {
        pb.h = ScalarField<2>::dual(example1_h_fn());
        pb.relative_degree = 1;
        pb.sup_lo = Vec<2>(-1.0, -1.0);
        pb.sup_hi = Vec<2>(1.0, 1.0);
        pb.probe_lo = Vec<2>(-1.0, -1.0);
        pb.probe_hi = Vec<2>(1.0, 1.0);
        pb.u1 = 0.0;
        pb.u2 = 1.0;
    } else {
        pb.acc = detail::acc_params(params);
        pb.h = ScalarField<2>::dual(acc_h_fn(pb.acc.D));
        pb.relative_degree = 2;
        pb.clf = ScalarField<2>::dual(acc_clf_fn(pb.acc.v_d));
        pb.sup_lo = Vec<2>(0.0, pb.acc.D);
        pb.sup_hi = Vec<2>(30.0, pb.acc.D + 40.0);
        pb.probe_lo = Vec<2>(5.0, pb.acc.D + 1.0);
        pb.probe_hi = Vec<2>(25.0, pb.acc.D + 30.0);
        pb.u1 = 0.0;
        pb.u2 = 1000.0;
    }
    return pb;
}

}  // namespace bscbf
