#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "bscbf/error.hpp"
#include "bscbf/field.hpp"
#include "bscbf/rng.hpp"

namespace bscbf {

/// Control-affine SDE  dX = (f(X) + g(X) u) dt + sigma(X) dW  with
/// n = N states, p = P inputs and a D-dimensional Brownian motion.
/// Immutable; copies share the underlying fields.
template <int N, int P, int D>
class SdeModel {
public:
    static constexpr int n = N;
    static constexpr int p = P;
    static constexpr int d = D;

    using Drift = LadderFn<N, N>;
    using ControlMatrix = LadderFn<N, N * P>;  // row-major n x p
    using Diffusion = LadderFn<N, N * D>;      // row-major n x d

    SdeModel() = default;
    SdeModel(Drift f, ControlMatrix g, Diffusion sigma, std::string label)
        : f_(std::move(f)), g_(std::move(g)), sigma_(std::move(sigma)), label_(std::move(label)) {
        require(f_.valid() && g_.valid() && sigma_.valid(), ErrorKind::Configuration,
                "SdeModel needs drift, control matrix and diffusion");
    }

    const std::string& label() const { return label_; }
    const Drift& drift_fn() const { return f_; }
    const ControlMatrix& control_fn() const { return g_; }
    const Diffusion& diffusion_fn() const { return sigma_; }

    Vec<N> drift(const Vec<N>& x) const { return to_vec<N>(f_(x)); }

    Mat<N, P> control_matrix(const Vec<N>& x) const {
        const auto a = g_(x);
        Mat<N, P> g;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < P; ++j) g(i, j) = a[i * P + j];
        return g;
    }

    Mat<N, D> diffusion(const Vec<N>& x) const {
        const auto a = sigma_(x);
        Mat<N, D> s;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < D; ++j) s(i, j) = a[i * D + j];
        return s;
    }

private:
    Drift f_;
    ControlMatrix g_;
    Diffusion sigma_;
    std::string label_;
};

template <int N>
int first_non_finite(const Vec<N>& x) {
    for (int i = 0; i < N; ++i)
        if (!std::isfinite(x[i])) return i;
    return -1;
}

/// One Euler-Maruyama step.
template <int N, int P, int D>
Vec<N> em_step(const SdeModel<N, P, D>& model, const std::type_identity_t<Vec<N>>& x,
               const std::type_identity_t<Vec<P>>& u, double dt, const std::type_identity_t<Vec<D>>& dW) {
    require(dt > 0.0, ErrorKind::Configuration, "em_step: dt must be positive");
    Vec<N> next = x + (model.drift(x) + model.control_matrix(x) * u) * dt + model.diffusion(x) * dW;
    if (const int bad = first_non_finite<N>(next); bad >= 0) {
        std::ostringstream os;
        os << "em_step produced non-finite x" << (bad + 1) << " = " << next[bad];
        throw DivergedError(os.str(), bad);
    }
    return next;
}

template <int N, int P>
using Policy = std::function<Vec<P>(const Vec<N>&)>;

template <int N, int P>
struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Vec<N>> states;
    std::vector<Vec<P>> controls;
    std::uint64_t seed = 0;

    std::size_t steps() const { return controls.size(); }
};

template <int N, int P, int D>
Trajectory<N, P> simulate(const SdeModel<N, P, D>& model, const std::type_identity_t<Vec<N>>& x0,
                          const std::type_identity_t<Policy<N, P>>& policy,
                          double dt, long n_steps, std::uint64_t seed) {
    require(dt > 0.0, ErrorKind::Configuration, "simulate: dt must be positive");
    require(n_steps >= 1, ErrorKind::Configuration, "simulate: n_steps must be >= 1");
    Trajectory<N, P> traj;
    traj.dt = dt;
    traj.seed = seed;
    traj.times.reserve(n_steps + 1);
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    traj.times.push_back(0.0);
    traj.states.push_back(x0);

    NoiseStream<D> noise(seed);
    Vec<D> dW;
    Vec<N> x = x0;
    for (long i = 0; i < n_steps; ++i) {
        const Vec<P> u = policy(x);
        noise.increment(dt, dW);
        try {
            x = em_step(model, x, u, dt, dW);
        } catch (const DivergedError& e) {
            throw DivergedError(std::string(e.what()) + " at step " + std::to_string(i), e.entry(), i);
        }
        traj.controls.push_back(u);
        traj.states.push_back(x);
        traj.times.push_back(static_cast<double>(i + 1) * dt);
    }
    return traj;
}

/// CSV with header t,x1..xn,u1..up. The final row (no control applied yet)
/// leaves the u columns empty.
template <int N, int P>
void write_csv(std::ostream& os, const Trajectory<N, P>& traj) {
    os << "t";
    for (int i = 1; i <= N; ++i) os << ",x" << i;
    for (int j = 1; j <= P; ++j) os << ",u" << j;
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        os << traj.times[k];
        for (int i = 0; i < N; ++i) os << ',' << traj.states[k][i];
        for (int j = 0; j < P; ++j) {
            os << ',';
            if (k < traj.controls.size()) os << traj.controls[k][j];
        }
        os << '\n';
    }
}

}  // namespace bscbf
