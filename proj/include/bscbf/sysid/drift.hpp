#pragma once

// Drift identification: CLT-averaged one-step increments under two controls,
// algebraic elimination of f and g, then one Bayesian linear regression per
// output channel sharing a basis.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "bscbf/error.hpp"
#include "bscbf/hash.hpp"
#include "bscbf/rng.hpp"
#include "bscbf/sde.hpp"
#include "bscbf/sysid/basis.hpp"
#include "bscbf/sysid/blr.hpp"

namespace bscbf::sysid {

/// Gives sampled transitions of a model and nothing else.
template <int N, int P, int D>
class Blackbox {
public:
    explicit Blackbox(SdeModel<N, P, D> model) : model_(std::move(model)) {}

    Vec<N> step(const Vec<N>& x, const Vec<P>& u, double dt, NoiseStream<D>& noise) const {
        Vec<D> dW;
        noise.increment(dt, dW);
        return em_step(model_, x, u, dt, dW);
    }

private:
    SdeModel<N, P, D> model_;
};

enum class DriftScheme {
    paired,      // two controls per probe, f and g by elimination
    sequential,  // u = 0 for f, then a single nonzero u for g with f-hat substituted
};

inline const char* to_string(DriftScheme s) { return s == DriftScheme::paired ? "paired" : "sequential"; }

template <int N, int P>
struct DriftDataset {
    std::vector<Vec<N>> X;
    Eigen::MatrixXd Yf;  // rows: probes, cols: state channels
    Eigen::MatrixXd Yg;  // rows: probes, cols: g(i,j) row-major
    long K = 0;
    double dt = 0.0;
    Vec<P> u1 = Vec<P>::Zero();
    Vec<P> u2 = Vec<P>::Zero();
    DriftScheme scheme = DriftScheme::paired;
    std::uint64_t seed = 0;
    /// Pooled per-channel variance of a single target, from replicate scatter.
    Eigen::VectorXd target_var_f;
    Eigen::VectorXd target_var_g;

    std::size_t size() const { return X.size(); }

    std::string hash() const {
        Fnv1a h;
        for (const auto& x : X)
            for (int i = 0; i < N; ++i) h.add(x[i]);
        for (Eigen::Index i = 0; i < Yf.size(); ++i) h.add(Yf.data()[i]);
        for (Eigen::Index i = 0; i < Yg.size(); ++i) h.add(Yg.data()[i]);
        h.add(static_cast<std::uint64_t>(K)).add(dt).add(seed);
        return h.hex();
    }
};

namespace detail {

/// Mean and per-channel sample variance of K one-step increments from x.
template <int N, int P, int D>
std::pair<Vec<N>, Vec<N>> replicate_increments(const Blackbox<N, P, D>& box, const Vec<N>& x,
                                               const std::type_identity_t<Vec<P>>& u, long K, double dt,
                                               NoiseStream<D>& noise) {
    Vec<N> mean = Vec<N>::Zero();
    Vec<N> m2 = Vec<N>::Zero();
    for (long k = 0; k < K; ++k) {
        const Vec<N> dx = box.step(x, u, dt, noise) - x;
        const Vec<N> delta = dx - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta.cwiseProduct(dx - mean);
    }
    Vec<N> var = K > 1 ? Vec<N>(m2 / static_cast<double>(K - 1))
                       : Vec<N>::Constant(std::numeric_limits<double>::quiet_NaN());
    return {mean, var};
}

}  // namespace detail

/// Paired-control elimination at every probe:
///   y_f = (dx1 u2 - dx2 u1) / ((u2 - u1) dt),   y_g = (dx1 - dx2) / ((u1 - u2) dt)
/// where dx_j is the mean of K one-step increments under u_j.
template <int N, int P, int D>
DriftDataset<N, P> collect_drift_data(const Blackbox<N, P, D>& box, const std::vector<Vec<N>>& probes,
                                      const std::type_identity_t<Vec<P>>& u1, const std::type_identity_t<Vec<P>>& u2,
                                      long K, double dt, std::uint64_t seed) {
    static_assert(P == 1, "paired elimination is defined for a scalar input");
    require(K >= 1, ErrorKind::Configuration, "collect_drift_data: K must be >= 1");
    require(dt > 0.0, ErrorKind::Configuration, "collect_drift_data: dt must be positive");
    require(!probes.empty(), ErrorKind::Configuration, "collect_drift_data: no probes");
    const double a = u1[0], b = u2[0];
    if (std::abs(b - a) < 1e-9) fail(ErrorKind::DegeneratePair, "collect_drift_data: |u2 - u1| < 1e-9");

    DriftDataset<N, P> ds;
    ds.X = probes;
    ds.K = K;
    ds.dt = dt;
    ds.u1 = u1;
    ds.u2 = u2;
    ds.seed = seed;
    ds.scheme = DriftScheme::paired;
    const auto n_probes = static_cast<Eigen::Index>(probes.size());
    ds.Yf.resize(n_probes, N);
    ds.Yg.resize(n_probes, N);
    Vec<N> pooled = Vec<N>::Zero();

    for (Eigen::Index i = 0; i < n_probes; ++i) {
        NoiseStream<D> noise(derive_seed(seed, static_cast<std::uint64_t>(i), 0x64726966));
        const auto [dx1, v1] = detail::replicate_increments(box, probes[i], u1, K, dt, noise);
        const auto [dx2, v2] = detail::replicate_increments(box, probes[i], u2, K, dt, noise);
        const Vec<N> yf = (dx1 * b - dx2 * a) / ((b - a) * dt);
        const Vec<N> yg = (dx1 - dx2) / ((a - b) * dt);
        require(yf.allFinite() && yg.allFinite(), ErrorKind::Estimation, "collect_drift_data: non-finite target");
        ds.Yf.row(i) = yf.transpose();
        ds.Yg.row(i) = yg.transpose();
        pooled += 0.5 * (v1 + v2);
    }
    pooled /= static_cast<double>(n_probes);
    const double scale = (b - a) * (b - a) * dt * dt * static_cast<double>(K);
    ds.target_var_f = pooled * ((a * a + b * b) / scale);
    ds.target_var_g = pooled * (2.0 / scale);
    return ds;
}

/// f-targets with u = 0:  y_f = dx / dt.
template <int N, int P, int D>
DriftDataset<N, P> collect_f_targets(const Blackbox<N, P, D>& box, const std::vector<Vec<N>>& probes, long K,
                                     double dt, std::uint64_t seed) {
    require(K >= 1, ErrorKind::Configuration, "collect_f_targets: K must be >= 1");
    require(dt > 0.0, ErrorKind::Configuration, "collect_f_targets: dt must be positive");
    require(!probes.empty(), ErrorKind::Configuration, "collect_f_targets: no probes");
    DriftDataset<N, P> ds;
    ds.X = probes;
    ds.K = K;
    ds.dt = dt;
    ds.seed = seed;
    ds.scheme = DriftScheme::sequential;
    const auto n_probes = static_cast<Eigen::Index>(probes.size());
    ds.Yf.resize(n_probes, N);
    Vec<N> pooled = Vec<N>::Zero();
    for (Eigen::Index i = 0; i < n_probes; ++i) {
        NoiseStream<D> noise(derive_seed(seed, static_cast<std::uint64_t>(i), 0x66));
        const auto [dx, v] = detail::replicate_increments(box, probes[i], Vec<P>::Zero(), K, dt, noise);
        ds.Yf.row(i) = (dx / dt).transpose();
        pooled += v;
    }
    ds.target_var_f = pooled / (static_cast<double>(n_probes) * dt * dt * static_cast<double>(K));
    return ds;
}

/// g-targets with a single control ug and f-hat substituted:
///   y_g = (dx / dt - f_hat(x)) / ug.
template <int N, int P, int D, class FHat>
void collect_g_targets(const Blackbox<N, P, D>& box, DriftDataset<N, P>& ds, const FHat& f_hat, double ug,
                       std::uint64_t seed) {
    static_assert(P == 1, "sequential g targets are defined for a scalar input");
    if (std::abs(ug) < 1e-9) fail(ErrorKind::DegeneratePair, "collect_g_targets: |u| < 1e-9");
    const Vec<P> u = Vec<P>::Constant(ug);
    ds.u2 = u;
    const auto n_probes = static_cast<Eigen::Index>(ds.X.size());
    ds.Yg.resize(n_probes, N);
    Vec<N> pooled = Vec<N>::Zero();
    for (Eigen::Index i = 0; i < n_probes; ++i) {
        NoiseStream<D> noise(derive_seed(seed, static_cast<std::uint64_t>(i), 0x67));
        const auto [dx, v] = detail::replicate_increments(box, ds.X[i], u, ds.K, ds.dt, noise);
        ds.Yg.row(i) = ((dx / ds.dt - f_hat(ds.X[i])) / ug).transpose();
        pooled += v;
    }
    ds.target_var_g = pooled / (static_cast<double>(n_probes) * ds.dt * ds.dt * static_cast<double>(ds.K) * ug * ug);
}

/// Visited states of `n_rollouts` uncontrolled rollouts started uniformly in
/// [lo, hi]. Rollouts stop early at divergence.
template <int N, int P, int D>
std::vector<Vec<N>> rollout_probes(const Blackbox<N, P, D>& box, const Vec<N>& lo, const Vec<N>& hi,
                                   int n_rollouts, long steps, double dt, std::uint64_t seed) {
    require(n_rollouts >= 1 && steps >= 0, ErrorKind::Configuration, "rollout_probes: bad sizes");
    std::vector<Vec<N>> out;
    out.reserve(static_cast<std::size_t>(n_rollouts) * static_cast<std::size_t>(steps + 1));
    for (int r = 0; r < n_rollouts; ++r) {
        NoiseStream<D> noise(derive_seed(seed, static_cast<std::uint64_t>(r), 0x70726f62));
        Vec<N> x;
        for (int i = 0; i < N; ++i) x[i] = uniform(noise.engine(), lo[i], hi[i]);
        out.push_back(x);
        for (long k = 0; k < steps; ++k) {
            try {
                x = box.step(x, Vec<P>::Zero(), dt, noise);
            } catch (const DivergedError&) {
                break;
            }
            out.push_back(x);
        }
    }
    return out;
}

template <int N>
std::vector<Vec<N>> uniform_points(const Vec<N>& lo, const Vec<N>& hi, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec<N>> out(static_cast<std::size_t>(n));
    for (auto& x : out)
        for (int i = 0; i < N; ++i) x[i] = uniform(rng, lo[i], hi[i]);
    return out;
}

/// Posteriors for every channel of f (n) and g (n x p, row-major).
template <int N, int P>
struct LearnedDrift {
    std::vector<BlrPosterior<N>> f;
    std::vector<BlrPosterior<N>> g;

    Vec<N> f_hat(const Vec<N>& x) const {
        Vec<N> out;
        for (int i = 0; i < N; ++i) out[i] = f[i].mean(x);
        return out;
    }
    Mat<N, P> g_hat(const Vec<N>& x) const {
        Mat<N, P> out;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < P; ++j) out(i, j) = g[i * P + j].mean(x);
        return out;
    }
};

struct DriftPrior {
    double prior_variance = 100.0;        // Sigma_0 = prior_variance I
    std::optional<double> noise_var;      // overrides the pooled replicate estimate
    double fallback_noise_var = 1e-2;     // when K = 1 leaves no replicate scatter
};

namespace detail {
inline double pick_noise_var(const DriftPrior& prior, const Eigen::VectorXd& pooled, Eigen::Index ch) {
    if (prior.noise_var) return *prior.noise_var;
    if (pooled.size() > ch && std::isfinite(pooled[ch])) return pooled[ch];
    return prior.fallback_noise_var;
}
}  // namespace detail

template <int N>
BlrPosterior<N> fit_channel(const Basis<N>& basis, const std::vector<Vec<N>>& X, const Eigen::VectorXd& y,
                            double prior_variance, double noise_var, const std::string& provenance) {
    const Eigen::MatrixXd Phi = basis.design(X);
    const Eigen::MatrixXd Sigma0 = prior_variance * Eigen::MatrixXd::Identity(basis.size(), basis.size());
    return BlrPosterior<N>{basis, fit_blr(Phi, y, Sigma0, noise_var), provenance};
}

template <int N>
std::vector<BlrPosterior<N>> fit_columns(const Basis<N>& basis, const std::vector<Vec<N>>& X,
                                         const Eigen::MatrixXd& Y, const Eigen::VectorXd& pooled,
                                         const DriftPrior& prior, const std::string& provenance) {
    std::vector<BlrPosterior<N>> out;
    for (Eigen::Index c = 0; c < Y.cols(); ++c)
        out.push_back(fit_channel(basis, X, Eigen::VectorXd(Y.col(c)), prior.prior_variance,
                                  detail::pick_noise_var(prior, pooled, c), provenance));
    return out;
}

template <int N, int P>
LearnedDrift<N, P> fit_drift(const DriftDataset<N, P>& ds, const Basis<N>& basis, const DriftPrior& prior) {
    require(ds.Yf.rows() == static_cast<Eigen::Index>(ds.size()) && ds.Yg.rows() == ds.Yf.rows(),
            ErrorKind::Configuration, "fit_drift: dataset has missing targets");
    const std::string prov = ds.hash();
    LearnedDrift<N, P> out;
    out.f = fit_columns(basis, ds.X, ds.Yf, ds.target_var_f, prior, prov);
    out.g = fit_columns(basis, ds.X, ds.Yg, ds.target_var_g, prior, prov);
    return out;
}

struct DriftSettings {
    DriftScheme scheme = DriftScheme::paired;
    double u1 = 0.0;
    double u2 = 1.0;    // paired: second control; sequential: the control used for g
    long K = 100;
    double dt = 0.01;
    std::uint64_t seed = 0;
    DriftPrior prior;
};

/// Collect and fit behind one interface, for either scheme.
template <int N, int P, int D>
std::pair<LearnedDrift<N, P>, DriftDataset<N, P>> identify_drift(const Blackbox<N, P, D>& box,
                                                                 const std::vector<Vec<N>>& probes,
                                                                 const Basis<N>& basis, const DriftSettings& s) {
    if (s.scheme == DriftScheme::paired) {
        auto ds = collect_drift_data(box, probes, Vec<P>::Constant(s.u1), Vec<P>::Constant(s.u2), s.K, s.dt, s.seed);
        return {fit_drift(ds, basis, s.prior), std::move(ds)};
    }
    auto ds = collect_f_targets(box, probes, s.K, s.dt, s.seed);
    LearnedDrift<N, P> out;
    const std::string prov_f = ds.hash();
    out.f = fit_columns(basis, ds.X, ds.Yf, ds.target_var_f, s.prior, prov_f);
    collect_g_targets(box, ds, [&](const Vec<N>& x) { return out.f_hat(x); }, s.u2, s.seed);
    out.g = fit_columns(basis, ds.X, ds.Yg, ds.target_var_g, s.prior, ds.hash());
    return {std::move(out), std::move(ds)};
}

template <int N, int P>
struct DriftPrediction {
    Vec<N> f;
    Mat<N, P> g;
    Vec<N> var_f;
    Mat<N, P> var_g;
};

template <int N, int P>
DriftPrediction<N, P> predict_drift(const LearnedDrift<N, P>& m, const Vec<N>& x) {
    DriftPrediction<N, P> out;
    for (int i = 0; i < N; ++i) {
        out.f[i] = m.f[i].mean(x);
        out.var_f[i] = m.f[i].variance(x);
        for (int j = 0; j < P; ++j) {
            out.g(i, j) = m.g[i * P + j].mean(x);
            out.var_g(i, j) = m.g[i * P + j].variance(x);
        }
    }
    return out;
}

/// SdeModel from posterior means and a diagonal diffusion estimate.
template <int N, int P, int D>
SdeModel<N, P, D> learned_model(const LearnedDrift<N, P>& drift, const Vec<D>& sigma_diag,
                                std::string label = "learned") {
    static_assert(N == D, "diagonal diffusion needs d == n");
    require(static_cast<int>(drift.f.size()) == N && static_cast<int>(drift.g.size()) == N * P,
            ErrorKind::Configuration, "learned_model: posterior count does not match dimensions");
    using Model = SdeModel<N, P, D>;
    const auto f = drift.f;
    const auto g = drift.g;
    const Vec<D> s = sigma_diag;
    return Model(typename Model::Drift([f](const auto& x) {
                     using T = typename std::decay_t<decltype(x)>::value_type;
                     std::array<T, N> out;
                     for (int i = 0; i < N; ++i) out[i] = f[i].mean_generic(x);
                     return out;
                 }),
                 typename Model::ControlMatrix([g](const auto& x) {
                     using T = typename std::decay_t<decltype(x)>::value_type;
                     std::array<T, N * P> out;
                     for (int k = 0; k < N * P; ++k) out[k] = g[k].mean_generic(x);
                     return out;
                 }),
                 typename Model::Diffusion([s](const auto& x) {
                     using T = typename std::decay_t<decltype(x)>::value_type;
                     std::array<T, N * D> out;
                     out.fill(T(0.0));
                     for (int i = 0; i < N; ++i) out[i * D + i] = T(s[i]);
                     return out;
                 }),
                 std::move(label));
}

}  // namespace bscbf::sysid
