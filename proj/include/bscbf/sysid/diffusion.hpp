#pragma once

// Diffusion identification: residuals of the learned drift along rollouts, an
// inverse-gamma prior on sigma, closed-form MAP and a gridded posterior.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "bscbf/error.hpp"
#include "bscbf/hash.hpp"
#include "bscbf/rng.hpp"
#include "bscbf/sde.hpp"
#include "bscbf/sysid/drift.hpp"

namespace bscbf::sysid {

enum class ResidualNormalization {
    raw,          // xi = x' - x - f_hat dt - g_hat u dt
    per_sqrt_dt,  // xi / sqrt(dt): comparable with the continuous-time sigma
};

inline const char* to_string(ResidualNormalization m) {
    return m == ResidualNormalization::raw ? "raw" : "per-sqrt-dt";
}

template <int N>
struct ResidualDataset {
    std::array<std::vector<double>, N> xi;  // per state channel
    double dt = 0.0;
    ResidualNormalization normalization = ResidualNormalization::per_sqrt_dt;
    std::string model_hash;  // learned drift the residuals were taken against
    long rollouts = 0;
    long truncated_rollouts = 0;
    long steps_recorded = 0;
};

template <int N, int P>
std::string drift_hash(const LearnedDrift<N, P>& m) {
    Fnv1a h;
    for (const auto* group : {&m.f, &m.g})
        for (const auto& post : *group)
            for (Eigen::Index k = 0; k < post.fit.mean.size(); ++k) h.add(post.fit.mean[k]);
    return h.hex();
}

/// Roll the blackbox out from each x0 under `policy` and record
///   xi = x_{i+1} - x_i - f_hat(x_i) dt - g_hat(x_i) u_i dt
/// per channel. A diverging rollout is truncated at the failing step.
template <int N, int P, int D>
ResidualDataset<N> collect_residuals(const Blackbox<N, P, D>& box, const LearnedDrift<N, P>& drift,
                                     const Policy<N, P>& policy, const std::vector<Vec<N>>& x0s, double dt,
                                     long n_steps, std::uint64_t seed,
                                     ResidualNormalization mode = ResidualNormalization::per_sqrt_dt) {
    require(dt > 0.0, ErrorKind::Configuration, "collect_residuals: dt must be positive");
    require(n_steps >= 1, ErrorKind::Configuration, "collect_residuals: n_steps must be >= 1");
    ResidualDataset<N> ds;
    ds.dt = dt;
    ds.normalization = mode;
    ds.model_hash = drift_hash(drift);
    const double scale = mode == ResidualNormalization::per_sqrt_dt ? 1.0 / std::sqrt(dt) : 1.0;
    for (std::size_t r = 0; r < x0s.size(); ++r) {
        NoiseStream<D> noise(derive_seed(seed, r, 0x72657369));
        Vec<N> x = x0s[r];
        ++ds.rollouts;
        for (long k = 0; k < n_steps; ++k) {
            const Vec<P> u = policy(x);
            Vec<N> next;
            try {
                next = box.step(x, u, dt, noise);
            } catch (const DivergedError&) {
                ++ds.truncated_rollouts;
                break;
            }
            const Vec<N> xi = (next - x - (drift.f_hat(x) + drift.g_hat(x) * u) * dt) * scale;
            if (!xi.allFinite()) {
                ++ds.truncated_rollouts;
                break;
            }
            for (int i = 0; i < N; ++i) ds.xi[i].push_back(xi[i]);
            ++ds.steps_recorded;
            x = next;
        }
    }
    return ds;
}

/// Log-posterior of sigma up to a constant:
///   -(N + alpha) log sigma - S / (2 sigma^2) - beta / sigma.
inline double log_posterior(double sigma, long n, double sum_sq, double alpha, double beta) {
    return -(static_cast<double>(n) + alpha) * std::log(sigma) - sum_sq / (2.0 * sigma * sigma) - beta / sigma;
}

/// Positive root of (N + alpha) sigma^2 - beta sigma - S = 0.
inline double map_sigma_closed_form(long n, double sum_sq, double alpha, double beta) {
    const double a = static_cast<double>(n) + alpha;
    return (beta + std::sqrt(beta * beta + 4.0 * a * sum_sq)) / (2.0 * a);
}

struct DiffusionPosterior {
    double alpha = 1.0;
    double beta = 1.0;
    long n = 0;
    double sum_sq = 0.0;
    double sigma_hat = 0.0;
    std::vector<double> grid;      // log-spaced sigma values (cell centres)
    std::vector<double> edges;     // grid.size() + 1 cell edges
    std::vector<double> mass;      // normalized posterior mass per cell
    std::vector<double> log_post;  // log-posterior at the grid values

    /// Grid value with the largest log-posterior.
    double grid_argmax() const {
        const auto it = std::max_element(log_post.begin(), log_post.end());
        return grid[static_cast<std::size_t>(it - log_post.begin())];
    }
};

inline DiffusionPosterior map_sigma(const std::vector<double>& xi, double alpha, double beta, int cells = 4096) {
    require(alpha > 0.0 && beta > 0.0, ErrorKind::Configuration, "map_sigma: alpha and beta must be positive");
    require(!xi.empty(), ErrorKind::Configuration, "map_sigma: empty residual set");
    require(cells >= 2, ErrorKind::Configuration, "map_sigma: need at least two grid cells");
    DiffusionPosterior post;
    post.alpha = alpha;
    post.beta = beta;
    post.n = static_cast<long>(xi.size());
    post.sum_sq = std::inner_product(xi.begin(), xi.end(), xi.begin(), 0.0);
    require(std::isfinite(post.sum_sq), ErrorKind::Estimation, "map_sigma: non-finite residuals");
    post.sigma_hat = map_sigma_closed_form(post.n, post.sum_sq, alpha, beta);

    // Log-spaced cells over [sigma_hat / 10, 10 sigma_hat].
    const double lo = std::log(post.sigma_hat / 10.0), hi = std::log(post.sigma_hat * 10.0);
    const double step = (hi - lo) / cells;
    post.edges.resize(cells + 1);
    for (int k = 0; k <= cells; ++k) post.edges[k] = std::exp(lo + step * k);
    post.grid.resize(cells);
    post.log_post.resize(cells);
    for (int k = 0; k < cells; ++k) {
        post.grid[k] = std::exp(lo + step * (k + 0.5));
        post.log_post[k] = log_posterior(post.grid[k], post.n, post.sum_sq, alpha, beta);
    }
    const double peak = *std::max_element(post.log_post.begin(), post.log_post.end());
    post.mass.resize(cells);
    double total = 0.0;
    for (int k = 0; k < cells; ++k) {
        post.mass[k] = std::exp(post.log_post[k] - peak) * (post.edges[k + 1] - post.edges[k]);
        total += post.mass[k];
    }
    for (auto& m : post.mass) m /= total;
    return post;
}

template <int N>
DiffusionPosterior map_sigma(const ResidualDataset<N>& data, int channel, double alpha, double beta,
                             int cells = 4096) {
    require(channel >= 0 && channel < N, ErrorKind::Configuration, "map_sigma: channel out of range");
    require(data.normalization == ResidualNormalization::per_sqrt_dt, ErrorKind::Configuration,
            "map_sigma: residuals must be normalized per sqrt(dt)");
    return map_sigma(data.xi[channel], alpha, beta, cells);
}

/// Inverse-CDF draws: pick a cell by its mass, then uniformly in log-sigma
/// within the cell.
inline std::vector<double> sample_sigma_posterior(const DiffusionPosterior& post, long n, std::uint64_t seed) {
    require(n > 0, ErrorKind::Configuration, "sample_sigma_posterior: n must be positive");
    require(!post.mass.empty(), ErrorKind::Configuration, "sample_sigma_posterior: grid posterior not computed");
    std::vector<double> cdf(post.mass.size());
    std::partial_sum(post.mass.begin(), post.mass.end(), cdf.begin());
    cdf.back() = 1.0;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        const double q = unit(rng);
        auto k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), q) - cdf.begin());
        k = std::min(k, cdf.size() - 1);
        const double a = std::log(post.edges[k]), b = std::log(post.edges[k + 1]);
        s = std::exp(a + (b - a) * unit(rng));
    }
    return out;
}

/// Counts of `samples` per posterior grid cell.
inline std::vector<long> histogram(const DiffusionPosterior& post, const std::vector<double>& samples) {
    std::vector<long> counts(post.mass.size(), 0);
    for (double s : samples) {
        auto k = std::upper_bound(post.edges.begin(), post.edges.end(), s) - post.edges.begin() - 1;
        k = std::clamp<long>(k, 0, static_cast<long>(counts.size()) - 1);
        ++counts[static_cast<std::size_t>(k)];
    }
    return counts;
}

}  // namespace bscbf::sysid
