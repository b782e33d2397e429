#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscbf/error.hpp"
#include "bscbf/sde.hpp"
#include "bscbf/sysid/drift.hpp"

namespace bscbf::harness {

struct ChannelMse {
    std::string name;  // f1, f2, g1_1, ...
    double mse = 0.0;
    double std_error = 0.0;  // of the mean of squared errors
};

struct MseReport {
    long K = 0;
    int n_eval = 0;
    std::uint64_t seed = 0;
    std::vector<ChannelMse> channels;

    const ChannelMse& channel(const std::string& name) const {
        for (const auto& c : channels)
            if (c.name == name) return c;
        fail(ErrorKind::Configuration, "MseReport: no channel '" + name + "'");
    }
};

/// Squared error of the posterior means against the true drift at n_eval
/// probes drawn uniformly from [lo, hi].
template <int N, int P, int D>
MseReport run_mse_eval(const sysid::LearnedDrift<N, P>& drift, const SdeModel<N, P, D>& true_model, int n_eval,
                       const Vec<N>& lo, const Vec<N>& hi, std::uint64_t seed, long K = 0) {
    require(n_eval >= 1, ErrorKind::Configuration, "run_mse_eval: n_eval must be >= 1");
    require(static_cast<int>(drift.f.size()) == N && static_cast<int>(drift.g.size()) == N * P,
            ErrorKind::Configuration, "run_mse_eval: posterior set does not match model dimensions");
    const auto probes = sysid::uniform_points<N>(lo, hi, n_eval, seed);
    const int channels = N + N * P;
    std::vector<std::vector<double>> sq(static_cast<std::size_t>(channels));
    for (const auto& x : probes) {
        const Vec<N> f = true_model.drift(x), fh = drift.f_hat(x);
        const Mat<N, P> g = true_model.control_matrix(x), gh = drift.g_hat(x);
        for (int i = 0; i < N; ++i) sq[static_cast<std::size_t>(i)].push_back((f[i] - fh[i]) * (f[i] - fh[i]));
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < P; ++j) {
                const double e = g(i, j) - gh(i, j);
                sq[static_cast<std::size_t>(N + i * P + j)].push_back(e * e);
            }
    }
    MseReport rep;
    rep.K = K;
    rep.n_eval = n_eval;
    rep.seed = seed;
    for (int c = 0; c < channels; ++c) {
        const auto& v = sq[static_cast<std::size_t>(c)];
        double mean = 0.0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double e : v) var += (e - mean) * (e - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        ChannelMse ch;
        ch.name = c < N ? "f" + std::to_string(c + 1)
                        : "g" + std::to_string((c - N) / P + 1) + "_" + std::to_string((c - N) % P + 1);
        ch.mse = mean;
        ch.std_error = std::sqrt(var / static_cast<double>(v.size()));
        rep.channels.push_back(ch);
    }
    return rep;
}

inline nlohmann::json to_json(const MseReport& r) {
    nlohmann::json ch = nlohmann::json::array();
    for (const auto& c : r.channels) ch.push_back({{"name", c.name}, {"mse", c.mse}, {"std_error", c.std_error}});
    return {{"K", r.K}, {"n_eval", r.n_eval}, {"seed", r.seed}, {"channels", ch}};
}

}  // namespace bscbf::harness
