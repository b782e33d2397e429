#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bscbf/barrier.hpp"
#include "bscbf/controller.hpp"
#include "bscbf/error.hpp"
#include "bscbf/rng.hpp"
#include "bscbf/sde.hpp"

namespace bscbf::harness {

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Wilson score interval for k successes out of n.
inline Interval wilson_interval(long k, long n, double z = kZ95) {
    require(n >= 1 && k >= 0 && k <= n, ErrorKind::Configuration, "wilson_interval: need 0 <= k <= n, n >= 1");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Acceptance band around a reference ratio p for an n-trial experiment.
inline Interval binomial_band(double p, long n, double z = kZ95) {
    require(n >= 1 && p >= 0.0 && p <= 1.0, ErrorKind::Configuration, "binomial_band: bad p or n");
    const double half = z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

inline double binomial_std_error(double p, long n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

struct TrialResult {
    std::uint64_t seed = 0;
    bool safe = true;
    std::optional<double> exit_time;
    long uncontrollable_steps = 0;
    long infeasible_steps = 0;
    bool diverged = false;
};

struct SafetyReport {
    std::string label;
    Vec<2> x0 = Vec<2>::Zero();
    double dt = 0.0;
    double horizon = 0.0;
    long n_trials = 0;
    long n_safe = 0;
    double ratio = 0.0;
    Interval ci;
    double std_error = 0.0;
    std::optional<SafetyBound> bound;
    std::string bound_note;
    std::uint64_t master_seed = 0;
    std::string config_hash;
    std::vector<TrialResult> trials;
    std::map<std::string, double> timings;  // seconds

    long flagged_trials() const {
        return std::count_if(trials.begin(), trials.end(),
                             [](const TrialResult& t) { return t.uncontrollable_steps + t.infeasible_steps > 0; });
    }
};

template <int N, int P>
using StepPolicy = std::function<PolicyStep<P>(const Vec<N>&)>;

template <int N, int P, int D>
StepPolicy<N, P> step_policy(const SafePolicy<N, P, D>& policy) {
    return [policy](const Vec<N>& x) { return policy.step(x); };
}

template <int N, int P>
StepPolicy<N, P> step_policy(const Policy<N, P>& policy) {
    return [policy](const Vec<N>& x) {
        PolicyStep<P> s;
        s.u = policy(x);
        return s;
    };
}

struct TrialBatchOptions {
    int threads = 1;                 // 0: hardware concurrency
    std::uint64_t stream_salt = 0;   // separates the noise streams of different methods
    std::string label;
};

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Monte Carlo over n_trials independent noise streams. A trial is safe iff
/// h > 0 at every grid point of [0, horizon]. Trial i's noise depends only on
/// (master_seed, stream_salt, i), so the thread count never changes a result.
template <int N, int P, int D>
SafetyReport run_safety_trial_batch(const SdeModel<N, P, D>& true_model, const ScalarField<N>& h,
                                    const StepPolicy<N, P>& policy, const Vec<N>& x0, double dt, double horizon,
                                    long n_trials, std::uint64_t master_seed, const TrialBatchOptions& opts = {}) {
    static_assert(N == 2, "reports carry two-state initial conditions");
    require(n_trials >= 1, ErrorKind::Configuration, "run_safety_trial_batch: n_trials must be >= 1");
    require(dt > 0.0 && horizon >= dt, ErrorKind::Configuration,
            "run_safety_trial_batch: need dt > 0 and horizon >= dt");
    require(static_cast<bool>(policy), ErrorKind::Configuration, "run_safety_trial_batch: no policy");
    const double h0 = h.value(x0);
    if (!(h0 > 0.0)) {
        std::ostringstream os;
        os << "initial state [" << x0.transpose() << "] is not strictly inside the safe set (h = " << h0 << ")";
        fail(ErrorKind::Configuration, os.str());
    }
    const auto t_start = std::chrono::steady_clock::now();
    const long n_steps = std::lround(horizon / dt);

    SafetyReport rep;
    rep.label = opts.label;
    rep.x0 = x0;
    rep.dt = dt;
    rep.horizon = static_cast<double>(n_steps) * dt;
    rep.n_trials = n_trials;
    rep.master_seed = master_seed;
    rep.trials.resize(static_cast<std::size_t>(n_trials));

    auto run_one = [&](long i) {
        TrialResult tr;
        tr.seed = derive_seed(master_seed, static_cast<std::uint64_t>(i), opts.stream_salt);
        NoiseStream<D> noise(tr.seed);
        Vec<N> x = x0;
        Vec<D> dW;
        for (long k = 0; k < n_steps; ++k) {
            const auto s = policy(x);
            if (s.uncontrollable) ++tr.uncontrollable_steps;
            if (!s.feasible) ++tr.infeasible_steps;
            noise.increment(dt, dW);
            try {
                x = em_step(true_model, x, s.u, dt, dW);
            } catch (const DivergedError&) {
                tr.diverged = true;
            }
            if (tr.diverged || !(h.value(x) > 0.0)) {
                tr.safe = false;
                tr.exit_time = static_cast<double>(k + 1) * dt;
                break;
            }
        }
        rep.trials[static_cast<std::size_t>(i)] = tr;
    };

    const int n_threads = std::min<long>(resolve_threads(opts.threads), n_trials);
    if (n_threads <= 1) {
        for (long i = 0; i < n_trials; ++i) run_one(i);
    } else {
        std::atomic<long> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (long i = next++; i < n_trials; i = next++) run_one(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                    next = n_trials;
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    rep.n_safe = std::count_if(rep.trials.begin(), rep.trials.end(), [](const TrialResult& t) { return t.safe; });
    rep.ratio = static_cast<double>(rep.n_safe) / static_cast<double>(n_trials);
    rep.ci = wilson_interval(rep.n_safe, n_trials);
    rep.std_error = binomial_std_error(rep.ratio, n_trials);
    rep.timings["trials"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

/// Worst-case bound for a chain at x0, or a note saying why there is none.
template <int N, int P, int D>
std::pair<std::optional<SafetyBound>, std::string> chain_bound(const BarrierChain<N, P, D>& chain, const Vec<N>& x0,
                                                               BoundKind kind, double horizon) {
    BoundArgs args;
    for (int j = 0; j < chain.relative_degree(); ++j) {
        const auto& lvl = chain.level(j);
        if (!lvl.sup) return {std::nullopt, "no level-set supremum estimated for b_" + std::to_string(j)};
        if (lvl.sup->unbounded_suspect || !std::isfinite(lvl.c) || lvl.c <= 0.0)
            return {std::nullopt, "b_" + std::to_string(j) + " has no finite positive supremum on its level set"};
        args.b_xi.push_back(lvl.b.value(x0));
        args.c.push_back(lvl.c);
    }
    args.horizon = horizon;
    if (chain.relative_degree() > 1) kind = BoundKind::HighOrder;
    try {
        return {worst_case_bound(kind, args), ""};
    } catch (const Error& e) {
        return {std::nullopt, e.what()};
    }
}

inline nlohmann::json to_json(const SafetyReport& r, bool with_trials = true) {
    using nlohmann::json;
    json j;
    j["label"] = r.label;
    j["x0"] = {r.x0[0], r.x0[1]};
    j["dt"] = r.dt;
    j["horizon"] = r.horizon;
    j["n_trials"] = r.n_trials;
    j["n_safe"] = r.n_safe;
    j["ratio"] = r.ratio;
    j["ci95"] = {{"method", "wilson"}, {"lo", r.ci.lo}, {"hi", r.ci.hi}};
    j["std_error"] = r.std_error;
    j["flagged_trials"] = r.flagged_trials();
    j["bound"] = r.bound ? to_json(*r.bound) : json(nullptr);
    if (!r.bound_note.empty()) j["bound_note"] = r.bound_note;
    if (r.bound) j["ratio_minus_bound_in_se"] = r.std_error > 0 ? (r.ratio - r.bound->value) / r.std_error : 0.0;
    j["master_seed"] = r.master_seed;
    j["config_hash"] = r.config_hash;
    j["timings"] = r.timings;
    if (with_trials) {
        json trials = json::array();
        for (const auto& t : r.trials) {
            json f = json::array();
            if (t.uncontrollable_steps) f.push_back("uncontrollable:" + std::to_string(t.uncontrollable_steps));
            if (t.infeasible_steps) f.push_back("infeasible:" + std::to_string(t.infeasible_steps));
            if (t.diverged) f.push_back("diverged");
            trials.push_back({{"seed", t.seed},
                              {"safe", t.safe},
                              {"exit_time", t.exit_time ? json(*t.exit_time) : json(nullptr)},
                              {"flags", f}});
        }
        j["trials"] = trials;
    }
    return j;
}

}  // namespace bscbf::harness
