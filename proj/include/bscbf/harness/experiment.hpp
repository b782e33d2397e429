#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscbf/benchmarks.hpp"
#include "bscbf/controller.hpp"
#include "bscbf/harness/config.hpp"
#include "bscbf/harness/mse.hpp"
#include "bscbf/harness/safety.hpp"
#include "bscbf/sysid/diffusion.hpp"
#include "bscbf/sysid/drift.hpp"
#include "bscbf/sysid/io.hpp"

namespace bscbf::harness {

using Chain2 = BarrierChain<2, 1, 2>;
using Box2 = sysid::Blackbox<2, 1, 2>;

// Stream families derived from the master seed.
enum Stream : std::uint64_t {
    kProbes = 1,
    kDrift = 2,
    kResidualStarts = 3,
    kResiduals = 4,
    kMseEval = 5,
    kPosteriorSamples = 6,
    kSupremum = 7,
    kTrials = 8,
};

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

/// write-temp-then-rename, so readers never see a half-written file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        os << content;
        os.flush();
        require(static_cast<bool>(os), ErrorKind::Io, "write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorKind::Io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

template <class Writer>
void atomic_write_with(const std::filesystem::path& path, Writer&& w) {
    std::ostringstream os;
    os << std::setprecision(17);
    w(os);
    atomic_write(path, os.str());
}

inline sysid::Basis<2> make_basis(const std::string& spec) {
    if (spec == "cubic2") return sysid::Basis<2>::cubic2();
    if (spec.rfind("degree:", 0) == 0) {
        const int deg = std::stoi(spec.substr(7));
        require(deg >= 0 && deg <= 8, ErrorKind::Configuration, "basis degree must be in [0, 8]");
        return sysid::Basis<2>::total_degree(deg);
    }
    fail(ErrorKind::Configuration, "unknown basis '" + spec + "'");
}

inline BenchmarkProblem problem_of(const ExperimentConfig& cfg) {
    return benchmark_problem(cfg.benchmark, cfg.sigma, cfg.params);
}

inline sysid::DriftSettings drift_settings(const ExperimentConfig& cfg, long K, std::uint64_t seed) {
    sysid::DriftSettings s;
    s.scheme = cfg.id.scheme;
    s.u1 = cfg.id.u1;
    s.u2 = cfg.id.u2;
    s.K = K;
    s.dt = cfg.dt;
    s.seed = derive_seed(seed, kDrift);
    s.prior.prior_variance = cfg.id.prior_variance;
    s.prior.noise_var = cfg.id.noise_var;
    return s;
}

inline std::vector<Vec<2>> identification_probes(const Box2& box, const ExperimentConfig& cfg, std::uint64_t seed) {
    return sysid::rollout_probes(box, cfg.id.probe_lo, cfg.id.probe_hi, cfg.id.probe_rollouts, cfg.id.probe_steps,
                                 cfg.dt, derive_seed(seed, kProbes));
}

struct Identification {
    std::vector<Vec<2>> probes;
    sysid::DriftDataset<2, 1> drift_data;
    sysid::LearnedDrift<2, 1> drift;
    sysid::ResidualDataset<2> residuals;
    std::array<sysid::DiffusionPosterior, 2> diffusion;
    Vec<2> sigma_hat = Vec<2>::Zero();
    Model2 model;
    std::map<std::string, double> timings;
};

/// Drift only: probes, replicate collection and BLR fits.
inline Identification identify_drift_only(const ExperimentConfig& cfg, long K, std::uint64_t seed) {
    const auto pb = problem_of(cfg);
    const Box2 box(pb.model);
    Identification out;
    Stopwatch sw;
    out.probes = identification_probes(box, cfg, seed);
    auto [drift, data] = sysid::identify_drift(box, out.probes, make_basis(cfg.id.basis), drift_settings(cfg, K, seed));
    out.drift = std::move(drift);
    out.drift_data = std::move(data);
    out.timings["drift_identification"] = sw.lap();
    return out;
}

/// Residuals under u = 0 around a fitted drift, then MAP diffusion per channel.
inline void identify_diffusion(const ExperimentConfig& cfg, Identification& id, std::uint64_t seed) {
    const auto pb = problem_of(cfg);
    const Box2 box(pb.model);
    Stopwatch sw;
    const auto starts = sysid::uniform_points<2>(cfg.id.probe_lo, cfg.id.probe_hi, cfg.id.residual_rollouts,
                                                 derive_seed(seed, kResidualStarts));
    const Policy<2, 1> zero = [](const Vec<2>&) { return Vec<1>::Zero(); };
    id.residuals = sysid::collect_residuals(box, id.drift, zero, starts, cfg.dt, cfg.id.residual_steps,
                                            derive_seed(seed, kResiduals));
    id.timings["residual_collection"] = sw.lap();
    for (int i = 0; i < 2; ++i) {
        id.diffusion[static_cast<std::size_t>(i)] =
            sysid::map_sigma(id.residuals, i, cfg.id.alpha, cfg.id.beta, cfg.id.grid_cells);
        id.sigma_hat[i] = id.diffusion[static_cast<std::size_t>(i)].sigma_hat;
    }
    id.model = sysid::learned_model<2, 1, 2>(id.drift, id.sigma_hat, "learned-" + cfg.benchmark);
    id.timings["diffusion_fit"] = sw.lap();
}

/// Full learning phase: drift, then diffusion.
inline Identification identify(const ExperimentConfig& cfg, long K, std::uint64_t seed) {
    Identification out = identify_drift_only(cfg, K, seed);
    identify_diffusion(cfg, out, seed);
    out.timings["learning_total"] =
        out.timings["drift_identification"] + out.timings["residual_collection"] + out.timings["diffusion_fit"];
    return out;
}

/// Barrier chain for the benchmark's safe set along `model`. Learned models
/// get the drop policy: a fitted g leaks tiny u-terms into lower levels.
inline std::shared_ptr<const Chain2> make_chain(const Model2& model, const ExperimentConfig& cfg, bool learned,
                                                std::uint64_t seed, const std::vector<Vec<2>>& probes = {}) {
    const auto pb = problem_of(cfg);
    ChainOptions<2> opts;
    // Relative-degree checks only make sense inside the safe set.
    for (const auto& x : probes)
        if (pb.h.value(x) > 0.0 && opts.probes.size() < 500) opts.probes.push_back(x);
    opts.policy = learned ? RelativeDegreePolicy::drop : RelativeDegreePolicy::strict;
    const ScalarField<2> h = pb.h;
    const long n = cfg.ctrl.sup_samples;
    const Vec<2> lo = pb.sup_lo, hi = pb.sup_hi;
    opts.sup_estimator = [h, n, lo, hi, seed](const ScalarField<2>& b, int level) {
        RegionSampler<2> region{lo, hi, [h, b](const Vec<2>& x) { return h.value(x) >= 0.0 && b.value(x) >= 0.0; }};
        return sup_over_set(b, region, n, derive_seed(seed, kSupremum, static_cast<std::uint64_t>(level)));
    };
    return std::make_shared<const Chain2>(build_chain(model, pb.h, pb.relative_degree, opts));
}

inline SafePolicy<2, 1, 2> make_policy(std::shared_ptr<const Chain2> chain, const ExperimentConfig& cfg) {
    const auto pb = problem_of(cfg);
    SafePolicy<2, 1, 2> pol(chain);
    pol.with_kind(cfg.ctrl.kind == "szcbf" ? ConstraintKind::SZCBF : ConstraintKind::SCBF, cfg.ctrl.k);
    if (cfg.ctrl.clf)
        pol.with_clf(ClfConfig<2, 1, 2>{*pb.clf, chain->model(), cfg.ctrl.clf_gamma, cfg.ctrl.slack_weight});
    if (cfg.ctrl.u_min) pol.with_bounds(Vec<1>::Constant(*cfg.ctrl.u_min), Vec<1>::Constant(*cfg.ctrl.u_max));
    pol.with_infeasible_fallback(cfg.ctrl.infeasible_fallback);
    return pol;
}

inline BoundKind bound_kind_of(const ExperimentConfig& cfg) {
    return cfg.ctrl.kind == "szcbf" ? BoundKind::SZCBF : BoundKind::SCBF;
}

/// Safety batch for one (method, x0) pair, with the chain's worst-case bound.
inline SafetyReport verify_policy(const ExperimentConfig& cfg, const std::shared_ptr<const Chain2>& chain,
                                  const std::string& label, std::uint64_t method_salt, const Vec<2>& x0) {
    const auto pb = problem_of(cfg);
    const auto pol = make_policy(chain, cfg);
    TrialBatchOptions opts;
    opts.threads = cfg.threads;
    opts.stream_salt = derive_seed(kTrials, method_salt);
    opts.label = label;
    auto rep = run_safety_trial_batch<2, 1, 2>(pb.model, pb.h, step_policy(pol), x0, cfg.dt, cfg.horizon,
                                               cfg.n_trials, cfg.seed, opts);
    auto [bound, note] = chain_bound(*chain, x0, bound_kind_of(cfg), rep.horizon);
    rep.bound = bound;
    rep.bound_note = note;
    rep.config_hash = cfg.hash();
    return rep;
}

// Artifact writers ---------------------------------------------------------------

inline void write_histogram_csv(std::ostream& os, const sysid::DiffusionPosterior& post,
                                const std::vector<double>& samples) {
    const auto counts = sysid::histogram(post, samples);
    os << "sigma_lo,sigma_hi,sigma_mid,posterior_mass,sample_count\n" << std::setprecision(17);
    for (std::size_t k = 0; k < post.mass.size(); ++k)
        os << post.edges[k] << ',' << post.edges[k + 1] << ',' << post.grid[k] << ',' << post.mass[k] << ','
           << counts[k] << '\n';
}

inline nlohmann::json diffusion_json(const Identification& id, const ExperimentConfig& cfg) {
    nlohmann::json ch = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
        const auto& p = id.diffusion[static_cast<std::size_t>(i)];
        ch.push_back({{"channel", i + 1},
                      {"sigma_hat", p.sigma_hat},
                      {"grid_argmax", p.grid_argmax()},
                      {"n", p.n},
                      {"sum_sq", p.sum_sq},
                      {"alpha", p.alpha},
                      {"beta", p.beta},
                      {"true_sigma", cfg.sigma[i]}});
    }
    return {{"channels", ch},
            {"normalization", sysid::to_string(id.residuals.normalization)},
            {"rollouts", id.residuals.rollouts},
            {"truncated_rollouts", id.residuals.truncated_rollouts},
            {"model_hash", id.residuals.model_hash},
            {"seed", cfg.seed},
            {"config_hash", cfg.hash()}};
}

inline void write_mse_table(std::ostream& os, const std::vector<MseReport>& reps, const ExperimentConfig& cfg) {
    os << "K,channel,mse,std_error,n_eval,seed,config_hash\n" << std::setprecision(17);
    for (const auto& r : reps)
        for (const auto& c : r.channels)
            os << r.K << ',' << c.name << ',' << c.mse << ',' << c.std_error << ',' << r.n_eval << ',' << cfg.seed
               << ',' << cfg.hash() << '\n';
}

inline void write_safety_table(std::ostream& os, const std::vector<SafetyReport>& reps, const ExperimentConfig& cfg) {
    os << "benchmark,x0_1,x0_2,method,n_trials,n_safe,ratio,ci_lo,ci_hi,std_error,bound,bound_ok,"
          "flagged_trials,seed,config_hash\n"
       << std::setprecision(17);
    for (const auto& r : reps) {
        os << cfg.benchmark << ',' << r.x0[0] << ',' << r.x0[1] << ',' << r.label << ',' << r.n_trials << ','
           << r.n_safe << ',' << r.ratio << ',' << r.ci.lo << ',' << r.ci.hi << ',' << r.std_error << ',';
        if (r.bound) os << r.bound->value << ',' << (r.ratio >= r.bound->value - 2.0 * r.std_error ? 1 : 0);
        else os << ',';
        os << ',' << r.flagged_trials() << ',' << cfg.seed << ',' << cfg.hash() << '\n';
    }
    for (const auto& ref : cfg.references)
        for (const auto& [method, ratio] : ref.ratios)
            os << cfg.benchmark << ',' << ref.x0[0] << ',' << ref.x0[1] << ',' << method << " (literature),,,"
               << ratio << ",,,,,,,,\n";
}

struct ExperimentResult {
    Identification identification;
    std::vector<MseReport> mse;
    std::vector<SafetyReport> safety;
    nlohmann::json timing;
    std::filesystem::path out;
};

/// Identification, MSE sweep, posterior samples, chains and safety batches.
/// Artifacts are written as each phase finishes; on failure error.json
/// records the phase and everything already written stays.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    ExperimentResult res;
    res.out = cfg.out;
    const fs::path out(cfg.out);
    const std::string hash = cfg.hash();
    std::string phase = "config";
    nlohmann::json timing;
    try {
        auto meta = cfg.to_json();
        meta["config_hash"] = hash;
        atomic_write(out / "config.json", meta.dump(2) + "\n");

        phase = "identification";
        auto& id = res.identification;
        id = identify(cfg, cfg.id.K, cfg.seed);
        atomic_write_with(out / "drift_dataset.csv", [&](std::ostream& os) { sysid::write_csv(os, id.drift_data); });
        atomic_write(out / "drift_model.json", sysid::to_json(id.drift).dump(2) + "\n");
        atomic_write_with(out / "residuals.csv", [&](std::ostream& os) { sysid::write_csv(os, id.residuals); });
        atomic_write(out / "diffusion.json", diffusion_json(id, cfg).dump(2) + "\n");
        timing["learning"] = id.timings;

        phase = "posterior-samples";
        for (int i = 0; i < 2; ++i) {
            const auto& post = id.diffusion[static_cast<std::size_t>(i)];
            const auto samples = sysid::sample_sigma_posterior(
                post, cfg.id.posterior_samples, derive_seed(cfg.seed, kPosteriorSamples, static_cast<std::uint64_t>(i)));
            atomic_write_with(out / ("posterior_sigma" + std::to_string(i + 1) + ".csv"),
                              [&](std::ostream& os) { write_histogram_csv(os, post, samples); });
        }

        phase = "mse";
        Stopwatch sw;
        const auto pb = problem_of(cfg);
        for (long K : cfg.id.mse_K) {
            const auto drift = K == cfg.id.K ? id.drift : identify_drift_only(cfg, K, cfg.seed).drift;
            res.mse.push_back(run_mse_eval(drift, pb.model, cfg.id.mse_probes, cfg.id.probe_lo, cfg.id.probe_hi,
                                           derive_seed(cfg.seed, kMseEval), K));
        }
        atomic_write_with(out / "mse.csv", [&](std::ostream& os) { write_mse_table(os, res.mse, cfg); });
        timing["mse_sweep"] = sw.lap();

        phase = "chains";
        const auto true_chain = make_chain(pb.model, cfg, false, cfg.seed, id.probes);
        const auto learned_chain = make_chain(id.model, cfg, true, cfg.seed, id.probes);
        atomic_write(out / "chain_true.json", true_chain->report().dump(2) + "\n");
        atomic_write(out / "chain_learned.json", learned_chain->report().dump(2) + "\n");
        timing["chains"] = sw.lap();

        phase = "safety";
        for (const auto& x0 : cfg.initial_states) {
            res.safety.push_back(verify_policy(cfg, true_chain, "true-model SCBF", 1, x0));
            res.safety.push_back(verify_policy(cfg, learned_chain, "Bayesian SCBF", 2, x0));
        }
        nlohmann::json reports = nlohmann::json::array();
        nlohmann::json trial_times = nlohmann::json::array();
        for (const auto& r : res.safety) {
            reports.push_back(to_json(r));
            trial_times.push_back({{"label", r.label}, {"x0", {r.x0[0], r.x0[1]}}, {"seconds", r.timings.at("trials")}});
        }
        atomic_write(out / "safety_report.json",
                     nlohmann::json{{"config_hash", hash}, {"seed", cfg.seed}, {"reports", reports}}.dump(2) + "\n");
        atomic_write_with(out / "safety_ratios.csv", [&](std::ostream& os) { write_safety_table(os, res.safety, cfg); });
        timing["safety_trials"] = trial_times;

        timing["config_hash"] = hash;
        timing["seed"] = cfg.seed;
        atomic_write(out / "timing.json", timing.dump(2) + "\n");
        res.timing = timing;
    } catch (const std::exception& e) {
        const auto* lib = dynamic_cast<const Error*>(&e);
        const nlohmann::json err{{"phase", phase},
                                 {"kind", lib ? to_string(lib->kind()) : "internal"},
                                 {"message", e.what()},
                                 {"config_hash", hash}};
        try {
            atomic_write(out / "error.json", err.dump(2) + "\n");
        } catch (...) {
        }
        throw;
    }
    return res;
}

}  // namespace bscbf::harness
