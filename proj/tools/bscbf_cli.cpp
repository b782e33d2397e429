// Command-line front end: each subcommand runs one pipeline stage or the
// whole experiment. Errors go to stderr as one JSON object.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bscbf/harness/config.hpp"
#include "bscbf/harness/experiment.hpp"
#include "bscbf/harness/safety.hpp"
#include "bscbf/sysid/io.hpp"

using namespace bscbf;
using namespace bscbf::harness;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long> trials;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_trials) {
    cmd->add_option("--config", c.config, "TOML experiment config (defaults when omitted)");
    cmd->add_option("--seed", c.seed, "master seed, overrides the config");
    cmd->add_option("--out", c.out, "output file or directory");
    if (with_trials) cmd->add_option("--trials", c.trials, "Monte Carlo trials, overrides the config")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c) {
    auto cfg = c.config.empty() ? parse_config_string("") : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.trials) cfg.n_trials = *c.trials;
    if (!c.out.empty()) cfg.out = c.out;
    cfg.validate();
    return cfg;
}

fs::path out_file(const Common& c, const ExperimentConfig& cfg, const std::string& default_name) {
    if (!c.out.empty()) return c.out;
    return fs::path(cfg.out) / default_name;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, "'" + path + "' is not valid JSON: " + e.what());
    }
}

/// Learned model from a fitted-drift JSON and a diffusion JSON.
Model2 load_learned(const std::string& model_path, const std::string& diffusion_path, const std::string& label) {
    const auto drift = sysid::learned_drift_from_json<2, 1>(read_json(model_path));
    const auto diff = read_json(diffusion_path);
    Vec<2> sigma;
    try {
        for (int i = 0; i < 2; ++i) sigma[i] = diff.at("channels").at(static_cast<std::size_t>(i)).at("sigma_hat").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, "'" + diffusion_path + "' lacks channels[].sigma_hat: " + e.what());
    }
    return sysid::learned_model<2, 1, 2>(drift, sigma, label);
}

Vec<2> parse_pair(const std::vector<double>& v, const std::string& what) {
    require(v.size() == 2, ErrorKind::Configuration, what + " takes two numbers");
    return Vec<2>(v[0], v[1]);
}

void print_csv_table(const fs::path& path, std::ostream& os) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (width.size() <= i) width.push_back(0);
            width[i] = std::max(width[i], std::min<std::size_t>(r[i].size(), 22));
        }
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            std::string c = r[i].size() > 22 ? r[i].substr(0, 22) : r[i];
            os << c << std::string(width[i] - c.size() + 2, ' ');
        }
        os << '\n';
    }
}

int report_error(const std::exception& e) {
    const auto* lib = dynamic_cast<const Error*>(&e);
    nlohmann::json j{{"error", lib ? to_string(lib->kind()) : "internal"}, {"message", e.what()}};
    std::cerr << j.dump() << '\n';
    if (lib && lib->kind() == ErrorKind::Configuration) return 2;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian identification and stochastic barrier-function control of unknown SDEs"};
    app.require_subcommand(1);

    // simulate
    Common sim;
    std::vector<double> sim_x0;
    std::string sim_policy = "zero", sim_model, sim_diffusion, sim_trace;
    double sim_horizon = -1.0;
    auto* c_sim = app.add_subcommand("simulate", "simulate one trajectory of the true system");
    add_common(c_sim, sim, false);
    c_sim->add_option("--x0", sim_x0, "initial state (two numbers)")->expected(2);
    c_sim->add_option("--policy", sim_policy, "zero | scbf | learned")->check(CLI::IsMember({"zero", "scbf", "learned"}));
    c_sim->add_option("--model", sim_model, "fitted drift JSON (learned policy)");
    c_sim->add_option("--diffusion", sim_diffusion, "diffusion JSON (learned policy)");
    c_sim->add_option("--horizon", sim_horizon, "seconds, overrides the config");
    c_sim->add_option("--trace", sim_trace, "QP trace CSV path");

    // collect-drift
    Common col;
    std::optional<long> col_K;
    auto* c_col = app.add_subcommand("collect-drift", "collect replicate drift targets at rollout probes");
    add_common(c_col, col, false);
    c_col->add_option("--K", col_K, "replicates per probe, overrides the config")->check(CLI::PositiveNumber);

    // fit-drift
    Common fitd;
    std::string fitd_data;
    auto* c_fitd = app.add_subcommand("fit-drift", "fit Bayesian linear regression to a drift dataset");
    add_common(c_fitd, fitd, false);
    c_fitd->add_option("--data", fitd_data, "drift dataset CSV")->required();

    // fit-diffusion
    Common fits;
    std::string fits_model;
    auto* c_fits = app.add_subcommand("fit-diffusion", "collect residuals and compute the MAP diffusion");
    add_common(c_fits, fits, false);
    c_fits->add_option("--model", fits_model, "fitted drift JSON")->required();

    // verify
    Common ver;
    std::string ver_model, ver_diffusion;
    std::vector<double> ver_x0;
    auto* c_ver = app.add_subcommand("verify", "Monte Carlo safety ratio of the SCBF controller");
    add_common(c_ver, ver, true);
    c_ver->add_option("--model", ver_model, "fitted drift JSON; controller uses the true model when omitted");
    c_ver->add_option("--diffusion", ver_diffusion, "diffusion JSON for --model");
    c_ver->add_option("--x0", ver_x0, "initial state, overrides the config")->expected(2);

    // experiment
    Common exp;
    auto* c_exp = app.add_subcommand("experiment", "full pipeline: identify, control, verify, tabulate");
    add_common(c_exp, exp, true);

    // report
    std::string rep_dir;
    auto* c_rep = app.add_subcommand("report", "print the tables of an experiment directory");
    c_rep->add_option("--out,dir", rep_dir, "experiment output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*c_sim) {
            auto cfg = resolve(sim);
            if (sim_horizon > 0) cfg.horizon = sim_horizon;
            const auto pb = problem_of(cfg);
            const Vec<2> x0 = sim_x0.empty() ? cfg.initial_states.front() : parse_pair(sim_x0, "--x0");
            const long steps = std::lround(cfg.horizon / cfg.dt);
            std::optional<SafePolicy<2, 1, 2>> pol;
            if (sim_policy == "scbf") pol = make_policy(make_chain(pb.model, cfg, false, cfg.seed), cfg);
            if (sim_policy == "learned") {
                require(!sim_model.empty() && !sim_diffusion.empty(), ErrorKind::Configuration,
                        "--policy learned needs --model and --diffusion");
                pol = make_policy(make_chain(load_learned(sim_model, sim_diffusion, "learned"), cfg, true, cfg.seed), cfg);
            }
            std::ostringstream trace;
            if (pol) write_qp_trace_header<1>(trace);
            trace << std::setprecision(17);
            double t = 0.0;
            const Policy<2, 1> policy = [&](const Vec<2>& x) -> Vec<1> {
                if (!pol) return Vec<1>::Zero();
                const auto s = pol->step(x);
                write_qp_trace_row<1>(trace, t, s);
                t += cfg.dt;
                return s.u;
            };
            const auto traj = simulate(pb.model, x0, policy, cfg.dt, steps, derive_seed(cfg.seed, kTrials));
            const auto path = out_file(sim, cfg, "trajectory.csv");
            atomic_write_with(path, [&](std::ostream& os) { write_csv(os, traj); });
            if (pol && !sim_trace.empty()) atomic_write(sim_trace, trace.str());
            std::cout << "wrote " << path.string() << " (" << traj.steps() << " steps)\n";
        } else if (*c_col) {
            auto cfg = resolve(col);
            const long K = col_K.value_or(cfg.id.K);
            const auto pb = problem_of(cfg);
            const Box2 box(pb.model);
            const auto probes = identification_probes(box, cfg, cfg.seed);
            const auto s = drift_settings(cfg, K, cfg.seed);
            require(cfg.id.scheme == sysid::DriftScheme::paired, ErrorKind::Configuration,
                    "collect-drift writes paired datasets; use `experiment` for the sequential scheme");
            const auto ds = sysid::collect_drift_data(box, probes, Vec<1>::Constant(s.u1), Vec<1>::Constant(s.u2), K,
                                                      cfg.dt, s.seed);
            const auto path = out_file(col, cfg, "drift_dataset.csv");
            atomic_write_with(path, [&](std::ostream& os) { sysid::write_csv(os, ds); });
            std::cout << "wrote " << path.string() << " (" << ds.size() << " probes, K=" << K << ")\n";
        } else if (*c_fitd) {
            auto cfg = resolve(fitd);
            std::ifstream is(fitd_data);
            require(static_cast<bool>(is), ErrorKind::Io, "cannot open '" + fitd_data + "'");
            const auto ds = sysid::read_drift_dataset<2, 1>(is);
            sysid::DriftPrior prior;
            prior.prior_variance = cfg.id.prior_variance;
            prior.noise_var = cfg.id.noise_var;
            const auto model = sysid::fit_drift(ds, make_basis(cfg.id.basis), prior);
            const auto path = out_file(fitd, cfg, "drift_model.json");
            atomic_write(path, sysid::to_json(model).dump(2) + "\n");
            std::cout << "wrote " << path.string() << " (provenance " << ds.hash() << ")\n";
        } else if (*c_fits) {
            auto cfg = resolve(fits);
            Identification id;
            id.drift = sysid::learned_drift_from_json<2, 1>(read_json(fits_model));
            identify_diffusion(cfg, id, cfg.seed);
            const fs::path dir = fits.out.empty() ? fs::path(cfg.out) : fs::path(fits.out);
            atomic_write_with(dir / "residuals.csv", [&](std::ostream& os) { sysid::write_csv(os, id.residuals); });
            atomic_write(dir / "diffusion.json", diffusion_json(id, cfg).dump(2) + "\n");
            for (int i = 0; i < 2; ++i) {
                const auto& post = id.diffusion[static_cast<std::size_t>(i)];
                const auto samples = sysid::sample_sigma_posterior(
                    post, cfg.id.posterior_samples,
                    derive_seed(cfg.seed, kPosteriorSamples, static_cast<std::uint64_t>(i)));
                atomic_write_with(dir / ("posterior_sigma" + std::to_string(i + 1) + ".csv"),
                                  [&](std::ostream& os) { write_histogram_csv(os, post, samples); });
            }
            std::cout << "sigma_hat = [" << id.sigma_hat[0] << ", " << id.sigma_hat[1] << "]; wrote " << dir.string()
                      << "\n";
        } else if (*c_ver) {
            auto cfg = resolve(ver);
            const auto pb = problem_of(cfg);
            const bool learned = !ver_model.empty();
            require(!learned || !ver_diffusion.empty(), ErrorKind::Configuration, "--model needs --diffusion");
            const auto chain = learned ? make_chain(load_learned(ver_model, ver_diffusion, "learned"), cfg, true, cfg.seed)
                                       : make_chain(pb.model, cfg, false, cfg.seed);
            std::vector<Vec<2>> starts = cfg.initial_states;
            if (!ver_x0.empty()) starts = {parse_pair(ver_x0, "--x0")};
            nlohmann::json reports = nlohmann::json::array();
            for (const auto& x0 : starts) {
                const auto rep = verify_policy(cfg, chain, learned ? "Bayesian SCBF" : "true-model SCBF", learned ? 2 : 1, x0);
                std::cout << "x0 = [" << x0[0] << ", " << x0[1] << "]  ratio " << rep.ratio << "  CI95 [" << rep.ci.lo
                          << ", " << rep.ci.hi << "]";
                if (rep.bound) std::cout << "  bound " << rep.bound->value;
                std::cout << '\n';
                reports.push_back(to_json(rep));
            }
            const auto path = out_file(ver, cfg, "safety_report.json");
            atomic_write(path, nlohmann::json{{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"reports", reports}}.dump(2) + "\n");
        } else if (*c_exp) {
            const auto cfg = resolve(exp);
            const auto res = run_experiment(cfg);
            std::cout << "learning phase " << res.identification.timings.at("learning_total") << " s; sigma_hat = ["
                      << res.identification.sigma_hat[0] << ", " << res.identification.sigma_hat[1] << "]\n";
            for (const auto& r : res.safety)
                std::cout << r.label << " x0 = [" << r.x0[0] << ", " << r.x0[1] << "]  ratio " << r.ratio << "  CI95 ["
                          << r.ci.lo << ", " << r.ci.hi << "]\n";
            std::cout << "wrote " << cfg.out << "\n";
        } else if (*c_rep) {
            const fs::path dir(rep_dir);
            if (fs::exists(dir / "error.json"))
                std::cout << "run failed: " << read_json((dir / "error.json").string()).dump() << "\n\n";
            for (const char* t : {"mse.csv", "safety_ratios.csv"}) {
                if (!fs::exists(dir / t)) continue;
                std::cout << "== " << t << " ==\n";
                print_csv_table(dir / t, std::cout);
                std::cout << '\n';
            }
            if (fs::exists(dir / "timing.json")) {
                const auto timing = read_json((dir / "timing.json").string());
                std::cout << "== learning phase (s) ==\n" << timing.at("learning").dump(2) << "\n";
            }
        }
    } catch (const std::exception& e) {
        return report_error(e);
    }
    return 0;
}
