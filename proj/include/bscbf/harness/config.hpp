#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "bscbf/benchmarks.hpp"
#include "bscbf/error.hpp"
#include "bscbf/hash.hpp"
#include "bscbf/sysid/drift.hpp"

namespace bscbf::harness {

/// Literature numbers printed beside our results; never used in computation.
struct ReferenceRow {
    Vec<2> x0 = Vec<2>::Zero();
    std::map<std::string, double> ratios;  // method label -> ratio
};

struct IdentificationConfig {
    sysid::DriftScheme scheme = sysid::DriftScheme::paired;
    long K = 100;
    std::vector<long> mse_K{10, 30, 100};
    double u1 = 0.0;
    double u2 = 1.0;
    int probe_rollouts = 10;
    long probe_steps = 300;
    Vec<2> probe_lo = Vec<2>::Zero();
    Vec<2> probe_hi = Vec<2>::Zero();
    std::string basis = "cubic2";
    double prior_variance = 100.0;
    std::optional<double> noise_var;
    double alpha = 1.0;
    double beta = 1.0;
    int residual_rollouts = 100;
    long residual_steps = 300;
    long posterior_samples = 10000;
    int grid_cells = 4096;
    int mse_probes = 100;
};

struct ControllerConfig {
    std::string kind = "scbf";  // scbf | szcbf
    double k = 1.0;
    bool clf = false;
    double clf_gamma = 1.0;
    double slack_weight = 1e3;
    std::optional<double> u_min, u_max;
    bool infeasible_fallback = true;
    long sup_samples = 100000;
};

struct ExperimentConfig {
    std::string benchmark = "example1";
    std::map<std::string, double> params;
    Vec<2> sigma = Vec<2>(0.2, 0.2);
    double dt = 0.01;
    double horizon = 3.0;
    long n_trials = 1000;
    std::vector<Vec<2>> initial_states;
    IdentificationConfig id;
    ControllerConfig ctrl;
    std::vector<ReferenceRow> references;
    std::uint64_t seed = 0;
    std::string out = "out";
    int threads = 0;  // 0: hardware concurrency

    nlohmann::json to_json() const;
    /// Hash over every field that can change a result (not out, threads).
    std::string hash() const;
    void validate() const;
};

/// Defaults that depend on the benchmark (probe box, control pair, CLF).
inline ExperimentConfig default_config(const std::string& benchmark, const Vec<2>& sigma) {
    ExperimentConfig c;
    c.benchmark = benchmark;
    c.sigma = sigma;
    const auto pb = benchmark_problem(benchmark, sigma);
    c.id.probe_lo = pb.probe_lo;
    c.id.probe_hi = pb.probe_hi;
    c.id.u1 = pb.u1;
    c.id.u2 = pb.u2;
    c.ctrl.clf = pb.clf.has_value();
    if (benchmark == "example1") c.initial_states = {Vec<2>(-0.1, 0.7), Vec<2>(-0.1, 0.8)};
    else c.initial_states = {Vec<2>(10.0, 15.0)};
    return c;
}

namespace detail {

inline std::vector<double> vec_of(const Vec<2>& v) { return {v[0], v[1]}; }

class TableReader {
public:
    TableReader(const toml::table& t, std::string where) : t_(t), where_(std::move(where)) {}

    /// Rejects keys nobody asked for.
    void done() const {
        for (const auto& [k, v] : t_) {
            const std::string key(k.str());
            if (!seen_.count(key)) fail(ErrorKind::Configuration, "unknown key '" + key + "' in " + where_);
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return t_.contains(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        const auto* node = t_.get(key);
        if constexpr (std::is_same_v<T, bool>) {
            auto v = node->value<bool>();
            require(v.has_value(), ErrorKind::Configuration, where_ + "." + key + " must be a boolean");
            out = *v;
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = node->value<std::string>();
            require(v.has_value(), ErrorKind::Configuration, where_ + "." + key + " must be a string");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = node->value<std::int64_t>();
            require(v.has_value() && !node->is_floating_point(), ErrorKind::Configuration,
                    where_ + "." + key + " must be an integer");
            out = static_cast<T>(*v);
        } else {
            auto v = node->value<double>();
            require(v.has_value(), ErrorKind::Configuration, where_ + "." + key + " must be a number");
            out = *v;
        }
    }

    void get(const std::string& key, std::optional<double>& out) {
        if (!has(key)) return;
        double v = 0.0;
        get(key, v);
        out = v;
    }

    static Vec<2> to_vec2(const toml::node& node, const std::string& what) {
        const auto* arr = node.as_array();
        require(arr && arr->size() == 2, ErrorKind::Configuration, what + " must be a 2-element array");
        Vec<2> v;
        for (std::size_t i = 0; i < 2; ++i) {
            auto x = (*arr)[i].value<double>();
            require(x.has_value(), ErrorKind::Configuration, what + " entries must be numbers");
            v[static_cast<Eigen::Index>(i)] = *x;
        }
        return v;
    }

    void get(const std::string& key, Vec<2>& out) {
        if (has(key)) out = to_vec2(*t_.get(key), where_ + "." + key);
    }

    void get(const std::string& key, std::vector<Vec<2>>& out) {
        if (!has(key)) return;
        const auto* arr = t_.get(key)->as_array();
        require(arr != nullptr, ErrorKind::Configuration, where_ + "." + key + " must be an array of pairs");
        out.clear();
        for (const auto& n : *arr) out.push_back(to_vec2(n, where_ + "." + key));
    }

    void get(const std::string& key, std::vector<long>& out) {
        if (!has(key)) return;
        const auto* arr = t_.get(key)->as_array();
        require(arr != nullptr, ErrorKind::Configuration, where_ + "." + key + " must be an array of integers");
        out.clear();
        for (const auto& n : *arr) {
            auto v = n.value<std::int64_t>();
            require(v.has_value() && !n.is_floating_point(), ErrorKind::Configuration,
                    where_ + "." + key + " entries must be integers");
            out.push_back(static_cast<long>(*v));
        }
    }

    const toml::table* sub(const std::string& key) {
        if (!has(key)) return nullptr;
        const auto* t = t_.get(key)->as_table();
        require(t != nullptr, ErrorKind::Configuration, where_ + "." + key + " must be a table");
        return t;
    }

    const toml::array* array(const std::string& key) {
        if (!has(key)) return nullptr;
        const auto* a = t_.get(key)->as_array();
        require(a != nullptr, ErrorKind::Configuration, where_ + "." + key + " must be an array");
        return a;
    }

private:
    const toml::table& t_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline void ExperimentConfig::validate() const {
    bscbf::detail::check_benchmark_name(benchmark);
    require(sigma.allFinite() && (sigma.array() >= 0.0).all(), ErrorKind::Configuration,
            "sigma must be finite and >= 0");
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::Configuration, "dt must be positive");
    require(horizon >= dt, ErrorKind::Configuration, "horizon must be at least one step");
    require(n_trials >= 1, ErrorKind::Configuration, "n_trials must be >= 1");
    require(!initial_states.empty(), ErrorKind::Configuration, "need at least one initial state");
    require(id.K >= 1, ErrorKind::Configuration, "identification.K must be >= 1");
    for (long k : id.mse_K) require(k >= 1, ErrorKind::Configuration, "identification.mse_K entries must be >= 1");
    require(id.probe_rollouts >= 1 && id.probe_steps >= 0, ErrorKind::Configuration, "bad probe rollout sizes");
    require((id.probe_lo.array() < id.probe_hi.array()).all(), ErrorKind::Configuration, "probe_lo must be < probe_hi");
    require(id.basis == "cubic2" || id.basis.rfind("degree:", 0) == 0, ErrorKind::Configuration,
            "identification.basis must be 'cubic2' or 'degree:<n>'");
    require(id.prior_variance > 0.0, ErrorKind::Configuration, "prior_variance must be positive");
    require(!id.noise_var || *id.noise_var >= 0.0, ErrorKind::Configuration, "noise_var must be >= 0");
    require(id.alpha > 0.0 && id.beta > 0.0, ErrorKind::Configuration, "alpha and beta must be positive");
    require(id.residual_rollouts >= 1 && id.residual_steps >= 1, ErrorKind::Configuration, "bad residual sizes");
    require(id.posterior_samples >= 1 && id.grid_cells >= 2, ErrorKind::Configuration, "bad posterior sizes");
    require(id.mse_probes >= 1, ErrorKind::Configuration, "mse_probes must be >= 1");
    require(ctrl.kind == "scbf" || ctrl.kind == "szcbf", ErrorKind::Configuration,
            "controller.kind must be 'scbf' or 'szcbf'");
    require(ctrl.k > 0.0, ErrorKind::Configuration, "controller.k must be positive");
    require(ctrl.slack_weight > 0.0, ErrorKind::Configuration, "controller.slack_weight must be positive");
    require(ctrl.u_min.has_value() == ctrl.u_max.has_value(), ErrorKind::Configuration,
            "controller.u_min and u_max go together");
    require(!ctrl.u_min || *ctrl.u_min <= *ctrl.u_max, ErrorKind::Configuration, "u_min must be <= u_max");
    require(ctrl.sup_samples >= 1, ErrorKind::Configuration, "controller.sup_samples must be >= 1");
    require(threads >= 0, ErrorKind::Configuration, "threads must be >= 0");
}

inline ExperimentConfig parse_config(const toml::table& root) {
    ExperimentConfig c;
    {
        detail::TableReader top(root, "config");
        std::string name = "example1";
        Vec<2> sigma(0.2, 0.2);
        std::map<std::string, double> params;
        if (const auto* b = top.sub("benchmark")) {
            detail::TableReader r(*b, "benchmark");
            r.get("name", name);
            r.get("sigma", sigma);
            if (const auto* p = r.sub("params"))
                for (const auto& [k, v] : *p) {
                    auto x = v.value<double>();
                    require(x.has_value(), ErrorKind::Configuration, "benchmark.params values must be numbers");
                    params[std::string(k.str())] = *x;
                }
            r.done();
        }
        bscbf::detail::check_benchmark_name(name);
        c = default_config(name, sigma);
        if (!params.empty()) {
            const auto pb = benchmark_problem(name, sigma, params);
            c.id.probe_lo = pb.probe_lo;
            c.id.probe_hi = pb.probe_hi;
        }
        c.params = params;

        top.get("seed", c.seed);
        top.get("out", c.out);
        top.get("threads", c.threads);

        if (const auto* s = top.sub("simulation")) {
            detail::TableReader r(*s, "simulation");
            r.get("dt", c.dt);
            r.get("horizon", c.horizon);
            r.get("n_trials", c.n_trials);
            r.get("initial_states", c.initial_states);
            r.done();
        }
        if (const auto* s = top.sub("identification")) {
            detail::TableReader r(*s, "identification");
            std::string scheme = "paired";
            r.get("scheme", scheme);
            require(scheme == "paired" || scheme == "sequential", ErrorKind::Configuration,
                    "identification.scheme must be 'paired' or 'sequential'");
            c.id.scheme = scheme == "paired" ? sysid::DriftScheme::paired : sysid::DriftScheme::sequential;
            r.get("K", c.id.K);
            r.get("mse_K", c.id.mse_K);
            r.get("u1", c.id.u1);
            r.get("u2", c.id.u2);
            r.get("probe_rollouts", c.id.probe_rollouts);
            r.get("probe_steps", c.id.probe_steps);
            r.get("probe_lo", c.id.probe_lo);
            r.get("probe_hi", c.id.probe_hi);
            r.get("basis", c.id.basis);
            r.get("prior_variance", c.id.prior_variance);
            r.get("noise_var", c.id.noise_var);
            r.get("alpha", c.id.alpha);
            r.get("beta", c.id.beta);
            r.get("residual_rollouts", c.id.residual_rollouts);
            r.get("residual_steps", c.id.residual_steps);
            r.get("posterior_samples", c.id.posterior_samples);
            r.get("grid_cells", c.id.grid_cells);
            r.get("mse_probes", c.id.mse_probes);
            r.done();
        }
        if (const auto* s = top.sub("controller")) {
            detail::TableReader r(*s, "controller");
            r.get("kind", c.ctrl.kind);
            r.get("k", c.ctrl.k);
            r.get("clf", c.ctrl.clf);
            r.get("clf_gamma", c.ctrl.clf_gamma);
            r.get("slack_weight", c.ctrl.slack_weight);
            r.get("u_min", c.ctrl.u_min);
            r.get("u_max", c.ctrl.u_max);
            r.get("infeasible_fallback", c.ctrl.infeasible_fallback);
            r.get("sup_samples", c.ctrl.sup_samples);
            r.done();
        }
        if (const auto* refs = top.array("reference")) {
            for (const auto& node : *refs) {
                const auto* t = node.as_table();
                require(t != nullptr, ErrorKind::Configuration, "reference entries must be tables");
                ReferenceRow row;
                bool have_x0 = false;
                for (const auto& [k, v] : *t) {
                    const std::string key(k.str());
                    if (key == "x0") {
                        row.x0 = detail::TableReader::to_vec2(v, "reference.x0");
                        have_x0 = true;
                    } else {
                        auto x = v.value<double>();
                        require(x.has_value(), ErrorKind::Configuration, "reference." + key + " must be a number");
                        row.ratios[key] = *x;
                    }
                }
                require(have_x0, ErrorKind::Configuration, "reference entries need x0");
                c.references.push_back(row);
            }
        }
        top.done();
    }
    require(!c.ctrl.clf || benchmark_problem(c.benchmark, c.sigma, c.params).clf.has_value(),
            ErrorKind::Configuration, "benchmark '" + c.benchmark + "' has no CLF");
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_string(std::string_view text, const std::string& source = "<string>") {
    try {
        return parse_config(toml::parse(text, source));
    } catch (const toml::parse_error& e) {
        fail(ErrorKind::Configuration, std::string("TOML parse error in ") + source + ": " + std::string(e.description()));
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    try {
        return parse_config(toml::parse_file(path));
    } catch (const toml::parse_error& e) {
        fail(ErrorKind::Configuration, "cannot read config '" + path + "': " + std::string(e.description()));
    }
}

inline nlohmann::json ExperimentConfig::to_json() const {
    using nlohmann::json;
    json j;
    j["benchmark"] = {{"name", benchmark}, {"params", params}, {"sigma", detail::vec_of(sigma)}};
    json x0s = json::array();
    for (const auto& x : initial_states) x0s.push_back(detail::vec_of(x));
    j["simulation"] = {{"dt", dt}, {"horizon", horizon}, {"n_trials", n_trials}, {"initial_states", x0s}};
    j["identification"] = {{"scheme", sysid::to_string(id.scheme)},
                           {"K", id.K},
                           {"mse_K", id.mse_K},
                           {"u1", id.u1},
                           {"u2", id.u2},
                           {"probe_rollouts", id.probe_rollouts},
                           {"probe_steps", id.probe_steps},
                           {"probe_lo", detail::vec_of(id.probe_lo)},
                           {"probe_hi", detail::vec_of(id.probe_hi)},
                           {"basis", id.basis},
                           {"prior_variance", id.prior_variance},
                           {"noise_var", id.noise_var ? json(*id.noise_var) : json("pooled-replicate")},
                           {"alpha", id.alpha},
                           {"beta", id.beta},
                           {"residual_rollouts", id.residual_rollouts},
                           {"residual_steps", id.residual_steps},
                           {"posterior_samples", id.posterior_samples},
                           {"grid_cells", id.grid_cells},
                           {"mse_probes", id.mse_probes}};
    j["controller"] = {{"kind", ctrl.kind},
                       {"k", ctrl.k},
                       {"clf", ctrl.clf},
                       {"clf_gamma", ctrl.clf_gamma},
                       {"slack_weight", ctrl.slack_weight},
                       {"u_min", ctrl.u_min ? json(*ctrl.u_min) : json(nullptr)},
                       {"u_max", ctrl.u_max ? json(*ctrl.u_max) : json(nullptr)},
                       {"infeasible_fallback", ctrl.infeasible_fallback},
                       {"sup_samples", ctrl.sup_samples}};
    json refs = json::array();
    for (const auto& r : references) refs.push_back({{"x0", detail::vec_of(r.x0)}, {"ratios", r.ratios}});
    j["reference"] = refs;
    j["seed"] = seed;
    j["out"] = out;
    j["threads"] = threads;
    return j;
}

inline std::string ExperimentConfig::hash() const {
    auto j = to_json();
    j.erase("out");
    j.erase("threads");
    return Fnv1a().add(j.dump()).hex();
}

}  // namespace bscbf::harness
