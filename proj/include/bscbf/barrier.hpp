#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bscbf/error.hpp"
#include "bscbf/field.hpp"
#include "bscbf/rng.hpp"
#include "bscbf/sde.hpp"

namespace bscbf {

enum class Derivation { analytic, dual, finite_difference };

inline const char* to_string(Derivation d) {
    switch (d) {
        case Derivation::analytic: return "analytic";
        case Derivation::dual: return "dual-number-automatic";
        case Derivation::finite_difference: return "finite-difference";
    }
    return "unknown";
}

/// Twice-differentiable scalar function of the state with its derivatives.
template <int N>
class ScalarField {
public:
    using ValueFn = std::function<double(const Vec<N>&)>;
    using GradFn = std::function<Vec<N>(const Vec<N>&)>;
    using HessFn = std::function<Mat<N, N>(const Vec<N>&)>;

    ScalarField() = default;

    /// Derivatives by nested dual numbers; keeps the generic form so the field
    /// can be composed into higher chain levels.
    static ScalarField dual(ScalarFn<N> f) {
        ScalarField s;
        s.mode_ = Derivation::dual;
        s.generic_ = f;
        s.value_ = [f](const Vec<N>& x) { return f(x)[0]; };
        s.grad_ = [f](const Vec<N>& x) {
            const auto j = jet<N>(f, to_array<N>(x));
            return to_vec<N>(j.grad);
        };
        s.hess_ = [f](const Vec<N>& x) {
            const auto j = jet<N>(f, to_array<N>(x));
            Mat<N, N> h;
            for (int a = 0; a < N; ++a)
                for (int b = 0; b < N; ++b) h(a, b) = j.hess[a * N + b];
            return h;
        };
        return s;
    }

    template <class F>
    static ScalarField dual(F f) {
        return dual(ScalarFn<N>(std::move(f)));
    }

    /// Hand-supplied derivatives. `generic`, when given, lets the field seed a
    /// chain of relative degree > 1.
    static ScalarField analytic(ValueFn value, GradFn grad, HessFn hess, ScalarFn<N> generic = {}) {
        ScalarField s;
        s.mode_ = Derivation::analytic;
        s.value_ = std::move(value);
        s.grad_ = std::move(grad);
        s.hess_ = std::move(hess);
        s.generic_ = std::move(generic);
        return s;
    }

    /// Central differences of the value.
    static ScalarField finite_difference(ValueFn value) {
        ScalarField s;
        s.mode_ = Derivation::finite_difference;
        s.value_ = value;
        s.grad_ = [value](const Vec<N>& x) {
            Vec<N> g;
            for (int i = 0; i < N; ++i) {
                const double h = 6e-6 * std::max(1.0, std::abs(x[i]));
                Vec<N> xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                g[i] = (value(xp) - value(xm)) / (2.0 * h);
            }
            return g;
        };
        s.hess_ = [value](const Vec<N>& x) {
            Mat<N, N> H;
            const double f0 = value(x);
            for (int i = 0; i < N; ++i) {
                const double hi = 1e-4 * std::max(1.0, std::abs(x[i]));
                for (int j = i; j < N; ++j) {
                    const double hj = 1e-4 * std::max(1.0, std::abs(x[j]));
                    if (i == j) {
                        Vec<N> xp = x, xm = x;
                        xp[i] += hi;
                        xm[i] -= hi;
                        H(i, i) = (value(xp) - 2.0 * f0 + value(xm)) / (hi * hi);
                    } else {
                        Vec<N> pp = x, pm = x, mp = x, mm = x;
                        pp[i] += hi, pp[j] += hj;
                        pm[i] += hi, pm[j] -= hj;
                        mp[i] -= hi, mp[j] += hj;
                        mm[i] -= hi, mm[j] -= hj;
                        H(i, j) = (value(pp) - value(pm) - value(mp) + value(mm)) / (4.0 * hi * hj);
                        H(j, i) = H(i, j);
                    }
                }
            }
            return H;
        };
        return s;
    }

    static ScalarField finite_difference(const ScalarFn<N>& f) {
        ScalarField s = finite_difference(ValueFn([f](const Vec<N>& x) { return f(x)[0]; }));
        s.generic_ = f;
        return s;
    }

    Derivation derivation() const { return mode_; }
    bool has_generic() const { return generic_.valid(); }
    const ScalarFn<N>& generic() const {
        require(generic_.valid(), ErrorKind::Configuration,
                "scalar field has no generic (dual-evaluable) form");
        return generic_;
    }

    double value(const Vec<N>& x) const { return value_(x); }
    double operator()(const Vec<N>& x) const { return value_(x); }
    Vec<N> gradient(const Vec<N>& x) const { return grad_(x); }

    /// Symmetrized Hessian.
    Mat<N, N> hessian(const Vec<N>& x) const {
        const Mat<N, N> h = hess_(x);
        return 0.5 * (h + h.transpose());
    }

    /// Largest |H_ij - H_ji| before symmetrization.
    double hessian_asymmetry(const Vec<N>& x) const {
        const Mat<N, N> h = hess_(x);
        return (h - h.transpose()).cwiseAbs().maxCoeff();
    }

private:
    Derivation mode_ = Derivation::dual;
    ValueFn value_;
    GradFn grad_;
    HessFn hess_;
    ScalarFn<N> generic_;
};

/// Generator of a function along the model, split as c0 + c1 . u.
template <int P>
struct GeneratorAffine {
    double c0 = 0.0;
    Vec<P> c1 = Vec<P>::Zero();

    double operator()(const Vec<P>& u) const { return c0 + c1.dot(u); }
};

template <int N, int P, int D>
GeneratorAffine<P> generator(const SdeModel<N, P, D>& model, const ScalarField<N>& B, const Vec<N>& x) {
    const Vec<N> grad = B.gradient(x);
    const Mat<N, N> hess = B.hessian(x);
    if (!grad.allFinite() || !hess.allFinite()) {
        std::ostringstream os;
        os << "non-finite gradient/Hessian at x = [" << x.transpose() << "]";
        fail(ErrorKind::Evaluation, os.str());
    }
    const Mat<N, D> sigma = model.diffusion(x);
    const Mat<N, N> sst = sigma * sigma.transpose();
    GeneratorAffine<P> out;
    out.c0 = grad.dot(model.drift(x)) + 0.5 * sst.cwiseProduct(hess).sum();
    out.c1 = model.control_matrix(x).transpose() * grad;
    return out;
}

/// The u-independent part of the generator of b, as a new ladder field. Each
/// evaluation consumes two ladder levels.
template <int N, int P, int D>
ScalarFn<N> drift_generator_fn(const SdeModel<N, P, D>& model, const ScalarFn<N>& b) {
    return ScalarFn<N>([model, b](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        if constexpr (level_of_v<T> + 2 <= kMaxLevel) {
            const auto j = jet<N>(b, x);
            const auto f = model.drift_fn()(x);
            const auto s = model.diffusion_fn()(x);
            T acc(0.0);
            for (int i = 0; i < N; ++i) acc += j.grad[i] * f[i];
            for (int i = 0; i < N; ++i) {
                for (int k = 0; k < N; ++k) {
                    T sst(0.0);
                    for (int m = 0; m < D; ++m) sst += s[i * D + m] * s[k * D + m];
                    acc += 0.5 * sst * j.hess[i * N + k];
                }
            }
            return acc;
        } else {
            fail(ErrorKind::Evaluation, "chain is deeper than the dual-number ladder supports");
            return T(0.0);
        }
    });
}

// Level-set suprema -----------------------------------------------------------

/// Axis-aligned sampling box with an optional membership test; samples are
/// drawn uniformly from the box and rejected outside the set.
template <int N>
struct RegionSampler {
    Vec<N> lo;
    Vec<N> hi;
    std::function<bool(const Vec<N>&)> contains;

    Vec<N> draw(Rng& rng) const {
        Vec<N> x;
        for (int i = 0; i < N; ++i) x[i] = uniform(rng, lo[i], hi[i]);
        return x;
    }
    bool accepts(const Vec<N>& x) const { return !contains || contains(x); }
};

template <int N>
struct SupEstimate {
    double value = -std::numeric_limits<double>::infinity();
    Vec<N> argmax = Vec<N>::Zero();
    long n_samples = 0;
    long n_attempts = 0;
    bool unbounded_suspect = false;
};

template <int N>
SupEstimate<N> sup_over_set(const ScalarField<N>& b, const RegionSampler<N>& region, long n_samples,
                            std::uint64_t seed) {
    require(n_samples >= 1, ErrorKind::Configuration, "sup_over_set: n_samples must be >= 1");
    Rng rng(seed);
    SupEstimate<N> est;
    const long max_attempts = 1000 * n_samples;
    while (est.n_samples < n_samples && est.n_attempts < max_attempts) {
        const Vec<N> x = region.draw(rng);
        ++est.n_attempts;
        if (!region.accepts(x)) continue;
        ++est.n_samples;
        const double v = b.value(x);
        if (v > est.value) {
            est.value = v;
            est.argmax = x;
        }
    }
    require(est.n_samples > 0, ErrorKind::Estimation, "sup_over_set: no sample fell inside the set");

    // Maximum on a box face with the field still growing past it.
    for (int i = 0; i < N; ++i) {
        const double range = region.hi[i] - region.lo[i];
        for (int side : {-1, 1}) {
            const double face = side < 0 ? region.lo[i] : region.hi[i];
            if (std::abs(est.argmax[i] - face) > 0.01 * range) continue;
            Vec<N> out = est.argmax;
            out[i] = face + side * 0.05 * range;
            if (region.accepts(out) && b.value(out) > est.value + 1e-12 * std::max(1.0, std::abs(est.value)))
                est.unbounded_suspect = true;
        }
    }
    return est;
}

// Chains --------------------------------------------------------------------

template <int N>
struct ChainLevel {
    ScalarField<N> b;
    double c = std::numeric_limits<double>::quiet_NaN();
    std::optional<SupEstimate<N>> sup;
    long n_probes = 0;
    double probe_min = std::numeric_limits<double>::quiet_NaN();
    double probe_max = std::numeric_limits<double>::quiet_NaN();
    /// Largest |c1_k| / (|grad b| |g_k|) seen on probes; 0 for a clean
    /// relative-degree structure.
    double max_control_cosine = 0.0;
};

enum class RelativeDegreePolicy {
    strict,  // u-dependence below the top level is an error
    drop,    // ignore it and record the magnitude (learned models)
};

template <int N>
struct ChainOptions {
    std::vector<Vec<N>> probes;
    RelativeDegreePolicy policy = RelativeDegreePolicy::strict;
    double tolerance = 1e-8;
    std::function<SupEstimate<N>(const ScalarField<N>&, int level)> sup_estimator;
};

template <int N, int P, int D>
class BarrierChain {
public:
    BarrierChain(SdeModel<N, P, D> model, std::vector<ChainLevel<N>> levels)
        : model_(std::move(model)), levels_(std::move(levels)) {}

    int relative_degree() const { return static_cast<int>(levels_.size()); }
    const SdeModel<N, P, D>& model() const { return model_; }
    const ChainLevel<N>& level(int j) const { return levels_.at(j); }
    const std::vector<ChainLevel<N>>& levels() const { return levels_; }
    Derivation derivation() const { return levels_.front().b.derivation(); }

    const ScalarField<N>& top() const { return levels_.back().b; }

    /// Generator of b_{r-1}: the constraint the controller enforces.
    GeneratorAffine<P> top_generator(const Vec<N>& x) const { return generator(model_, top(), x); }

    std::vector<double> values(const Vec<N>& x) const {
        std::vector<double> v;
        v.reserve(levels_.size());
        for (const auto& l : levels_) v.push_back(l.b.value(x));
        return v;
    }

    /// Lowest level j >= 1 with b_j(x) < 0, or -1.
    int first_exited_level(const Vec<N>& x) const {
        for (int j = 1; j < relative_degree(); ++j)
            if (levels_[j].b.value(x) < 0.0) return j;
        return -1;
    }

    nlohmann::json report() const;

private:
    SdeModel<N, P, D> model_;
    std::vector<ChainLevel<N>> levels_;
};

template <int N, int P, int D>
BarrierChain<N, P, D> build_chain(const SdeModel<N, P, D>& model, const ScalarField<N>& h, int r,
                                  const ChainOptions<N>& opts = {}) {
    require(r >= 1, ErrorKind::Configuration, "build_chain: relative degree must be >= 1");
    std::vector<ChainLevel<N>> levels(r);
    levels[0].b = h;
    for (int j = 1; j < r; ++j) {
        levels[j].b = ScalarField<N>::dual(drift_generator_fn(model, levels[j - 1].b.generic()));
    }

    for (int j = 0; j < r; ++j) {
        auto& lvl = levels[j];
        for (const auto& x : opts.probes) {
            const double v = lvl.b.value(x);
            lvl.probe_min = lvl.n_probes == 0 ? v : std::min(lvl.probe_min, v);
            lvl.probe_max = lvl.n_probes == 0 ? v : std::max(lvl.probe_max, v);
            ++lvl.n_probes;
            if (j == r - 1) continue;
            const Vec<N> grad = lvl.b.gradient(x);
            const Mat<N, P> g = model.control_matrix(x);
            const Vec<P> c1 = g.transpose() * grad;
            for (int k = 0; k < P; ++k) {
                const double scale = grad.norm() * g.col(k).norm();
                const double cosine = scale > 0.0 ? std::abs(c1[k]) / scale : 0.0;
                lvl.max_control_cosine = std::max(lvl.max_control_cosine, cosine);
                if (opts.policy == RelativeDegreePolicy::strict && cosine > opts.tolerance) {
                    std::ostringstream os;
                    os << "control appears in the generator of b_" << j << " at probe x = [" << x.transpose()
                       << "] (c1[" << k << "] = " << c1[k] << "); relative degree is below " << r;
                    fail(ErrorKind::RelativeDegree, os.str());
                }
            }
        }
        if (opts.sup_estimator) {
            lvl.sup = opts.sup_estimator(lvl.b, j);
            lvl.c = lvl.sup->value;
        }
    }
    return BarrierChain<N, P, D>(model, std::move(levels));
}

template <int N, int P, int D>
nlohmann::json BarrierChain<N, P, D>::report() const {
    nlohmann::json j;
    j["r"] = relative_degree();
    j["derivation"] = to_string(derivation());
    j["levels"] = nlohmann::json::array();
    for (int k = 0; k < relative_degree(); ++k) {
        const auto& l = levels_[k];
        nlohmann::json e;
        e["j"] = k;
        e["c"] = std::isfinite(l.c) ? nlohmann::json(l.c) : nlohmann::json(nullptr);
        e["derivation"] = to_string(l.b.derivation());
        e["unbounded_suspect"] = l.sup ? l.sup->unbounded_suspect : false;
        if (l.sup) {
            e["sup"] = {{"value", l.sup->value},
                        {"n_samples", l.sup->n_samples},
                        {"n_attempts", l.sup->n_attempts},
                        {"argmax", std::vector<double>(l.sup->argmax.data(), l.sup->argmax.data() + N)}};
        }
        e["probe_stats"] = {{"n", l.n_probes},
                            {"min", l.n_probes ? nlohmann::json(l.probe_min) : nlohmann::json(nullptr)},
                            {"max", l.n_probes ? nlohmann::json(l.probe_max) : nlohmann::json(nullptr)},
                            {"max_control_cosine", l.max_control_cosine}};
        j["levels"].push_back(e);
    }
    return j;
}

// Worst-case bounds -----------------------------------------------------------

enum class BoundKind { SCBF, SZCBF, HighOrder };

inline const char* to_string(BoundKind k) {
    switch (k) {
        case BoundKind::SCBF: return "SCBF";
        case BoundKind::SZCBF: return "SZCBF";
        case BoundKind::HighOrder: return "high-order";
    }
    return "unknown";
}

struct SafetyBound {
    BoundKind kind = BoundKind::SCBF;
    double value = 0.0;
    std::vector<double> b_xi;  // h(xi) for SCBF/SZCBF, b_j(xi) for high-order
    std::vector<double> c;
    double horizon = std::numeric_limits<double>::quiet_NaN();  // SZCBF only
};

struct BoundArgs {
    std::vector<double> b_xi;
    std::vector<double> c;
    double horizon = 0.0;
};

/// SCBF: h/c.  SZCBF: (h/c) e^{-cT}.  High-order: prod_j b_j/c_j.
inline SafetyBound worst_case_bound(BoundKind kind, const BoundArgs& args) {
    require(!args.b_xi.empty() && args.b_xi.size() == args.c.size(), ErrorKind::Configuration,
            "worst_case_bound: need one level-set supremum per level value");
    if (kind != BoundKind::HighOrder)
        require(args.b_xi.size() == 1, ErrorKind::Configuration,
                std::string(to_string(kind)) + " bound takes a single level");
    for (std::size_t j = 0; j < args.b_xi.size(); ++j) {
        require(std::isfinite(args.c[j]) && args.c[j] > 0.0, ErrorKind::Configuration,
                "worst_case_bound: c_" + std::to_string(j) + " must be finite and positive");
        require(std::isfinite(args.b_xi[j]), ErrorKind::Configuration,
                "worst_case_bound: b_" + std::to_string(j) + "(xi) is not finite");
        if (args.b_xi[j] < 0.0)
            fail(ErrorKind::InvalidInitialState,
                 "initial state lies outside level set C_" + std::to_string(j));
    }
    SafetyBound out;
    out.kind = kind;
    out.b_xi = args.b_xi;
    out.c = args.c;
    double v = 1.0;
    for (std::size_t j = 0; j < args.b_xi.size(); ++j) v *= std::min(1.0, args.b_xi[j] / args.c[j]);
    if (kind == BoundKind::SZCBF) {
        require(args.horizon >= 0.0, ErrorKind::Configuration, "SZCBF bound needs T >= 0");
        out.horizon = args.horizon;
        v *= std::exp(-args.c[0] * args.horizon);
    }
    out.value = std::clamp(v, 0.0, 1.0);
    return out;
}

inline nlohmann::json to_json(const SafetyBound& b) {
    nlohmann::json j{{"kind", to_string(b.kind)}, {"value", b.value}, {"b_xi", b.b_xi}, {"c", b.c}};
    if (b.kind == BoundKind::SZCBF) j["horizon"] = b.horizon;
    return j;
}

}  // namespace bscbf
