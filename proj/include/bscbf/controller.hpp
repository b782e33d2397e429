#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "bscbf/barrier.hpp"
#include "bscbf/qp.hpp"
#include "bscbf/sde.hpp"

namespace bscbf {

enum class ConstraintKind { SCBF, SZCBF };

template <int P>
struct ConstraintRow {
    Vec<P> a = Vec<P>::Zero();
    double b = 0.0;
    bool slack = false;
    RowTag tag = RowTag::SCBF;
    bool uncontrollable = false;  // a ~ 0 while b < 0: no input satisfies the row

    double eval(const Vec<P>& u, double delta = 0.0) const { return a.dot(u) + (slack ? delta : 0.0) + b; }

    QpRow to_qp() const {
        return QpRow{Eigen::VectorXd(a), b, slack, tag};
    }
};

/// Row from the generator of the chain's top level:  A b_{r-1}(x, u) >= 0,
/// or  A b_{r-1} + k b_{r-1} >= 0  for the zeroing variant.
template <int N, int P, int D>
ConstraintRow<P> scbf_constraint(const BarrierChain<N, P, D>& chain, const Vec<N>& x,
                                 ConstraintKind kind = ConstraintKind::SCBF, double k = 1.0,
                                 double uncontrollable_tol = 1e-12) {
    const auto gen = chain.top_generator(x);
    ConstraintRow<P> row;
    row.a = gen.c1;
    row.b = gen.c0;
    row.tag = RowTag::SCBF;
    if (kind == ConstraintKind::SZCBF) {
        row.b += k * chain.top().value(x);
        row.tag = RowTag::SZCBF;
    }
    row.uncontrollable = row.a.template lpNorm<Eigen::Infinity>() <= uncontrollable_tol && row.b < 0.0;
    return row;
}

/// Soft CLF row  A V(x, u) <= -gamma V(x) + delta, stored as
///   -c1 . u + delta - c0 - gamma V >= 0.
template <int N, int P, int D>
ConstraintRow<P> clf_constraint(const ScalarField<N>& V, const SdeModel<N, P, D>& model, const Vec<N>& x,
                                double gamma) {
    const auto gen = generator(model, V, x);
    ConstraintRow<P> row;
    row.a = -gen.c1;
    row.b = -gen.c0 - gamma * V.value(x);
    row.slack = true;
    row.tag = RowTag::CLF;
    return row;
}

template <int N, int P, int D>
struct ClfConfig {
    ScalarField<N> V;
    SdeModel<N, P, D> model;  // dynamics the CLF generator is taken along
    double gamma = 1.0;
    double slack_weight = 1e3;
};

template <int P>
struct PolicyStep {
    Vec<P> u = Vec<P>::Zero();
    double delta = 0.0;
    bool feasible = true;
    bool uncontrollable = false;  // fallback u = 0 was used
    int exited_level = -1;        // lowest intermediate chain level with b_j < 0
    double c0 = 0.0;
    Vec<P> c1 = Vec<P>::Zero();
    std::vector<int> active;
};

/// Min-norm QP safety filter around a barrier chain.
template <int N, int P, int D>
class SafePolicy {
public:
    explicit SafePolicy(std::shared_ptr<const BarrierChain<N, P, D>> chain) : chain_(std::move(chain)) {
        require(static_cast<bool>(chain_), ErrorKind::Configuration, "SafePolicy needs a chain");
    }

    SafePolicy& with_kind(ConstraintKind kind, double k = 1.0) {
        kind_ = kind;
        k_ = k;
        return *this;
    }
    SafePolicy& with_clf(ClfConfig<N, P, D> clf) {
        clf_ = std::move(clf);
        return *this;
    }
    SafePolicy& with_bounds(const Vec<P>& lo, const Vec<P>& hi) {
        require((lo.array() <= hi.array()).all(), ErrorKind::Configuration, "control bounds need lo <= hi");
        lo_ = lo;
        hi_ = hi;
        return *this;
    }
    /// Return a flagged clamped-zero control instead of throwing InfeasibleQp.
    SafePolicy& with_infeasible_fallback(bool on = true) {
        fallback_on_infeasible_ = on;
        return *this;
    }
    SafePolicy& with_uncontrollable_tol(double tol) {
        uncontrollable_tol_ = tol;
        return *this;
    }

    const BarrierChain<N, P, D>& chain() const { return *chain_; }
    bool has_clf() const { return clf_.has_value(); }
    bool bounded() const { return lo_.has_value(); }
    ConstraintKind kind() const { return kind_; }

    PolicyStep<P> step(const Vec<N>& x) const {
        PolicyStep<P> out;
        out.exited_level = chain_->first_exited_level(x);
        const auto barrier_row = scbf_constraint(*chain_, x, kind_, k_, uncontrollable_tol_);
        out.c0 = barrier_row.b;
        out.c1 = barrier_row.a;

        QpSpec spec;
        spec.p = P;
        if (barrier_row.uncontrollable) {
            out.uncontrollable = true;
        } else {
            spec.rows.push_back(barrier_row.to_qp());
        }
        if (clf_) {
            spec.rows.push_back(clf_constraint(clf_->V, clf_->model, x, clf_->gamma).to_qp());
            spec.slack_weight = clf_->slack_weight;
        }
        if (lo_) {
            spec.lo = Eigen::VectorXd(*lo_);
            spec.hi = Eigen::VectorXd(*hi_);
        }
        if (spec.rows.empty() && !spec.lo) return out;  // uncontrollable, nothing else to satisfy

        try {
            const auto sol = solve_qp(spec);
            out.u = sol.u;
            out.delta = sol.delta;
            out.active = sol.active;
        } catch (const InfeasibleQp&) {
            if (!fallback_on_infeasible_) throw;
            // Bounds make the barrier row unreachable: fall back like the
            // uncontrollable case, with u clamped into the box.
            out.feasible = false;
            out.u = Vec<P>::Zero();
            if (lo_) out.u = out.u.cwiseMax(*lo_).cwiseMin(*hi_);
        }
        return out;
    }

    Vec<P> operator()(const Vec<N>& x) const { return step(x).u; }

    Policy<N, P> as_function() const {
        return [self = *this](const Vec<N>& x) { return self(x); };
    }

private:
    std::shared_ptr<const BarrierChain<N, P, D>> chain_;
    ConstraintKind kind_ = ConstraintKind::SCBF;
    double k_ = 1.0;
    std::optional<ClfConfig<N, P, D>> clf_;
    std::optional<Vec<P>> lo_, hi_;
    double uncontrollable_tol_ = 1e-12;
    bool fallback_on_infeasible_ = false;
};

/// Evaluate the policy at x.
template <int N, int P, int D>
PolicyStep<P> safe_policy_eval(const SafePolicy<N, P, D>& policy, const Vec<N>& x) {
    return policy.step(x);
}

template <int P>
void write_qp_trace_header(std::ostream& os) {
    os << "t,c0";
    for (int j = 1; j <= P; ++j) os << ",c1_" << j;
    for (int j = 1; j <= P; ++j) os << ",u" << j;
    os << ",delta,active_set,feasible\n";
}

template <int P>
void write_qp_trace_row(std::ostream& os, double t, const PolicyStep<P>& s) {
    os << t << ',' << s.c0;
    for (int j = 0; j < P; ++j) os << ',' << s.c1[j];
    for (int j = 0; j < P; ++j) os << ',' << s.u[j];
    os << ',' << s.delta << ',';
    for (std::size_t i = 0; i < s.active.size(); ++i) os << (i ? ";" : "") << s.active[i];
    os << ',' << (s.feasible && !s.uncontrollable ? 1 : 0) << '\n';
}

}  // namespace bscbf
