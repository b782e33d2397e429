#pragma once

// Small dense strictly convex QP:
//   min  1/2 |u|^2 + 1/2 q delta^2
//   s.t. a_i^T u (+ delta for soft rows) + b_i >= 0,   lo <= u <= hi
// solved exactly by enumerating active sets in order of size. The benchmarks
// never have more than a handful of rows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bscbf/error.hpp"

namespace bscbf {

enum class RowTag { SCBF, SZCBF, CLF, Bound };

inline const char* to_string(RowTag t) {
    switch (t) {
        case RowTag::SCBF: return "SCBF";
        case RowTag::SZCBF: return "SZCBF";
        case RowTag::CLF: return "CLF";
        case RowTag::Bound: return "bound";
    }
    return "unknown";
}

struct QpRow {
    Eigen::VectorXd a;
    double b = 0.0;
    bool slack = false;  // row reads a^T u + delta + b >= 0
    RowTag tag = RowTag::SCBF;
};

struct QpSpec {
    int p = 1;
    std::vector<QpRow> rows;
    std::optional<Eigen::VectorXd> lo;
    std::optional<Eigen::VectorXd> hi;
    double slack_weight = 1e3;
};

struct QpSolution {
    Eigen::VectorXd u;
    double delta = 0.0;
    std::vector<int> active;      // indices into the expanded row list (spec rows, then bounds)
    Eigen::VectorXd multipliers;  // one per expanded row
    double stationarity = 0.0;    // |H z - A^T lambda|_inf
    double complementarity = 0.0; // max |lambda_i r_i(z)|
    double min_row = 0.0;         // smallest row value r_i(z)
};

class InfeasibleQp : public Error {
public:
    InfeasibleQp(const std::string& what, int row, double violation)
        : Error(ErrorKind::Infeasible, what), row_(row), violation_(violation) {}
    int row() const noexcept { return row_; }
    double violation() const noexcept { return violation_; }

private:
    int row_;
    double violation_;
};

namespace detail {

struct ExpandedQp {
    Eigen::MatrixXd A;  // rows over z = [u; delta?]
    Eigen::VectorXd b;
    Eigen::VectorXd hinv;  // diagonal of H^{-1}
    Eigen::VectorXd h;
    bool has_slack = false;
};

inline ExpandedQp expand(const QpSpec& spec) {
    const int p = spec.p;
    ExpandedQp e;
    e.has_slack = std::any_of(spec.rows.begin(), spec.rows.end(), [](const QpRow& r) { return r.slack; });
    const int nz = p + (e.has_slack ? 1 : 0);
    int nb = 0;
    if (spec.lo) nb += p;
    if (spec.hi) nb += p;
    const int m = static_cast<int>(spec.rows.size()) + nb;
    e.A = Eigen::MatrixXd::Zero(m, nz);
    e.b = Eigen::VectorXd::Zero(m);
    int k = 0;
    for (const auto& r : spec.rows) {
        e.A.row(k).head(p) = r.a.transpose();
        if (r.slack) e.A(k, p) = 1.0;
        e.b[k] = r.b;
        ++k;
    }
    if (spec.lo)
        for (int i = 0; i < p; ++i, ++k) {
            e.A(k, i) = 1.0;
            e.b[k] = -(*spec.lo)[i];
        }
    if (spec.hi)
        for (int i = 0; i < p; ++i, ++k) {
            e.A(k, i) = -1.0;
            e.b[k] = (*spec.hi)[i];
        }
    e.h = Eigen::VectorXd::Ones(nz);
    if (e.has_slack) e.h[p] = spec.slack_weight;
    e.hinv = e.h.cwiseInverse();
    return e;
}

inline void validate(const QpSpec& spec) {
    require(spec.p >= 1, ErrorKind::Configuration, "solve_qp: p must be >= 1");
    require(!spec.rows.empty() || spec.lo || spec.hi, ErrorKind::Configuration,
            "solve_qp: need at least one constraint or bound");
    require(spec.slack_weight > 0.0 && std::isfinite(spec.slack_weight), ErrorKind::Configuration,
            "solve_qp: slack weight must be positive");
    for (const auto& r : spec.rows) {
        require(r.a.size() == spec.p, ErrorKind::Configuration, "solve_qp: row width does not match p");
        require(r.a.allFinite() && std::isfinite(r.b), ErrorKind::Configuration, "solve_qp: non-finite row");
    }
    if (spec.lo) require(spec.lo->size() == spec.p, ErrorKind::Configuration, "solve_qp: bad lower bound size");
    if (spec.hi) require(spec.hi->size() == spec.p, ErrorKind::Configuration, "solve_qp: bad upper bound size");
}

}  // namespace detail

inline QpSolution solve_qp(const QpSpec& spec) {
    detail::validate(spec);
    const auto e = detail::expand(spec);
    const int m = static_cast<int>(e.A.rows());
    const int nz = static_cast<int>(e.A.cols());

    const double scale = std::max(1.0, e.b.cwiseAbs().maxCoeff());
    const double feas_tol = 1e-10 * scale;

    auto finish = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& lambda, std::vector<int> active) {
        QpSolution s;
        s.u = z.head(spec.p);
        s.delta = e.has_slack ? z[spec.p] : 0.0;
        s.active = std::move(active);
        s.multipliers = lambda;
        const Eigen::VectorXd r = e.A * z + e.b;
        s.stationarity = (e.h.cwiseProduct(z) - e.A.transpose() * lambda).cwiseAbs().maxCoeff();
        s.complementarity = m ? lambda.cwiseProduct(r).cwiseAbs().maxCoeff() : 0.0;
        s.min_row = m ? r.minCoeff() : 0.0;
        return s;
    };

    // Single hard row, no bounds: u = max(0, -b / |a|^2) a.
    if (m == 1 && !e.has_slack) {
        const Eigen::VectorXd a = e.A.row(0).transpose();
        const double an = a.squaredNorm();
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(1);
        if (e.b[0] >= 0.0) return finish(Eigen::VectorXd::Zero(nz), lambda, {});
        if (an == 0.0) throw InfeasibleQp("solve_qp: row 0 has a = 0 and b < 0", 0, e.b[0]);
        lambda[0] = -e.b[0] / an;
        return finish(lambda[0] * a, lambda, {0});
    }

    std::vector<int> subset;
    const int max_active = std::min(m, nz);
    for (int size = 0; size <= max_active; ++size) {
        // Enumerate combinations of `size` rows in lexicographic order.
        subset.resize(size);
        for (int i = 0; i < size; ++i) subset[i] = i;
        while (true) {
            Eigen::VectorXd z = Eigen::VectorXd::Zero(nz);
            Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
            bool ok = true;
            if (size > 0) {
                Eigen::MatrixXd As(size, nz);
                Eigen::VectorXd bs(size);
                for (int i = 0; i < size; ++i) {
                    As.row(i) = e.A.row(subset[i]);
                    bs[i] = e.b[subset[i]];
                }
                // Min-norm solve of (A_s H^{-1/2}) w = -b_s by QR of the scaled
                // rows, so the Gram matrix is never formed.
                const Eigen::VectorXd hs = e.hinv.cwiseSqrt();
                const Eigen::MatrixXd At = (As * hs.asDiagonal()).transpose();
                Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(At);
                qr.setThreshold(1e-13);
                if (qr.rank() < size) {
                    ok = false;
                } else {
                    const auto R = qr.matrixR().topLeftCorner(size, size).template triangularView<Eigen::Upper>();
                    // At P = Q R:  w = Q_1 R^{-T} P^T (-b_s),  lambda = P R^{-1} R^{-T} P^T (-b_s).
                    // z comes from Q, not from A^T lambda, which cancels badly
                    // when a stiff slack weight makes lambda huge.
                    const Eigen::VectorXd y = qr.colsPermutation().transpose() * (-bs);
                    const Eigen::VectorXd t = R.transpose().solve(y);
                    Eigen::VectorXd tz = Eigen::VectorXd::Zero(nz);
                    tz.head(size) = t;
                    const Eigen::VectorXd w = qr.householderQ() * tz;
                    const Eigen::VectorXd ls = qr.colsPermutation() * Eigen::VectorXd(R.solve(t));
                    z = hs.asDiagonal() * w;
                    for (int i = 0; i < size; ++i) {
                        if (ls[i] < -1e-12 * std::max(1.0, ls.cwiseAbs().maxCoeff())) ok = false;
                        lambda[subset[i]] = std::max(0.0, ls[i]);
                    }
                }
            }
            if (ok) {
                const Eigen::VectorXd r = e.A * z + e.b;
                if (m == 0 || r.minCoeff() >= -feas_tol) return finish(z, lambda, subset);
            }
            // next combination
            int i = size - 1;
            while (i >= 0 && subset[i] == m - size + i) --i;
            if (i < 0) break;
            ++subset[i];
            for (int j = i + 1; j < size; ++j) subset[j] = subset[j - 1] + 1;
        }
    }

    // No KKT point: report the row most violated at u = 0.
    int worst = 0;
    for (int i = 1; i < m; ++i)
        if (e.b[i] < e.b[worst]) worst = i;
    std::ostringstream os;
    os << "solve_qp: constraints are infeasible; most violated row " << worst << " (value " << e.b[worst]
       << " at u = 0)";
    throw InfeasibleQp(os.str(), worst, e.b[worst]);
}

}  // namespace bscbf
