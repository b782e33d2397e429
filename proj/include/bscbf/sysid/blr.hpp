#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "bscbf/error.hpp"
#include "bscbf/sysid/basis.hpp"

namespace bscbf::sysid {

/// Gaussian posterior over basis weights for one scalar output.
struct BlrFit {
    Eigen::VectorXd mean;       // posterior mean (MAP) weights
    Eigen::MatrixXd cov;        // posterior covariance
    Eigen::MatrixXd prior_cov;  // Sigma_0
    double noise_var = 0.0;     // observation noise variance of a target
};

/// Conjugate update for Y = Phi theta + eps, eps ~ N(0, noise_var I),
/// theta ~ N(0, Sigma0):
///   mean = (Phi^T Phi + noise_var Sigma0^{-1})^{-1} Phi^T Y
///   cov  = noise_var (Phi^T Phi + noise_var Sigma0^{-1})^{-1}
/// Solved as a stacked least-squares problem by Householder QR so the normal
/// matrix is never formed.
inline BlrFit fit_blr(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& Y, const Eigen::MatrixXd& Sigma0,
                      double noise_var) {
    const Eigen::Index n = Phi.rows(), m = Phi.cols();
    require(n >= 1 && m >= 1, ErrorKind::Configuration, "fit_blr: empty design matrix");
    require(Y.size() == n, ErrorKind::Configuration, "fit_blr: Y length does not match design rows");
    require(Sigma0.rows() == m && Sigma0.cols() == m, ErrorKind::Configuration, "fit_blr: Sigma0 must be M x M");
    require(std::isfinite(noise_var) && noise_var >= 0.0, ErrorKind::Configuration,
            "fit_blr: noise_var must be finite and >= 0");
    require(Phi.allFinite() && Y.allFinite(), ErrorKind::Configuration, "fit_blr: non-finite data");

    Eigen::LLT<Eigen::MatrixXd> prior(Sigma0);
    require(prior.info() == Eigen::Success && Sigma0.isApprox(Sigma0.transpose()), ErrorKind::Configuration,
            "fit_blr: Sigma0 must be symmetric positive definite");

    BlrFit fit;
    fit.prior_cov = Sigma0;
    fit.noise_var = noise_var;

    if (noise_var == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi);
        qr.setThreshold(1e-12);
        if (qr.rank() < m)
            fail(ErrorKind::IllPosed, "fit_blr: design is rank deficient (rank " + std::to_string(qr.rank()) +
                                          " < " + std::to_string(m) + ") with zero noise; use noise_var > 0 so the prior regularizes");
        fit.mean = qr.solve(Y);
        fit.cov = Eigen::MatrixXd::Zero(m, m);
        return fit;
    }

    // Penalty rows sqrt(noise_var) L^{-1} with Sigma0 = L L^T.
    const Eigen::MatrixXd Linv =
        prior.matrixL().solve(Eigen::MatrixXd::Identity(m, m));
    Eigen::MatrixXd stacked(n + m, m);
    stacked << Phi, std::sqrt(noise_var) * Linv;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs.head(n) = Y;

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    const Eigen::VectorXd qtb = (qr.householderQ().transpose() * rhs).head(m);
    fit.mean = R.triangularView<Eigen::Upper>().solve(qtb);
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));
    fit.cov = noise_var * Rinv * Rinv.transpose();
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
    require(fit.mean.allFinite(), ErrorKind::IllPosed, "fit_blr: non-finite posterior mean");
    return fit;
}

template <int N>
struct BlrPosterior {
    Basis<N> basis;
    BlrFit fit;
    std::string provenance;  // hash of the dataset it was fit on

    double mean(const Vec<N>& x) const { return basis.row(x).dot(fit.mean); }

    double variance(const Vec<N>& x) const {
        const Eigen::VectorXd phi = basis.row(x);
        return phi.dot(fit.cov * phi);
    }

    template <class T>
    T mean_generic(const State<T, N>& x) const {
        return basis.combine(x, fit.mean);
    }
};

}  // namespace bscbf::sysid
