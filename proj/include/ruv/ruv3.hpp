#ifndef RUV_RUV3_HPP
#define RUV_RUV3_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "projections.hpp"

/**
 * @file ruv3.hpp
 *
 * @brief The RUV-III estimator.
 *
 * Three steps: eigendecompose the replicate-residual Gram matrix, regress
 * the centered negative controls on the leading eigendirections to estimate
 * the sample-level unwanted factors, and subtract the estimated unwanted
 * component from the data.
 */

namespace ruv {

struct FitOptions {
    /// Reciprocal-condition floor for the k-by-k control system.
    double rcond_min = 1e-12;
};

/**
 * @brief Fitted RUV-III objects for a chosen dimension k.
 *
 * The removed component is held in factor form (w_hat, alpha_hat); the m-by-n
 * matrices are materialized on demand.  adjusted() is defined as Y minus the
 * materialized removed component, so the decomposition is exact.
 */
struct Ruv3Fit {
    Index k = 0;
    Vector eigenvalues;   // top-k eigenvalues of the residual Gram
    Matrix basis;         // U_(k), m x k
    Matrix alpha_hat;     // k x n
    Matrix w_hat;         // m x k
    double rcond = 0.0;   // reciprocal condition of the control system

    Matrix removed() const { return w_hat * alpha_hat; }
    Matrix adjusted(const Matrix& Y) const { return Y - removed(); }
};

/// Largest admissible k: the rank bound m - s of the residual projection.
inline Index k_max(const MappingMatrix& M) {
    return M.num_assays() - M.num_samples();
}

namespace detail {

/// Control-based regression for w_hat given the eigenbasis.  Solves the
/// k-by-k system by symmetric (LDLT) factorization, never an explicit
/// inverse, with a reciprocal-condition guard.
inline void regress_controls(const Matrix& Yc, const Matrix& basis,
                             Matrix& w_hat, double& rcond, const FitOptions& opt) {
    const Index k = basis.cols();
    Matrix C = basis.transpose() * Yc;             // k x nc
    Matrix G = C * C.transpose();                  // k x k, PSD
    Eigen::SelfAdjointEigenSolver<Matrix> ge(G);
    if (ge.info() != Eigen::Success) {
        throw numerical_error("fit: eigen analysis of the control system failed");
    }
    const double gmax = ge.eigenvalues()[k - 1];
    const double gmin = ge.eigenvalues()[0];
    rcond = (gmax > 0.0) ? gmin / gmax : 0.0;
    if (!(rcond >= opt.rcond_min)) {
        throw numerical_error(
            "fit: control system U'YcYc'U is singular or ill-conditioned "
            "(smallest pivot " + std::to_string(gmin) + ", rcond " + std::to_string(rcond) +
            "); try a smaller k or more negative controls");
    }
    Matrix H = center_columns(Yc) * C.transpose(); // m x k
    w_hat = G.ldlt().solve(H.transpose()).transpose();
}

} // namespace detail

/// RUV-III fit on a precomputed eigenbasis (shared by the full and the PRPS
/// fast paths).
inline Ruv3Fit fit_with_basis(const Matrix& Y, const ControlMask& controls,
                              const SymmetricEigen& eigen, Index k,
                              const FitOptions& opt = {}) {
    Ruv3Fit fit;
    fit.k = k;
    fit.eigenvalues = eigen.values.head(k);
    fit.basis = eigen.vectors.leftCols(k);
    Matrix Yc = control_columns(Y, controls);
    detail::regress_controls(Yc, fit.basis, fit.w_hat, fit.rcond, opt);
    fit.alpha_hat = fit.basis.transpose() * Y;
    return fit;
}

/**
 * Fits RUV-III with dimension k.
 *
 * @throws validation_error if k is outside [1, m - s].
 * @throws numerical_error if the k-by-k control system is ill-conditioned.
 */
inline Ruv3Fit fit(const Dataset& d, Index k, const FitOptions& opt = {}) {
    const Index kmax = k_max(d.mapping);
    if (k < 1 || k > kmax) {
        throw validation_error("fit: k = " + std::to_string(k) + " out of range [1, m - s = " +
                               std::to_string(kmax) + "]");
    }
    Matrix S = residual_gram(d.matrix.values, d.mapping);
    SymmetricEigen eigen = sym_eigen_desc(S, k);
    return fit_with_basis(d.matrix.values, d.controls, eigen, k, opt);
}

/// Squared Euclidean norm of the removed component, via the k-by-k trace
/// identity tr[(W'W)(alpha alpha')]; never forms the m-by-n product.
inline double removed_norm_sq(const Ruv3Fit& f) {
    Matrix WtW = f.w_hat.transpose() * f.w_hat;        // k x k
    Matrix AAt = f.alpha_hat * f.alpha_hat.transpose(); // k x k
    return WtW.cwiseProduct(AAt).sum();
}

/// Scan of the removed-component norm over k = 1..K.
struct KScanResult {
    std::vector<double> norms_sq;      // index k-1; -inf where the fit was singular
    std::vector<bool> ok;              // per-k fit status
    std::vector<std::string> messages; // failure messages for skipped k
    Index k_hat = 0;                   // smallest argmax over the ok entries
    Index K = 0;
};

/**
 * Computes the norm curve with a single eigendecomposition reused across all
 * k (the bases are nested).  Singular k values are recorded with norm -inf
 * and excluded from the argmax.
 */
inline KScanResult k_scan(const Dataset& d, Index K, const FitOptions& opt = {}) {
    const Index kmax = k_max(d.mapping);
    if (K < 1 || K > kmax) {
        throw validation_error("k_scan: K = " + std::to_string(K) + " out of range [1, m - s = " +
                               std::to_string(kmax) + "]");
    }
    const Matrix& Y = d.matrix.values;
    Matrix S = residual_gram(Y, d.mapping);
    SymmetricEigen eigen = sym_eigen_desc(S, K);

    Matrix Yc = control_columns(Y, d.controls);
    Matrix Yc_centered = center_columns(Yc);
    Matrix C = eigen.vectors.transpose() * Yc;     // K x nc
    Matrix G = C * C.transpose();                  // K x K
    Matrix H = Yc_centered * C.transpose();        // m x K
    Matrix A = eigen.vectors.transpose() * Y;      // K x n
    Matrix P = A * A.transpose();                  // K x K, alpha alpha' blocks

    KScanResult out;
    out.K = K;
    out.norms_sq.assign(static_cast<std::size_t>(K), -std::numeric_limits<double>::infinity());
    out.ok.assign(static_cast<std::size_t>(K), false);
    out.messages.assign(static_cast<std::size_t>(K), "");

    for (Index k = 1; k <= K; ++k) {
        Matrix Gk = G.topLeftCorner(k, k);
        Eigen::SelfAdjointEigenSolver<Matrix> ge(Gk);
        double gmax = ge.eigenvalues()[k - 1];
        double gmin = ge.eigenvalues()[0];
        double rcond = (gmax > 0.0) ? gmin / gmax : 0.0;
        if (!(rcond >= opt.rcond_min)) {
            out.messages[static_cast<std::size_t>(k - 1)] =
                "singular control system at k=" + std::to_string(k) + " (rcond " + std::to_string(rcond) + ")";
            continue;
        }
        // X = G_k^{-1} H_k' is w_hat', k x m
        Matrix X = Gk.ldlt().solve(H.leftCols(k).transpose());
        Matrix WtW = X * X.transpose(); // k x k
        out.norms_sq[static_cast<std::size_t>(k - 1)] = WtW.cwiseProduct(P.topLeftCorner(k, k)).sum();
        out.ok[static_cast<std::size_t>(k - 1)] = true;
    }

    double best = -std::numeric_limits<double>::infinity();
    Index best_k = 0;
    for (Index k = 1; k <= K; ++k) {
        if (!out.ok[static_cast<std::size_t>(k - 1)]) continue;
        double v = out.norms_sq[static_cast<std::size_t>(k - 1)];
        if (v > best) { // ties keep the smallest k
            best = v;
            best_k = k;
        }
    }
    if (best_k == 0) {
        throw numerical_error("k_scan: every k in 1.." + std::to_string(K) + " was singular");
    }
    out.k_hat = best_k;
    return out;
}

} // namespace ruv

#endif
