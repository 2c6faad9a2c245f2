#ifndef RUV_PROJECTIONS_HPP
#define RUV_PROJECTIONS_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "core.hpp"
#include "errors.hpp"

/**
 * @file projections.hpp
 *
 * @brief Implicit projection operators and spectral utilities.
 *
 * The replicate projections are applied as group-mean arithmetic over the
 * replicate sets, at O(mn) cost; no m-by-m projection matrix is ever formed.
 * The Gram accumulation uses compensated block summation so that eigenvalue
 * gaps remain trustworthy at the largest grid sizes.
 */

namespace ruv {

/// Subtracts each column's mean over the rows (centering by the ones vector).
inline Matrix center_columns(const Matrix& Y) {
    Eigen::RowVectorXd mean = Y.colwise().mean();
    return Y.rowwise() - mean;
}

/// Replaces each row by the mean of its replicate set.
inline Matrix replicate_means(const Matrix& Y, const MappingMatrix& M) {
    if (Y.rows() != M.num_assays()) {
        throw validation_error("replicate_means: matrix has " + std::to_string(Y.rows()) +
                               " rows but mapping covers " + std::to_string(M.num_assays()) + " assays");
    }
    Matrix out(Y.rows(), Y.cols());
    for (const auto& set : M.replicate_sets) {
        if (set.size() == 1) {
            out.row(set[0]) = Y.row(set[0]);
            continue;
        }
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(Y.cols());
        for (Index i : set) mean += Y.row(i);
        mean /= static_cast<double>(set.size());
        for (Index i : set) out.row(i) = mean;
    }
    return out;
}

/// Within-replicate-set residuals; computed as Y minus replicate_means so the
/// two outputs sum back to Y bit-for-bit.
inline Matrix replicate_residuals(const Matrix& Y, const MappingMatrix& M) {
    return Y - replicate_means(Y, M);
}

/**
 * Gram matrix of the replicate residuals, R*R' with R the residual matrix.
 * Accumulated over column blocks with Kahan compensation in a fixed order.
 */
inline Matrix residual_gram(const Matrix& Y, const MappingMatrix& M) {
    Matrix R = replicate_residuals(Y, M);
    const Index m = R.rows();
    const Index n = R.cols();
    const Index block = 4096;

    Matrix sum = Matrix::Zero(m, m);
    Matrix comp = Matrix::Zero(m, m);
    for (Index j0 = 0; j0 < n; j0 += block) {
        Index w = std::min(block, n - j0);
        Matrix part = R.middleCols(j0, w) * R.middleCols(j0, w).transpose();
        // Kahan step, elementwise over the m x m accumulator.
        Matrix y = part - comp;
        Matrix t = sum + y;
        comp = (t - sum) - y;
        sum.swap(t);
    }
    // enforce exact symmetry
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < i; ++j) {
            double v = 0.5 * (sum(i, j) + sum(j, i));
            sum(i, j) = v;
            sum(j, i) = v;
        }
    }
    return sum;
}

/// Top-r eigenpairs of a symmetric matrix, eigenvalues descending.
struct SymmetricEigen {
    Matrix vectors;        // m x r, orthonormal columns
    Vector values;         // r, non-increasing
    double zero_threshold; // eigenvalues below this are structurally zero

    Index num_nonzero() const {
        Index c = 0;
        for (Index i = 0; i < values.size(); ++i) {
            if (values[i] > zero_threshold) ++c;
        }
        return c;
    }
};

namespace detail {

/// Deterministic sign convention: the lowest-index entry whose magnitude is
/// within a small relative tolerance of the largest is made positive.  The
/// tolerance matters: replicate pairs produce entries with exactly tied
/// magnitudes and opposite signs, where a strict argmax would flip with
/// rounding noise.
inline void canonicalize_sign(Matrix& U) {
    for (Index j = 0; j < U.cols(); ++j) {
        double mag = U.col(j).cwiseAbs().maxCoeff();
        if (mag == 0.0) continue;
        for (Index i = 0; i < U.rows(); ++i) {
            if (std::abs(U(i, j)) >= mag * (1.0 - 1e-9)) {
                if (U(i, j) < 0.0) U.col(j) = -U.col(j);
                break;
            }
        }
    }
}

} // namespace detail

/**
 * Symmetric eigendecomposition, eigenvalues sorted non-increasing, with a
 * deterministic eigenvector sign convention.
 *
 * @throws numerical_error if S is not symmetric to 1e-8 (relative) or the
 * solver fails to converge.
 */
inline SymmetricEigen sym_eigen_desc(const Matrix& S, Index r) {
    const Index m = S.rows();
    if (S.cols() != m) {
        throw numerical_error("sym_eigen_desc: matrix is not square");
    }
    if (r < 1 || r > m) {
        throw validation_error("sym_eigen_desc: r = " + std::to_string(r) + " out of range [1," + std::to_string(m) + "]");
    }
    const double scale = S.cwiseAbs().maxCoeff();
    const double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * (1.0 + scale)) {
        throw numerical_error("sym_eigen_desc: input not symmetric (max asymmetry " + std::to_string(asym) + ")");
    }

    Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
    if (solver.info() != Eigen::Success) {
        throw numerical_error("sym_eigen_desc: eigen iteration failed to converge");
    }

    SymmetricEigen out;
    out.values = Vector(r);
    out.vectors = Matrix(m, r);
    // Eigen returns ascending order; take from the top.
    for (Index i = 0; i < r; ++i) {
        out.values[i] = solver.eigenvalues()[m - 1 - i];
        out.vectors.col(i) = solver.eigenvectors().col(m - 1 - i);
    }
    detail::canonicalize_sign(out.vectors);
    const double lmax = std::max(0.0, solver.eigenvalues()[m - 1]);
    out.zero_threshold = static_cast<double>(m) * std::numeric_limits<double>::epsilon() * lmax;
    return out;
}

/// Largest-singular-value estimate from power iteration.
struct SpectralNormEstimate {
    double value = 0.0;
    bool converged = true;
    int iterations = 0;
};

namespace detail {

/// Deterministic pseudo-random unit start vector (splitmix64 stream).
inline Vector power_start(Index n) {
    Vector v(n);
    std::uint64_t x = 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(n);
    for (Index i = 0; i < n; ++i) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z = z ^ (z >> 31);
        v[i] = static_cast<double>(z >> 11) / 9007199254740992.0 - 0.5;
    }
    double norm = v.norm();
    if (norm == 0.0) v.setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    else v /= norm;
    return v;
}

} // namespace detail

/**
 * Power iteration on the smaller of A'A / AA'.  Stops when the eigen residual
 * of the Gram iterate is below tol relative to the eigenvalue estimate; if
 * the iteration cap is exceeded, returns the best estimate with
 * converged=false.
 */
inline SpectralNormEstimate spectral_norm_detail(const Matrix& A, double tol = 1e-10, int max_iter = 100000) {
    SpectralNormEstimate out;
    if (A.size() == 0) return out;

    Matrix G = (A.rows() <= A.cols()) ? Matrix(A * A.transpose()) : Matrix(A.transpose() * A);
    const Index p = G.rows();
    if (G.cwiseAbs().maxCoeff() == 0.0) return out;

    Vector v = detail::power_start(p);
    double lambda = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector w = G * v;
        lambda = v.dot(w);
        double wn = w.norm();
        out.iterations = it;
        if (wn == 0.0) {
            // v fell in the null space; restart from a shifted deterministic vector
            v = detail::power_start(p + 1).head(p).normalized();
            continue;
        }
        Vector resid = w - lambda * v;
        v = w / wn;
        if (resid.norm() <= tol * std::max(std::abs(lambda), std::numeric_limits<double>::min())) {
            out.value = std::sqrt(std::max(lambda, 0.0));
            return out;
        }
    }
    out.converged = false;
    out.value = std::sqrt(std::max(lambda, 0.0));
    return out;
}

inline double spectral_norm(const Matrix& A, double tol = 1e-10) {
    return spectral_norm_detail(A, tol).value;
}

/// Sum of squared entries (squared Frobenius norm), compensated summation.
inline double euclidean_norm_sq(const Matrix& A) {
    double sum = 0.0, comp = 0.0;
    const double* p = A.data();
    const Index total = A.size();
    for (Index i = 0; i < total; ++i) {
        double y = p[i] * p[i] - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

/**
 * Both sides of Weyl's perturbation inequality: the maximum eigenvalue
 * displacement between A and B, and the spectral norm of A - B.  The first
 * is always at most the second.
 */
inline std::pair<double, double> weyl_gap(const Matrix& A, const Matrix& B) {
    if (A.rows() != B.rows() || A.cols() != B.cols() || A.rows() != A.cols()) {
        throw validation_error("weyl_gap: dimension mismatch");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> ea(A), eb(B), ed(Matrix(A - B));
    if (ea.info() != Eigen::Success || eb.info() != Eigen::Success || ed.info() != Eigen::Success) {
        throw numerical_error("weyl_gap: eigendecomposition failed");
    }
    double max_disp = (ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff();
    double diff_norm = ed.eigenvalues().cwiseAbs().maxCoeff();
    return {max_disp, diff_norm};
}

} // namespace ruv

#endif
