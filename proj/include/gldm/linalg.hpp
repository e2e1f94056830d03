#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gldm/errors.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kNegativeEigenTolerance = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
struct SymmetricEigen {
    Vector values;
    Matrix vectors;  // columns are eigenvectors
    int sweeps = 0;
};

inline void require_symmetric(const Matrix& m, const char* what)
{
    detail::require(m.rows() == m.cols() && m.rows() > 0, std::string(what) + ": matrix must be square");
    detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTolerance,
                    std::string(what) + ": matrix is not symmetric");
}

namespace detail {

// Column sign: entry of largest magnitude non-negative, ties to lowest row.
inline void canonicalize_sign(Matrix& vectors)
{
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            double a = std::abs(vectors(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (vectors(best, c) < 0.0) {
            vectors.col(c) *= -1.0;
        }
    }
}

}  // namespace detail

/*!
 * Cyclic Jacobi eigensolver for small dense symmetric matrices.
 *
 * Input is symmetrized as (M + M^T)/2 after the tolerance check. Rotations
 * continue until every off-diagonal entry is negligible relative to the
 * diagonal it couples; at most 100 * D^2 sweeps are attempted.
 */
inline SymmetricEigen eigh_desc(const Matrix& m)
{
    require_symmetric(m, "eigh_desc");
    const Eigen::Index n = m.rows();
    Matrix a = 0.5 * (m + m.transpose());
    Matrix v = Matrix::Identity(n, n);

    const int max_sweeps = static_cast<int>(100 * n * n);
    const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                off = std::max(off, std::abs(a(p, q)));
            }
        }
        if (off <= 1e-300 || off <= 1e-17 * scale) {
            break;
        }
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                double app = a(p, p);
                double aqq = a(q, q);
                // negligible couplings are dropped instead of rotated
                if (std::abs(apq) <= 1e-17 * scale ||
                    (sweep > 3 && std::abs(apq) < 1e-18 * (std::abs(app) + std::abs(aqq)))) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    double akp = a(k, p);
                    double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    double apk = a(p, k);
                    double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    double vkp = v(k, p);
                    double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep >= max_sweeps) {
        throw numeric_error("eigh_desc: Jacobi iteration did not converge within " +
                            std::to_string(max_sweeps) + " sweeps");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
    }
    detail::canonicalize_sign(out.vectors);
    out.sweeps = sweep;
    return out;
}

/// Symmetric PSD square root; eigenvalues in [-1e-10, 0) are treated as 0.
inline Matrix psd_sqrt(const Matrix& m, double negative_tolerance = kNegativeEigenTolerance)
{
    SymmetricEigen eig = eigh_desc(m);
    Vector root(eig.values.size());
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        double lambda = eig.values(i);
        if (lambda < -negative_tolerance) {
            throw precondition_error("psd_sqrt: matrix is indefinite (eigenvalue " +
                                     std::to_string(lambda) + ")");
        }
        root(i) = std::sqrt(std::max(lambda, 0.0));
    }
    return eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

/*!
 * Centered Gaussian N(0, covariance) together with its eigendecomposition
 * covariance = eigenvectors * diag(eigenvalues) * eigenvectors^T.
 */
class GaussianModel {
  public:
    static GaussianModel from_covariance(const Matrix& covariance,
                                         SpectrumKind kind = SpectrumKind::true_variances)
    {
        SymmetricEigen eig = eigh_desc(covariance);
        std::vector<double> values(static_cast<std::size_t>(eig.values.size()));
        for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
            double lambda = eig.values(i);
            if (lambda < -kNegativeEigenTolerance) {
                throw precondition_error("GaussianModel: covariance is indefinite");
            }
            values[static_cast<std::size_t>(i)] = std::max(lambda, 0.0);
        }
        Matrix sym = 0.5 * (covariance + covariance.transpose());
        return GaussianModel(std::move(sym), std::move(eig.vectors), Spectrum(std::move(values), kind));
    }

    /// Diagonal model; the eigenbasis is the coordinate basis (spectrum must be sorted).
    static GaussianModel diagonal(const Spectrum& spectrum)
    {
        const auto n = static_cast<Eigen::Index>(spectrum.size());
        Matrix cov = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            cov(i, i) = spectrum[static_cast<std::size_t>(i)];
        }
        return GaussianModel(std::move(cov), Matrix::Identity(n, n), spectrum);
    }

    /// Model with prescribed orthogonal basis and spectrum.
    static GaussianModel from_basis(const Matrix& orthogonal, const Spectrum& spectrum)
    {
        const auto n = static_cast<Eigen::Index>(spectrum.size());
        detail::require(orthogonal.rows() == n && orthogonal.cols() == n,
                        "GaussianModel: basis dimension mismatch");
        detail::require((orthogonal.transpose() * orthogonal - Matrix::Identity(n, n)).norm() <= 1e-9,
                        "GaussianModel: basis is not orthogonal");
        Vector lambda(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            lambda(i) = spectrum[static_cast<std::size_t>(i)];
        }
        Matrix cov = orthogonal * lambda.asDiagonal() * orthogonal.transpose();
        cov = 0.5 * (cov + cov.transpose()).eval();
        return GaussianModel(std::move(cov), orthogonal, spectrum);
    }

    std::size_t dim() const { return eigenvalues_.size(); }
    const Matrix& covariance() const { return covariance_; }
    const Matrix& eigenvectors() const { return eigenvectors_; }
    const Spectrum& eigenvalues() const { return eigenvalues_; }

    bool is_diagonal() const
    {
        Matrix off = covariance_;
        off.diagonal().setZero();
        return off.cwiseAbs().maxCoeff() == 0.0;
    }

  private:
    GaussianModel(Matrix covariance, Matrix eigenvectors, Spectrum eigenvalues)
        : covariance_(std::move(covariance)),
          eigenvectors_(std::move(eigenvectors)),
          eigenvalues_(std::move(eigenvalues))
    {
    }

    Matrix covariance_;
    Matrix eigenvectors_;
    Spectrum eigenvalues_;
};

inline Matrix diagonal_matrix(std::span<const double> values)
{
    const auto n = static_cast<Eigen::Index>(values.size());
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = values[static_cast<std::size_t>(i)];
    }
    return m;
}

}  // namespace gldm
