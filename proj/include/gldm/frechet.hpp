#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gldm/errors.hpp"
#include "gldm/linalg.hpp"
#include "gldm/schedule.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

/*!
 * Squared Frechet (Wasserstein-2) distance between N(0, s1) and N(0, s2):
 *
 *   tr(s1 + s2 - 2 (s2^{1/2} s1 s2^{1/2})^{1/2})
 *
 * Both square roots go through the Jacobi eigensolver with clamping of
 * round-off negative eigenvalues. Result is clamped at 0.
 */
inline double frechet_sq_general(const Matrix& s1, const Matrix& s2)
{
    require_symmetric(s1, "frechet_sq_general");
    require_symmetric(s2, "frechet_sq_general");
    detail::require(s1.rows() == s2.rows(), "frechet_sq_general: dimension mismatch");

    detail::require(eigh_desc(s1).values.minCoeff() >= -kNegativeEigenTolerance,
                    "frechet_sq_general: first covariance is indefinite");
    Matrix root2 = psd_sqrt(s2);
    Matrix inner = root2 * s1 * root2;
    inner = (0.5 * (inner + inner.transpose())).eval();
    // the product carries round-off proportional to its own scale
    double scale = std::max(1.0, inner.cwiseAbs().maxCoeff());
    Matrix cross = psd_sqrt(inner, kNegativeEigenTolerance * scale);
    double value = s1.trace() + s2.trace() - 2.0 * cross.trace();
    return value > 0.0 ? value : 0.0;
}

/// Non-centered variant: adds ||mu1 - mu2||^2.
inline double frechet_sq_general(const Vector& mu1, const Matrix& s1, const Vector& mu2, const Matrix& s2)
{
    detail::require(mu1.size() == s1.rows() && mu2.size() == s2.rows(),
                    "frechet_sq_general: mean/covariance dimension mismatch");
    return (mu1 - mu2).squaredNorm() + frechet_sq_general(s1, s2);
}

/// Commuting diagonal case: sum_i (sqrt(v_i) - sqrt(w_i))^2.
inline double frechet_sq_diag(std::span<const double> v, std::span<const double> w)
{
    detail::require(v.size() == w.size(), "frechet_sq_diag: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        detail::require(v[i] >= 0.0 && w[i] >= 0.0, "frechet_sq_diag: negative variance");
        double diff = std::sqrt(v[i]) - std::sqrt(w[i]);
        sum += diff * diff;
    }
    return sum;
}

inline double frechet_sq_diag(const Spectrum& v, const Spectrum& w)
{
    return frechet_sq_diag(v.variances(), w.variances());
}

/*!
 * Per-component variances of P_d^T P_d X at forward time t when X_0 has
 * independent components with the given variances: a_t^2 + b_t^2 sigma^2
 * on the first d components, zero afterwards. Equivalently, the law of the
 * backward process at time T - t.
 */
inline std::vector<double> diffused_variances(const NoiseSchedule& s, double t,
                                              std::span<const double> variances, std::size_t d)
{
    require_dim(d, variances.size(), "diffused_cov_diag");
    detail::require(t >= 0.0 && t <= s.final_time(), "diffused_cov_diag: t must lie in [0, T]");
    double a2 = s.a2(t);
    double b2 = s.b2(t);
    std::vector<double> out(variances.size(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = a2 + b2 * variances[i];
    }
    return out;
}

inline Spectrum diffused_cov_diag(const NoiseSchedule& s, double t, const Spectrum& spec, std::size_t d)
{
    return Spectrum(diffused_variances(s, t, spec.variances(), d), spec.kind());
}

}  // namespace gldm
