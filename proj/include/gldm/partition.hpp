#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gldm/errors.hpp"
#include "gldm/frechet.hpp"
#include "gldm/schedule.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

enum class PartitionVariant { exact, plugin, robust_lower, robust_upper };

inline const char* to_string(PartitionVariant v)
{
    switch (v) {
    case PartitionVariant::exact:
        return "exact";
    case PartitionVariant::plugin:
        return "plugin";
    case PartitionVariant::robust_lower:
        return "robust_lower";
    case PartitionVariant::robust_upper:
        return "robust_upper";
    }
    return "unknown";
}

/*!
 * Boundary times t_1 <= ... <= t_{D+1} in backward time: projecting on the
 * first d components is optimal on [t_d, t_{d+1}).
 *
 * thresholds[i] is the a^2-space argument that produced boundaries[i]
 * (boundaries[i] = T - inv_a2(thresholds[i])); the conventional endpoints
 * t_1 = 0 and t_{D+1} = T carry +inf and -inf.
 */
struct TimePartition {
    std::vector<double> boundaries;
    std::vector<double> thresholds;
    PartitionVariant variant = PartitionVariant::exact;
    std::optional<double> u;
    bool well_ordered = true;
    bool spectrum_has_ties = false;

    std::size_t dim() const { return boundaries.size() - 1; }
};

namespace detail {

/// x / (y)_+ : for y <= 0 the result is +inf, 0 or -inf following the sign of x.
inline double over_positive_part(double numerator, double denominator)
{
    if (denominator > 0.0) {
        return numerator / denominator;
    }
    if (numerator > 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    if (numerator < 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return 0.0;
}

inline TimePartition assemble_partition(const NoiseSchedule& s, std::vector<double> thresholds,
                                        PartitionVariant variant, bool ties)
{
    const double T = s.final_time();
    const std::size_t D = thresholds.size() - 1;
    thresholds.front() = std::numeric_limits<double>::infinity();
    thresholds.back() = -std::numeric_limits<double>::infinity();
    TimePartition p;
    p.boundaries.resize(D + 1);
    p.boundaries.front() = 0.0;
    p.boundaries.back() = T;
    for (std::size_t i = 1; i < D; ++i) {
        p.boundaries[i] = T - s.inv_a2(thresholds[i]);
    }
    p.thresholds = std::move(thresholds);
    p.variant = variant;
    p.well_ordered = std::is_sorted(p.boundaries.begin(), p.boundaries.end());
    p.spectrum_has_ties = ties;
    return p;
}

// (1 - sigma/sigma_hat)(1 - sigma_hat^2), with 0/0 read as 0.
inline double monotonicity_term(double var, double var_hat)
{
    if (var_hat == 0.0) {
        if (var > 0.0) {
            throw precondition_error("monotonicity_condition: estimated variance is zero where the "
                                     "true variance is positive");
        }
        return 1.0;
    }
    return (1.0 - std::sqrt(var) / std::sqrt(var_hat)) * (1.0 - var_hat);
}

}  // namespace detail

/// t_d = T - inv_a2(3 sigma_d^2 / (1 - sigma_d^2)_+), d = 2..D.
inline TimePartition exact_partition(const NoiseSchedule& s, const Spectrum& spec)
{
    const std::size_t D = spec.size();
    std::vector<double> thresholds(D + 1, 0.0);
    for (std::size_t d = 2; d <= D; ++d) {
        double v = spec[d - 1];
        thresholds[d - 1] = detail::over_positive_part(3.0 * v, 1.0 - v);
    }
    return detail::assemble_partition(s, std::move(thresholds), PartitionVariant::exact, spec.has_ties());
}

/// t_hat_d = T - inv_a2((4 sigma_d^2 - sigma_hat_d^2) / (1 - sigma_hat_d^2)_+).
/// well_ordered reports whether the resulting boundaries are monotone.
inline TimePartition plugin_partition(const NoiseSchedule& s, const Spectrum& true_spec, const Spectrum& est_spec)
{
    require_same_size(true_spec, est_spec, "plugin_partition");
    const std::size_t D = true_spec.size();
    std::vector<double> thresholds(D + 1, 0.0);
    for (std::size_t d = 2; d <= D; ++d) {
        double v = true_spec[d - 1];
        double vh = est_spec[d - 1];
        thresholds[d - 1] = detail::over_positive_part(4.0 * v - vh, 1.0 - vh);
    }
    return detail::assemble_partition(s, std::move(thresholds), PartitionVariant::plugin,
                                      true_spec.has_ties() || est_spec.has_ties());
}

/// Owner of t: the largest d with t_d <= t (half-open intervals), so empty
/// intervals created by coincident boundaries are skipped.
inline std::size_t optimal_dim_at(const NoiseSchedule& s, const TimePartition& part, double t)
{
    detail::require(t >= 0.0 && t <= s.final_time(), "optimal_dim_at: t must lie in [0, T]");
    const std::size_t D = part.dim();
    std::size_t best = 1;
    for (std::size_t d = 1; d <= D; ++d) {
        if (part.boundaries[d - 1] <= t) {
            best = d;
        }
    }
    return best;
}

struct MonotonicityResult {
    double sum = 0.0;
    bool non_increasing = true;
};

/*!
 * sum_{d' <= d} (1 - sigma_{d'}/sigma_hat_{d'})(1 - sigma_hat_{d'}^2).
 * Non-negative iff the plug-in distance d_F(P_d^T P_d X_hat_t, X_0) is
 * non-increasing in backward time.
 */
inline MonotonicityResult monotonicity_condition(const Spectrum& true_spec, const Spectrum& est_spec, std::size_t d)
{
    require_same_size(true_spec, est_spec, "monotonicity_condition");
    require_dim(d, true_spec.size(), "monotonicity_condition");
    MonotonicityResult r;
    for (std::size_t k = 0; k < d; ++k) {
        r.sum += detail::monotonicity_term(true_spec[k], est_spec[k]);
    }
    r.non_increasing = r.sum >= 0.0;
    return r;
}

/*!
 * Closed-form d_F^2(P_d^T P_d X_hat_t, X_0) at backward time t: the first d
 * components carry a^2 + b^2 sigma_hat^2 evaluated at forward time T - t.
 */
inline double projected_distance_sq(const NoiseSchedule& s, const Spectrum& true_spec, const Spectrum& est_spec,
                                    std::size_t d, double t)
{
    require_same_size(true_spec, est_spec, "projected_distance_sq");
    detail::require(t >= 0.0 && t <= s.final_time(), "projected_distance_sq: t must lie in [0, T]");
    double forward = std::max(0.0, s.final_time() - t);
    std::vector<double> v = diffused_variances(s, forward, est_spec.variances(), d);
    return frechet_sq_diag(v, true_spec.variances());
}

/// Same curve parameterized directly by x = a^2 of the forward time.
inline double projected_distance_sq_a2(const Spectrum& true_spec, const Spectrum& est_spec, std::size_t d, double x)
{
    require_same_size(true_spec, est_spec, "projected_distance_sq_a2");
    require_dim(d, true_spec.size(), "projected_distance_sq_a2");
    std::vector<double> v(true_spec.size(), 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        v[k] = x + (1.0 - x) * est_spec[k];
    }
    return frechet_sq_diag(v, true_spec.variances());
}

struct StoppingResult {
    double delta = 0.0;      ///< forward-time offset; stop the backward pass at T - delta
    double stop_time = 0.0;  ///< T - delta
    double a2_root = 0.0;    ///< a^2 at the optimum
    double condition_sum = 0.0;
    bool monotone = true;    ///< condition_sum >= 0, so delta = 0 by convention
    bool bracketed = true;   ///< false when the derivative has no root in [0, a_T^2]
};

namespace detail {

// Derivative of the squared distance with respect to x = a^2 (first d0 components).
inline double distance_slope_a2(const Spectrum& true_spec, const Spectrum& est_spec, std::size_t d0, double x)
{
    double g = 0.0;
    for (std::size_t k = 0; k < d0; ++k) {
        double vh = est_spec[k];
        double level = vh + (1.0 - vh) * x;
        if (level <= 0.0) {
            g += detail::monotonicity_term(true_spec[k], vh);
            continue;
        }
        g += (1.0 - std::sqrt(true_spec[k]) / std::sqrt(level)) * (1.0 - vh);
    }
    return g;
}

}  // namespace detail

/*!
 * Optimal early-stopping offset for projection dimension d0.
 *
 * When the monotonicity sum is negative, the squared distance (convex in
 * a^2) has a unique stationary point; it is located by bisection in
 * a^2-space to 1e-12 and mapped through inv_a2. Otherwise delta = 0. If the
 * slope is still negative at a_T^2 the optimum sits at the boundary and
 * bracketed is false.
 *
 * This overload accepts any true spectrum; the isotropic-subspace case is
 * the one with an optimality guarantee over all (t, d).
 */
inline StoppingResult optimal_stopping_delta(const NoiseSchedule& s, const Spectrum& true_spec,
                                             const Spectrum& est_spec, std::size_t d0)
{
    require_same_size(true_spec, est_spec, "optimal_stopping_delta");
    require_dim(d0, true_spec.size(), "optimal_stopping_delta");
    StoppingResult r;
    const double T = s.final_time();
    MonotonicityResult cond = monotonicity_condition(true_spec, est_spec, d0);
    r.condition_sum = cond.sum;
    r.monotone = cond.non_increasing;
    if (r.monotone) {
        r.stop_time = T;
        return r;
    }
    double hi = s.a2(T);
    if (detail::distance_slope_a2(true_spec, est_spec, d0, hi) <= 0.0) {
        r.bracketed = false;
        r.a2_root = hi;
        r.delta = T;
        r.stop_time = 0.0;
        return r;
    }
    double lo = 0.0;
    while (hi - lo > 1e-12) {
        double mid = 0.5 * (lo + hi);
        if (detail::distance_slope_a2(true_spec, est_spec, d0, mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    r.a2_root = 0.5 * (lo + hi);
    r.delta = s.inv_a2(r.a2_root);
    r.stop_time = T - r.delta;
    return r;
}

/// Isotropic-subspace setting: true spectrum sigma^2 on the first d0
/// components of est_spec.size() and zero after.
inline StoppingResult optimal_stopping_delta(const NoiseSchedule& s, double true_variance, const Spectrum& est_spec,
                                             std::size_t d0)
{
    detail::require(true_variance > 0.0, "optimal_stopping_delta: true variance must be positive");
    require_dim(d0, est_spec.size(), "optimal_stopping_delta");
    std::vector<double> v(est_spec.size(), 0.0);
    std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(d0), true_variance);
    return optimal_stopping_delta(s, Spectrum(std::move(v)), est_spec, d0);
}

struct RobustPartitions {
    TimePartition lower;  ///< T_hat_d(u): lower endpoints of the optimality intervals
    TimePartition upper;  ///< t_hat_d(u): upper endpoints
    bool interleaved = false;  ///< 0 = T_1 < t_2 < T_2 < ... < t_D < T_D < T
};

/*!
 * High-probability partitions for a PCA-projected diffusion with an
 * estimated covariance. eps_u is the concentration radius and s_sigma the
 * spectrum weight S(Sigma); both are caller-supplied.
 */
inline RobustPartitions robust_partition(const NoiseSchedule& s, const Spectrum& est_spec, double s_sigma,
                                         double eps_u, std::optional<double> u = std::nullopt)
{
    detail::require(s_sigma >= 0.0 && eps_u >= 0.0, "robust_partition: S and eps_u must be non-negative");
    const std::size_t D = est_spec.size();
    const double shift = 4.0 * s_sigma * eps_u;
    for (std::size_t k = 0; k < D; ++k) {
        if (est_spec[k] > 0.0 && est_spec[k] - shift < 0.0) {
            throw precondition_error("robust_partition: eps_u too large (sigma_hat^2 - 4 S eps_u < 0 for component " +
                                     std::to_string(k + 1) + ")");
        }
    }
    auto argument = [&](double vh, double sign) {
        double shifted = vh + sign * shift;
        double root = vh > 0.0 ? std::sqrt(vh) * std::sqrt(shifted) : 0.0;
        return detail::over_positive_part(shifted + 2.0 * root, 1.0 - vh);
    };
    std::vector<double> lower(D + 1, 0.0);
    std::vector<double> upper(D + 1, 0.0);
    for (std::size_t d = 2; d <= D; ++d) {
        lower[d - 1] = argument(est_spec[d - 1], -1.0);
        upper[d - 1] = argument(est_spec[d - 1], +1.0);
    }
    RobustPartitions r{
        detail::assemble_partition(s, std::move(lower), PartitionVariant::robust_lower, est_spec.has_ties()),
        detail::assemble_partition(s, std::move(upper), PartitionVariant::robust_upper, est_spec.has_ties()),
        false};
    r.lower.u = u;
    r.upper.u = u;
    bool ok = true;
    // interval d is [T_d, t_{d+1}]; chain T_1 < t_2 < T_2 < ... < t_D < T_D < t_{D+1}
    for (std::size_t d = 1; d < D && ok; ++d) {
        ok = r.lower.boundaries[d - 1] < r.upper.boundaries[d] && r.upper.boundaries[d] < r.lower.boundaries[d];
    }
    r.interleaved = ok && r.lower.boundaries[D - 1] < r.upper.boundaries[D];
    return r;
}

}  // namespace gldm
