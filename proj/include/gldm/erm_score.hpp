#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "gldm/errors.hpp"
#include "gldm/frechet.hpp"
#include "gldm/schedule.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

/// Sup-norm cap C on the diagonal score weights; unbounded() disables it.
class ScoreCap {
  public:
    static ScoreCap unbounded() { return ScoreCap(); }

    static ScoreCap at(double c)
    {
        detail::require(std::isfinite(c) && c > 1.0, "ScoreCap: C must be a finite real > 1");
        ScoreCap cap;
        cap.value_ = c;
        cap.bounded_ = true;
        return cap;
    }

    bool bounded() const { return bounded_; }
    double value() const { return bounded_ ? value_ : std::numeric_limits<double>::infinity(); }
    double apply(double weight) const { return bounded_ ? std::min(value_, weight) : weight; }

    friend bool operator==(const ScoreCap&, const ScoreCap&) = default;

  private:
    ScoreCap() = default;
    double value_ = 0.0;
    bool bounded_ = false;
};

/*!
 * Cap-crossing time t' in backward time: the cap binds on [t', T].
 *
 * t' = T - inv_a2((1/C - sigma_hat^2) / (1 - sigma_hat^2)) when C < 1/sigma_hat^2
 * (and sigma_hat < 1), otherwise T.
 */
inline double t_prime(const ScoreCap& cap, double sigma_hat_sq, const NoiseSchedule& s)
{
    detail::require(sigma_hat_sq >= 0.0, "t_prime: variance must be non-negative");
    const double T = s.final_time();
    if (!cap.bounded() || sigma_hat_sq >= 1.0 || cap.value() * sigma_hat_sq >= 1.0) {
        return T;
    }
    double x = (1.0 / cap.value() - sigma_hat_sq) / (1.0 - sigma_hat_sq);
    return T - s.inv_a2(x);
}

/// Capped score-matching minimizer with its per-component cap-crossing times.
struct ConstrainedScore {
    ScoreCap cap;
    Spectrum est_spec;
    NoiseSchedule schedule;
    std::vector<double> crossing;  ///< t'_k per component

    ConstrainedScore(ScoreCap c, Spectrum est, NoiseSchedule s)
        : cap(c), est_spec(std::move(est)), schedule(std::move(s))
    {
        crossing.reserve(est_spec.size());
        for (std::size_t k = 0; k < est_spec.size(); ++k) {
            crossing.push_back(t_prime(cap, est_spec[k], schedule));
        }
    }

    std::size_t dim() const { return est_spec.size(); }
};

/// m_hat_k(t) = min(C, 1 / (a_t^2 + b_t^2 sigma_hat_k^2)) at forward time t.
/// Component indices are 0-based.
inline double m_hat(const ConstrainedScore& cs, std::size_t component, double t)
{
    detail::require(component < cs.dim(), "m_hat: component out of range");
    detail::require(t >= 0.0 && t <= cs.schedule.final_time(), "m_hat: t must lie in [0, T]");
    double level = cs.schedule.a2(t) + cs.schedule.b2(t) * cs.est_spec[component];
    double weight = level > 0.0 ? 1.0 / level : std::numeric_limits<double>::infinity();
    return cs.cap.apply(weight);
}

/*!
 * Closed-form variance at backward time T of component k for the OU
 * backward SDE dX = (X - 2 m_hat(T - t) X) dt + sqrt(2) dW started at N(0, 1).
 */
inline double terminal_variance_closed(const ConstrainedScore& cs, std::size_t component)
{
    detail::require(cs.schedule.is_ou(), "terminal_variance_closed: requires the Ornstein-Uhlenbeck schedule");
    detail::require(component < cs.dim(), "terminal_variance_closed: component out of range");
    const double T = cs.schedule.final_time();
    const double s2 = cs.est_spec[component];
    const double tp = cs.crossing[component];
    const double q = 1.0 - s2;
    const double e2T = std::exp(-2.0 * T);
    const double denom = 1.0 - q * e2T;
    if (!cs.cap.bounded() || tp >= T) {
        return s2 * (1.0 - 2.0 * q * e2T + q * std::exp(-4.0 * T)) /
               (1.0 - 2.0 * q * e2T + q * q * std::exp(-4.0 * T));
    }
    const double C = cs.cap.value();
    const double span = T - tp;
    const double decay = std::exp((2.0 - 4.0 * C) * span);
    const double stationary = 1.0 / (2.0 * C - 1.0);
    return stationary * (1.0 - decay) +
           decay * (1.0 - q * std::exp(-2.0 * span)) / denom *
               (1.0 - 2.0 * q * e2T + q * std::exp(-2.0 * (T + tp))) / denom;
}

/*!
 * Fixed-step RK4 for the backward variance ODE
 *
 *   dV/dt = 2 w^2(T-t) (1 - 2 m(T-t)) V + 2 w^2(T-t),   V(0) = v0,
 *
 * over backward time [0, t_end]. Breakpoints (kinks of m) are placed on the
 * grid; steps are split across segments in proportion to their length.
 * Returns the values at every grid node (first = v0) and the node times.
 */
struct VariancePath {
    std::vector<double> times;
    std::vector<double> values;
};

inline VariancePath integrate_variance_ode(const NoiseSchedule& s, const std::function<double(double)>& weight,
                                           double v0, double t_end, std::size_t steps,
                                           std::vector<double> breakpoints = {})
{
    const double T = s.final_time();
    detail::require(t_end >= 0.0 && t_end <= T, "integrate_variance_ode: t_end must lie in [0, T]");
    detail::require(steps >= 1, "integrate_variance_ode: at least one step");
    std::vector<double> knots{0.0};
    std::sort(breakpoints.begin(), breakpoints.end());
    for (double b : breakpoints) {
        if (b > knots.back() && b < t_end) {
            knots.push_back(b);
        }
    }
    knots.push_back(t_end);

    auto rhs = [&](double t, double v) {
        double forward = std::clamp(T - t, 0.0, T);
        double w2 = s.rate_sq(forward);
        return 2.0 * w2 * (1.0 - 2.0 * weight(forward)) * v + 2.0 * w2;
    };

    VariancePath path;
    path.times.push_back(0.0);
    path.values.push_back(v0);
    if (t_end == 0.0) {
        return path;
    }
    double v = v0;
    std::size_t used = 0;
    for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
        double a = knots[seg];
        double b = knots[seg + 1];
        std::size_t n = seg + 2 == knots.size()
                            ? std::max<std::size_t>(1, steps > used ? steps - used : 1)
                            : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                           static_cast<double>(steps) * (b - a) / t_end)));
        used += n;
        double h = (b - a) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            double t = a + h * static_cast<double>(i);
            double k1 = rhs(t, v);
            double k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1);
            double k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2);
            double k4 = rhs(t + h, v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            path.times.push_back(i + 1 == n ? b : t + h);
            path.values.push_back(v);
        }
    }
    return path;
}

/// Variance path of component k under the capped score, started at V = 1.
inline VariancePath variance_ode_path(const ConstrainedScore& cs, std::size_t component, std::size_t steps)
{
    detail::require(component < cs.dim(), "variance_ode_path: component out of range");
    auto weight = [&cs, component](double forward) { return m_hat(cs, component, forward); };
    return integrate_variance_ode(cs.schedule, weight, 1.0, cs.schedule.final_time(), steps,
                                  {cs.crossing[component]});
}

/// RK4 oracle for terminal_variance_closed; works for any schedule.
inline double variance_ode_numeric(const ConstrainedScore& cs, std::size_t component, std::size_t steps)
{
    detail::require(steps >= 1000, "variance_ode_numeric: at least 1000 steps required");
    return variance_ode_path(cs, component, steps).values.back();
}

/*!
 * Bracket on the optimal latent dimension (1-based):
 *   d1 = max{d : 1/C <= sigma_hat_d^2}            (1 if empty)
 *   d2 = min{d : 1/(2C - 1) >= 4 sigma_d^2}        (D if empty)
 */
inline std::pair<std::size_t, std::size_t> d1_d2(const Spectrum& true_spec, const Spectrum& est_spec,
                                                 const ScoreCap& cap)
{
    require_same_size(true_spec, est_spec, "d1_d2");
    const std::size_t D = true_spec.size();
    const double inv_c = cap.bounded() ? 1.0 / cap.value() : 0.0;
    const double inv_2c1 = cap.bounded() ? 1.0 / (2.0 * cap.value() - 1.0) : 0.0;
    std::size_t d1 = 0;
    for (std::size_t d = 1; d <= D; ++d) {
        if (inv_c <= est_spec[d - 1]) {
            d1 = d;
        }
    }
    std::size_t d2 = 0;
    for (std::size_t d = 1; d <= D && d2 == 0; ++d) {
        // with C = inf the condition reads 0 > 4 sigma^2 (strict), which never holds
        bool hit = cap.bounded() ? inv_2c1 >= 4.0 * true_spec[d - 1] : false;
        if (hit) {
            d2 = d;
        }
    }
    return {d1 == 0 ? 1 : d1, d2 == 0 ? D : d2};
}

struct DminResult {
    std::size_t d_min = 1;
    std::vector<double> terminal_variance;  ///< V_{T,kk} per component
    std::vector<double> frechet_sq;         ///< distance when projecting on d = index + 1
};

/// Exhaustive search over d of sum_{j<=d} (sqrt V_jj - sigma_j)^2 + sum_{j>d} sigma_j^2.
inline DminResult d_min_search(const ConstrainedScore& cs, const Spectrum& true_spec)
{
    require_same_size(true_spec, cs.est_spec, "d_min_search");
    const std::size_t D = true_spec.size();
    DminResult r;
    r.terminal_variance.resize(D);
    for (std::size_t k = 0; k < D; ++k) {
        r.terminal_variance[k] = terminal_variance_closed(cs, k);
    }
    r.frechet_sq.resize(D);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t d = 1; d <= D; ++d) {
        std::vector<double> v(D, 0.0);
        std::copy_n(r.terminal_variance.begin(), d, v.begin());
        double dist = frechet_sq_diag(v, true_spec.variances());
        r.frechet_sq[d - 1] = dist;
        if (dist < best) {
            best = dist;
            r.d_min = d;
        }
    }
    return r;
}

}  // namespace gldm
