#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

#include "gldm/errors.hpp"

namespace gldm {

/*!
 * Variance-preserving noise schedule on [0, T].
 *
 * The schedule is described by the squared rate w_t^2 and its integral
 * L(t) = int_0^t w_s^2 ds, from which b_t^2 = exp(-2 L(t)) and
 * a_t^2 = 1 - b_t^2. The Ornstein-Uhlenbeck schedule (w = 1) is built in
 * and uses closed forms everywhere; other schedules fall back to bisection
 * for the inverse of a^2.
 *
 * Instances are immutable and cheap to copy.
 */
class NoiseSchedule {
  public:
    using RateFn = std::function<double(double)>;

    static NoiseSchedule ornstein_uhlenbeck(double final_time)
    {
        detail::require(std::isfinite(final_time) && final_time > 0.0,
                        "schedule: final time must be positive");
        return NoiseSchedule(final_time, nullptr);
    }

    /// Generic schedule from w^2 and its running integral. The integral
    /// must vanish at 0 and be non-decreasing.
    static NoiseSchedule from_rate(double final_time, RateFn rate_sq, RateFn rate_sq_integral)
    {
        detail::require(std::isfinite(final_time) && final_time > 0.0,
                        "schedule: final time must be positive");
        detail::require(rate_sq && rate_sq_integral, "schedule: rate functions must be set");
        detail::require(rate_sq_integral(0.0) == 0.0, "schedule: rate integral must vanish at 0");
        auto fns = std::make_shared<Generic>(Generic{std::move(rate_sq), std::move(rate_sq_integral)});
        NoiseSchedule s(final_time, std::move(fns));
        detail::require(s.a2(final_time) < 1.0, "schedule: a_T^2 must be < 1");
        return s;
    }

    /// Constant rate w_t = w (w = 0 gives the degenerate identity process).
    static NoiseSchedule constant_rate(double final_time, double w)
    {
        detail::require(w >= 0.0, "schedule: rate must be non-negative");
        double w2 = w * w;
        return from_rate(
            final_time, [w2](double) { return w2; }, [w2](double t) { return w2 * t; });
    }

    double final_time() const { return final_time_; }
    bool is_ou() const { return generic_ == nullptr; }

    double rate_sq(double t) const { return is_ou() ? 1.0 : generic_->rate_sq(t); }
    double rate_sq_integral(double t) const
    {
        return is_ou() ? t : generic_->rate_sq_integral(t);
    }

    double a2(double t) const { return -std::expm1(-2.0 * rate_sq_integral(t)); }
    double b2(double t) const { return std::exp(-2.0 * rate_sq_integral(t)); }

    /// b_{t} / b_{s} for s <= t.
    double b_ratio(double s, double t) const
    {
        return std::exp(-(rate_sq_integral(t) - rate_sq_integral(s)));
    }

    /// Extended inverse of a^2: 0 below 0, T above a_T^2 (including +inf).
    double inv_a2(double x) const
    {
        if (std::isnan(x)) {
            throw numeric_error("inv_a2: NaN argument");
        }
        if (x <= 0.0) {
            return 0.0;
        }
        double a2_final = a2(final_time_);
        if (x > a2_final) {
            return final_time_;
        }
        if (is_ou()) {
            return std::min(final_time_, -0.5 * std::log1p(-x));
        }
        return bisect_inverse(x);
    }

    /// ln(b_t^2 / a_t^2); singular at t = 0.
    double log_snr(double t) const
    {
        detail::require(t > 0.0 && t <= final_time_, "log_snr: t must lie in (0, T]");
        double a = a2(t);
        if (a <= 0.0) {
            throw numeric_error("log_snr: a_t^2 vanishes, remap is singular");
        }
        return std::log(b2(t)) - std::log(a);
    }

    /// Inverse of log_snr, clamped to [0, T] like inv_a2.
    double time_from_log_snr(double lambda) const
    {
        // a^2 = 1 / (1 + e^lambda)
        double x = 1.0 / (1.0 + std::exp(lambda));
        return inv_a2(x);
    }

  private:
    struct Generic {
        RateFn rate_sq;
        RateFn rate_sq_integral;
    };

    NoiseSchedule(double final_time, std::shared_ptr<const Generic> generic)
        : final_time_(final_time), generic_(std::move(generic))
    {
    }

    double bisect_inverse(double x) const
    {
        double lo = 0.0;
        double hi = final_time_;
        for (int iter = 0; iter < 200; ++iter) {
            double mid = 0.5 * (lo + hi);
            double value = a2(mid);
            if (std::abs(value - x) <= 1e-12 || hi - lo <= std::numeric_limits<double>::epsilon() * final_time_) {
                return mid;
            }
            (value < x ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    double final_time_;
    std::shared_ptr<const Generic> generic_;
};

inline NoiseSchedule make_ou_schedule(double final_time)
{
    return NoiseSchedule::ornstein_uhlenbeck(final_time);
}

}  // namespace gldm
