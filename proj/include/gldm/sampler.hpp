#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gldm/erm_score.hpp"
#include "gldm/errors.hpp"
#include "gldm/estimation.hpp"
#include "gldm/frechet.hpp"
#include "gldm/linalg.hpp"
#include "gldm/rng.hpp"
#include "gldm/schedule.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

enum class ScoreKind { exact, plugin, capped };

inline const char* to_string(ScoreKind k)
{
    switch (k) {
    case ScoreKind::exact:
        return "exact";
    case ScoreKind::plugin:
        return "plugin";
    case ScoreKind::capped:
        return "capped";
    }
    return "unknown";
}

/*!
 * Monte-Carlo settings. Times are backward times on the grid k T / steps;
 * stop and snapshot times are rounded to the nearest grid node.
 *
 * score_spectrum holds the variances the score is built from (true ones for
 * ScoreKind::exact, estimated otherwise), expressed in `basis` when one is
 * given and along the coordinate axes otherwise.
 */
struct SimConfig {
    NoiseSchedule schedule = make_ou_schedule(2.0);
    std::size_t steps = 1000;
    std::size_t trajectories = 10000;
    std::uint64_t seed = 1;
    ScoreKind score = ScoreKind::plugin;
    std::optional<Spectrum> score_spectrum;
    ScoreCap cap = ScoreCap::unbounded();
    std::size_t projection_dim = 0;  ///< 0 means D
    std::optional<Matrix> basis;     ///< D x D orthogonal, columns = directions
    std::optional<double> stop_time; ///< defaults to T
    bool standard_gaussian_start = false;
    bool exact_transitions = false;
    std::vector<double> snapshot_times;
};

struct Snapshot {
    double time = 0.0;         ///< backward time of the grid node
    std::size_t step = 0;
    Matrix latent_cov;         ///< d x d second moment of the latent trajectories
    Matrix ambient_cov;        ///< D x D after embedding back
    std::vector<double> analytic;  ///< per latent component
    std::vector<double> stderr_;   ///< sqrt(2 / N) * analytic

    std::vector<double> latent_variances() const
    {
        std::vector<double> v(static_cast<std::size_t>(latent_cov.rows()));
        for (Eigen::Index i = 0; i < latent_cov.rows(); ++i) {
            v[static_cast<std::size_t>(i)] = latent_cov(i, i);
        }
        return v;
    }
};

struct BackwardResult {
    SampleSet samples;  ///< ambient draws at the stop time
    double stop_time = 0.0;
    std::vector<Snapshot> snapshots;
};

struct ForwardSnapshot {
    double time = 0.0;
    Matrix covariance;
};

struct ForwardResult {
    SampleSet samples;
    std::vector<ForwardSnapshot> snapshots;
};

namespace detail {

inline constexpr std::size_t kTrajectoryBlock = 2048;

// Simulation steps live above 2^32 so they never reuse the step-0 streams
// that sample_gaussian draws from under the same seed.
inline constexpr std::uint64_t kSimulationSteps = std::uint64_t{1} << 32;

/// snapshot indices grouped by grid step
inline std::vector<std::vector<std::size_t>> snapshots_by_step(const std::vector<std::size_t>& steps, std::size_t K)
{
    std::vector<std::vector<std::size_t>> at(K + 1);
    for (std::size_t s = 0; s < steps.size(); ++s) {
        at[steps[s]].push_back(s);
    }
    return at;
}

inline std::size_t grid_index(double t, double T, std::size_t steps, const char* what)
{
    detail::require(t >= 0.0 && t <= T, std::string(what) + ": time must lie in [0, T]");
    return static_cast<std::size_t>(std::llround(t / T * static_cast<double>(steps)));
}

inline double grid_time(std::size_t k, double T, std::size_t steps)
{
    return k == steps ? T : T * static_cast<double>(k) / static_cast<double>(steps);
}

/// Per-block partial sums of x x^T at each snapshot, combined in block order.
struct MomentAccumulator {
    std::vector<std::vector<Matrix>> partial;  ///< [block][snapshot]

    MomentAccumulator(std::size_t blocks, std::size_t snapshots, Eigen::Index dim)
        : partial(blocks, std::vector<Matrix>(snapshots, Matrix::Zero(dim, dim)))
    {
    }

    Matrix total(std::size_t snapshot, std::size_t count) const
    {
        Matrix sum = Matrix::Zero(partial.front()[snapshot].rows(), partial.front()[snapshot].cols());
        for (const auto& block : partial) {
            sum += block[snapshot];
        }
        return sum / static_cast<double>(count);
    }
};

inline void add_outer(Matrix& acc, const double* x, std::size_t d)
{
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            acc(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += x[a] * x[b];
        }
    }
}

inline Matrix symmetrize_upper(Matrix m)
{
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        for (Eigen::Index b = 0; b < a; ++b) {
            m(a, b) = m(b, a);
        }
    }
    return m;
}

}  // namespace detail

/*!
 * Euler-Maruyama for dX = -w^2 X dt + sqrt(2 w^2) dW on every coordinate of
 * `init`, up to forward time T. Trajectory i, step k draws from the stream
 * (seed, i, 2^32 + k). Snapshot times are forward times.
 */
inline ForwardResult simulate_forward(const SimConfig& cfg, const SampleSet& init)
{
    detail::require(cfg.steps >= 1, "simulate_forward: steps must be >= 1");
    detail::require(init.size() >= 1 && init.dim() >= 1, "simulate_forward: empty initial sample");
    const double T = cfg.schedule.final_time();
    const std::size_t K = cfg.steps;
    const std::size_t N = init.size();
    const std::size_t D = init.dim();
    const double dt = T / static_cast<double>(K);

    std::vector<double> drift(K);
    std::vector<double> noise(K);
    for (std::size_t k = 0; k < K; ++k) {
        double w2 = cfg.schedule.rate_sq(detail::grid_time(k, T, K));
        drift[k] = w2 * dt;
        noise[k] = std::sqrt(2.0 * w2 * dt);
    }
    std::vector<std::size_t> snap_steps;
    for (double t : cfg.snapshot_times) {
        snap_steps.push_back(detail::grid_index(t, T, K, "simulate_forward"));
    }

    const auto snap_at = detail::snapshots_by_step(snap_steps, K);
    ForwardResult out{SampleSet{init.data, cfg.seed}, {}};
    const std::size_t blocks = (N + detail::kTrajectoryBlock - 1) / detail::kTrajectoryBlock;
    detail::MomentAccumulator acc(blocks, snap_steps.size(), static_cast<Eigen::Index>(D));
    GaussianStream stream(cfg.seed);

    detail::parallel_chunks(N, detail::kTrajectoryBlock, [&](std::size_t begin, std::size_t end) {
        std::size_t block = begin / detail::kTrajectoryBlock;
        std::vector<double> z(D);
        for (std::size_t i = begin; i < end; ++i) {
            double* x = out.samples.data.row(static_cast<Eigen::Index>(i)).data();
            for (std::size_t k = 0; k <= K; ++k) {
                for (std::size_t s : snap_at[k]) {
                    detail::add_outer(acc.partial[block][s], x, D);
                }
                if (k == K) {
                    break;
                }
                stream.fill(i, detail::kSimulationSteps + k + 1, z);
                for (std::size_t j = 0; j < D; ++j) {
                    x[j] += -drift[k] * x[j] + noise[k] * z[j];
                }
            }
        }
    });
    for (std::size_t s = 0; s < snap_steps.size(); ++s) {
        out.snapshots.push_back({detail::grid_time(snap_steps[s], T, K), detail::symmetrize_upper(acc.total(s, N))});
    }
    return out;
}

/*!
 * Backward sampler in the d-dimensional latent space:
 *
 *   dY = w^2(T-t) (1 - 2 m(T-t)) Y dt + sqrt(2 w^2(T-t)) dW,
 *
 * with m_k(tau) = 1 / (a_tau^2 + b_tau^2 v_k) (exact / plugin) or its capped
 * version. The score is evaluated at the left end of each step. Results are
 * mapped back to R^D through the first d basis columns.
 *
 * Initial law: N(0, a_T^2 + b_T^2 v_k) per component, or N(0, 1) when
 * standard_gaussian_start is set (always the case for the capped score).
 */
inline BackwardResult simulate_backward(const SimConfig& cfg)
{
    detail::require(cfg.steps >= 1, "simulate_backward: steps must be >= 1");
    detail::require(cfg.trajectories >= 1, "simulate_backward: trajectories must be >= 1");
    detail::require(cfg.score_spectrum.has_value(), "simulate_backward: score spectrum missing");
    const Spectrum& spec = *cfg.score_spectrum;
    const NoiseSchedule& sch = cfg.schedule;
    const double T = sch.final_time();
    const std::size_t K = cfg.steps;
    const std::size_t N = cfg.trajectories;
    const std::size_t D = spec.size();
    const std::size_t d = cfg.projection_dim == 0 ? D : cfg.projection_dim;
    require_dim(d, D, "simulate_backward");
    const bool capped = cfg.score == ScoreKind::capped;
    if (capped) {
        detail::require(sch.is_ou(), "simulate_backward: the capped score requires the Ornstein-Uhlenbeck schedule");
        detail::require(!cfg.exact_transitions, "simulate_backward: exact transitions are unavailable for the capped score");
    }
    const bool standard_start = capped || cfg.standard_gaussian_start;
    detail::require(!(cfg.exact_transitions && standard_start),
                    "simulate_backward: exact transitions need the matching Gaussian start");
    if (cfg.basis) {
        detail::require(cfg.basis->rows() == static_cast<Eigen::Index>(D) && cfg.basis->cols() == cfg.basis->rows(),
                        "simulate_backward: basis must be D x D");
    }
    const double stop = cfg.stop_time.value_or(T);
    detail::require(stop <= T, "simulate_backward: stop_time exceeds T");
    const std::size_t k_stop = detail::grid_index(stop, T, K, "simulate_backward");

    std::vector<std::size_t> snap_steps;
    for (double t : cfg.snapshot_times) {
        std::size_t k = detail::grid_index(t, T, K, "simulate_backward");
        detail::require(k <= k_stop, "simulate_backward: snapshot after the stop time");
        snap_steps.push_back(k);
    }

    const ConstrainedScore cs(cfg.cap, Spectrum(std::vector<double>(spec.variances().begin(), spec.variances().end()),
                                                SpectrumKind::estimated),
                              sch);
    auto weight = [&](std::size_t c, double tau) {
        return capped ? m_hat(cs, c, tau) : 1.0 / (sch.a2(tau) + sch.b2(tau) * spec[c]);
    };

    // per-step coefficients: y <- coef * y + scale * z
    const double dt = T / static_cast<double>(K);
    std::vector<double> coef(K * d);
    std::vector<double> scale(K * d);
    for (std::size_t k = 0; k < k_stop; ++k) {
        double tau = T - detail::grid_time(k, T, K);
        double tau_next = T - detail::grid_time(k + 1, T, K);
        for (std::size_t c = 0; c < d; ++c) {
            if (cfg.exact_transitions) {
                double u = sch.a2(tau) + sch.b2(tau) * spec[c];
                double u_next = sch.a2(tau_next) + sch.b2(tau_next) * spec[c];
                double r = sch.b_ratio(tau_next, tau);
                coef[k * d + c] = r * u_next / u;
                scale[k * d + c] = std::sqrt(std::max(0.0, u_next - r * r * u_next * u_next / u));
            } else {
                double w2 = sch.rate_sq(tau);
                coef[k * d + c] = 1.0 + w2 * (1.0 - 2.0 * weight(c, tau)) * dt;
                scale[k * d + c] = std::sqrt(2.0 * w2 * dt);
            }
            if (!std::isfinite(coef[k * d + c]) || !std::isfinite(scale[k * d + c])) {
                throw numeric_error("simulate_backward: score is unbounded on the grid (zero variance near "
                                    "the data end); stop earlier or use the capped score");
            }
        }
    }
    std::vector<double> start_sd(d);
    for (std::size_t c = 0; c < d; ++c) {
        start_sd[c] = standard_start ? 1.0 : std::sqrt(sch.a2(T) + sch.b2(T) * spec[c]);
    }

    Matrix embed = Matrix::Identity(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(d));
    if (cfg.basis) {
        embed = cfg.basis->leftCols(static_cast<Eigen::Index>(d));
    }

    const auto snap_at = detail::snapshots_by_step(snap_steps, K);
    BackwardResult out;
    out.stop_time = detail::grid_time(k_stop, T, K);
    RowMatrix latent(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
    const std::size_t blocks = (N + detail::kTrajectoryBlock - 1) / detail::kTrajectoryBlock;
    detail::MomentAccumulator acc(blocks, snap_steps.size(), static_cast<Eigen::Index>(d));
    GaussianStream stream(cfg.seed);

    detail::parallel_chunks(N, detail::kTrajectoryBlock, [&](std::size_t begin, std::size_t end) {
        const std::size_t block = begin / detail::kTrajectoryBlock;
        std::vector<double> z(d);
        for (std::size_t i = begin; i < end; ++i) {
            double* y = latent.row(static_cast<Eigen::Index>(i)).data();
            stream.fill(i, detail::kSimulationSteps, std::span<double>(y, d));
            for (std::size_t c = 0; c < d; ++c) {
                y[c] *= start_sd[c];
            }
            for (std::size_t k = 0; k <= k_stop; ++k) {
                for (std::size_t s : snap_at[k]) {
                    detail::add_outer(acc.partial[block][s], y, d);
                }
                if (k == k_stop) {
                    break;
                }
                stream.fill(i, detail::kSimulationSteps + k + 1, z);
                const double* a = &coef[k * d];
                const double* b = &scale[k * d];
                for (std::size_t c = 0; c < d; ++c) {
                    y[c] = a[c] * y[c] + b[c] * z[c];
                }
            }
        }
    });

    out.samples.seed = cfg.seed;
    out.samples.data = latent * embed.transpose();

    const double stderr_factor = std::sqrt(2.0 / static_cast<double>(N));
    for (std::size_t s = 0; s < snap_steps.size(); ++s) {
        Snapshot snap;
        snap.step = snap_steps[s];
        snap.time = detail::grid_time(snap.step, T, K);
        snap.latent_cov = detail::symmetrize_upper(acc.total(s, N));
        snap.ambient_cov = embed * snap.latent_cov * embed.transpose();
        snap.analytic.resize(d);
        snap.stderr_.resize(d);
        for (std::size_t c = 0; c < d; ++c) {
            double v;
            if (!standard_start) {
                double tau = T - snap.time;
                v = sch.a2(tau) + sch.b2(tau) * spec[c];
            } else {
                auto w = [&, c](double tau) { return weight(c, tau); };
                std::vector<double> kinks;
                if (capped) {
                    kinks.push_back(cs.crossing[c]);
                }
                v = integrate_variance_ode(sch, w, 1.0, snap.time, 10000, kinks).values.back();
            }
            snap.analytic[c] = v;
            snap.stderr_[c] = stderr_factor * v;
        }
        out.snapshots.push_back(std::move(snap));
    }
    return out;
}

/// Fits N(0, (1/n) X^T X) to the sample and compares it with the target.
inline double empirical_frechet(const SampleSet& samples, const GaussianModel& target)
{
    detail::require(samples.dim() == target.dim(), "empirical_frechet: dimension mismatch");
    detail::require(samples.size() > samples.dim(), "empirical_frechet: degenerate sample (n <= D)");
    return frechet_sq_general(second_moment(samples), target.covariance());
}

}  // namespace gldm
