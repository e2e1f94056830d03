#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gldm/estimation.hpp"
#include "gldm/partition.hpp"

using gldm::make_ou_schedule;
using gldm::Spectrum;
using gldm::SpectrumKind;

namespace {

Spectrum est(std::vector<double> v) { return Spectrum(std::move(v), SpectrumKind::estimated); }

// brute-force argmin over d of the closed-form distance (smallest d on ties)
std::size_t brute_force_dim(const gldm::NoiseSchedule& s, const Spectrum& truth, const Spectrum& hat, double t)
{
    std::size_t best = 1;
    double best_value = gldm::projected_distance_sq(s, truth, hat, 1, t);
    for (std::size_t d = 2; d <= truth.size(); ++d) {
        double v = gldm::projected_distance_sq(s, truth, hat, d, t);
        if (v < best_value) {
            best_value = v;
            best = d;
        }
    }
    return best;
}

std::vector<double> random_decreasing(std::mt19937_64& rng, std::size_t D, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(D);
    for (auto& x : v) {
        x = u(rng);
    }
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
}

}  // namespace

TEST(ExactPartition, ConventionsAndAnalyticValue)
{
    auto s = make_ou_schedule(2.0);
    auto quarter = gldm::exact_partition(s, Spectrum({1.0, 0.25}));
    EXPECT_EQ(quarter.boundaries[0], 0.0);
    EXPECT_EQ(quarter.boundaries[1], 0.0);
    EXPECT_EQ(quarter.boundaries[2], 2.0);

    auto zero = gldm::exact_partition(s, Spectrum({1.0, 0.0}));
    EXPECT_EQ(zero.boundaries[1], 2.0);

    auto tenth = gldm::exact_partition(s, Spectrum({1.0, 0.1}));
    EXPECT_NEAR(tenth.boundaries[1], 2.0 - 0.5 * std::log(1.5), 1e-14);
    EXPECT_NEAR(tenth.boundaries[1], 1.7973, 1e-4);
    EXPECT_TRUE(tenth.well_ordered);
    EXPECT_FALSE(tenth.spectrum_has_ties);
    EXPECT_EQ(tenth.variant, gldm::PartitionVariant::exact);

    EXPECT_TRUE(gldm::exact_partition(s, Spectrum({0.5, 0.1, 0.1})).spectrum_has_ties);
    EXPECT_THROW(Spectrum({0.1, 0.5}), gldm::precondition_error);
}

TEST(PluginPartition, ConventionsAndAnalyticValue)
{
    auto s = make_ou_schedule(2.0);
    auto p = gldm::plugin_partition(s, Spectrum({1.0, 0.3}), est({1.0, 0.3}));
    EXPECT_EQ(p.boundaries[1], 0.0);

    auto z = gldm::plugin_partition(s, Spectrum({1.0, 0.0}), est({1.0, 0.0}));
    EXPECT_EQ(z.boundaries[1], 2.0);

    auto v = gldm::plugin_partition(s, Spectrum({1.0, 0.1}), est({1.0, 0.12}));
    EXPECT_NEAR(v.boundaries[1], 2.0 + 0.5 * std::log(1.0 - 0.28 / 0.88), 1e-14);

    // negative argument: t_hat = T
    auto neg = gldm::plugin_partition(s, Spectrum({1.0, 0.01}), est({1.0, 0.05}));
    EXPECT_EQ(neg.boundaries[1], 2.0);
    EXPECT_THROW(gldm::plugin_partition(s, Spectrum({1.0}), est({1.0, 0.5})), gldm::precondition_error);
}

TEST(PluginPartition, ReportsDisorder)
{
    auto s = make_ou_schedule(2.0);
    auto p = gldm::plugin_partition(s, Spectrum({1.0, 0.1, 0.09}), est({1.0, 0.1, 0.095}));
    EXPECT_TRUE(p.well_ordered);
    auto q = gldm::plugin_partition(s, Spectrum({1.0, 0.1, 0.02}), est({1.0, 0.1, 0.0}));
    EXPECT_TRUE(q.well_ordered);
    // sigma_2 overestimated: t_hat_2 = T while t_hat_3 < T
    auto r = gldm::plugin_partition(s, Spectrum({1.0, 0.05, 0.04}), est({1.0, 0.2, 0.01}));
    EXPECT_FALSE(r.well_ordered);
}

TEST(Monotonicity, Examples)
{
    auto m = gldm::monotonicity_condition(Spectrum({0.5, 0.2}), est({0.5, 0.2}), 2);
    EXPECT_EQ(m.sum, 0.0);
    EXPECT_TRUE(m.non_increasing);

    auto one = gldm::monotonicity_condition(Spectrum({0.25}), est({0.2}), 1);
    EXPECT_NEAR(one.sum, (1.0 - 0.5 / std::sqrt(0.2)) * 0.8, 1e-15);
    EXPECT_NEAR(one.sum, -0.0944, 1e-4);
    EXPECT_FALSE(one.non_increasing);

    auto sub = gldm::monotonicity_condition(Spectrum({0.25, 0.0, 0.0}), est({0.25, 0.0, 0.0}), 3);
    EXPECT_EQ(sub.sum, 2.0);

    EXPECT_THROW(gldm::monotonicity_condition(Spectrum({0.25, 0.1}), est({0.25, 0.0}), 2), gldm::precondition_error);
    EXPECT_THROW(gldm::monotonicity_condition(Spectrum({0.25}), est({0.25}), 2), gldm::precondition_error);
}

TEST(Stopping, MonotoneCaseGivesZero)
{
    auto s = make_ou_schedule(2.0);
    auto r = gldm::optimal_stopping_delta(s, 0.2, est({0.2, 0.2, 0.0}), 2);
    EXPECT_EQ(r.delta, 0.0);
    EXPECT_EQ(r.stop_time, 2.0);
    EXPECT_TRUE(r.monotone);
}

TEST(Stopping, OneDimensionalClosedForm)
{
    auto s = make_ou_schedule(2.0);
    auto r = gldm::optimal_stopping_delta(s, 0.25, est({0.2}), 1);
    // root of 1 - sigma / sqrt(sigma_hat^2 + (1 - sigma_hat^2) x) at x = (sigma^2 - sigma_hat^2) / (1 - sigma_hat^2)
    EXPECT_NEAR(r.a2_root, 0.0625, 1e-11);
    EXPECT_NEAR(r.delta, -0.5 * std::log(1.0 - 0.0625), 1e-11);
    EXPECT_NEAR(r.delta, 0.03227, 1e-5);
    EXPECT_TRUE(r.bracketed);
    EXPECT_FALSE(r.monotone);
}

TEST(Stopping, MatchesDenseGridOnFig3RightConfig)
{
    auto s = make_ou_schedule(2.0);
    Spectrum truth({10.0, 0.2, 0.2, 0.2, 0.0, 0.0});
    // seed 7 draws sigma_hat_1^2 > 10, which makes early stopping optimal
    auto sample = gldm::sample_gaussian(gldm::GaussianModel::diagonal(truth), 1000, 7);
    Spectrum hat = gldm::empirical_variances(sample).spectrum;
    auto r = gldm::optimal_stopping_delta(s, truth, hat, 4);
    ASSERT_FALSE(r.monotone);
    EXPECT_GT(r.delta, 0.0);

    const int P = 20000;
    double best_t = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= P; ++i) {
        double t = 2.0 * i / P;
        double v = gldm::projected_distance_sq(s, truth, hat, 4, t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    EXPECT_NEAR(best_t, r.stop_time, 2.0 / P);
    // no (d', t) on the grid does better
    for (int i = 0; i <= 2000; ++i) {
        double t = 2.0 * i / 2000;
        for (std::size_t d = 1; d <= 6; ++d) {
            EXPECT_GE(gldm::projected_distance_sq(s, truth, hat, d, t),
                      gldm::projected_distance_sq(s, truth, hat, 4, r.stop_time) - 1e-12);
        }
    }
}

TEST(Stopping, IsotropicRandomConfigsMatchGrid)
{
    auto s = make_ou_schedule(2.0);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.05, 0.8);
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 50; ++trial) {
        double var = u(rng);
        auto hat = random_decreasing(rng, 3, 0.02, 0.9);
        hat.push_back(0.0);
        Spectrum h = est(hat);
        auto r = gldm::optimal_stopping_delta(s, var, h, 3);
        if (r.monotone || !r.bracketed) {
            continue;
        }
        ++checked;
        Spectrum truth({var, var, var, 0.0});
        double best_x = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 100000; ++i) {
            double x = s.a2(2.0) * i / 100000.0;
            double v = gldm::projected_distance_sq_a2(truth, h, 3, x);
            if (v < best) {
                best = v;
                best_x = x;
            }
        }
        EXPECT_NEAR(r.a2_root, best_x, s.a2(2.0) / 100000.0);
    }
    EXPECT_GE(checked, 20);
}

TEST(Partition, CrossoverIdentity)
{
    auto s = make_ou_schedule(2.0);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        Spectrum truth(random_decreasing(rng, 5, 0.001, 0.4));
        auto part = gldm::exact_partition(s, truth);
        Spectrum hat(std::vector<double>(truth.variances().begin(), truth.variances().end()), SpectrumKind::estimated);
        for (int i = 0; i <= 1000; ++i) {
            double t = 2.0 * i / 1000;
            for (std::size_t d = 2; d <= 5; ++d) {
                double gap = gldm::projected_distance_sq(s, truth, hat, d, t) -
                             gldm::projected_distance_sq(s, truth, hat, d - 1, t);
                double x = s.a2(2.0 - t);
                double threshold = part.thresholds[d - 1];
                if (std::abs(x - threshold) <= 1e-9) {
                    continue;
                }
                EXPECT_EQ(gap <= 0.0, t >= part.boundaries[d - 1]) << "d=" << d << " t=" << t;
            }
        }
    }
}

TEST(Partition, ConvexInA2)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Spectrum truth(random_decreasing(rng, 4, 0.0, 2.0));
        Spectrum hat = est(random_decreasing(rng, 4, 0.01, 2.0));
        for (std::size_t d = 1; d <= 4; ++d) {
            double prev_slope = -std::numeric_limits<double>::infinity();
            const int P = 500;
            for (int i = 0; i < P; ++i) {
                double x0 = static_cast<double>(i) / P;
                double x1 = static_cast<double>(i + 1) / P;
                double slope = (gldm::projected_distance_sq_a2(truth, hat, d, x1) -
                                gldm::projected_distance_sq_a2(truth, hat, d, x0)) * P;
                EXPECT_GE(slope, prev_slope - 1e-8);
                prev_slope = slope;
            }
        }
    }
}

TEST(Partition, OptimalDimMatchesBruteForceOnFig3Left)
{
    auto s = make_ou_schedule(2.0);
    std::vector<double> v;
    for (int k = 0; k <= 6; ++k) {
        v.push_back(std::pow(0.6, k));
    }
    v.push_back(1e-10);
    v.push_back(1e-10);
    Spectrum truth(v);
    Spectrum hat(v, SpectrumKind::estimated);
    auto part = gldm::exact_partition(s, truth);
    EXPECT_TRUE(part.spectrum_has_ties);
    for (int i = 0; i < 1000; ++i) {
        double t = 2.0 * i / 999;
        double x = s.a2(2.0 - t);
        bool near = false;
        for (double th : part.thresholds) {
            near = near || std::abs(x - th) <= 1e-9;
        }
        if (near) {
            continue;
        }
        EXPECT_EQ(gldm::optimal_dim_at(s, part, t), brute_force_dim(s, truth, hat, t)) << "t=" << t;
    }
}

TEST(Partition, OptimalDimEndpoints)
{
    auto s = make_ou_schedule(2.0);
    auto part = gldm::exact_partition(s, Spectrum({0.2, 0.1, 0.05}));
    EXPECT_EQ(gldm::optimal_dim_at(s, part, 0.0), 1u);
    EXPECT_EQ(gldm::optimal_dim_at(s, part, 2.0 - 1e-12), 3u);
    EXPECT_EQ(gldm::optimal_dim_at(s, part, 2.0), 3u);
    auto flat = gldm::exact_partition(s, Spectrum({0.5, 0.4, 0.05}));
    EXPECT_EQ(gldm::optimal_dim_at(s, flat, 0.0), 2u);
}

TEST(RobustPartition, ReducesToEstimatedExactForm)
{
    auto s = make_ou_schedule(2.0);
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        auto v = random_decreasing(rng, 6, 0.0, 1.5);
        auto r = gldm::robust_partition(s, est(v), 3.0, 0.0);
        auto reference = gldm::exact_partition(s, Spectrum(v));
        for (std::size_t i = 0; i < v.size() + 1; ++i) {
            EXPECT_NEAR(r.lower.boundaries[i], reference.boundaries[i], 1e-10);
            EXPECT_NEAR(r.upper.boundaries[i], reference.boundaries[i], 1e-10);
        }
    }
}

TEST(RobustPartition, AnalyticValues)
{
    auto s = make_ou_schedule(2.0);
    auto big = gldm::robust_partition(s, est({1.0, 0.5}), 3.0, 0.01, 2.0);
    EXPECT_EQ(big.lower.boundaries[1], 0.0);
    EXPECT_EQ(big.upper.boundaries[1], 0.0);
    EXPECT_EQ(*big.lower.u, 2.0);

    auto r = gldm::robust_partition(s, est({1.0, 0.1, 0.0}), 0.5, 0.01);
    double shift = 4.0 * 0.5 * 0.01;
    double lo = (0.1 - shift + 2.0 * std::sqrt(0.1) * std::sqrt(0.1 - shift)) / 0.9;
    double hi = (0.1 + shift + 2.0 * std::sqrt(0.1) * std::sqrt(0.1 + shift)) / 0.9;
    EXPECT_NEAR(r.lower.boundaries[1], 2.0 + 0.5 * std::log(1.0 - lo), 1e-14);
    EXPECT_NEAR(r.upper.boundaries[1], 2.0 + 0.5 * std::log(1.0 - hi), 1e-14);
    EXPECT_LT(r.upper.boundaries[1], r.lower.boundaries[1]);
    // sigma_hat = 0: the argument is +shift over 1
    EXPECT_NEAR(r.upper.boundaries[2], 2.0 + 0.5 * std::log(1.0 - shift), 1e-14);
    EXPECT_EQ(r.lower.boundaries[2], 2.0);
    // the last interval [T_hat_3, T] is empty
    EXPECT_FALSE(r.interleaved);
    EXPECT_EQ(r.lower.boundaries.front(), 0.0);
    EXPECT_EQ(r.upper.boundaries.back(), 2.0);

    auto full = gldm::robust_partition(s, est({1.0, 0.1, 0.05}), 0.5, 0.01);
    EXPECT_TRUE(full.interleaved);
}

TEST(RobustPartition, RejectsLargeRadius)
{
    auto s = make_ou_schedule(2.0);
    EXPECT_THROW(gldm::robust_partition(s, est({1.0, 0.1}), 3.0, 0.01), gldm::precondition_error);
}
