// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gldm/erm_score.hpp"
#include "gldm/estimation.hpp"
#include "gldm/experiments.hpp"
#include "gldm/partition.hpp"
#include "gldm/sampler.hpp"

namespace fs = std::filesystem;
using gldm::Spectrum;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body)
{
    auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool in_time = budget_s <= 0.0 || secs < budget_s;
    bool ok = r.pass && in_time;
    failures += ok ? 0 : 1;
    std::printf("%s %2d %s: %s [%.2fs%s]\n", ok ? "PASS" : "FAIL", id, name, r.detail.c_str(), secs,
                in_time ? "" : " over budget");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::vector<double> uniform_time_grid(double T, std::size_t points)
{
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) {
        g[i] = i + 1 == points ? T : T * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return g;
}

Outcome fig3_left()
{
    auto cfg = gldm::fig3_config("left");
    Spectrum truth(cfg.true_variances);
    auto s = gldm::make_ou_schedule(cfg.final_time);
    auto part = gldm::exact_partition(s, truth);
    std::size_t checked = 0, mismatched = 0, skipped = 0;
    for (double t : uniform_time_grid(cfg.final_time, 1000)) {
        double x = s.a2(cfg.final_time - t);
        bool near = false;
        for (double th : part.thresholds) {
            near = near || (std::isfinite(th) && std::abs(x - th) <= 1e-9);
        }
        if (near) {
            ++skipped;
            continue;
        }
        std::size_t best = 1;
        double best_v = INFINITY;
        for (std::size_t d = 1; d <= truth.size(); ++d) {
            double v = gldm::projected_distance_sq(s, truth, truth, d, t);
            if (v < best_v) {
                best_v = v;
                best = d;
            }
        }
        ++checked;
        mismatched += best == gldm::optimal_dim_at(s, part, t) ? 0 : 1;
    }
    return {mismatched == 0, std::to_string(checked) + " grid points checked, " + std::to_string(skipped) +
                                 " near a boundary, " + std::to_string(mismatched) + " mismatches"};
}

Outcome fig3_right()
{
    auto cfg = gldm::fig3_config("right");
    auto in = gldm::resolve_inputs(cfg);
    const double T = cfg.final_time;
    const auto grid = uniform_time_grid(T, 1000);
    std::size_t best_d = 1;
    double best_t = 0.0, best_v = INFINITY;
    for (double t : grid) {
        for (std::size_t d = 1; d <= in.truth.size(); ++d) {
            double v = gldm::projected_distance_sq(in.schedule, in.truth, in.estimate, d, t);
            if (v < best_v) {
                best_v = v;
                best_d = d;
                best_t = t;
            }
        }
    }
    auto r = gldm::optimal_stopping_delta(in.schedule, in.truth, in.estimate, 4);
    double cell = T / 999.0;
    bool ok = best_d == 4 && std::abs(best_t - r.stop_time) <= cell;
    return {ok, "argmin d=" + std::to_string(best_d) + fmt(" t=%.6g; T-delta_hat=%.6g (delta_hat=%.3g)", best_t,
                                                            r.stop_time, r.delta) +
                    (r.monotone ? ", seed-1 draw is in the monotone case" : "")};
}

Outcome ode_vs_closed()
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        double c = 1.0 + 99.0 * (1.0 - u(rng));
        double s2 = 1e-6 + (4.0 - 1e-6) * u(rng);
        double T = 0.5 + 4.5 * u(rng);
        gldm::ConstrainedScore cs(gldm::ScoreCap::at(c), Spectrum({s2}), gldm::make_ou_schedule(T));
        worst = std::max(worst, std::abs(gldm::terminal_variance_closed(cs, 0) - gldm::variance_ode_numeric(cs, 0, 10000)));
    }
    return {worst <= 1e-6, fmt("max abs difference %.3g over 500 cases (tolerance 1e-6)", worst)};
}

Outcome monotonicity_classifier()
{
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double T = 2.0;
    auto s = gldm::make_ou_schedule(T);
    // 2000 points: 0 and a log-uniform sweep of a^2 from 1e-12 to a_T^2
    std::vector<double> xs{0.0};
    const double lo = std::log(1e-12), hi = std::log(s.a2(T));
    for (int i = 0; i < 1999; ++i) {
        xs.push_back(std::exp(lo + (hi - lo) * i / 1998.0));
    }
    int agree = 0, monotone_cases = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t D = 1 + trial % 6;
        std::vector<double> sig(D), hat(D);
        for (std::size_t k = 0; k < D; ++k) {
            sig[k] = 2.0 * u(rng);
            hat[k] = 0.01 + 2.0 * u(rng);
        }
        std::sort(sig.rbegin(), sig.rend());
        std::sort(hat.rbegin(), hat.rend());
        std::size_t d = 1 + static_cast<std::size_t>(u(rng) * D);
        Spectrum truth(sig), est(hat, gldm::SpectrumKind::estimated);
        // non-increasing in backward time means non-decreasing in a^2
        bool empirical = true;
        double prev = gldm::projected_distance_sq_a2(truth, est, d, xs[0]);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            double v = gldm::projected_distance_sq_a2(truth, est, d, xs[i]);
            empirical = empirical && v >= prev - 1e-14 * (1.0 + prev);
            prev = v;
        }
        bool predicted = gldm::monotonicity_condition(truth, est, d).non_increasing;
        agree += predicted == empirical ? 1 : 0;
        monotone_cases += empirical ? 1 : 0;
    }
    return {agree == 100, std::to_string(agree) + "/100 agree (" + std::to_string(monotone_cases) + " monotone)"};
}

Outcome mc_oracle()
{
    Spectrum truth({2.0, 1.0, 0.5, 0.1});
    auto draws = gldm::sample_gaussian(gldm::GaussianModel::diagonal(truth), 1000, 1);
    auto est = gldm::empirical_variances(draws);
    gldm::SimConfig cfg;
    cfg.steps = 1000;
    cfg.trajectories = 200000;
    cfg.seed = 1;
    cfg.score = gldm::ScoreKind::plugin;
    cfg.score_spectrum = est.spectrum;
    cfg.snapshot_times = {0.4, 0.8, 1.2, 1.6, 1.9};
    cfg.stop_time = 1.9;
    auto r = gldm::simulate_backward(cfg);
    double worst_z = 0.0, worst_rel = 0.0;
    const gldm::Matrix target = gldm::diagonal_matrix(truth.variances());
    for (const auto& snap : r.snapshots) {
        auto v = snap.latent_variances();
        double tau = cfg.schedule.final_time() - snap.time;
        for (std::size_t c = 0; c < 4; ++c) {
            double expect = cfg.schedule.a2(tau) + cfg.schedule.b2(tau) * est.spectrum[c];
            worst_z = std::max(worst_z, std::abs(v[c] - expect) / (std::sqrt(2.0 / 200000.0) * expect));
        }
        double closed = gldm::projected_distance_sq(cfg.schedule, truth, est.spectrum, 4, snap.time);
        double emp = gldm::frechet_sq_general(snap.ambient_cov, target);
        worst_rel = std::max(worst_rel, std::abs(emp - closed) / closed);
    }
    return {worst_z <= 5.0 && worst_rel <= 0.05,
            fmt("max |z| %.2f (limit 5), max relative Frechet error %.3g (limit 0.05)", worst_z, worst_rel)};
}

Outcome dmin_bracket()
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int inside = 0, configs = 0, draws = 0;
    while (configs < 100) {
        ++draws;
        std::size_t D = 2 + static_cast<std::size_t>(draws % 7);
        std::vector<double> sig(D), hat(D);
        for (auto& x : sig) {
            x = std::exp(-6.0 * u(rng));
        }
        std::sort(sig.rbegin(), sig.rend());
        for (std::size_t j = 0; j < D; ++j) {
            hat[j] = sig[j] * std::max(0.0, 1.0 + (2.0 * u(rng) - 1.0) * 1.3);
        }
        std::sort(hat.rbegin(), hat.rend());
        bool event = true;
        for (std::size_t j = 0; j < D; ++j) {
            event = event && std::abs(sig[j] - hat[j]) <= sig[j];
        }
        double c = 1.0 + 200.0 * (1.0 - u(rng));
        if (!event) {
            continue;
        }
        ++configs;
        Spectrum truth(sig), est(hat, gldm::SpectrumKind::estimated);
        auto [d1, d2] = gldm::d1_d2(truth, est, gldm::ScoreCap::at(c));
        auto r = gldm::d_min_search(gldm::ConstrainedScore(gldm::ScoreCap::at(c), est, gldm::make_ou_schedule(2.0)),
                                    truth);
        inside += d1 <= r.d_min && r.d_min <= d2 ? 1 : 0;
    }
    return {inside == 100, std::to_string(inside) + "/100 inside [d1, d2] (" + std::to_string(draws) + " draws)"};
}

Outcome geometric_spectrum()
{
    const double lambda = 20.0;
    const std::size_t D = 6;
    std::vector<double> v(D);
    for (std::size_t j = 0; j < D; ++j) {
        v[j] = std::pow(lambda, -static_cast<double>(j + 1));
    }
    Spectrum truth(v);
    const double C = std::pow(lambda, 3);
    auto sample = gldm::sample_gaussian(gldm::GaussianModel::diagonal(truth), 1000000, 1);
    auto est = gldm::empirical_variances(sample);
    std::size_t d = 0;
    for (std::size_t j = 1; j <= D; ++j) {
        if (est.spectrum[j - 1] >= 1.0 / C) {
            d = j;
        }
    }
    auto r = gldm::d_min_search(gldm::ConstrainedScore(gldm::ScoreCap::at(C), est.spectrum, gldm::make_ou_schedule(2.0)),
                                truth);
    auto [d1, d2] = gldm::d1_d2(truth, est.spectrum, gldm::ScoreCap::at(C));
    bool ok = d >= 1 && (r.d_min == d || r.d_min == d + 1);
    return {ok, "d=" + std::to_string(d) + " d_min=" + std::to_string(r.d_min) + " (d1=" + std::to_string(d1) +
                    ", d2=" + std::to_string(d2) + ")"};
}

Outcome concentration()
{
    std::vector<double> sig{4.0, 1.0, 0.25};
    auto model = gldm::GaussianModel::diagonal(Spectrum(sig));
    int held = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto sample = gldm::sample_gaussian(model, 200000, seed);
        bool ok = true;
        for (Eigen::Index j = 0; j < 3; ++j) {
            double hat = sample.data.col(j).squaredNorm() / 200000.0;
            ok = ok && std::abs(hat - sig[j]) <= 0.05 * sig[j];
        }
        held += ok ? 1 : 0;
    }
    return {held >= 99, std::to_string(held) + "/100 trials inside the 5% band (need 99)"};
}

Outcome robust_reduction()
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t D = 1 + trial % 8;
        std::vector<double> hat(D);
        for (auto& x : hat) {
            x = trial % 5 == 0 ? 3.0 * u(rng) : 0.98 * u(rng);
        }
        std::sort(hat.rbegin(), hat.rend());
        Spectrum est(hat, gldm::SpectrumKind::estimated);
        auto s = gldm::make_ou_schedule(0.5 + 3.0 * u(rng));
        auto robust = gldm::robust_partition(s, est, 1.0 + u(rng), 0.0);
        auto exact = gldm::exact_partition(s, est);
        for (std::size_t i = 0; i < exact.boundaries.size(); ++i) {
            worst = std::max(worst, std::abs(robust.lower.boundaries[i] - exact.boundaries[i]));
            worst = std::max(worst, std::abs(robust.upper.boundaries[i] - exact.boundaries[i]));
        }
    }
    return {worst <= 1e-10, fmt("max boundary difference %.3g over 50 spectra (tolerance 1e-10)", worst)};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome cli_reproducible()
{
    const fs::path work = fs::temp_directory_path() / "gldm_acceptance_cli";
    const std::string configs = GLDM_CONFIG_DIR;
    const std::vector<std::pair<std::string, std::string>> runs{
        {"curve", "curve"},
        {"partition", "partition"},
        {"stopping", "stopping"},
        {"erm", "erm"},
        {"simulate", "simulate --trajectories 5000"},
        {"simulate_capped", "simulate --trajectories 5000"},
        {"fig3_left", "fig3 --side left"},
        {"fig3_right", "fig3 --side right --simulate --trajectories 2000"},
    };
    int identical = 0;
    std::string bad;
    for (const auto& [name, args] : runs) {
        std::vector<std::vector<std::pair<std::string, std::string>>> outputs;
        for (int rep = 0; rep < 2; ++rep) {
            fs::remove_all(work / name);
            std::string cfg = fs::exists(configs + "/" + name + ".cfg") ? " --config " + configs + "/" + name + ".cfg"
                                                                         : std::string();
            std::string cmd = std::string(GLDM_CLI_PATH) + " " + args + cfg + " --out " + (work / name).string() +
                              " >/dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                return {false, "command failed: " + cmd};
            }
            std::vector<std::pair<std::string, std::string>> files;
            for (const auto& e : fs::directory_iterator(work / name)) {
                files.emplace_back(e.path().filename().string(), slurp(e.path()));
            }
            std::sort(files.begin(), files.end());
            outputs.push_back(std::move(files));
        }
        if (!outputs[0].empty() && outputs[0] == outputs[1]) {
            ++identical;
        } else {
            bad += " " + name;
        }
    }
    fs::remove_all(work);
    return {identical == static_cast<int>(runs.size()),
            std::to_string(identical) + "/" + std::to_string(runs.size()) + " commands byte-identical" +
                (bad.empty() ? "" : ";" + bad)};
}

}  // namespace

int main()
{
    criterion(1, "fig3-left structure", 1.0, fig3_left);
    criterion(2, "fig3-right structure", 1.0, fig3_right);
    criterion(3, "ODE vs closed form", 10.0, ode_vs_closed);
    criterion(4, "monotonicity classifier", 0.0, monotonicity_classifier);
    criterion(5, "MC oracle", 60.0, mc_oracle);
    criterion(6, "d_min bracket", 0.0, dmin_bracket);
    criterion(7, "geometric spectrum d_min", 0.0, geometric_spectrum);
    criterion(8, "concentration sanity", 0.0, concentration);
    criterion(9, "robust-partition reduction", 0.0, robust_reduction);
    criterion(10, "CLI reproducibility", 0.0, cli_reproducible);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
