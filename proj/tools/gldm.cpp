// Command-line front end for the latent-diffusion stopping experiments.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gldm/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 1;

const char* kColumns = R"(Output files (CSV, each preceded by '# key = value' lines echoing the resolved config):
  curve      curve.csv: t, logsnr, frechet_sq_d1..frechet_sq_dD, best_d, partition_d
             [--simulate adds mc_t, mc_frechet_sq_d1..mc_frechet_sq_dD]
  partition  partition.csv: d, boundary_time, boundary_logsnr, variant, u
             partition_summary.csv: key, value
  stopping   stopping.csv: d0, condition_sum, monotone, bracketed, a2_root, delta,
             stop_time, stop_logsnr, frechet_sq_at_stop, frechet_sq_at_T
  erm        erm.csv: C, d1, d2, d_min, frechet_sq_min, event_holds
             erm_distances.csv: C, d, t_prime, sqrt_V, sigma, frechet_sq
  simulate   snapshots.csv: t, component, empirical_variance, analytic_variance, stderr
             simulate_summary.csv: t, empirical_frechet_sq, closed_form_frechet_sq
  fig3       fig3_<side>_curve.csv (as curve.csv), fig3_<side>_partition.csv (as partition.csv),
             fig3_<side>_summary.csv: key, value
Times t are backward times in [0, T]; logsnr is ln(b^2/a^2) at forward time T - t.
Exit status: 0 success, 2 configuration error, 3 numeric failure, 1 I/O error.)";

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Early stopping and latent-dimension selection for Gaussian latent diffusion"};
    app.footer(kColumns);
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> trajectories;
    bool simulate = false;
    std::vector<std::string> overrides;
    std::string side = "left";

    app.add_option("--config", config_path, "config file with 'key = value' lines")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (output.dir)");
    app.add_option("--seed", seed, "seed for estimation and simulation (seed)");
    app.add_flag("--simulate", simulate, "add Monte-Carlo columns (sim.enabled)");
    app.add_option("--steps", steps, "Euler-Maruyama steps (sim.steps)");
    app.add_option("--trajectories", trajectories, "Monte-Carlo trajectories (sim.trajectories)");
    app.add_option("--set", overrides, "override any config key, as key=value");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"curve", "distance curves per latent dimension over the time grid"},
        {"partition", "optimal-dimension time partitions"},
        {"stopping", "monotonicity test and optimal stopping time"},
        {"erm", "capped score matching: d1, d2, d_min per cap"},
        {"simulate", "Monte-Carlo backward sampler with snapshots"},
    };
    for (const auto& [name, help] : commands) {
        app.add_subcommand(name, help)->fallthrough();
    }
    auto* fig3 = app.add_subcommand("fig3", "reproduce one panel of the synthetic Gaussian experiment");
    fig3->fallthrough();
    fig3->add_option("--side", side, "left or right")->check(CLI::IsMember({"left", "right"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        gldm::ExperimentConfig cfg = command == "fig3" ? gldm::fig3_config(side) : gldm::ExperimentConfig{};
        if (!config_path.empty()) {
            gldm::apply_config_file(cfg, config_path);
        }
        cfg.mode = command == "fig3" ? "fig3-" + side : command;
        if (out_dir) {
            cfg.out_dir = *out_dir;
        }
        if (seed) {
            cfg.seed = *seed;
        }
        if (steps) {
            cfg.steps = *steps;
        }
        if (trajectories) {
            cfg.trajectories = *trajectories;
        }
        if (simulate) {
            cfg.simulate = true;
        }
        for (const auto& o : overrides) {
            gldm::apply_assignment(cfg, o);
        }
        gldm::RunOutput result = gldm::run_experiment(cfg);
        for (const auto& w : result.warnings) {
            std::cerr << "warning: " << w << '\n';
        }
        for (const auto& f : result.files) {
            std::cout << f.string() << '\n';
        }
    } catch (const gldm::precondition_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const gldm::numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const gldm::io_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
