#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gldm/erm_score.hpp"
#include "gldm/errors.hpp"
#include "gldm/estimation.hpp"
#include "gldm/format.hpp"
#include "gldm/frechet.hpp"
#include "gldm/partition.hpp"
#include "gldm/sampler.hpp"
#include "gldm/schedule.hpp"
#include "gldm/spectrum.hpp"

namespace gldm {

class io_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class GridKind { time, logsnr };

/*!
 * Resolved experiment settings. Every field maps to one dotted key of the
 * `key = value` config format; see config_keys() for the list.
 */
struct ExperimentConfig {
    std::string mode = "curve";
    double final_time = 2.0;
    std::vector<double> true_variances;
    std::vector<double> estimated_variances;  ///< empty: estimate from samples or reuse the truth
    std::size_t estimate_n = 0;               ///< 0: no sampling
    std::uint64_t seed = 1;
    std::size_t t_points = 1000;
    GridKind grid = GridKind::time;
    std::size_t d0 = 0;  ///< 0: number of positive true variances
    std::optional<double> robust_u;
    double c_univ = 1.0;
    std::size_t robust_n = 0;  ///< 0: estimate_n
    bool s_from_estimate = false;
    std::vector<double> caps{2.0, 4.0, 8.0, 16.0, 32.0, 64.0, std::numeric_limits<double>::infinity()};
    std::size_t steps = 1000;
    std::size_t trajectories = 10000;
    ScoreKind score = ScoreKind::plugin;
    std::size_t sim_dim = 0;
    std::optional<double> stop_time;
    std::vector<double> snapshots;
    bool standard_start = false;
    bool exact_transitions = false;
    double sim_cap = std::numeric_limits<double>::infinity();
    bool simulate = false;
    std::string out_dir = ".";

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    std::size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& value)
{
    try {
        return parse_double(value);
    } catch (const precondition_error&) {
        throw config_error(key + ": expected a number, got '" + value + "'");
    }
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& value)
{
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw config_error(key + ": expected a non-negative integer, got '" + value + "'");
    }
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw config_error(key + ": integer out of range '" + value + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw config_error(key + ": expected true or false, got '" + value + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& value)
{
    std::vector<double> out;
    if (trim(value).empty()) {
        return out;
    }
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(to_double(key, trim(item)));
    }
    return out;
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

struct ConfigKey {
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    // nullopt: key left at its default and omitted from the echo
    std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys()
{
    using C = ExperimentConfig;
    using Opt = std::optional<std::string>;
    static const std::vector<ConfigKey> keys{
        {"mode",
         [](C& c, const std::string& v) {
             static const char* modes[] = {"curve", "partition", "stopping", "erm",
                                           "simulate", "fig3-left", "fig3-right"};
             if (std::find(std::begin(modes), std::end(modes), v) == std::end(modes)) {
                 throw config_error("mode: unknown mode '" + v + "'");
             }
             c.mode = v;
         },
         [](const C& c) -> Opt { return c.mode; }},
        {"schedule.kind",
         [](C&, const std::string& v) {
             if (v != "ou") {
                 throw config_error("schedule.kind: only 'ou' is supported, got '" + v + "'");
             }
         },
         [](const C&) -> Opt { return "ou"; }},
        {"schedule.T", [](C& c, const std::string& v) { c.final_time = to_double("schedule.T", v); },
         [](const C& c) -> Opt { return format_double(c.final_time); }},
        {"spectrum.true", [](C& c, const std::string& v) { c.true_variances = to_list("spectrum.true", v); },
         [](const C& c) -> Opt { return join_doubles(c.true_variances); }},
        {"spectrum.estimated",
         [](C& c, const std::string& v) { c.estimated_variances = to_list("spectrum.estimated", v); },
         [](const C& c) -> Opt {
             return c.estimated_variances.empty() ? Opt{} : Opt{join_doubles(c.estimated_variances)};
         }},
        {"estimate.n", [](C& c, const std::string& v) { c.estimate_n = to_unsigned("estimate.n", v); },
         [](const C& c) -> Opt { return std::to_string(c.estimate_n); }},
        {"seed", [](C& c, const std::string& v) { c.seed = to_unsigned("seed", v); },
         [](const C& c) -> Opt { return std::to_string(c.seed); }},
        {"grid.t_points", [](C& c, const std::string& v) { c.t_points = to_unsigned("grid.t_points", v); },
         [](const C& c) -> Opt { return std::to_string(c.t_points); }},
        {"grid.parameterization",
         [](C& c, const std::string& v) {
             if (v == "time") {
                 c.grid = GridKind::time;
             } else if (v == "logsnr") {
                 c.grid = GridKind::logsnr;
             } else {
                 throw config_error("grid.parameterization: expected time or logsnr, got '" + v + "'");
             }
         },
         [](const C& c) -> Opt { return c.grid == GridKind::time ? "time" : "logsnr"; }},
        {"stopping.d0", [](C& c, const std::string& v) { c.d0 = to_unsigned("stopping.d0", v); },
         [](const C& c) -> Opt { return std::to_string(c.d0); }},
        {"robust.u", [](C& c, const std::string& v) { c.robust_u = to_double("robust.u", v); },
         [](const C& c) -> Opt { return c.robust_u ? Opt{format_double(*c.robust_u)} : Opt{}; }},
        {"robust.c_univ", [](C& c, const std::string& v) { c.c_univ = to_double("robust.c_univ", v); },
         [](const C& c) -> Opt { return format_double(c.c_univ); }},
        {"robust.n", [](C& c, const std::string& v) { c.robust_n = to_unsigned("robust.n", v); },
         [](const C& c) -> Opt { return std::to_string(c.robust_n); }},
        {"robust.s_from",
         [](C& c, const std::string& v) {
             if (v != "true" && v != "estimated") {
                 throw config_error("robust.s_from: expected true or estimated, got '" + v + "'");
             }
             c.s_from_estimate = v == "estimated";
         },
         [](const C& c) -> Opt { return c.s_from_estimate ? "estimated" : "true"; }},
        {"erm.C", [](C& c, const std::string& v) { c.caps = to_list("erm.C", v); },
         [](const C& c) -> Opt { return join_doubles(c.caps); }},
        {"sim.enabled", [](C& c, const std::string& v) { c.simulate = to_bool("sim.enabled", v); },
         [](const C& c) -> Opt { return from_bool(c.simulate); }},
        {"sim.steps", [](C& c, const std::string& v) { c.steps = to_unsigned("sim.steps", v); },
         [](const C& c) -> Opt { return std::to_string(c.steps); }},
        {"sim.trajectories",
         [](C& c, const std::string& v) { c.trajectories = to_unsigned("sim.trajectories", v); },
         [](const C& c) -> Opt { return std::to_string(c.trajectories); }},
        {"sim.score",
         [](C& c, const std::string& v) {
             if (v == "exact") {
                 c.score = ScoreKind::exact;
             } else if (v == "plugin") {
                 c.score = ScoreKind::plugin;
             } else if (v == "capped") {
                 c.score = ScoreKind::capped;
             } else {
                 throw config_error("sim.score: expected exact, plugin or capped, got '" + v + "'");
             }
         },
         [](const C& c) -> Opt { return to_string(c.score); }},
        {"sim.d", [](C& c, const std::string& v) { c.sim_dim = to_unsigned("sim.d", v); },
         [](const C& c) -> Opt { return std::to_string(c.sim_dim); }},
        {"sim.stop_time", [](C& c, const std::string& v) { c.stop_time = to_double("sim.stop_time", v); },
         [](const C& c) -> Opt { return c.stop_time ? Opt{format_double(*c.stop_time)} : Opt{}; }},
        {"sim.snapshots", [](C& c, const std::string& v) { c.snapshots = to_list("sim.snapshots", v); },
         [](const C& c) -> Opt { return c.snapshots.empty() ? Opt{} : Opt{join_doubles(c.snapshots)}; }},
        {"sim.standard_start",
         [](C& c, const std::string& v) { c.standard_start = to_bool("sim.standard_start", v); },
         [](const C& c) -> Opt { return from_bool(c.standard_start); }},
        {"sim.exact_transitions",
         [](C& c, const std::string& v) { c.exact_transitions = to_bool("sim.exact_transitions", v); },
         [](const C& c) -> Opt { return from_bool(c.exact_transitions); }},
        {"sim.C", [](C& c, const std::string& v) { c.sim_cap = to_double("sim.C", v); },
         [](const C& c) -> Opt { return format_double(c.sim_cap); }},
        {"output.dir", [](C& c, const std::string& v) { c.out_dir = v; },
         [](const C& c) -> Opt { return c.out_dir; }},
    };
    return keys;
}

}  // namespace detail

/// Sets one dotted key; unknown keys and malformed values raise config_error.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value)
{
    for (const auto& k : detail::config_keys()) {
        if (key == k.name) {
            k.set(cfg, detail::trim(value));
            return;
        }
    }
    throw config_error("unknown config key '" + key + "'");
}

/// `key=value` form used by command-line overrides.
inline void apply_assignment(ExperimentConfig& cfg, const std::string& assignment)
{
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw config_error("expected key=value, got '" + assignment + "'");
    }
    apply_setting(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Applies a config text on top of `cfg`. `#` starts a comment.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (detail::trim(line).empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw config_error("cannot read config file '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    apply_config_text(cfg, buffer.str());
}

/// "# key = value" lines for every resolved key, in a fixed order.
inline std::string config_echo(const ExperimentConfig& cfg)
{
    std::string out;
    for (const auto& k : detail::config_keys()) {
        if (auto v = k.get(cfg)) {
            out += "# ";
            out += k.name;
            out += " = ";
            out += *v;
            out += '\n';
        }
    }
    return out;
}

/// Reads back the leading "# key = value" block of an output file.
inline ExperimentConfig config_from_echo(std::string_view csv)
{
    ExperimentConfig cfg;
    std::istringstream in{std::string(csv)};
    std::string line;
    while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
        apply_assignment(cfg, line.substr(2));
    }
    return cfg;
}

inline ExperimentConfig fig3_config(const std::string& side)
{
    ExperimentConfig cfg;
    cfg.final_time = 2.0;
    cfg.estimate_n = 1000;
    cfg.seed = 1;
    cfg.grid = GridKind::logsnr;
    cfg.t_points = 1000;
    if (side == "left") {
        cfg.mode = "fig3-left";
        for (int k = 0; k <= 6; ++k) {
            cfg.true_variances.push_back(std::pow(0.6, k));
        }
        cfg.true_variances.push_back(1e-10);
        cfg.true_variances.push_back(1e-10);
    } else if (side == "right") {
        cfg.mode = "fig3-right";
        cfg.true_variances = {10.0, 0.2, 0.2, 0.2, 0.0, 0.0};
        cfg.d0 = 4;
    } else {
        throw config_error("fig3: side must be left or right, got '" + side + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Inputs shared by every runner.

struct ResolvedInputs {
    NoiseSchedule schedule;
    Spectrum truth;
    Spectrum estimate;
    bool estimate_from_samples = false;
    bool estimate_was_sorted = true;
};

inline ResolvedInputs resolve_inputs(const ExperimentConfig& cfg)
{
    if (!(cfg.final_time > 0.0) || !std::isfinite(cfg.final_time)) {
        throw config_error("schedule.T: must be a positive finite number");
    }
    if (cfg.true_variances.empty()) {
        throw config_error("spectrum.true: at least one variance is required");
    }
    if (cfg.t_points < 2) {
        throw config_error("grid.t_points: must be >= 2");
    }
    auto spectrum = [](const std::vector<double>& v, SpectrumKind kind, const char* key) {
        try {
            return Spectrum(v, kind);
        } catch (const precondition_error& e) {
            throw config_error(std::string(key) + ": " + e.what());
        }
    };
    ResolvedInputs in{make_ou_schedule(cfg.final_time),
                      spectrum(cfg.true_variances, SpectrumKind::true_variances, "spectrum.true"),
                      spectrum(cfg.true_variances, SpectrumKind::estimated, "spectrum.true")};
    if (!cfg.estimated_variances.empty()) {
        if (cfg.estimated_variances.size() != cfg.true_variances.size()) {
            throw config_error("spectrum.estimated: length differs from spectrum.true");
        }
        in.estimate = spectrum(cfg.estimated_variances, SpectrumKind::estimated, "spectrum.estimated");
    } else if (cfg.estimate_n > 0) {
        SampleSet draws = sample_gaussian(GaussianModel::diagonal(in.truth), cfg.estimate_n, cfg.seed);
        SortedSpectrum sorted = empirical_variances(draws);
        in.estimate = sorted.spectrum;
        in.estimate_from_samples = true;
        // reordering inside a group of equal true variances is harmless
        in.estimate_was_sorted = true;
        for (std::size_t k = 0; k < sorted.permutation.size(); ++k) {
            in.estimate_was_sorted = in.estimate_was_sorted && in.truth[sorted.permutation[k]] == in.truth[k];
        }
    }
    const std::size_t D = in.truth.size();
    if (cfg.d0 > D) {
        throw config_error("stopping.d0: exceeds the spectrum length");
    }
    if (cfg.sim_dim > D) {
        throw config_error("sim.d: exceeds the spectrum length");
    }
    return in;
}

/// Backward-time grid, increasing. The logsnr grid is uniform in logSNR of
/// the forward time between T and T * 1e-4.
inline std::vector<double> backward_grid(const ExperimentConfig& cfg, const NoiseSchedule& s)
{
    const double T = s.final_time();
    const std::size_t P = cfg.t_points;
    std::vector<double> t(P);
    if (cfg.grid == GridKind::time) {
        for (std::size_t i = 0; i < P; ++i) {
            t[i] = i + 1 == P ? T : T * static_cast<double>(i) / static_cast<double>(P - 1);
        }
        return t;
    }
    const double lo = s.log_snr(T);
    const double hi = s.log_snr(T * 1e-4);
    for (std::size_t i = 0; i < P; ++i) {
        double forward;
        if (i == 0) {
            forward = T;
        } else if (i + 1 == P) {
            forward = T * 1e-4;
        } else {
            forward = s.time_from_log_snr(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(P - 1));
        }
        t[i] = T - forward;
    }
    return t;
}

/// logSNR of the noise level reached at backward time t (inf at t = T).
inline double backward_log_snr(const NoiseSchedule& s, double t)
{
    double forward = s.final_time() - t;
    return forward > 0.0 ? s.log_snr(forward) : std::numeric_limits<double>::infinity();
}

inline std::size_t resolved_d0(const ExperimentConfig& cfg, const Spectrum& truth)
{
    if (cfg.d0 > 0) {
        return cfg.d0;
    }
    std::size_t positive = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        positive += truth[i] > 0.0 ? 1 : 0;
    }
    if (positive == 0) {
        throw config_error("stopping.d0: spectrum.true has no positive variance");
    }
    return positive;
}

// ---------------------------------------------------------------------------
// CSV output

class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<std::string> cells)
    {
        if (cells.size() != columns_.size()) {
            throw std::logic_error("CsvTable: row width mismatch");
        }
        rows_.push_back(std::move(cells));
    }

    std::string render(const ExperimentConfig& cfg) const
    {
        std::string out = config_echo(cfg);
        append_row(out, columns_);
        for (const auto& r : rows_) {
            append_row(out, r);
        }
        return out;
    }

    std::size_t rows() const { return rows_.size(); }

  private:
    static void append_row(std::string& out, const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            out += i ? "," : "";
            out += cells[i];
        }
        out += '\n';
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }

inline std::filesystem::path write_output(const ExperimentConfig& cfg, const std::string& name,
                                          const std::string& content)
{
    std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw io_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    std::filesystem::path path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) {
        throw io_error("cannot write '" + path.string() + "'");
    }
    return path;
}

struct RunOutput {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> warnings;
};

namespace detail {

inline void note_estimate(const ResolvedInputs& in, RunOutput& out)
{
    if (in.estimate_from_samples && !in.estimate_was_sorted) {
        out.warnings.emplace_back("estimated variances needed sorting; component alignment with the true "
                                  "spectrum follows the sorted order");
    }
}

inline TimePartition reference_partition(const ResolvedInputs& in)
{
    return plugin_partition(in.schedule, in.truth, in.estimate);
}

/// Runs the plugin backward sampler on all D axes with snapshots at `times`.
inline BackwardResult simulate_curve(const ExperimentConfig& cfg, const ResolvedInputs& in,
                                     const std::vector<double>& times)
{
    SimConfig sim;
    sim.schedule = in.schedule;
    sim.steps = cfg.steps;
    sim.trajectories = cfg.trajectories;
    sim.seed = cfg.seed;
    sim.score = ScoreKind::plugin;
    sim.score_spectrum = in.estimate;
    sim.snapshot_times = times;
    return simulate_backward(sim);
}

/// Squared Frechet distance of the first d coordinates of a D x D
/// covariance (the rest zeroed) to diag(truth).
inline double truncated_frechet_sq(const Matrix& cov, std::size_t d, const Spectrum& truth)
{
    Matrix m = Matrix::Zero(cov.rows(), cov.cols());
    auto k = static_cast<Eigen::Index>(d);
    m.topLeftCorner(k, k) = cov.topLeftCorner(k, k);
    return frechet_sq_general(m, diagonal_matrix(truth.variances()));
}

struct CurveData {
    CsvTable table;
    double best_t = 0.0;
    std::size_t best_d = 1;
    double best_value = std::numeric_limits<double>::infinity();
};

inline CurveData build_curve(const ExperimentConfig& cfg, const ResolvedInputs& in)
{
    const std::size_t D = in.truth.size();
    std::vector<std::string> cols{"t", "logsnr"};
    for (std::size_t d = 1; d <= D; ++d) {
        cols.push_back("frechet_sq_d" + std::to_string(d));
    }
    cols.push_back("best_d");
    cols.push_back("partition_d");
    if (cfg.simulate) {
        cols.push_back("mc_t");
        for (std::size_t d = 1; d <= D; ++d) {
            cols.push_back("mc_frechet_sq_d" + std::to_string(d));
        }
    }
    CurveData data{CsvTable(cols)};
    const std::vector<double> grid = backward_grid(cfg, in.schedule);
    const TimePartition part = reference_partition(in);
    std::optional<BackwardResult> mc;
    if (cfg.simulate) {
        mc = simulate_curve(cfg, in, grid);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        std::vector<std::string> row{cell(t), cell(backward_log_snr(in.schedule, t))};
        std::size_t best = 1;
        double best_value = std::numeric_limits<double>::infinity();
        for (std::size_t d = 1; d <= D; ++d) {
            double v = projected_distance_sq(in.schedule, in.truth, in.estimate, d, t);
            row.push_back(cell(v));
            if (v < best_value) {
                best_value = v;
                best = d;
            }
            if (v < data.best_value) {
                data.best_value = v;
                data.best_d = d;
                data.best_t = t;
            }
        }
        row.push_back(cell(best));
        row.push_back(cell(optimal_dim_at(in.schedule, part, t)));
        if (mc) {
            const Snapshot& snap = mc->snapshots[i];
            row.push_back(cell(snap.time));
            for (std::size_t d = 1; d <= D; ++d) {
                row.push_back(cell(truncated_frechet_sq(snap.ambient_cov, d, in.truth)));
            }
        }
        data.table.add(std::move(row));
    }
    return data;
}

inline void add_partition_rows(CsvTable& table, const NoiseSchedule& s, const TimePartition& p)
{
    for (std::size_t i = 0; i < p.boundaries.size(); ++i) {
        double b = p.boundaries[i];
        table.add({cell(i + 1), cell(b), cell(backward_log_snr(s, b)), to_string(p.variant),
                   p.u ? cell(*p.u) : std::string()});
    }
}

inline CsvTable partition_table() { return CsvTable({"d", "boundary_time", "boundary_logsnr", "variant", "u"}); }

}  // namespace detail

/// Distance curves d -> d_F^2(P_d^T P_d X_t, X_0) over the time grid.
inline RunOutput run_curve(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    out.files.push_back(write_output(cfg, "curve.csv", detail::build_curve(cfg, in).table.render(cfg)));
    return out;
}

/// Exact and plugin partitions, plus both robust ones when robust.u is set.
inline RunOutput run_partition(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    CsvTable table = detail::partition_table();
    CsvTable summary({"key", "value"});
    TimePartition exact = exact_partition(in.schedule, in.truth);
    TimePartition plugin = plugin_partition(in.schedule, in.truth, in.estimate);
    detail::add_partition_rows(table, in.schedule, exact);
    detail::add_partition_rows(table, in.schedule, plugin);
    summary.add({"exact.well_ordered", cell(exact.well_ordered)});
    summary.add({"exact.spectrum_has_ties", cell(exact.spectrum_has_ties)});
    summary.add({"plugin.well_ordered", cell(plugin.well_ordered)});
    if (cfg.robust_u) {
        std::size_t n = cfg.robust_n > 0 ? cfg.robust_n : cfg.estimate_n;
        if (n == 0) {
            throw config_error("robust.n: sample size required for the robust partitions");
        }
        double eps = epsilon_u(n, in.truth.size(), *cfg.robust_u, cfg.c_univ);
        double s_sigma = s_of_sigma(cfg.s_from_estimate ? in.estimate : in.truth);
        RobustPartitions robust = robust_partition(in.schedule, in.estimate, s_sigma, eps, *cfg.robust_u);
        detail::add_partition_rows(table, in.schedule, robust.lower);
        detail::add_partition_rows(table, in.schedule, robust.upper);
        summary.add({"robust.eps_u", cell(eps)});
        summary.add({"robust.s_sigma", cell(s_sigma)});
        summary.add({"robust.interleaved", cell(robust.interleaved)});
    }
    out.files.push_back(write_output(cfg, "partition.csv", table.render(cfg)));
    out.files.push_back(write_output(cfg, "partition_summary.csv", summary.render(cfg)));
    return out;
}

/// Monotonicity test and optimal stopping offset for dimension d0.
inline RunOutput run_stopping(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    const std::size_t d0 = resolved_d0(cfg, in.truth);
    StoppingResult r = optimal_stopping_delta(in.schedule, in.truth, in.estimate, d0);
    const double T = in.schedule.final_time();
    CsvTable table({"d0", "condition_sum", "monotone", "bracketed", "a2_root", "delta", "stop_time", "stop_logsnr",
                    "frechet_sq_at_stop", "frechet_sq_at_T"});
    table.add({cell(d0), cell(r.condition_sum), cell(r.monotone), cell(r.bracketed), cell(r.a2_root), cell(r.delta),
               cell(r.stop_time), cell(backward_log_snr(in.schedule, r.stop_time)),
               cell(projected_distance_sq(in.schedule, in.truth, in.estimate, d0, r.stop_time)),
               cell(projected_distance_sq(in.schedule, in.truth, in.estimate, d0, T))});
    out.files.push_back(write_output(cfg, "stopping.csv", table.render(cfg)));
    return out;
}

/// d1, d2 and the exhaustive d_min for every cap in erm.C.
inline RunOutput run_erm(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    if (cfg.caps.empty()) {
        throw config_error("erm.C: at least one cap is required");
    }
    bool event = true;
    for (std::size_t k = 0; k < in.truth.size(); ++k) {
        event = event && std::abs(in.truth[k] - in.estimate[k]) <= in.truth[k];
    }
    CsvTable summary({"C", "d1", "d2", "d_min", "frechet_sq_min", "event_holds"});
    CsvTable table({"C", "d", "t_prime", "sqrt_V", "sigma", "frechet_sq"});
    for (double c : cfg.caps) {
        if (!(c > 1.0)) {
            throw config_error("erm.C: every cap must exceed 1, got " + format_double(c));
        }
        ScoreCap cap = std::isinf(c) ? ScoreCap::unbounded() : ScoreCap::at(c);
        ConstrainedScore cs(cap, in.estimate, in.schedule);
        DminResult r = d_min_search(cs, in.truth);
        auto [d1, d2] = d1_d2(in.truth, in.estimate, cap);
        summary.add({cell(c), cell(d1), cell(d2), cell(r.d_min), cell(r.frechet_sq[r.d_min - 1]), cell(event)});
        for (std::size_t d = 1; d <= in.truth.size(); ++d) {
            table.add({cell(c), cell(d), cell(cs.crossing[d - 1]), cell(std::sqrt(r.terminal_variance[d - 1])),
                       cell(in.truth.sigma(d - 1)), cell(r.frechet_sq[d - 1])});
        }
    }
    out.files.push_back(write_output(cfg, "erm.csv", summary.render(cfg)));
    out.files.push_back(write_output(cfg, "erm_distances.csv", table.render(cfg)));
    return out;
}

/// Monte-Carlo backward run with per-snapshot variances and distances.
inline RunOutput run_simulate(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    const double T = in.schedule.final_time();
    SimConfig sim;
    sim.schedule = in.schedule;
    sim.steps = cfg.steps;
    sim.trajectories = cfg.trajectories;
    sim.seed = cfg.seed;
    sim.score = cfg.score;
    sim.score_spectrum = cfg.score == ScoreKind::exact ? in.truth : in.estimate;
    if (cfg.score == ScoreKind::capped) {
        if (!(cfg.sim_cap > 1.0)) {
            throw config_error("sim.C: the cap must exceed 1");
        }
        sim.cap = std::isinf(cfg.sim_cap) ? ScoreCap::unbounded() : ScoreCap::at(cfg.sim_cap);
    }
    sim.projection_dim = cfg.sim_dim;
    sim.stop_time = cfg.stop_time;
    sim.standard_gaussian_start = cfg.standard_start;
    sim.exact_transitions = cfg.exact_transitions;
    sim.snapshot_times = cfg.snapshots;
    if (sim.snapshot_times.empty()) {
        sim.snapshot_times.push_back(cfg.stop_time.value_or(T));
    }
    BackwardResult r = simulate_backward(sim);
    const std::size_t D = in.truth.size();
    CsvTable snaps({"t", "component", "empirical_variance", "analytic_variance", "stderr"});
    CsvTable summary({"t", "empirical_frechet_sq", "closed_form_frechet_sq"});
    const Matrix target = diagonal_matrix(in.truth.variances());
    for (const Snapshot& s : r.snapshots) {
        std::vector<double> v = s.latent_variances();
        std::vector<double> analytic(D, 0.0);
        for (std::size_t c = 0; c < v.size(); ++c) {
            snaps.add({cell(s.time), cell(c + 1), cell(v[c]), cell(s.analytic[c]), cell(s.stderr_[c])});
            analytic[c] = s.analytic[c];
        }
        summary.add({cell(s.time), cell(frechet_sq_general(s.ambient_cov, target)),
                     cell(frechet_sq_diag(analytic, in.truth.variances()))});
    }
    out.files.push_back(write_output(cfg, "snapshots.csv", snaps.render(cfg)));
    out.files.push_back(write_output(cfg, "simulate_summary.csv", summary.render(cfg)));
    return out;
}

/// Curves, partitions and the global minimizer for one fig3 configuration.
inline RunOutput run_fig3(const ExperimentConfig& cfg)
{
    RunOutput out;
    ResolvedInputs in = resolve_inputs(cfg);
    detail::note_estimate(in, out);
    const std::string side = cfg.mode == "fig3-right" ? "right" : "left";
    const std::string prefix = "fig3_" + side + "_";

    detail::CurveData curve = detail::build_curve(cfg, in);
    out.files.push_back(write_output(cfg, prefix + "curve.csv", curve.table.render(cfg)));

    CsvTable table = detail::partition_table();
    detail::add_partition_rows(table, in.schedule, exact_partition(in.schedule, in.truth));
    TimePartition plugin = plugin_partition(in.schedule, in.truth, in.estimate);
    detail::add_partition_rows(table, in.schedule, plugin);
    out.files.push_back(write_output(cfg, prefix + "partition.csv", table.render(cfg)));

    CsvTable summary({"key", "value"});
    summary.add({"t_star", cell(curve.best_t)});
    summary.add({"logsnr_star", cell(backward_log_snr(in.schedule, curve.best_t))});
    summary.add({"d_star", cell(curve.best_d)});
    summary.add({"frechet_sq_star", cell(curve.best_value)});
    summary.add({"plugin.well_ordered", cell(plugin.well_ordered)});
    summary.add({"estimate.sorted_as_drawn", cell(in.estimate_was_sorted)});
    for (std::size_t k = 0; k < in.estimate.size(); ++k) {
        summary.add({"sigma_hat_sq_" + std::to_string(k + 1), cell(in.estimate[k])});
    }
    if (side == "right") {
        const std::size_t d0 = resolved_d0(cfg, in.truth);
        StoppingResult r = optimal_stopping_delta(in.schedule, in.truth, in.estimate, d0);
        summary.add({"d0", cell(d0)});
        summary.add({"delta_hat", cell(r.delta)});
        summary.add({"stop_time_hat", cell(r.stop_time)});
        summary.add({"condition_sum", cell(r.condition_sum)});
        summary.add({"monotone", cell(r.monotone)});
    }
    out.files.push_back(write_output(cfg, prefix + "summary.csv", summary.render(cfg)));
    return out;
}

inline RunOutput run_experiment(const ExperimentConfig& cfg)
{
    if (cfg.mode == "curve") {
        return run_curve(cfg);
    }
    if (cfg.mode == "partition") {
        return run_partition(cfg);
    }
    if (cfg.mode == "stopping") {
        return run_stopping(cfg);
    }
    if (cfg.mode == "erm") {
        return run_erm(cfg);
    }
    if (cfg.mode == "simulate") {
        return run_simulate(cfg);
    }
    if (cfg.mode == "fig3-left" || cfg.mode == "fig3-right") {
        return run_fig3(cfg);
    }
    throw config_error("mode: unknown mode '" + cfg.mode + "'");
}

}  // namespace gldm
