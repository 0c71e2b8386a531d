#include "sas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sas/analytic.hpp"
#include "sas/counting.hpp"
#include "sas/csv.hpp"
#include "sas/errors.hpp"
#include "sas/fitting.hpp"
#include "sas/lindblad.hpp"

namespace sas::pipeline {

namespace fs = std::filesystem;
using config::ConfigFile;

namespace {

// Photonic noise scale reproducing the measured read-only emission split
// (four-wave-mixing 0.6e-4 out of 2.4e-4 total) at read amplitude 3.82.
constexpr double kCalibratedNoiseScale = 0.050162;

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

std::string out_path(const std::string& out_dir, const std::string& name) {
    return (fs::path(out_dir) / name).string();
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + out_dir);
}

ConfigFile load_config(const GlobalOptions& opts) {
    if (opts.config_path.empty()) return ConfigFile();
    return ConfigFile::parse_file(opts.config_path);
}

// [run] resolution shared by all commands.
struct RunSettings {
    std::string out_dir;
    std::uint64_t seed = 1;
    int threads = 0;
};

RunSettings resolve_run(const ConfigFile& cfg, const GlobalOptions& opts) {
    RunSettings run;
    run.out_dir = opts.out_dir_set ? opts.out_dir : cfg.get_string_or("run", "out_dir", opts.out_dir);
    run.seed = opts.seed_set ? opts.seed : cfg.get_uint_or("run", "seed", opts.seed);
    run.threads = opts.threads > 0 ? opts.threads
                                   : static_cast<int>(cfg.get_int_or("run", "threads", 0));
    return run;
}

void echo_run(ConfigFile& resolved, const RunSettings& run) {
    resolved.set("run", "out_dir", run.out_dir);
    resolved.set_uint("run", "seed", run.seed);
    resolved.set_int("run", "threads", run.threads);
}

const std::set<std::string> kRunKeys = {"out_dir", "seed", "threads"};

// ---------------------------------------------------------------- analytic

const std::set<std::string> kAnalyticKeys = {
    "eta",          "alpha_r",      "rep_rate_hz",     "q_a",
    "stokes_rates_hz", "read_p_stokes", "read_q_a",    "read_q_b",
    "mode_table_p", "mode_table_n_max"};

struct AnalyticSettings {
    analytic::SweepConfig sweep;
    double q_a = 6.25e-6;
    double mode_table_p = 1e-3;
    int mode_table_n_max = 10;
};

AnalyticSettings resolve_analytic(const ConfigFile& cfg) {
    AnalyticSettings s;
    s.sweep.eta = cfg.get_double_or("analytic", "eta", 0.07);
    s.sweep.alpha_r = cfg.get_double_or("analytic", "alpha_r", 0.3);
    s.sweep.rep_rate_hz = cfg.get_double_or("analytic", "rep_rate_hz", 8.0e7);
    s.q_a = cfg.get_double_or("analytic", "q_a", 6.25e-6);
    s.sweep.stokes_rates_hz = cfg.get_double_list_or(
        "analytic", "stokes_rates_hz",
        {1.0e2, 2.0e2, 4.0e2, 8.0e2, 1.6e3, 3.2e3, 6.4e3, 1.28e4, 2.4e4});
    const std::vector<double> p_read = cfg.get_double_list_or(
        "analytic", "read_p_stokes", {1.5e-3, 4.5e-3, 1.35e-2});
    const std::vector<double> q_b = cfg.get_double_list_or(
        "analytic", "read_q_b", {5.845e-8, 2.111e-7, 9.547e-7});
    const std::vector<double> q_a = cfg.get_double_list_or(
        "analytic", "read_q_a", std::vector<double>(p_read.size(), s.q_a));
    if (p_read.size() != q_b.size() || p_read.size() != q_a.size())
        throw ConfigError("analytic read_p_stokes, read_q_a and read_q_b differ in length");
    for (std::size_t i = 0; i < p_read.size(); ++i)
        s.sweep.read_settings.push_back({p_read[i], q_a[i], q_b[i]});
    s.mode_table_p = cfg.get_double_or("analytic", "mode_table_p", 1e-3);
    s.mode_table_n_max = static_cast<int>(cfg.get_int_or("analytic", "mode_table_n_max", 10));
    return s;
}

void echo_analytic(ConfigFile& resolved, const AnalyticSettings& s) {
    resolved.set_double("analytic", "eta", s.sweep.eta);
    resolved.set_double("analytic", "alpha_r", s.sweep.alpha_r);
    resolved.set_double("analytic", "rep_rate_hz", s.sweep.rep_rate_hz);
    resolved.set_double("analytic", "q_a", s.q_a);
    resolved.set_double_list("analytic", "stokes_rates_hz", s.sweep.stokes_rates_hz);
    std::vector<double> p_read, q_a, q_b;
    for (const auto& rs : s.sweep.read_settings) {
        p_read.push_back(rs.p_stokes_read);
        q_a.push_back(rs.q_a);
        q_b.push_back(rs.q_b);
    }
    resolved.set_double_list("analytic", "read_p_stokes", p_read);
    resolved.set_double_list("analytic", "read_q_a", q_a);
    resolved.set_double_list("analytic", "read_q_b", q_b);
    resolved.set_double("analytic", "mode_table_p", s.mode_table_p);
    resolved.set_int("analytic", "mode_table_n_max", s.mode_table_n_max);
}

void write_analytic_outputs(const std::string& out_dir, const AnalyticSettings& s) {
    const auto rows = analytic::power_sweep(s.sweep);

    csv::Table sweep_table;
    sweep_table.columns = {"p_bar", "q_a", "q_b", "eta_a", "eta_b", "g_ab", "g_aa_cond_bound"};
    csv::Table cond_table;
    cond_table.columns = {"p_bar", "q_a", "q_b", "eta_a", "eta_b", "g_bb_cond"};
    for (const auto& r : rows) {
        sweep_table.rows.push_back({r.p_bar, r.q_a, r.q_b, r.eta_a, r.eta_b, r.g_ab, r.g_cond});
        cond_table.rows.push_back({r.p_bar, r.q_a, r.q_b, r.eta_a, r.eta_b, r.g_cond});
    }
    csv::write_table(out_path(out_dir, "sweep.csv"), sweep_table);
    csv::write_table(out_path(out_dir, "conditional.csv"), cond_table);

    csv::Table mode_table;
    mode_table.columns = {"n_modes", "g_aa"};
    const auto g = analytic::mode_count_autocorrelation(s.mode_table_p, s.mode_table_n_max, 1.0,
                                                        0.0);
    for (std::size_t n = 0; n < g.size(); ++n)
        mode_table.rows.push_back({static_cast<double>(n + 1), g[n]});
    csv::write_table(out_path(out_dir, "mode_count.csv"), mode_table);
}

// ---------------------------------------------------------------- simulate

const std::set<std::string> kSimKeys = {
    "cutoff_s1",      "cutoff_s2",     "cutoff_as2",     "cutoff_phonon",
    "delta_s1_rad_ps", "delta_s2_rad_ps", "delta_as2_rad_ps", "omega_m_rad_ps",
    "lambda_rad_ps",  "lambda_s1_rad_ps", "lambda_s2_rad_ps", "lambda_as2_rad_ps",
    "write_amp",      "write_center_ps", "write_sigma_ps", "write_detuning_rad_ps",
    "read_amp",       "read_center_ps",  "read_sigma_ps",  "read_detuning_rad_ps",
    "tau_s1_ps",      "tau_s2_ps",       "tau_as2_ps",     "tau_m_ps",
    "gamma_two_pi",   "temperature_k",   "c1",             "c2",
    "n_th0",          "noise_scale_s1",  "noise_scale_as2",
    "dt_ps",          "t_start_ps",      "t_end_ps",       "snapshot_stride",
    "top_population_guard", "frame",     "parallel_kernels",
    "window_s1_ps",   "window_as2_ps",
    "emit_trajectory", "run_power_sweep", "run_delay_sweep",
    "write_amps",     "read_amps",       "delays_ps"};

struct SimSettings {
    lindblad::SimConfig sim;
    bool emit_trajectory = true;
    bool run_power_sweep = false;
    bool run_delay_sweep = false;
    std::vector<double> write_amps;
    std::vector<double> read_amps;
    std::vector<double> delays_ps;
};

lindblad::SimConfig sim_from(const ConfigFile& cfg, const lindblad::SimConfig& base) {
    lindblad::SimConfig sim = base;
    sim.cutoff_s1 = static_cast<int>(cfg.get_int_or("sim", "cutoff_s1", sim.cutoff_s1));
    sim.cutoff_s2 = static_cast<int>(cfg.get_int_or("sim", "cutoff_s2", sim.cutoff_s2));
    sim.cutoff_as2 = static_cast<int>(cfg.get_int_or("sim", "cutoff_as2", sim.cutoff_as2));
    sim.cutoff_phonon = static_cast<int>(cfg.get_int_or("sim", "cutoff_phonon", sim.cutoff_phonon));
    sim.delta_s1 = cfg.get_double_or("sim", "delta_s1_rad_ps", sim.delta_s1);
    sim.delta_s2 = cfg.get_double_or("sim", "delta_s2_rad_ps", sim.delta_s2);
    sim.delta_as2 = cfg.get_double_or("sim", "delta_as2_rad_ps", sim.delta_as2);
    sim.omega_m = cfg.get_double_or("sim", "omega_m_rad_ps", sim.omega_m);
    const double lambda_all = cfg.get_double_or("sim", "lambda_rad_ps", sim.lambda_s1);
    sim.lambda_s1 = cfg.get_double_or("sim", "lambda_s1_rad_ps", lambda_all);
    sim.lambda_s2 = cfg.get_double_or("sim", "lambda_s2_rad_ps", lambda_all);
    sim.lambda_as2 = cfg.get_double_or("sim", "lambda_as2_rad_ps", lambda_all);
    sim.write_pulse.amplitude = cfg.get_double_or("sim", "write_amp", sim.write_pulse.amplitude);
    sim.write_pulse.center_ps = cfg.get_double_or("sim", "write_center_ps", sim.write_pulse.center_ps);
    sim.write_pulse.width_ps = cfg.get_double_or("sim", "write_sigma_ps", sim.write_pulse.width_ps);
    sim.write_pulse.detuning_rad_ps =
        cfg.get_double_or("sim", "write_detuning_rad_ps", sim.write_pulse.detuning_rad_ps);
    sim.read_pulse.amplitude = cfg.get_double_or("sim", "read_amp", sim.read_pulse.amplitude);
    sim.read_pulse.center_ps = cfg.get_double_or("sim", "read_center_ps", sim.read_pulse.center_ps);
    sim.read_pulse.width_ps = cfg.get_double_or("sim", "read_sigma_ps", sim.read_pulse.width_ps);
    sim.read_pulse.detuning_rad_ps =
        cfg.get_double_or("sim", "read_detuning_rad_ps", sim.read_pulse.detuning_rad_ps);
    sim.tau_s1_ps = cfg.get_double_or("sim", "tau_s1_ps", sim.tau_s1_ps);
    sim.tau_s2_ps = cfg.get_double_or("sim", "tau_s2_ps", sim.tau_s2_ps);
    sim.tau_as2_ps = cfg.get_double_or("sim", "tau_as2_ps", sim.tau_as2_ps);
    sim.tau_m_ps = cfg.get_double_or("sim", "tau_m_ps", sim.tau_m_ps);
    sim.gamma_two_pi = cfg.get_bool_or("sim", "gamma_two_pi", sim.gamma_two_pi);
    sim.temperature_k = cfg.get_double_or("sim", "temperature_k", sim.temperature_k);
    sim.c1 = cfg.get_double_or("sim", "c1", sim.c1);
    sim.c2 = cfg.get_double_or("sim", "c2", sim.c2);
    sim.n_th0 = cfg.get_double_or("sim", "n_th0", sim.n_th0);
    sim.noise_scale_s1 = cfg.get_double_or("sim", "noise_scale_s1", sim.noise_scale_s1);
    sim.noise_scale_as2 = cfg.get_double_or("sim", "noise_scale_as2", sim.noise_scale_as2);
    sim.dt_ps = cfg.get_double_or("sim", "dt_ps", sim.dt_ps);
    sim.t_start_ps = cfg.get_double_or("sim", "t_start_ps", sim.t_start_ps);
    sim.t_end_ps = cfg.get_double_or("sim", "t_end_ps", sim.t_end_ps);
    sim.snapshot_stride =
        static_cast<int>(cfg.get_int_or("sim", "snapshot_stride", sim.snapshot_stride));
    sim.top_population_guard =
        cfg.get_double_or("sim", "top_population_guard", sim.top_population_guard);
    const std::string frame = cfg.get_string_or(
        "sim", "frame", sim.frame == lindblad::Frame::kPerMode ? "per_mode" : "omega0");
    if (frame == "per_mode")
        sim.frame = lindblad::Frame::kPerMode;
    else if (frame == "omega0")
        sim.frame = lindblad::Frame::kOmega0;
    else
        throw ConfigError("sim.frame must be per_mode or omega0");
    sim.parallel_kernels = cfg.get_bool_or("sim", "parallel_kernels", sim.parallel_kernels);
    sim.window_s1_ps = cfg.get_double_or("sim", "window_s1_ps", sim.window_s1_ps);
    sim.window_as2_ps = cfg.get_double_or("sim", "window_as2_ps", sim.window_as2_ps);
    return sim;
}

SimSettings resolve_simulate(const ConfigFile& cfg) {
    SimSettings s;
    s.sim = sim_from(cfg, lindblad::SimConfig::defaults());
    s.emit_trajectory = cfg.get_bool_or("sim", "emit_trajectory", true);
    s.run_power_sweep = cfg.get_bool_or("sim", "run_power_sweep", cfg.has("sim", "write_amps"));
    s.run_delay_sweep = cfg.get_bool_or("sim", "run_delay_sweep", cfg.has("sim", "delays_ps"));
    s.write_amps = cfg.get_double_list_or("sim", "write_amps",
                                          {0.003, 0.01, 0.04, 0.15, 0.5, 1.7, 4.5});
    s.read_amps = cfg.get_double_list_or("sim", "read_amps", {1.5, 3.0, 6.0});
    s.delays_ps = cfg.get_double_list_or(
        "sim", "delays_ps", {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0});
    return s;
}

void echo_sim(ConfigFile& r, const SimSettings& s) {
    const auto& sim = s.sim;
    r.set_int("sim", "cutoff_s1", sim.cutoff_s1);
    r.set_int("sim", "cutoff_s2", sim.cutoff_s2);
    r.set_int("sim", "cutoff_as2", sim.cutoff_as2);
    r.set_int("sim", "cutoff_phonon", sim.cutoff_phonon);
    r.set_double("sim", "delta_s1_rad_ps", sim.delta_s1);
    r.set_double("sim", "delta_s2_rad_ps", sim.delta_s2);
    r.set_double("sim", "delta_as2_rad_ps", sim.delta_as2);
    r.set_double("sim", "omega_m_rad_ps", sim.omega_m);
    r.set_double("sim", "lambda_s1_rad_ps", sim.lambda_s1);
    r.set_double("sim", "lambda_s2_rad_ps", sim.lambda_s2);
    r.set_double("sim", "lambda_as2_rad_ps", sim.lambda_as2);
    r.set_double("sim", "write_amp", sim.write_pulse.amplitude);
    r.set_double("sim", "write_center_ps", sim.write_pulse.center_ps);
    r.set_double("sim", "write_sigma_ps", sim.write_pulse.width_ps);
    r.set_double("sim", "write_detuning_rad_ps", sim.write_pulse.detuning_rad_ps);
    r.set_double("sim", "read_amp", sim.read_pulse.amplitude);
    r.set_double("sim", "read_center_ps", sim.read_pulse.center_ps);
    r.set_double("sim", "read_sigma_ps", sim.read_pulse.width_ps);
    r.set_double("sim", "read_detuning_rad_ps", sim.read_pulse.detuning_rad_ps);
    r.set_double("sim", "tau_s1_ps", sim.tau_s1_ps);
    r.set_double("sim", "tau_s2_ps", sim.tau_s2_ps);
    r.set_double("sim", "tau_as2_ps", sim.tau_as2_ps);
    r.set_double("sim", "tau_m_ps", sim.tau_m_ps);
    r.set_bool("sim", "gamma_two_pi", sim.gamma_two_pi);
    r.set_double("sim", "temperature_k", sim.temperature_k);
    r.set_double("sim", "c1", sim.c1);
    r.set_double("sim", "c2", sim.c2);
    r.set_double("sim", "n_th0", sim.n_th0);
    r.set_double("sim", "noise_scale_s1", sim.noise_scale_s1);
    r.set_double("sim", "noise_scale_as2", sim.noise_scale_as2);
    r.set_double("sim", "dt_ps", sim.dt_ps);
    r.set_double("sim", "t_start_ps", sim.t_start_ps);
    r.set_double("sim", "t_end_ps", sim.t_end_ps);
    r.set_int("sim", "snapshot_stride", sim.snapshot_stride);
    r.set_double("sim", "top_population_guard", sim.top_population_guard);
    r.set("sim", "frame", sim.frame == lindblad::Frame::kPerMode ? "per_mode" : "omega0");
    r.set_bool("sim", "parallel_kernels", sim.parallel_kernels);
    r.set_double("sim", "window_s1_ps", sim.window_s1_ps);
    r.set_double("sim", "window_as2_ps", sim.window_as2_ps);
    r.set_bool("sim", "emit_trajectory", s.emit_trajectory);
    r.set_bool("sim", "run_power_sweep", s.run_power_sweep);
    r.set_bool("sim", "run_delay_sweep", s.run_delay_sweep);
    r.set_double_list("sim", "write_amps", s.write_amps);
    r.set_double_list("sim", "read_amps", s.read_amps);
    r.set_double_list("sim", "delays_ps", s.delays_ps);
}

void write_trajectory_csv(const std::string& path, const lindblad::Trajectory& traj) {
    csv::Table table;
    table.columns = {"time_ps", "n_s1", "n_s2", "n_as2", "n_phonon"};
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        table.rows.push_back({traj.times[k], traj.occupancies[k][0], traj.occupancies[k][1],
                              traj.occupancies[k][2], traj.occupancies[k][3]});
    csv::write_table(path, table);
}

void write_sweep_csv(const std::string& path, const std::vector<lindblad::SweepRow>& rows) {
    csv::Table table;
    table.columns = {"a1", "a2", "n_s1", "g2"};
    for (const auto& row : rows)
        table.rows.push_back({row.write_amplitude, row.read_amplitude, row.n_s1, row.g2});
    csv::write_table(path, table);
}

// ---------------------------------------------------------------- counts

const std::set<std::string> kCountsKeys = {
    "p_s",        "p_as",          "p_joint",        "p_bar",
    "eta_a",      "eta_b",         "q_a",            "q_b",
    "rep_period_ns", "n_reps",     "bin_width_ns",   "window_periods",
    "analysis_bin_ns", "n_side_peaks", "dark_floor_subtraction",
    "emit_events", "crosstalk_p_s", "crosstalk_p_as", "crosstalk_p_joint"};

struct CountsSettings {
    counting::ClickModel model;
    double bin_width_ns = 0.512;
    int window_periods = 27;
    double analysis_bin_ns = 1.536;
    int n_side_peaks = 25;
    bool dark_floor_subtraction = false;
    bool emit_events = false;
    bool crosstalk = false;
    counting::ClickModel crosstalk_model;
};

CountsSettings resolve_counts(const ConfigFile& cfg, std::uint64_t seed) {
    CountsSettings s;
    if (cfg.has("counts", "p_s")) {
        s.model.p_s = cfg.get_double("counts", "p_s");
        s.model.p_as = cfg.get_double("counts", "p_as");
        s.model.p_joint = cfg.get_double("counts", "p_joint");
    } else {
        // Derive the click triple from the closed-form detector model.
        analytic::AnalyticParams params;
        params.p_bar = cfg.get_double_or("counts", "p_bar", 4.2857142857142855e-3);
        params.eta_a = cfg.get_double_or("counts", "eta_a", 0.07);
        params.eta_b = cfg.get_double_or("counts", "eta_b", 9.45e-5);
        params.q_a = cfg.get_double_or("counts", "q_a", 6.25e-6);
        params.q_b = cfg.get_double_or("counts", "q_b", 2.111e-7);
        s.model.p_s = analytic::stokes_click_prob(params);
        s.model.p_as = analytic::antistokes_click_prob(params);
        s.model.p_joint = analytic::coincidence_prob(params);
    }
    s.model.rep_period_ns = cfg.get_double_or("counts", "rep_period_ns", 12.5);
    s.model.n_reps = cfg.get_uint_or("counts", "n_reps", 96000000000ULL);
    s.model.seed = seed;
    s.bin_width_ns = cfg.get_double_or("counts", "bin_width_ns", 0.512);
    s.window_periods = static_cast<int>(cfg.get_int_or("counts", "window_periods", 27));
    s.analysis_bin_ns = cfg.get_double_or("counts", "analysis_bin_ns", 1.536);
    s.n_side_peaks = static_cast<int>(cfg.get_int_or("counts", "n_side_peaks", 25));
    s.dark_floor_subtraction = cfg.get_bool_or("counts", "dark_floor_subtraction", false);
    s.emit_events = cfg.get_bool_or("counts", "emit_events", false);
    if (cfg.has("counts", "crosstalk_p_s")) {
        s.crosstalk = true;
        s.crosstalk_model = s.model;
        s.crosstalk_model.p_s = cfg.get_double("counts", "crosstalk_p_s");
        s.crosstalk_model.p_as = cfg.get_double("counts", "crosstalk_p_as");
        s.crosstalk_model.p_joint = cfg.get_double_or("counts", "crosstalk_p_joint",
                                                      s.crosstalk_model.p_s *
                                                          s.crosstalk_model.p_as);
        s.crosstalk_model.seed = seed + 1;
    }
    return s;
}

void echo_counts(ConfigFile& r, const CountsSettings& s) {
    r.set_double("counts", "p_s", s.model.p_s);
    r.set_double("counts", "p_as", s.model.p_as);
    r.set_double("counts", "p_joint", s.model.p_joint);
    r.set_double("counts", "rep_period_ns", s.model.rep_period_ns);
    r.set_uint("counts", "n_reps", s.model.n_reps);
    r.set_double("counts", "bin_width_ns", s.bin_width_ns);
    r.set_int("counts", "window_periods", s.window_periods);
    r.set_double("counts", "analysis_bin_ns", s.analysis_bin_ns);
    r.set_int("counts", "n_side_peaks", s.n_side_peaks);
    r.set_bool("counts", "dark_floor_subtraction", s.dark_floor_subtraction);
    r.set_bool("counts", "emit_events", s.emit_events);
    if (s.crosstalk) {
        r.set_double("counts", "crosstalk_p_s", s.crosstalk_model.p_s);
        r.set_double("counts", "crosstalk_p_as", s.crosstalk_model.p_as);
        r.set_double("counts", "crosstalk_p_joint", s.crosstalk_model.p_joint);
    }
}

// ---------------------------------------------------------------- fit

const std::set<std::string> kFitKeys = {"input_csv",        "fixed_sigma_ps", "fixed_c",
                                        "weighted",         "bootstrap_ci",   "bootstrap_samples",
                                        "normalize"};

struct FitSettings {
    std::vector<std::string> inputs;
    fitting::FitOptions options;
    bool normalize = false;
};

FitSettings resolve_fit(const ConfigFile& cfg, const std::vector<std::string>& curve_files,
                        std::uint64_t seed) {
    FitSettings s;
    s.inputs = curve_files;
    if (s.inputs.empty() && cfg.has("fit", "input_csv"))
        s.inputs.push_back(cfg.get_string("fit", "input_csv"));
    s.options.fixed_sigma_ps = cfg.get_double_or("fit", "fixed_sigma_ps", 0.22);
    s.options.fixed_c = cfg.get_double_or("fit", "fixed_c", 1.0);
    s.options.weighted = cfg.get_bool_or("fit", "weighted", true);
    s.options.bootstrap_ci = cfg.get_bool_or("fit", "bootstrap_ci", false);
    s.options.bootstrap_samples =
        static_cast<int>(cfg.get_int_or("fit", "bootstrap_samples", 200));
    s.options.bootstrap_seed = seed;
    s.normalize = cfg.get_bool_or("fit", "normalize", false);
    return s;
}

void echo_fit(ConfigFile& r, const FitSettings& s) {
    if (!s.inputs.empty()) r.set("fit", "input_csv", s.inputs.front());
    r.set_double("fit", "fixed_sigma_ps", s.options.fixed_sigma_ps);
    r.set_double("fit", "fixed_c", s.options.fixed_c);
    r.set_bool("fit", "weighted", s.options.weighted);
    r.set_bool("fit", "bootstrap_ci", s.options.bootstrap_ci);
    r.set_int("fit", "bootstrap_samples", s.options.bootstrap_samples);
    r.set_bool("fit", "normalize", s.normalize);
}

std::map<std::string, std::set<std::string>> full_schema() {
    return {{"run", kRunKeys},
            {"analytic", kAnalyticKeys},
            {"sim", kSimKeys},
            {"counts", kCountsKeys},
            {"fit", kFitKeys}};
}

}  // namespace

void cmd_analytic(const GlobalOptions& opts) {
    const ConfigFile cfg = load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const AnalyticSettings settings = resolve_analytic(cfg);
    settings.sweep.validate();

    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_analytic(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));
    write_analytic_outputs(run.out_dir, settings);
}

void cmd_simulate(const GlobalOptions& opts) {
    const ConfigFile cfg = load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const SimSettings settings = resolve_simulate(cfg);
    settings.sim.validate();

    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_sim(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));

    if (settings.emit_trajectory) {
        const lindblad::Trajectory traj = lindblad::evolve(settings.sim);
        write_trajectory_csv(out_path(run.out_dir, "trajectory.csv"), traj);
    }
    if (settings.run_power_sweep) {
        const auto rows =
            lindblad::g2_power_sweep(settings.sim, settings.write_amps, settings.read_amps);
        write_sweep_csv(out_path(run.out_dir, "power_sweep.csv"), rows);
    }
    if (settings.run_delay_sweep) {
        const auto curve = lindblad::delay_sweep_g2(settings.sim, settings.delays_ps);
        csv::write_delay_curve(out_path(run.out_dir, "delay_curve.csv"), curve);
    }
}

void cmd_counts(const GlobalOptions& opts) {
    const ConfigFile cfg = load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const CountsSettings settings = resolve_counts(cfg, run.seed);
    settings.model.validate();

    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_counts(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));

    counting::CoincidenceHistogram hist =
        counting::simulate_histogram(settings.model, settings.bin_width_ns, settings.window_periods);
    if (settings.crosstalk) {
        const counting::CoincidenceHistogram write_only = counting::simulate_histogram(
            settings.crosstalk_model, settings.bin_width_ns, settings.window_periods);
        csv::write_histogram(out_path(run.out_dir, "histogram_write_only.csv"), write_only);
        hist = counting::subtract_crosstalk(hist, write_only);
    }
    csv::write_histogram(out_path(run.out_dir, "histogram.csv"), hist);

    const counting::G2Estimate est = counting::extract_g2(
        hist, settings.analysis_bin_ns, settings.n_side_peaks, settings.dark_floor_subtraction);
    std::ofstream g2_out(out_path(run.out_dir, "g2.txt"));
    g2_out << "g2 = " << csv::format_double(est.g2) << "\n"
           << "delta_g2 = " << csv::format_double(est.delta_g2) << "\n"
           << "central_area = " << csv::format_double(est.central_area) << "\n"
           << "side_mean = " << csv::format_double(est.side_mean) << "\n"
           << "side_stddev = " << csv::format_double(est.side_stddev) << "\n"
           << "n_side_peaks = " << est.n_side_peaks << "\n";

    if (settings.emit_events) {
        if (settings.model.n_reps > 100000000ULL)
            throw ConfigError("emit_events requires n_reps <= 1e8");
        csv::write_events(out_path(run.out_dir, "events.csv"),
                          counting::simulate_clicks(settings.model));
    }
}

void cmd_fit(const GlobalOptions& opts, const std::vector<std::string>& curve_files) {
    const ConfigFile cfg = load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const FitSettings settings = resolve_fit(cfg, curve_files, run.seed);
    if (settings.inputs.empty())
        throw ConfigError("fit: no input curve (pass files or set fit.input_csv)");

    // Read and fit everything before any output is written.
    std::vector<fitting::DelayCurve> curves;
    std::vector<fitting::FitResult> results;
    for (const auto& path : settings.inputs) {
        fitting::DelayCurve curve = csv::read_delay_curve(path);
        curves.push_back(curve);
        results.push_back(fitting::fit_decay(curve, settings.options));
    }

    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_fit(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));

    csv::Table result_table;
    result_table.columns = {"curve",  "c",          "a",          "sigma_ps",
                            "t0_ps",  "tau_ps",     "tau_ci95_lo_ps", "tau_ci95_hi_ps",
                            "residual_norm"};
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& fit = results[k];
        const std::string stem = fs::path(settings.inputs[k]).stem().string();
        std::ofstream block(out_path(run.out_dir, "fit_" + stem + ".txt"));
        block << fit.to_key_value_block();
        result_table.rows.push_back({static_cast<double>(k), fit.c, fit.a, fit.sigma, fit.t0,
                                     fit.tau, fit.tau_ci_lo, fit.tau_ci_hi, fit.residual_norm});

        csv::Table residuals;
        residuals.columns = {"delay_ps", "g2", "model", "residual"};
        for (const auto& pt : curves[k].points) {
            const double model = fitting::exp_gauss_model(pt.delay_ps, fit.c, fit.a, fit.sigma,
                                                          fit.t0, fit.tau);
            residuals.rows.push_back({pt.delay_ps, pt.g2, model, pt.g2 - model});
        }
        csv::write_table(out_path(run.out_dir, "residuals_" + stem + ".csv"), residuals);

        if (settings.normalize) {
            const fitting::DelayCurve norm =
                fitting::normalize_curve(curves[k], settings.options);
            csv::write_delay_curve(out_path(run.out_dir, "normalized_" + stem + ".csv"), norm);
        }
    }
    csv::write_table(out_path(run.out_dir, "fit_results.csv"), result_table);
}

namespace {

struct Report {
    std::vector<std::string> lines;
    bool all_pass = true;

    void check(bool pass, const std::string& what) {
        lines.push_back(std::string(pass ? "PASS" : "FAIL") + "  " + what);
        all_pass = all_pass && pass;
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        for (const auto& line : lines) out << line << "\n";
        out << (all_pass ? "RESULT pass" : "RESULT fail") << "\n";
    }
};

void reproduce_fig3c(const GlobalOptions& opts) {
    GlobalOptions sub = opts;
    cmd_analytic(sub);

    const AnalyticSettings settings = resolve_analytic(load_config(opts));
    const auto rows = analytic::power_sweep(settings.sweep);
    const std::size_t n_rates = settings.sweep.stokes_rates_hz.size();
    const std::size_t n_settings = settings.sweep.read_settings.size();

    Report report;
    // Correlation falls monotonically with write power above the plateau.
    std::vector<double> plateau(n_settings, 0.0);
    bool decreasing = true;
    for (std::size_t s = 0; s < n_settings; ++s) {
        std::size_t peak = 0;
        for (std::size_t k = 0; k < n_rates; ++k)
            if (rows[s * n_rates + k].g_ab > rows[s * n_rates + peak].g_ab) peak = k;
        plateau[s] = rows[s * n_rates + peak].g_ab;
        for (std::size_t k = peak; k + 1 < n_rates; ++k)
            decreasing = decreasing &&
                         rows[s * n_rates + k + 1].g_ab < rows[s * n_rates + k].g_ab;
    }
    report.check(decreasing, "g_ab decreases with p_bar above the plateau");

    // Plateau heights order inversely with the read-side noise.
    bool ordered = true;
    for (std::size_t s = 0; s + 1 < n_settings; ++s)
        ordered = ordered && plateau[s] > plateau[s + 1];
    report.check(ordered, "plateau heights order inversely with read noise");

    bool cond_ok = true;
    for (const auto& row : rows) cond_ok = cond_ok && row.g_cond < 0.1;
    report.check(cond_ok, "conditional anti-Stokes autocorrelation stays below 0.1");

    report.write(out_path(resolve_run(load_config(opts), opts).out_dir, "report.txt"));
    if (!report.all_pass) throw AcceptanceError("fig3c reproduction failed; see report.txt");
}

ConfigFile fig5_builtin_config() {
    ConfigFile cfg;
    cfg.set_double("sim", "top_population_guard", 0.05);
    cfg.set_double("sim", "n_th0", kCalibratedNoiseScale);
    cfg.set_bool("sim", "emit_trajectory", false);
    cfg.set_bool("sim", "run_power_sweep", true);
    cfg.set_double_list("sim", "write_amps", {0.003, 0.01, 0.04, 0.15, 0.5, 1.7, 4.5});
    cfg.set_double_list("sim", "read_amps", {1.5, 3.0, 6.0});
    return cfg;
}

void reproduce_fig5(const GlobalOptions& opts) {
    ConfigFile cfg = opts.config_path.empty() ? fig5_builtin_config() : load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const SimSettings settings = resolve_simulate(cfg);

    const auto rows =
        lindblad::g2_power_sweep(settings.sim, settings.write_amps, settings.read_amps);
    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_sim(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));
    write_sweep_csv(out_path(run.out_dir, "power_sweep.csv"), rows);

    Report report;
    const double ceiling = 1.0 / settings.sim.phonon_thermal_occupancy();
    bool below = true;
    for (const auto& row : rows) below = below && row.g2 < ceiling;
    report.check(below, "every g2 stays below the thermal ceiling 1/n_th");

    // Dark-count downturn at the lowest write power of the lowest read row.
    const std::size_t n_write = settings.write_amps.size();
    double row_max = 0.0;
    for (std::size_t k = 0; k < n_write; ++k) row_max = std::max(row_max, rows[k].g2);
    report.check(rows[0].g2 < 0.9 * row_max,
                 "correlation turns down at the lowest write power");

    report.write(out_path(run.out_dir, "report.txt"));
    if (!report.all_pass) throw AcceptanceError("fig5 reproduction failed; see report.txt");
}

ConfigFile decay_builtin_config() {
    ConfigFile cfg;
    cfg.set_double("sim", "write_amp", 0.2);
    cfg.set_double("sim", "read_amp", 3.0);
    cfg.set_double("sim", "n_th0", kCalibratedNoiseScale);
    cfg.set_double("sim", "top_population_guard", 0.05);
    cfg.set_bool("sim", "emit_trajectory", false);
    cfg.set_bool("sim", "run_delay_sweep", true);
    return cfg;
}

void reproduce_decay(const GlobalOptions& opts) {
    ConfigFile cfg = opts.config_path.empty() ? decay_builtin_config() : load_config(opts);
    cfg.reject_unknown(full_schema());
    const RunSettings run = resolve_run(cfg, opts);
    apply_threads(run.threads);
    const SimSettings settings = resolve_simulate(cfg);

    const fitting::DelayCurve curve =
        lindblad::delay_sweep_g2(settings.sim, settings.delays_ps);
    fitting::FitOptions fit_options;
    const fitting::FitResult fit = fitting::fit_decay(curve, fit_options);

    ensure_out_dir(run.out_dir);
    ConfigFile resolved;
    echo_run(resolved, run);
    echo_sim(resolved, settings);
    resolved.write_file(out_path(run.out_dir, "manifest.cfg"));
    csv::write_delay_curve(out_path(run.out_dir, "delay_curve.csv"), curve);
    std::ofstream block(out_path(run.out_dir, "fit_result.txt"));
    block << fit.to_key_value_block();

    Report report;
    const double target = settings.sim.tau_m_ps;
    report.check(std::abs(fit.tau - target) <= 0.1 * target,
                 "fitted decay constant matches the phonon lifetime within 10 %");
    report.write(out_path(run.out_dir, "report.txt"));
    if (!report.all_pass) throw AcceptanceError("decay reproduction failed; see report.txt");
}

}  // namespace

void cmd_reproduce(const std::string& target, const GlobalOptions& opts) {
    apply_threads(opts.threads);
    if (target == "fig3c")
        reproduce_fig3c(opts);
    else if (target == "fig5")
        reproduce_fig5(opts);
    else if (target == "decay")
        reproduce_decay(opts);
    else
        throw ConfigError("unknown reproduce target '" + target +
                          "' (expected fig3c, fig5 or decay)");
}

}  // namespace sas::pipeline
