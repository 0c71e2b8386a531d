#pragma once

#include <vector>

namespace sas::analytic {

// Parameters of the closed-form threshold-detector model for pairwise
// correlated photon/phonon modes: N identical squeezed-pair modes with
// per-mode emission probability p_bar, detector efficiencies eta and
// pulse-synchronized noise-click probabilities q.
struct AnalyticParams {
    double p_bar = 0.0;
    int n_modes = 1;
    double eta_a = 1.0;
    double eta_b = 1.0;
    double q_a = 0.0;
    double q_b = 0.0;

    void validate() const;  // throws ConfigError out of range
};

// Probability that the Stokes-side threshold detector clicks in a pulse.
double stokes_click_prob(const AnalyticParams& p);

// Same for the anti-Stokes (phonon readout) side.
double antistokes_click_prob(const AnalyticParams& p);

// Joint click probability of the two detectors in the same pulse.
double coincidence_prob(const AnalyticParams& p);

// Normalized cross-correlation C_ab / (S_a S_b).
double cross_correlation(const AnalyticParams& p);

// Stokes auto-correlation measured behind a 50/50 splitter (each detector
// sees half the efficiency).
double stokes_autocorrelation(const AnalyticParams& p);

// Anti-Stokes auto-correlation conditioned on a Stokes click, single-mode
// model (n_modes is ignored).
double conditional_as_autocorrelation(const AnalyticParams& p);

// Emission probability per mode that keeps the total mean photon number
// p/(1-p) fixed while distributing it over n identical modes.
double fixed_mean_p_bar(double p, int n_modes);

double csi_ratio(double g_ab, double g_aa, double g_bb);
double max_bell_visibility(double g_ab);

// Bose-Einstein occupancy at angular frequency omega (rad/s) and
// temperature T (kelvin); zero at T = 0.
double thermal_occupancy(double omega_rad_s, double temperature_k);

// One detector/noise configuration of the readout beam.
struct ReadSetting {
    double p_stokes_read = 0.0;  // Stokes scattering probability of the read pulse
    double q_a = 0.0;            // Stokes-side noise clicks per pulse
    double q_b = 0.0;            // anti-Stokes-side noise clicks per pulse
};

struct SweepConfig {
    double eta = 0.07;      // overall collection/detection efficiency
    double alpha_r = 0.3;   // phonon->photon readout conversion factor
    double rep_rate_hz = 8.0e7;
    std::vector<double> stokes_rates_hz;
    std::vector<ReadSetting> read_settings;

    void validate() const;
};

struct SweepRow {
    int setting = 0;
    double p_bar = 0.0;
    double q_a = 0.0;
    double q_b = 0.0;
    double eta_a = 0.0;
    double eta_b = 0.0;
    double g_ab = 0.0;
    double g_cond = 0.0;  // conditional anti-Stokes auto-correlation bound
};

// Converts measured Stokes count rates into emission probabilities
// (p_bar = rate / (eta * rep_rate)) and evaluates the single-mode
// cross-correlation for every (rate, read setting) pair.
std::vector<SweepRow> power_sweep(const SweepConfig& sweep);

// Auto-correlation as a function of mode count at fixed mean photon number.
std::vector<double> mode_count_autocorrelation(double p, int n_max, double eta_a, double q_a);

}  // namespace sas::analytic
