#pragma once

#include <array>
#include <complex>
#include <string_view>
#include <vector>

#include "sas/fitting.hpp"
#include "sas/fock.hpp"

namespace sas::lindblad {

using Complex = std::complex<double>;

struct PulseParams {
    double amplitude = 0.0;        // A, model units
    double center_ps = 0.0;        // t0
    double width_ps = 0.2;         // sigma_t
    double detuning_rad_ps = 0.0;  // Delta_L = omega_L - omega_0

    void validate() const;
};

// A exp(-(t-t0)^2 / (2 sigma^2)) exp(-i Delta_L t)
Complex pulse_amplitude(const PulseParams& pulse, double t);

// Real Gaussian envelope |alpha(t)|.
double pulse_envelope(const PulseParams& pulse, double t);

// Pump-induced photonic bath occupancy n_th0 (c2 A(t)^4 + c1); the quartic
// term models the quadratic-in-power broadband four-wave-mixing floor, the
// constant term the detector dark counts.
double noise_occupancy(const PulseParams& pulse, double t, double c1, double c2, double n_th0);

// Frame of the integration. kOmega0 keeps the photon detunings explicit in
// the Hamiltonian; kPerMode absorbs them into the operators, which removes
// the fast phase rotation and lets the integrator take coarse steps. Mode
// occupancies and the number-type correlators are identical in both frames.
enum class Frame { kPerMode, kOmega0 };

// Mode order of the four-mode model.
inline constexpr int kModeS1 = 0;
inline constexpr int kModeS2 = 1;
inline constexpr int kModeAs2 = 2;
inline constexpr int kModePhonon = 3;
inline constexpr std::array<const char*, 4> kModeNames = {"S1", "S2", "aS2", "phonon"};

struct SimConfig {
    int cutoff_s1 = 3;
    int cutoff_s2 = 3;
    int cutoff_as2 = 3;
    int cutoff_phonon = 4;

    double delta_s1 = 0.0;   // rad/ps
    double delta_s2 = 0.0;   // rad/ps
    double delta_as2 = 0.0;  // rad/ps
    double omega_m = 0.0;    // rad/ps

    double lambda_s1 = 1.0;  // rad/ps per unit pulse amplitude
    double lambda_s2 = 1.0;
    double lambda_as2 = 1.0;

    PulseParams write_pulse;
    PulseParams read_pulse;

    double tau_s1_ps = 0.2;
    double tau_s2_ps = 0.2;
    double tau_as2_ps = 0.2;
    double tau_m_ps = 4.0;
    // Decay-rate convention: gamma = 1/tau by default, so tau_m is the 1/e
    // population lifetime that the delay sweep recovers. Set to true for
    // gamma = 2*pi/tau.
    bool gamma_two_pi = false;

    double temperature_k = 300.0;

    double c1 = 1e-6;
    double c2 = 4.5e-6;
    double n_th0 = 0.0;  // photonic noise scale; defaults() sets the phonon occupancy
    double noise_scale_s1 = 1.0;   // per-channel multiplier on the photonic bath
    double noise_scale_as2 = 1.0;

    double dt_ps = 0.01;
    double t_start_ps = 0.0;
    double t_end_ps = 0.0;  // <= t_start: auto, read center + 2.5 ps
    int snapshot_stride = 10;
    double top_population_guard = 1e-4;
    Frame frame = Frame::kPerMode;
    bool parallel_kernels = false;  // OpenMP over matrix rows inside the RHS

    // 0 = sample the correlator at the occupancy peaks; > 0 integrates
    // numerator and denominator over windows of this width around them.
    double window_s1_ps = 0.0;
    double window_as2_ps = 0.0;

    double gamma_s1() const;
    double gamma_s2() const;
    double gamma_as2() const;
    double gamma_m() const;
    double phonon_thermal_occupancy() const;  // Bose-Einstein at omega_m, T
    double end_time() const;
    fock::ModeLayout layout() const;
    void validate() const;

    // Two-color pump-probe defaults: 0.2 ps pulses at +-275 rad/ps around
    // the mean laser frequency, 2*pi*40 THz phonon, 4 ps phonon lifetime,
    // room temperature.
    static SimConfig defaults();
};

// Four-mode Hamiltonian at time t: free detuning part plus the two-mode
// squeezing (write and read Stokes) and beam-splitter (read anti-Stokes)
// interactions. In the kPerMode frame the free part is absorbed and only
// slow envelopes remain.
fock::Operator build_hamiltonian(const SimConfig& config, double t,
                                 Frame frame = Frame::kOmega0);

// Flat row-major complex matrix used by the integrator hot path.
struct StateMatrix {
    int dim = 0;
    std::vector<Complex> data;

    StateMatrix() = default;
    explicit StateMatrix(int d) : dim(d), data(static_cast<std::size_t>(d) * d) {}

    Complex& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim + j]; }
    const Complex& at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim + j]; }
    Complex trace() const;

    static StateMatrix from_eigen(const fock::Matrix& m);
    fock::Matrix to_eigen() const;
};

// Right-hand side and RK4 stepping of the master equation, specialized to
// the four-mode layout. Not thread safe; sweep workers build their own.
class Propagator {
  public:
    explicit Propagator(const SimConfig& config);

    const fock::ModeLayout& layout() const { return layout_; }
    const SimConfig& config() const { return config_; }

    void rhs(const StateMatrix& state, double t, StateMatrix& out) const;
    void step(StateMatrix& state, double t, double dt) const;

    // Integrates with the configured step; the final partial step lands
    // exactly on t_to.
    void propagate(StateMatrix& state, double t_from, double t_to) const;

    double occupancy(const StateMatrix& state, int mode) const;

    // a_m state a_m^dagger, the herald sandwich of the regression formula.
    StateMatrix lowering_sandwich(const StateMatrix& state, int mode) const;

    StateMatrix initial_state() const;  // vacuum photons, thermal phonon

  private:
    struct InteractionTerm {
        int offset = 0;
        double lambda = 0.0;
        double residual_phase = 0.0;  // rad/ps, zero when resonant
        int pulse = 0;                // 0 = write, 1 = read
        std::vector<double> weight;   // w[i] = <i|T|i-offset>
    };

    Complex term_coefficient(const InteractionTerm& term, double t) const;
    std::array<double, 4> bath_occupancies(double t) const;

    SimConfig config_;
    fock::ModeLayout layout_;
    int dim_ = 0;
    std::vector<InteractionTerm> terms_;
    std::array<std::vector<double>, 4> level_;      // Fock level per basis index
    std::array<std::vector<double>, 4> sqrt_up_;    // sqrt(level+1), 0 at the top
    std::array<std::vector<double>, 4> sqrt_down_;  // sqrt(level)
    std::array<std::vector<double>, 4> aadag_;      // truncated a a+ diagonal
    std::array<int, 4> stride_ = {};
    std::array<double, 4> gamma_ = {};
    std::vector<double> free_diag_;  // detuning diagonal (kOmega0 only)
    double phonon_nth_ = 0.0;

    mutable std::vector<StateMatrix> rk_buffers_;
};

// Serial dense-matrix reference of the same right-hand side, built from
// fock operators. Kept for tests and the benchmark.
fock::Matrix lindblad_rhs_reference(const fock::Matrix& rho, double t, const SimConfig& config,
                                    Frame frame);

// Spec-level entry point evaluating the derivative at (rho, t).
fock::Matrix lindblad_rhs(const fock::DensityMatrix& rho, double t, const SimConfig& config);

struct Trajectory {
    std::vector<double> times;
    std::vector<std::array<double, 4>> occupancies;  // S1, S2, aS2, phonon
    std::vector<double> snapshot_times;
    std::vector<fock::Matrix> snapshots;
    double max_trace_drift = 0.0;

    int index_at(double t) const;  // closest recorded time
};

struct EvolveOptions {
    bool store_snapshots = false;
};

Trajectory evolve(const fock::DensityMatrix& rho0, const SimConfig& config,
                  const EvolveOptions& options = {});
Trajectory evolve(const SimConfig& config, const EvolveOptions& options = {});

struct G2Result {
    double g2 = 0.0;
    double numerator = 0.0;
    double n_s1_t1 = 0.0;
    double n_as2_t2 = 0.0;
    double t1 = 0.0;
    double t2 = 0.0;
};

// Two-time Stokes--anti-Stokes cross-correlation
//   <a+_S1(t1) n_aS2(t2) a_S1(t1)> / (<n_S1>(t1) <n_aS2>(t2))
// computed by propagating the heralded sandwich through the same master
// equation from t1 to t2.
G2Result two_time_g2(const SimConfig& config, double t1, double t2);

// Same correlator with t1 and t2 at the occupancy peaks of S1 and aS2
// (or window-integrated when the config requests it).
G2Result two_time_g2_auto(const SimConfig& config);

struct SweepRow {
    double write_amplitude = 0.0;
    double read_amplitude = 0.0;
    double n_s1 = 0.0;
    double g2 = 0.0;
};

// Grid of peak-time correlations, grouped by read amplitude. Points are
// independent and run in parallel.
std::vector<SweepRow> g2_power_sweep(const SimConfig& config,
                                     const std::vector<double>& write_amplitudes,
                                     const std::vector<double>& read_amplitudes);

// Shifts the read pulse by each delay and records g2; feeds the decay fit.
fitting::DelayCurve delay_sweep_g2(const SimConfig& config, const std::vector<double>& delays_ps);

// Time-integrated emission of one mode, integral of gamma_m <n_m> dt.
double integrated_emission(const Trajectory& trajectory, const SimConfig& config, int mode);

// Solves for the n_th0 that makes the read-only four-wave-mixing emission
// on the aS2 channel match the target (the c1/c2 constants scale a bath
// occupancy whose absolute size the model leaves free).
double calibrate_noise_scale(const SimConfig& config, double target_sfwm_emission);

}  // namespace sas::lindblad
