#include "sas/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sas/analytic.hpp"
#include "sas/errors.hpp"

namespace sas::lindblad {

namespace {
constexpr double kTwoPi = 6.283185307179586477;
constexpr double kTraceDriftTol = 1e-6;
}  // namespace

void PulseParams::validate() const {
    if (width_ps <= 0.0) throw ConfigError("pulse width must be positive");
    if (amplitude < 0.0) throw ConfigError("pulse amplitude must be non-negative");
}

Complex pulse_amplitude(const PulseParams& pulse, double t) {
    const double envelope = pulse_envelope(pulse, t);
    const double phase = -pulse.detuning_rad_ps * t;
    return envelope * Complex(std::cos(phase), std::sin(phase));
}

double pulse_envelope(const PulseParams& pulse, double t) {
    const double dt = t - pulse.center_ps;
    return pulse.amplitude * std::exp(-dt * dt / (2.0 * pulse.width_ps * pulse.width_ps));
}

double noise_occupancy(const PulseParams& pulse, double t, double c1, double c2, double n_th0) {
    if (c1 < 0.0 || c2 < 0.0 || n_th0 < 0.0)
        throw ConfigError("noise constants must be non-negative");
    const double a = pulse_envelope(pulse, t);
    return n_th0 * (c2 * a * a * a * a + c1);
}

double SimConfig::gamma_s1() const { return (gamma_two_pi ? kTwoPi : 1.0) / tau_s1_ps; }
double SimConfig::gamma_s2() const { return (gamma_two_pi ? kTwoPi : 1.0) / tau_s2_ps; }
double SimConfig::gamma_as2() const { return (gamma_two_pi ? kTwoPi : 1.0) / tau_as2_ps; }
double SimConfig::gamma_m() const { return (gamma_two_pi ? kTwoPi : 1.0) / tau_m_ps; }

double SimConfig::phonon_thermal_occupancy() const {
    if (temperature_k == 0.0) return 0.0;
    return analytic::thermal_occupancy(omega_m * 1e12, temperature_k);
}

double SimConfig::end_time() const {
    return (t_end_ps > t_start_ps) ? t_end_ps : read_pulse.center_ps + 2.5;
}

fock::ModeLayout SimConfig::layout() const {
    return fock::make_layout({{kModeNames[0], cutoff_s1},
                              {kModeNames[1], cutoff_s2},
                              {kModeNames[2], cutoff_as2},
                              {kModeNames[3], cutoff_phonon}});
}

void SimConfig::validate() const {
    write_pulse.validate();
    read_pulse.validate();
    if (tau_s1_ps <= 0.0 || tau_s2_ps <= 0.0 || tau_as2_ps <= 0.0 || tau_m_ps <= 0.0)
        throw ConfigError("decay times must be positive");
    if (dt_ps <= 0.0) throw ConfigError("integrator step must be positive");
    if (temperature_k < 0.0) throw ConfigError("temperature must be non-negative");
    if (c1 < 0.0 || c2 < 0.0 || n_th0 < 0.0)
        throw ConfigError("noise constants must be non-negative");
    if (noise_scale_s1 < 0.0 || noise_scale_as2 < 0.0)
        throw ConfigError("noise channel scales must be non-negative");
    if (top_population_guard <= 0.0) throw ConfigError("population guard must be positive");
    if (snapshot_stride < 1) throw ConfigError("snapshot stride must be >= 1");
    if (window_s1_ps < 0.0 || window_as2_ps < 0.0)
        throw ConfigError("correlator windows must be non-negative");
    layout();  // checks cutoffs and total dimension
}

SimConfig SimConfig::defaults() {
    SimConfig c;
    c.omega_m = kTwoPi * 40.0;  // rad/ps
    const double delta_l1 = 275.0;
    const double delta_l2 = -275.0;
    c.delta_s1 = delta_l1 - c.omega_m;
    c.delta_s2 = delta_l2 - c.omega_m;
    c.delta_as2 = delta_l2 + c.omega_m;
    c.lambda_s1 = c.lambda_s2 = c.lambda_as2 = 0.1;
    c.write_pulse = {0.5, 1.0, 0.2, delta_l1};
    c.read_pulse = {1.5, 1.8, 0.2, delta_l2};
    c.n_th0 = c.phonon_thermal_occupancy();
    return c;
}

Complex StateMatrix::trace() const {
    Complex sum = 0.0;
    for (int i = 0; i < dim; ++i) sum += at(i, i);
    return sum;
}

StateMatrix StateMatrix::from_eigen(const fock::Matrix& m) {
    StateMatrix out(static_cast<int>(m.rows()));
    for (int i = 0; i < out.dim; ++i)
        for (int j = 0; j < out.dim; ++j) out.at(i, j) = m(i, j);
    return out;
}

fock::Matrix StateMatrix::to_eigen() const {
    fock::Matrix m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = at(i, j);
    return m;
}

Propagator::Propagator(const SimConfig& config) : config_(config), layout_(config.layout()) {
    config_.validate();
    dim_ = layout_.dim();
    for (int m = 0; m < 4; ++m) {
        stride_[m] = layout_.stride(m);
        level_[m].resize(dim_);
        sqrt_up_[m].resize(dim_);
        sqrt_down_[m].resize(dim_);
        aadag_[m].resize(dim_);
        for (int i = 0; i < dim_; ++i) {
            const int lev = layout_.level_of(i, m);
            const bool below_top = lev + 1 < layout_.cutoff(m);
            level_[m][i] = static_cast<double>(lev);
            sqrt_up_[m][i] = below_top ? std::sqrt(lev + 1.0) : 0.0;
            sqrt_down_[m][i] = std::sqrt(static_cast<double>(lev));
            // a a+ vanishes at the truncation edge; using level+1 there
            // would leak trace out of the thermal-excitation dissipator.
            aadag_[m][i] = below_top ? static_cast<double>(lev + 1) : 0.0;
        }
    }
    gamma_ = {config_.gamma_s1(), config_.gamma_s2(), config_.gamma_as2(), config_.gamma_m()};
    phonon_nth_ = config_.phonon_thermal_occupancy();

    const double delta_l1 = config_.write_pulse.detuning_rad_ps;
    const double delta_l2 = config_.read_pulse.detuning_rad_ps;

    // b+ a+_S1 driven by the write pulse (two-mode squeezing).
    InteractionTerm squeeze_s1;
    squeeze_s1.offset = stride_[kModePhonon] + stride_[kModeS1];
    squeeze_s1.lambda = config_.lambda_s1;
    squeeze_s1.residual_phase = config_.delta_s1 + config_.omega_m - delta_l1;
    squeeze_s1.pulse = 0;
    squeeze_s1.weight.resize(dim_);
    for (int i = 0; i < dim_; ++i)
        squeeze_s1.weight[i] = sqrt_down_[kModePhonon][i] * sqrt_down_[kModeS1][i];

    // b+ a+_S2 driven by the read pulse.
    InteractionTerm squeeze_s2;
    squeeze_s2.offset = stride_[kModePhonon] + stride_[kModeS2];
    squeeze_s2.lambda = config_.lambda_s2;
    squeeze_s2.residual_phase = config_.delta_s2 + config_.omega_m - delta_l2;
    squeeze_s2.pulse = 1;
    squeeze_s2.weight.resize(dim_);
    for (int i = 0; i < dim_; ++i)
        squeeze_s2.weight[i] = sqrt_down_[kModePhonon][i] * sqrt_down_[kModeS2][i];

    // b a+_aS2 driven by the read pulse (beam-splitter readout).
    InteractionTerm swap_as2;
    swap_as2.offset = stride_[kModeAs2] - stride_[kModePhonon];
    swap_as2.lambda = config_.lambda_as2;
    swap_as2.residual_phase = config_.delta_as2 - config_.omega_m - delta_l2;
    swap_as2.pulse = 1;
    swap_as2.weight.resize(dim_);
    for (int i = 0; i < dim_; ++i)
        swap_as2.weight[i] = sqrt_up_[kModePhonon][i] * sqrt_down_[kModeAs2][i];

    terms_ = {std::move(squeeze_s1), std::move(squeeze_s2), std::move(swap_as2)};

    free_diag_.assign(dim_, 0.0);
    if (config_.frame == Frame::kOmega0) {
        const std::array<double, 4> deltas = {config_.delta_s1, config_.delta_s2,
                                              config_.delta_as2, config_.omega_m};
        for (int i = 0; i < dim_; ++i)
            for (int m = 0; m < 4; ++m) free_diag_[i] += deltas[m] * level_[m][i];
    }
}

Complex Propagator::term_coefficient(const InteractionTerm& term, double t) const {
    const PulseParams& pulse = (term.pulse == 0) ? config_.write_pulse : config_.read_pulse;
    if (config_.frame == Frame::kOmega0) return term.lambda * pulse_amplitude(pulse, t);
    const double envelope = pulse_envelope(pulse, t);
    const double phase = term.residual_phase * t;
    return term.lambda * envelope * Complex(std::cos(phase), std::sin(phase));
}

std::array<double, 4> Propagator::bath_occupancies(double t) const {
    const double noise =
        noise_occupancy(config_.write_pulse, t, 0.0, config_.c2, config_.n_th0) +
        noise_occupancy(config_.read_pulse, t, 0.0, config_.c2, config_.n_th0) +
        config_.n_th0 * config_.c1;
    // Both detection channels feel the broadband pump noise; the undetected
    // read-Stokes mode carries none.
    return {noise * config_.noise_scale_s1, 0.0, noise * config_.noise_scale_as2, phonon_nth_};
}

void Propagator::rhs(const StateMatrix& state, double t, StateMatrix& out) const {
    if (state.dim != dim_) throw NumericalError("state dimension does not match layout");
    out.dim = dim_;
    out.data.resize(state.data.size());

    const std::array<double, 4> nbar = bath_occupancies(t);

    // Elementwise factor: detuning commutator plus the diagonal half of the
    // dissipators, split as q[i] + q[j].
    std::vector<double> q(dim_, 0.0);
    std::array<double, 4> g_down;  // gamma (nbar + 1), a rho a+ coefficient
    std::array<double, 4> g_up;    // gamma nbar, a+ rho a coefficient
    for (int m = 0; m < 4; ++m) {
        g_down[m] = gamma_[m] * (nbar[m] + 1.0);
        g_up[m] = gamma_[m] * nbar[m];
        for (int i = 0; i < dim_; ++i)
            q[i] += 0.5 * (g_down[m] * level_[m][i] + g_up[m] * aadag_[m][i]);
    }

    std::array<Complex, 3> coef;
    for (int k = 0; k < 3; ++k) coef[k] = term_coefficient(terms_[k], t);

    const Complex* x = state.data.data();
    Complex* y = out.data.data();
    const int dim = dim_;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (config_.parallel_kernels)
#endif
    for (int i = 0; i < dim; ++i) {
        const Complex* xi = x + static_cast<std::size_t>(i) * dim;
        Complex* yi = y + static_cast<std::size_t>(i) * dim;

        // Diagonal part: -i (d_i - d_j) - (q_i + q_j).
        const double di = free_diag_[i];
        const double qi = q[i];
        for (int j = 0; j < dim; ++j)
            yi[j] = xi[j] * Complex(-(qi + q[j]), -(di - free_diag_[j]));

        // Hamiltonian commutator, one interaction term at a time.
        for (int k = 0; k < 3; ++k) {
            const InteractionTerm& term = terms_[k];
            const Complex c = coef[k];
            if (c == Complex(0.0, 0.0)) continue;
            const Complex cc = std::conj(c);
            const int off = term.offset;
            const double* w = term.weight.data();
            const Complex minus_ic = Complex(0.0, -1.0) * c;
            const Complex minus_icc = Complex(0.0, -1.0) * cc;
            const Complex plus_ic = Complex(0.0, 1.0) * c;
            const Complex plus_icc = Complex(0.0, 1.0) * cc;

            // -i c (T state): row i gathers from row i - off.
            if (w[i] != 0.0) {
                const Complex s = minus_ic * w[i];
                const Complex* src = x + static_cast<std::size_t>(i - off) * dim;
                for (int j = 0; j < dim; ++j) yi[j] += s * src[j];
            }
            // -i c* (T+ state): row i gathers from row i + off.
            if (i + off >= 0 && i + off < dim && w[i + off] != 0.0) {
                const Complex s = minus_icc * w[i + off];
                const Complex* src = x + static_cast<std::size_t>(i + off) * dim;
                for (int j = 0; j < dim; ++j) yi[j] += s * src[j];
            }
            // +i c (state T): column shift within row i.
            const int j_lo = std::max(0, -off);
            const int j_hi = std::min(dim, dim - off);
            for (int j = j_lo; j < j_hi; ++j)
                if (w[j + off] != 0.0) yi[j] += plus_ic * w[j + off] * xi[j + off];
            // +i c* (state T+).
            for (int j = std::max(0, off); j < std::min(dim, dim + off); ++j)
                if (w[j] != 0.0) yi[j] += plus_icc * w[j] * xi[j - off];
        }

        // Dissipator sandwiches.
        for (int m = 0; m < 4; ++m) {
            const int s = stride_[m];
            const double* sd = sqrt_up_[m].data();  // sqrt(level+1), 0 at top
            const double* su = sqrt_down_[m].data();
            if (g_down[m] != 0.0 && sd[i] != 0.0) {
                const Complex* src = x + static_cast<std::size_t>(i + s) * dim;
                const double gi = g_down[m] * sd[i];
                for (int j = 0; j < dim; ++j)
                    if (sd[j] != 0.0) yi[j] += gi * sd[j] * src[j + s];
            }
            if (g_up[m] != 0.0 && su[i] != 0.0) {
                const Complex* src = x + static_cast<std::size_t>(i - s) * dim;
                const double gi = g_up[m] * su[i];
                for (int j = 0; j < dim; ++j)
                    if (su[j] != 0.0) yi[j] += gi * su[j] * src[j - s];
            }
        }
    }
}

void Propagator::step(StateMatrix& state, double t, double dt) const {
    if (rk_buffers_.size() != 5)
        rk_buffers_.assign(5, StateMatrix(dim_));
    StateMatrix& k1 = rk_buffers_[0];
    StateMatrix& k2 = rk_buffers_[1];
    StateMatrix& k3 = rk_buffers_[2];
    StateMatrix& k4 = rk_buffers_[3];
    StateMatrix& tmp = rk_buffers_[4];
    const std::size_t n = state.data.size();
    tmp.dim = dim_;
    tmp.data.resize(n);

    rhs(state, t, k1);
    for (std::size_t i = 0; i < n; ++i) tmp.data[i] = state.data[i] + 0.5 * dt * k1.data[i];
    rhs(tmp, t + 0.5 * dt, k2);
    for (std::size_t i = 0; i < n; ++i) tmp.data[i] = state.data[i] + 0.5 * dt * k2.data[i];
    rhs(tmp, t + 0.5 * dt, k3);
    for (std::size_t i = 0; i < n; ++i) tmp.data[i] = state.data[i] + dt * k3.data[i];
    rhs(tmp, t + dt, k4);
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < n; ++i)
        state.data[i] += w * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
}

void Propagator::propagate(StateMatrix& state, double t_from, double t_to) const {
    if (t_to < t_from - 1e-12) throw NumericalError("propagate: backwards in time");
    const double dt = config_.dt_ps;
    double t = t_from;
    while (t_to - t > 1e-12) {
        const double h = std::min(dt, t_to - t);
        step(state, t, h);
        t += h;
    }
}

double Propagator::occupancy(const StateMatrix& state, int mode) const {
    double n = 0.0;
    for (int i = 0; i < dim_; ++i) n += level_[mode][i] * state.at(i, i).real();
    return n;
}

StateMatrix Propagator::lowering_sandwich(const StateMatrix& state, int mode) const {
    StateMatrix out(dim_);
    const int s = stride_[mode];
    const double* sd = sqrt_up_[mode].data();
    for (int i = 0; i < dim_; ++i) {
        if (sd[i] == 0.0) continue;
        for (int j = 0; j < dim_; ++j)
            if (sd[j] != 0.0) out.at(i, j) = sd[i] * sd[j] * state.at(i + s, j + s);
    }
    return out;
}

StateMatrix Propagator::initial_state() const {
    const std::array<double, 4> occ = {0.0, 0.0, 0.0, phonon_nth_};
    return StateMatrix::from_eigen(fock::thermal_state(layout_, occ).matrix);
}

fock::Operator build_hamiltonian(const SimConfig& config, double t, Frame frame) {
    config.validate();
    const fock::ModeLayout layout = config.layout();
    const int d = layout.dim();
    fock::Matrix h = fock::Matrix::Zero(d, d);

    if (frame == Frame::kOmega0) {
        const std::array<double, 4> deltas = {config.delta_s1, config.delta_s2, config.delta_as2,
                                              config.omega_m};
        for (int i = 0; i < d; ++i) {
            double diag = 0.0;
            for (int m = 0; m < 4; ++m) diag += deltas[m] * layout.level_of(i, m);
            h(i, i) = diag;
        }
    }

    const fock::Matrix b_dag = fock::creation(layout, "phonon").matrix;
    const fock::Matrix b = fock::annihilation(layout, "phonon").matrix;
    const fock::Matrix s1_dag = fock::creation(layout, "S1").matrix;
    const fock::Matrix s2_dag = fock::creation(layout, "S2").matrix;
    const fock::Matrix as2_dag = fock::creation(layout, "aS2").matrix;

    const auto add_term = [&](const fock::Matrix& raise_op, double lambda,
                              const PulseParams& pulse, double residual_phase) {
        Complex c;
        if (frame == Frame::kOmega0) {
            c = lambda * pulse_amplitude(pulse, t);
        } else {
            const double phase = residual_phase * t;
            c = lambda * pulse_envelope(pulse, t) * Complex(std::cos(phase), std::sin(phase));
        }
        h += c * raise_op + std::conj(c) * raise_op.adjoint();
    };

    const double delta_l1 = config.write_pulse.detuning_rad_ps;
    const double delta_l2 = config.read_pulse.detuning_rad_ps;
    add_term(b_dag * s1_dag, config.lambda_s1, config.write_pulse,
             config.delta_s1 + config.omega_m - delta_l1);
    add_term(b_dag * s2_dag, config.lambda_s2, config.read_pulse,
             config.delta_s2 + config.omega_m - delta_l2);
    add_term(b * as2_dag, config.lambda_as2, config.read_pulse,
             config.delta_as2 - config.omega_m - delta_l2);

    return {layout, std::move(h)};
}

fock::Matrix lindblad_rhs_reference(const fock::Matrix& rho, double t, const SimConfig& config,
                                    Frame frame) {
    SimConfig cfg = config;
    cfg.frame = frame;
    const fock::ModeLayout layout = cfg.layout();
    if (rho.rows() != layout.dim()) throw NumericalError("rho dimension does not match layout");

    const fock::Matrix h = build_hamiltonian(cfg, t, frame).matrix;
    fock::Matrix out = Complex(0.0, -1.0) * (h * rho - rho * h);

    const double noise = noise_occupancy(cfg.write_pulse, t, 0.0, cfg.c2, cfg.n_th0) +
                         noise_occupancy(cfg.read_pulse, t, 0.0, cfg.c2, cfg.n_th0) +
                         cfg.n_th0 * cfg.c1;
    const std::array<double, 4> nbar = {noise * cfg.noise_scale_s1, 0.0,
                                        noise * cfg.noise_scale_as2,
                                        cfg.phonon_thermal_occupancy()};
    const std::array<double, 4> gamma = {cfg.gamma_s1(), cfg.gamma_s2(), cfg.gamma_as2(),
                                         cfg.gamma_m()};

    for (int m = 0; m < 4; ++m) {
        const fock::Matrix a = fock::annihilation(layout, kModeNames[m]).matrix;
        const fock::Matrix ad = a.adjoint();
        const fock::Matrix n = ad * a;
        const fock::Matrix aad = a * ad;
        out += gamma[m] * (nbar[m] + 1.0) *
               (a * rho * ad - 0.5 * (n * rho + rho * n));
        out += gamma[m] * nbar[m] * (ad * rho * a - 0.5 * (aad * rho + rho * aad));
    }
    return out;
}

fock::Matrix lindblad_rhs(const fock::DensityMatrix& rho, double t, const SimConfig& config) {
    Propagator prop(config);
    if (!(rho.layout == prop.layout())) throw ConfigError("lindblad_rhs: layout mismatch");
    StateMatrix state = StateMatrix::from_eigen(rho.matrix);
    StateMatrix out;
    prop.rhs(state, t, out);
    return out.to_eigen();
}

int Trajectory::index_at(double t) const {
    if (times.empty()) throw NumericalError("empty trajectory");
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end()) return static_cast<int>(times.size()) - 1;
    const int idx = static_cast<int>(it - times.begin());
    if (idx > 0 && t - times[idx - 1] < times[idx] - t) return idx - 1;
    return idx;
}

namespace {

void check_guards(const Propagator& prop, const StateMatrix& state, double initial_trace,
                  double t) {
    const double trace = state.trace().real();
    const double drift = std::abs(trace - initial_trace) / std::max(std::abs(initial_trace), 1e-30);
    if (!(drift <= kTraceDriftTol))  // a NaN trace must also trip the guard
        throw NumericalError("trace drift " + std::to_string(drift) + " at t = " +
                             std::to_string(t));
    const auto& layout = prop.layout();
    const auto& cfg = prop.config();
    const auto tops = fock::top_level_populations(layout, state.to_eigen());
    for (int m = 0; m < 4; ++m) {
        if (!(tops[m] <= cfg.top_population_guard * std::max(std::abs(trace), 1e-30)))
            throw NumericalError(std::string("top Fock level of mode ") + kModeNames[m] +
                                 " holds " + std::to_string(tops[m] / std::max(trace, 1e-30)) +
                                 " of the trace at t = " + std::to_string(t));
    }
}

Trajectory evolve_impl(StateMatrix state, const SimConfig& config, const EvolveOptions& options,
                       const Propagator& prop) {
    const double t0 = config.t_start_ps;
    const double t1 = config.end_time();
    const double dt = config.dt_ps;
    const int n_steps = static_cast<int>(std::ceil((t1 - t0) / dt - 1e-9));

    Trajectory traj;
    traj.times.reserve(n_steps + 1);
    traj.occupancies.reserve(n_steps + 1);
    const double initial_trace = state.trace().real();

    const auto record = [&](double t, int step_index) {
        traj.times.push_back(t);
        traj.occupancies.push_back({prop.occupancy(state, 0), prop.occupancy(state, 1),
                                    prop.occupancy(state, 2), prop.occupancy(state, 3)});
        const double trace = state.trace().real();
        traj.max_trace_drift =
            std::max(traj.max_trace_drift,
                     std::abs(trace - initial_trace) / std::max(std::abs(initial_trace), 1e-30));
        if (step_index % config.snapshot_stride == 0 || t >= t1 - 1e-12) {
            check_guards(prop, state, initial_trace, t);
            if (options.store_snapshots) {
                traj.snapshot_times.push_back(t);
                traj.snapshots.push_back(state.to_eigen());
            }
        }
    };

    record(t0, 0);
    double t = t0;
    for (int k = 0; k < n_steps; ++k) {
        const double h = std::min(dt, t1 - t);
        prop.step(state, t, h);
        t += h;
        record(t, k + 1);
    }
    return traj;
}

}  // namespace

Trajectory evolve(const fock::DensityMatrix& rho0, const SimConfig& config,
                  const EvolveOptions& options) {
    Propagator prop(config);
    if (!(rho0.layout == prop.layout())) throw ConfigError("evolve: layout mismatch");
    return evolve_impl(StateMatrix::from_eigen(rho0.matrix), config, options, prop);
}

Trajectory evolve(const SimConfig& config, const EvolveOptions& options) {
    Propagator prop(config);
    return evolve_impl(prop.initial_state(), config, options, prop);
}

G2Result two_time_g2(const SimConfig& config, double t1, double t2) {
    config.validate();
    if (t1 > t2) throw ConfigError("two_time_g2: t1 must not exceed t2");
    if (t1 < config.t_start_ps - 1e-12 || t2 > config.end_time() + 1e-12)
        throw ConfigError("two_time_g2: times outside the simulated span");

    Propagator prop(config);
    StateMatrix rho = prop.initial_state();
    prop.propagate(rho, config.t_start_ps, t1);

    const double n_s1 = prop.occupancy(rho, kModeS1);
    if (n_s1 <= 0.0) throw NumericalError("two_time_g2: no Stokes photons at t1");
    StateMatrix sandwich = prop.lowering_sandwich(rho, kModeS1);

    prop.propagate(rho, t1, t2);
    prop.propagate(sandwich, t1, t2);

    const double n_as2 = prop.occupancy(rho, kModeAs2);
    if (n_as2 <= 0.0) throw NumericalError("two_time_g2: no anti-Stokes photons at t2");
    const double numerator = prop.occupancy(sandwich, kModeAs2);

    G2Result res;
    res.numerator = numerator;
    res.n_s1_t1 = n_s1;
    res.n_as2_t2 = n_as2;
    res.t1 = t1;
    res.t2 = t2;
    res.g2 = numerator / (n_s1 * n_as2);
    return res;
}

namespace {

// Peak times of the S1 and aS2 occupancies on the recorded grid.
std::pair<double, double> find_peak_times(const Trajectory& traj, const SimConfig& config) {
    const double wc = config.write_pulse.center_ps;
    const double ws = config.write_pulse.width_ps;
    const double rc = config.read_pulse.center_ps;
    const double rs = config.read_pulse.width_ps;

    const double t1_hi = std::max(wc + 2.0 * ws, rc - 2.0 * rs);
    double t1 = traj.times.front();
    double best = -1.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] > t1_hi) break;
        if (traj.occupancies[k][kModeS1] > best) {
            best = traj.occupancies[k][kModeS1];
            t1 = traj.times[k];
        }
    }

    const double t2_lo = std::max(t1, rc - rs);
    double t2 = t1;
    best = -1.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] < t2_lo) continue;
        if (traj.occupancies[k][kModeAs2] > best) {
            best = traj.occupancies[k][kModeAs2];
            t2 = traj.times[k];
        }
    }
    return {t1, t2};
}

G2Result windowed_g2(const SimConfig& config, const Trajectory& traj, double t1_peak,
                     double t2_peak) {
    Propagator prop(config);
    const double dt = config.dt_ps;
    const double w1 = config.window_s1_ps;
    const double w2 = config.window_as2_ps > 0.0 ? config.window_as2_ps : config.window_s1_ps;

    std::vector<int> w1_idx, w2_idx;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (std::abs(traj.times[k] - t1_peak) <= 0.5 * w1 + 1e-12)
            w1_idx.push_back(static_cast<int>(k));
        if (std::abs(traj.times[k] - t2_peak) <= 0.5 * w2 + 1e-12)
            w2_idx.push_back(static_cast<int>(k));
    }
    if (w1_idx.empty() || w2_idx.empty())
        throw NumericalError("windowed g2: empty correlation window");

    // Subsample the herald window: each sandwich costs one propagation.
    const int max_heralds = 9;
    const int stride = std::max(1, static_cast<int>(w1_idx.size() + max_heralds - 1) / max_heralds);
    std::vector<int> heralds;
    for (std::size_t k = 0; k < w1_idx.size(); k += stride) heralds.push_back(w1_idx[k]);

    StateMatrix rho = prop.initial_state();
    double t_now = config.t_start_ps;

    double num = 0.0, den_s1 = 0.0;
    for (int idx : heralds) {
        const double ta = traj.times[idx];
        prop.propagate(rho, t_now, ta);
        t_now = ta;
        den_s1 += prop.occupancy(rho, kModeS1);
        StateMatrix sandwich = prop.lowering_sandwich(rho, kModeS1);
        double t_s = ta;
        for (int jdx : w2_idx) {
            const double tb = traj.times[jdx];
            if (tb < ta) continue;
            prop.propagate(sandwich, t_s, tb);
            t_s = tb;
            num += prop.occupancy(sandwich, kModeAs2) * dt * dt * stride;
        }
    }
    double den_as2 = 0.0;
    for (int jdx : w2_idx) den_as2 += traj.occupancies[jdx][kModeAs2];

    den_s1 *= dt * stride;
    den_as2 *= dt;
    if (den_s1 <= 0.0 || den_as2 <= 0.0)
        throw NumericalError("windowed g2: vanishing occupancy in window");

    G2Result res;
    res.numerator = num;
    res.n_s1_t1 = den_s1;
    res.n_as2_t2 = den_as2;
    res.t1 = t1_peak;
    res.t2 = t2_peak;
    res.g2 = num / (den_s1 * den_as2);
    return res;
}

}  // namespace

G2Result two_time_g2_auto(const SimConfig& config) {
    config.validate();
    const Trajectory traj = evolve(config);
    const auto [t1, t2] = find_peak_times(traj, config);
    if (config.window_s1_ps > 0.0) return windowed_g2(config, traj, t1, t2);
    return two_time_g2(config, t1, t2);
}

std::vector<SweepRow> g2_power_sweep(const SimConfig& config,
                                     const std::vector<double>& write_amplitudes,
                                     const std::vector<double>& read_amplitudes) {
    config.validate();
    if (write_amplitudes.empty() || read_amplitudes.empty())
        throw ConfigError("g2_power_sweep: empty amplitude grid");

    const int n_write = static_cast<int>(write_amplitudes.size());
    const int n_total = n_write * static_cast<int>(read_amplitudes.size());
    std::vector<SweepRow> rows(n_total);
    std::string first_error;
    bool failed = false;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < n_total; ++k) {
        if (failed) continue;
        const double a1 = write_amplitudes[k % n_write];
        const double a2 = read_amplitudes[k / n_write];
        try {
            SimConfig point = config;
            point.write_pulse.amplitude = a1;
            point.read_pulse.amplitude = a2;
            const G2Result res = two_time_g2_auto(point);
            rows[k] = {a1, a2, res.n_s1_t1, res.g2};
        } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!failed) {
                    failed = true;
                    first_error = "grid point (A1 = " + std::to_string(a1) +
                                  ", A2 = " + std::to_string(a2) + "): " + e.what();
                }
            }
        }
    }
    if (failed) throw NumericalError("g2_power_sweep: " + first_error);
    return rows;
}

fitting::DelayCurve delay_sweep_g2(const SimConfig& config,
                                   const std::vector<double>& delays_ps) {
    config.validate();
    if (delays_ps.empty()) throw ConfigError("delay_sweep_g2: no delays");
    for (std::size_t i = 0; i < delays_ps.size(); ++i) {
        if (delays_ps[i] < 0.0) throw ConfigError("delay_sweep_g2: delays must be >= 0");
        if (i > 0 && delays_ps[i] <= delays_ps[i - 1])
            throw ConfigError("delay_sweep_g2: delays must be strictly increasing");
    }

    const double margin = config.end_time() - config.read_pulse.center_ps;
    const int n = static_cast<int>(delays_ps.size());
    std::vector<double> g2(n, 0.0);
    std::string first_error;
    bool failed = false;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < n; ++k) {
        if (failed) continue;
        try {
            SimConfig point = config;
            point.read_pulse.center_ps = config.write_pulse.center_ps + delays_ps[k];
            point.t_end_ps = point.read_pulse.center_ps + margin;
            g2[k] = two_time_g2_auto(point).g2;
        } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!failed) {
                    failed = true;
                    first_error = "delay " + std::to_string(delays_ps[k]) + " ps: " + e.what();
                }
            }
        }
    }
    if (failed) throw NumericalError("delay_sweep_g2: " + first_error);

    fitting::DelayCurve curve;
    for (int k = 0; k < n; ++k) curve.points.push_back({delays_ps[k], g2[k], 0.0});
    return curve;
}

double integrated_emission(const Trajectory& trajectory, const SimConfig& config, int mode) {
    const std::array<double, 4> gamma = {config.gamma_s1(), config.gamma_s2(),
                                         config.gamma_as2(), config.gamma_m()};
    double integral = 0.0;
    for (std::size_t k = 1; k < trajectory.times.size(); ++k) {
        const double dt = trajectory.times[k] - trajectory.times[k - 1];
        integral += 0.5 * dt *
                    (trajectory.occupancies[k][mode] + trajectory.occupancies[k - 1][mode]);
    }
    return gamma[mode] * integral;
}

double calibrate_noise_scale(const SimConfig& config, double target_sfwm_emission) {
    if (target_sfwm_emission <= 0.0)
        throw ConfigError("calibrate_noise_scale: target must be positive");
    SimConfig read_only = config;
    read_only.write_pulse.amplitude = 0.0;
    read_only.c1 = 0.0;

    SimConfig thermal_only = read_only;
    thermal_only.c2 = 0.0;
    const double base = integrated_emission(evolve(thermal_only), thermal_only, kModeAs2);

    SimConfig unit_scale = read_only;
    unit_scale.n_th0 = 1.0;
    const double slope =
        integrated_emission(evolve(unit_scale), unit_scale, kModeAs2) - base;
    if (slope <= 0.0)
        throw NumericalError("calibrate_noise_scale: read pulse produces no noise response");

    double n_th0 = target_sfwm_emission / slope;
    // One refinement step for the weak nonlinearity of the loss term.
    SimConfig check = read_only;
    check.n_th0 = n_th0;
    const double achieved = integrated_emission(evolve(check), check, kModeAs2) - base;
    if (achieved > 0.0) n_th0 *= target_sfwm_emission / achieved;
    return n_th0;
}

}  // namespace sas::lindblad
