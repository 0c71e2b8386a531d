#include "sas/analytic.hpp"

#include <cmath>
#include <string>

#include "sas/errors.hpp"

namespace sas::analytic {

namespace {

constexpr double kHbar = 1.054571817e-34;  // J s
constexpr double kBoltzmann = 1.380649e-23;  // J/K

void check_prob(double v, const char* name, bool allow_one) {
    const double hi = allow_one ? 1.0 : 1.0 - 1e-15;
    if (!(v >= 0.0 && v <= hi))
        throw ConfigError(std::string(name) + " out of range: " + std::to_string(v));
}

// E[x^n] over the per-mode geometric photon-number distribution,
// raised to the number of modes: ((1-p)/(1-p*x))^N.
double gen_fn(double p_bar, double x, int n_modes) {
    return std::pow((1.0 - p_bar) / (1.0 - p_bar * x), n_modes);
}

// Correlated excess of a joint generating function over the product of its
// marginals: E[x_joint^n] - E[xa^n] E[xb^n], evaluated without the
// near-cancellation that the direct difference suffers at small p. x_joint
// is the per-excitation probability that neither detector fires: xa*xb for
// detectors on separate beams, 1-eta for a split single beam.
double joint_excess(double p, double xa, double xb, double x_joint, int n_modes) {
    const double log_ratio = std::log1p(-p * xa) + std::log1p(-p * xb) - std::log1p(-p) -
                             std::log1p(-p * x_joint);
    return gen_fn(p, xa, n_modes) * gen_fn(p, xb, n_modes) * std::expm1(n_modes * log_ratio);
}

}  // namespace

void AnalyticParams::validate() const {
    check_prob(p_bar, "p_bar", false);
    check_prob(eta_a, "eta_a", true);
    check_prob(eta_b, "eta_b", true);
    check_prob(q_a, "q_a", false);
    check_prob(q_b, "q_b", false);
    if (n_modes < 1) throw ConfigError("n_modes must be >= 1");
}

double stokes_click_prob(const AnalyticParams& p) {
    p.validate();
    return 1.0 - (1.0 - p.q_a) * gen_fn(p.p_bar, 1.0 - p.eta_a, p.n_modes);
}

double antistokes_click_prob(const AnalyticParams& p) {
    p.validate();
    return 1.0 - (1.0 - p.q_b) * gen_fn(p.p_bar, 1.0 - p.eta_b, p.n_modes);
}

double coincidence_prob(const AnalyticParams& p) {
    p.validate();
    // S_a + S_b - 1 + (1-q_a)(1-q_b) E[(xa xb)^n] regrouped as
    // S_a S_b + (1-q_a)(1-q_b) (E[(xa xb)^n] - E[xa^n] E[xb^n]); the direct
    // form loses the correlated excess to roundoff at small p_bar.
    const double s_a = stokes_click_prob(p);
    const double s_b = antistokes_click_prob(p);
    const double xa = 1.0 - p.eta_a;
    const double xb = 1.0 - p.eta_b;
    return s_a * s_b +
           (1.0 - p.q_a) * (1.0 - p.q_b) * joint_excess(p.p_bar, xa, xb, xa * xb, p.n_modes);
}

double cross_correlation(const AnalyticParams& p) {
    const double s_a = stokes_click_prob(p);
    const double s_b = antistokes_click_prob(p);
    if (s_a * s_b <= 0.0) throw NumericalError("cross_correlation: zero click probability");
    return coincidence_prob(p) / (s_a * s_b);
}

double stokes_autocorrelation(const AnalyticParams& p) {
    p.validate();
    // Each of the two detectors behind the splitter sees eta_a/2; the
    // coincidence term is regrouped like coincidence_prob.
    const double x_half = 1.0 - p.eta_a / 2.0;
    const double s_half = 1.0 - (1.0 - p.q_a) * gen_fn(p.p_bar, x_half, p.n_modes);
    if (s_half <= 0.0) throw NumericalError("stokes_autocorrelation: zero click probability");
    const double c_aa =
        s_half * s_half + (1.0 - p.q_a) * (1.0 - p.q_a) *
                              joint_excess(p.p_bar, x_half, x_half, 1.0 - p.eta_a, p.n_modes);
    return c_aa / (s_half * s_half);
}

double conditional_as_autocorrelation(const AnalyticParams& par) {
    par.validate();
    const double p = par.p_bar;
    if (p >= 1.0) throw NumericalError("conditional autocorrelation undefined at p = 1");

    // Fock-basis series over the heralded phonon distribution
    //   P(n | click) ~ (1-p) p^n (1 - (1-q_a)(1-eta_a)^n),
    // with the split-detector click factors evaluated through expm1/log1p.
    // Every term is positive, which avoids the cancellation that makes the
    // generating-function form collapse at small p and eta_b.
    const double log_keep_a = std::log1p(-par.q_a);
    const double log_miss_a = std::log1p(-par.eta_a);
    const double log_keep_b = std::log1p(-par.q_b);
    const double log_half_b = std::log1p(-par.eta_b / 2.0);
    const double log_full_b = std::log1p(-par.eta_b);
    const double log_excess = log_full_b - 2.0 * log_half_b;  // <= 0

    double trace = 0.0;   // sum of unnormalized conditional weights
    double single = 0.0;  // weighted single-detector click probability
    double joint = 0.0;   // weighted two-detector coincidence probability
    double pow_p = 1.0;
    constexpr long kMaxTerms = 2000000;
    long n = 0;
    for (; n < kMaxTerms; ++n) {
        const double herald = -std::expm1(log_keep_a + n * log_miss_a);
        const double weight = (1.0 - p) * pow_p * herald;
        const double click_one = -std::expm1(log_keep_b + n * log_half_b);
        const double keep_sq = std::exp(2.0 * (log_keep_b + n * log_half_b));
        const double both = click_one * click_one + keep_sq * std::expm1(n * log_excess);
        trace += weight;
        single += weight * click_one;
        joint += weight * both;
        pow_p *= p;
        if (pow_p < 1e-24 && n > 2) break;
    }
    if (n == kMaxTerms)
        throw NumericalError("conditional autocorrelation: series did not converge (p too close to 1)");
    if (trace <= 0.0)
        throw NumericalError("conditional autocorrelation: vanishing herald probability");
    if (single <= 0.0)
        throw NumericalError("conditional autocorrelation: zero click probability");
    return joint * trace / (single * single);
}

double fixed_mean_p_bar(double p, int n_modes) {
    if (n_modes < 1) throw ConfigError("n_modes must be >= 1");
    check_prob(p, "p", false);
    return p / (n_modes - p * (n_modes - 1));
}

double csi_ratio(double g_ab, double g_aa, double g_bb) {
    if (g_aa * g_bb <= 0.0) throw NumericalError("csi_ratio: zero denominator");
    return g_ab * g_ab / (g_aa * g_bb);
}

double max_bell_visibility(double g_ab) {
    if (g_ab < 0.0) throw ConfigError("max_bell_visibility: negative correlation");
    return (g_ab - 1.0) / (g_ab + 1.0);
}

double thermal_occupancy(double omega_rad_s, double temperature_k) {
    if (omega_rad_s <= 0.0) throw ConfigError("thermal_occupancy: frequency must be positive");
    if (temperature_k < 0.0) throw ConfigError("thermal_occupancy: negative temperature");
    if (temperature_k == 0.0) return 0.0;
    return 1.0 / std::expm1(kHbar * omega_rad_s / (kBoltzmann * temperature_k));
}

void SweepConfig::validate() const {
    if (rep_rate_hz <= 0.0) throw ConfigError("rep_rate_hz must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta out of range");
    if (!(alpha_r > 0.0 && alpha_r <= 1.0)) throw ConfigError("alpha_r out of range");
    if (stokes_rates_hz.empty()) throw ConfigError("stokes_rates_hz is empty");
    if (read_settings.empty()) throw ConfigError("read_settings is empty");
    for (double rate : stokes_rates_hz)
        if (rate < 0.0) throw ConfigError("negative Stokes rate");
    for (const auto& rs : read_settings) {
        check_prob(rs.p_stokes_read, "read p_stokes", false);
        check_prob(rs.q_a, "q_a", false);
        check_prob(rs.q_b, "q_b", false);
    }
}

std::vector<SweepRow> power_sweep(const SweepConfig& sweep) {
    sweep.validate();
    std::vector<SweepRow> rows;
    rows.reserve(sweep.read_settings.size() * sweep.stokes_rates_hz.size());
    for (std::size_t s = 0; s < sweep.read_settings.size(); ++s) {
        const auto& rs = sweep.read_settings[s];
        for (double rate : sweep.stokes_rates_hz) {
            const double p_bar = rate / (sweep.eta * sweep.rep_rate_hz);
            if (p_bar >= 1.0)
                throw NumericalError("power_sweep: p_bar >= 1 at rate " + std::to_string(rate));
            AnalyticParams params;
            params.p_bar = p_bar;
            params.n_modes = 1;
            params.eta_a = sweep.eta;
            params.eta_b = sweep.eta * sweep.alpha_r * rs.p_stokes_read;
            params.q_a = rs.q_a;
            params.q_b = rs.q_b;
            SweepRow row;
            row.setting = static_cast<int>(s);
            row.p_bar = p_bar;
            row.q_a = params.q_a;
            row.q_b = params.q_b;
            row.eta_a = params.eta_a;
            row.eta_b = params.eta_b;
            row.g_ab = cross_correlation(params);
            row.g_cond = conditional_as_autocorrelation(params);
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<double> mode_count_autocorrelation(double p, int n_max, double eta_a, double q_a) {
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    std::vector<double> g;
    g.reserve(n_max);
    for (int n = 1; n <= n_max; ++n) {
        AnalyticParams params;
        params.p_bar = fixed_mean_p_bar(p, n);
        params.n_modes = n;
        params.eta_a = eta_a;
        params.q_a = q_a;
        g.push_back(stokes_autocorrelation(params));
    }
    return g;
}

}  // namespace sas::analytic
