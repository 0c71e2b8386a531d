#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sas/analytic.hpp"
#include "sas/errors.hpp"
#include "sas/fock.hpp"

using namespace sas;
using analytic::AnalyticParams;

namespace {

// Brute-force oracle: expectation of x^(total photon number) over the
// pairwise-correlated state, summed term by term in the Fock basis.
double fock_series(double p_bar, double x, int n_modes, int terms = 4000) {
    double single = 0.0;
    double pw = 1.0;
    for (int n = 0; n < terms; ++n) {
        single += (1.0 - p_bar) * pw * std::pow(x, n);
        pw *= p_bar;
        if (pw < 1e-40) break;
    }
    return std::pow(single, n_modes);
}

struct OracleClicks {
    double s_a, s_b, c_ab;
};

// Threshold-detector probabilities evaluated directly against the photon
// number distribution (photon and phonon numbers coincide mode by mode).
OracleClicks povm_oracle(const AnalyticParams& p) {
    OracleClicks out;
    out.s_a = 1.0 - (1.0 - p.q_a) * fock_series(p.p_bar, 1.0 - p.eta_a, p.n_modes);
    out.s_b = 1.0 - (1.0 - p.q_b) * fock_series(p.p_bar, 1.0 - p.eta_b, p.n_modes);
    const double joint =
        fock_series(p.p_bar, (1.0 - p.eta_a) * (1.0 - p.eta_b), p.n_modes);
    out.c_ab = out.s_a + out.s_b - 1.0 + (1.0 - p.q_a) * (1.0 - p.q_b) * joint;
    return out;
}

AnalyticParams params(double p, int n, double ea, double eb, double qa, double qb) {
    AnalyticParams out;
    out.p_bar = p;
    out.n_modes = n;
    out.eta_a = ea;
    out.eta_b = eb;
    out.q_a = qa;
    out.q_b = qb;
    return out;
}

}  // namespace

TEST_CASE("click probabilities in limiting cases") {
    CHECK(analytic::stokes_click_prob(params(0, 1, 0.3, 0.3, 0, 0)) == doctest::Approx(0.0));
    CHECK(analytic::stokes_click_prob(params(0, 1, 0.3, 0.3, 0.01, 0)) == doctest::Approx(0.01));
    CHECK(analytic::stokes_click_prob(params(0.5, 1, 1.0, 1.0, 0, 0)) == doctest::Approx(0.5));

    CHECK(analytic::antistokes_click_prob(params(0, 1, 0.3, 0.3, 0, 0)) == doctest::Approx(0.0));
    CHECK(analytic::antistokes_click_prob(params(0.3, 1, 0.5, 0.0, 0, 2e-3)) ==
          doctest::Approx(2e-3));
    CHECK(analytic::antistokes_click_prob(params(0.5, 1, 1.0, 1.0, 0, 0)) == doctest::Approx(0.5));

    CHECK(analytic::coincidence_prob(params(0, 1, 0.3, 0.3, 0, 0)) == doctest::Approx(0.0));
    CHECK(analytic::coincidence_prob(params(0.5, 1, 1.0, 1.0, 0, 0)) == doctest::Approx(0.5));
    CHECK(analytic::coincidence_prob(params(0, 1, 0.5, 0.5, 1e-3, 2e-3)) ==
          doctest::Approx(2e-6).epsilon(1e-9));
}

TEST_CASE("closed forms match the Fock-basis detector oracle") {
    for (double p : {0.01, 0.1, 0.5})
        for (double eta : {0.07, 0.5, 1.0})
            for (double q : {0.0, 1e-4}) {
                const AnalyticParams par = params(p, 1, eta, 0.8 * eta, q, 0.5 * q);
                const OracleClicks oracle = povm_oracle(par);
                CHECK(analytic::stokes_click_prob(par) ==
                      doctest::Approx(oracle.s_a).epsilon(1e-10));
                CHECK(analytic::antistokes_click_prob(par) ==
                      doctest::Approx(oracle.s_b).epsilon(1e-10));
                CHECK(analytic::coincidence_prob(par) ==
                      doctest::Approx(oracle.c_ab).epsilon(1e-10));
            }
}

TEST_CASE("closed forms match a dense two-mode detector computation") {
    // Explicit density matrix of one squeezed pair, truncated at 14 levels,
    // with diagonal threshold-detector operators.
    const double p = 0.01, eta_a = 0.4, eta_b = 0.9, q_a = 1e-4, q_b = 1e-3;
    const auto layout = fock::make_layout({{"photon", 14}, {"phonon", 14}});
    const int d = layout.dim();
    fock::Matrix rho = fock::Matrix::Zero(d, d);
    for (int i = 0; i < 14; ++i)
        for (int j = 0; j < 14; ++j)
            rho(i * 14 + i, j * 14 + j) = (1.0 - p) * std::pow(p, 0.5 * (i + j));

    std::vector<double> miss_a(14), miss_b(14);
    for (int n = 0; n < 14; ++n) {
        miss_a[n] = std::pow(1.0 - eta_a, n);
        miss_b[n] = std::pow(1.0 - eta_b, n);
    }
    const auto da = fock::diagonal_mode_op(layout, "photon", miss_a);
    const auto db = fock::diagonal_mode_op(layout, "phonon", miss_b);
    const fock::Matrix id = fock::Matrix::Identity(d, d);
    const fock::Matrix det_a = id - (1.0 - q_a) * da.matrix;
    const fock::Matrix det_b = id - (1.0 - q_b) * db.matrix;

    const double s_a = (det_a * rho).trace().real();
    const double s_b = (det_b * rho).trace().real();
    const double c_ab = (det_a * det_b * rho).trace().real();

    const AnalyticParams par = params(p, 1, eta_a, eta_b, q_a, q_b);
    CHECK(analytic::stokes_click_prob(par) == doctest::Approx(s_a).epsilon(1e-8));
    CHECK(analytic::antistokes_click_prob(par) == doctest::Approx(s_b).epsilon(1e-8));
    CHECK(analytic::coincidence_prob(par) == doctest::Approx(c_ab).epsilon(1e-8));
    CHECK(analytic::cross_correlation(par) == doctest::Approx(c_ab / (s_a * s_b)).epsilon(1e-8));
}

TEST_CASE("cross correlation of a perfectly detected pair") {
    CHECK(analytic::cross_correlation(params(0.5, 1, 1, 1, 0, 0)) == doctest::Approx(2.0));
}

TEST_CASE("cross correlation grows as 1/p_bar at small emission") {
    const double g3 = analytic::cross_correlation(params(1e-3, 1, 0.05, 0.01, 0, 0));
    const double g4 = analytic::cross_correlation(params(1e-4, 1, 0.05, 0.01, 0, 0));
    const double slope = std::log(g4 / g3) / std::log(1e-4 / 1e-3);
    CHECK(std::abs(slope + 1.0) < 0.01);
}

TEST_CASE("cross correlation plateau decreases monotonically with read noise") {
    double last = 1e300;
    for (double q_b : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3}) {
        const double g = analytic::cross_correlation(params(1e-6, 1, 0.07, 1e-4, 0, q_b));
        CHECK(g < last);
        last = g;
    }
}

TEST_CASE("cross correlation is symmetric under detector exchange") {
    const AnalyticParams fwd = params(0.02, 3, 0.07, 1e-3, 1e-5, 1e-4);
    const AnalyticParams swp = params(0.02, 3, 1e-3, 0.07, 1e-4, 1e-5);
    CHECK(analytic::cross_correlation(fwd) == analytic::cross_correlation(swp));
}

TEST_CASE("cross correlation strictly decreases with p_bar") {
    double last = 1e300;
    for (double p = 1e-5; p <= 0.5; p *= 2.5) {
        const double g = analytic::cross_correlation(params(p, 1, 0.07, 1e-3, 0, 0));
        CHECK(g < last);
        last = g;
    }
}

TEST_CASE("single-mode Stokes light is thermal") {
    CHECK(analytic::stokes_autocorrelation(params(1e-3, 1, 0.5, 0.5, 0, 0)) ==
          doctest::Approx(2.0).epsilon(5e-3));
}

TEST_CASE("auto-correlation follows the 1 + 1/N mode-counting law") {
    for (int n : {1, 2, 4, 10}) {
        AnalyticParams par = params(analytic::fixed_mean_p_bar(1e-3, n), n, 1.0, 1.0, 0, 0);
        CHECK(std::abs(analytic::stokes_autocorrelation(par) - (1.0 + 1.0 / n)) < 1e-2);
    }
    // Poissonian limit of many modes
    AnalyticParams many = params(analytic::fixed_mean_p_bar(1e-3, 1000), 1000, 1.0, 1.0, 0, 0);
    CHECK(analytic::stokes_autocorrelation(many) == doctest::Approx(1.0).epsilon(3e-3));
}

TEST_CASE("mode-count table helper") {
    const auto g = analytic::mode_count_autocorrelation(1e-3, 10, 1.0, 0.0);
    REQUIRE(g.size() == 10);
    CHECK(std::abs(g[3] - 1.25) < 1e-2);
}

TEST_CASE("conditional autocorrelation antibunches for a heralded phonon") {
    CHECK(analytic::conditional_as_autocorrelation(params(1e-4, 1, 0.4, 0.4, 0, 0)) <= 1e-3);
}

TEST_CASE("conditional autocorrelation matches the generating-function form") {
    // Closed-form oracle, valid where no cancellation occurs.
    const auto zeta_form = [](const AnalyticParams& par) {
        const double p = par.p_bar;
        const double tr =
            1.0 - (1.0 - par.q_a) * (1.0 - p) / (1.0 - p * (1.0 - par.eta_a));
        const auto zeta = [&](double x) {
            return ((1.0 - p) / (1.0 - p * x) -
                    (1.0 - par.q_a) * (1.0 - p) / (1.0 - p * (1.0 - par.eta_a) * x)) /
                   tr;
        };
        const double zh = zeta(1.0 - par.eta_b / 2.0);
        const double zf = zeta(1.0 - par.eta_b);
        const double s = 1.0 - (1.0 - par.q_b) * zh;
        return (1.0 - 2.0 * (1.0 - par.q_b) * zh + (1.0 - par.q_b) * (1.0 - par.q_b) * zf) /
               (s * s);
    };
    for (const auto& par : {params(0.3, 1, 0.4, 0.3, 0.01, 0.02), params(0.9, 1, 0.6, 0.5, 0, 0),
                            params(0.05, 1, 0.9, 0.8, 1e-3, 1e-3)}) {
        CHECK(analytic::conditional_as_autocorrelation(par) ==
              doctest::Approx(zeta_form(par)).epsilon(1e-9));
    }
}

TEST_CASE("conditional autocorrelation approaches thermal statistics at p -> 1") {
    CHECK(analytic::conditional_as_autocorrelation(params(0.99, 1, 0.4, 0.4, 0, 0)) >= 1.0);
}

TEST_CASE("CSI ratio") {
    CHECK(analytic::csi_ratio(2, 2, 2) == doctest::Approx(1.0));
    CHECK(analytic::csi_ratio(63.4, 2, 2) == doctest::Approx(1004.89).epsilon(1e-4));
    CHECK_THROWS_AS(analytic::csi_ratio(2, 0, 2), NumericalError);

    // Squeezed-pair statistics: R = (1/4)(1 + 1/p)^2 in terms of the pair
    // emission probability p = nbar/(1 + nbar); saturates at 1 when p -> 1.
    for (double nbar : {0.1, 1.0, 10.0, 1e4}) {
        const double p = nbar / (1.0 + nbar);
        const double expected = 0.25 * (1.0 + 1.0 / p) * (1.0 + 1.0 / p);
        CHECK(analytic::csi_ratio(2.0 + 1.0 / nbar, 2.0, 2.0) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(analytic::csi_ratio(2.0 + 1e-9, 2.0, 2.0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("maximal Bell visibility") {
    CHECK(analytic::max_bell_visibility(5.83) == doctest::Approx(0.7071).epsilon(1.5e-3));
    CHECK(analytic::max_bell_visibility(1.0) == doctest::Approx(0.0));
    CHECK(analytic::max_bell_visibility(63.4) == doctest::Approx(0.9689).epsilon(1e-4));
}

TEST_CASE("thermal occupancy") {
    CHECK(analytic::thermal_occupancy(1e14, 0.0) == 0.0);
    CHECK(std::abs(analytic::thermal_occupancy(2 * M_PI * 39.9e12, 300.0) - 1.7e-3) < 1e-4);
    // classical equipartition limit
    const double omega = 1e9;
    const double kT_over_hw = 1.380649e-23 * 300.0 / (1.054571817e-34 * omega);
    CHECK(analytic::thermal_occupancy(omega, 300.0) ==
          doctest::Approx(kT_over_hw).epsilon(1e-2));
}

TEST_CASE("power sweep converts rates and orders plateaus") {
    analytic::SweepConfig sweep;
    sweep.stokes_rates_hz = {0.0, 1.6e3, 3.2e3, 6.4e3, 1.28e4, 2.4e4};
    sweep.read_settings = {{1.5e-3, 6.25e-6, 5.845e-8},
                           {4.5e-3, 6.25e-6, 2.111e-7},
                           {1.35e-2, 6.25e-6, 9.547e-7}};
    const auto rows = analytic::power_sweep(sweep);
    REQUIRE(rows.size() == 18);

    // p_bar arithmetic: rate / (eta * rep)
    CHECK(rows[5].p_bar == doctest::Approx(2.4e4 / (0.07 * 8e7)).epsilon(1e-12));
    CHECK(rows[5].p_bar == doctest::Approx(4.2857e-3).epsilon(1e-4));

    // zero-rate row: clicks are pure noise and the correlation collapses to 1
    CHECK(rows[0].p_bar == 0.0);
    CHECK(rows[0].g_ab == doctest::Approx(1.0).epsilon(1e-9));

    // read-power ordering of the high-correlation region
    for (int s = 0; s + 1 < 3; ++s) {
        double max_lo = 0.0, max_hi = 0.0;
        for (int k = 1; k < 6; ++k) {
            max_lo = std::max(max_lo, rows[s * 6 + k].g_ab);
            max_hi = std::max(max_hi, rows[(s + 1) * 6 + k].g_ab);
        }
        CHECK(max_lo > max_hi);
    }

    // conditional bound column stays in the heralded single-phonon regime
    for (const auto& row : rows)
        if (row.p_bar > 0.0) CHECK(row.g_cond < 0.5);
}

TEST_CASE("power sweep rejects out-of-regime rates") {
    analytic::SweepConfig sweep;
    sweep.stokes_rates_hz = {1e10};
    sweep.read_settings = {{1e-3, 0, 0}};
    CHECK_THROWS_AS(analytic::power_sweep(sweep), NumericalError);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(analytic::stokes_click_prob(params(1.0, 1, 1, 1, 0, 0)), ConfigError);
    CHECK_THROWS_AS(analytic::stokes_click_prob(params(-0.1, 1, 1, 1, 0, 0)), ConfigError);
    CHECK_THROWS_AS(analytic::stokes_click_prob(params(0.1, 0, 1, 1, 0, 0)), ConfigError);
    CHECK_THROWS_AS(analytic::stokes_click_prob(params(0.1, 1, 1.1, 1, 0, 0)), ConfigError);
    CHECK_THROWS_AS(analytic::max_bell_visibility(-1.0), ConfigError);
    CHECK_THROWS_AS(analytic::thermal_occupancy(-1.0, 300.0), ConfigError);
    CHECK_THROWS_AS(analytic::thermal_occupancy(1e12, -1.0), ConfigError);
}
