#include "sas/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "sas/errors.hpp"
#include "sas/rng.hpp"

namespace sas::fitting {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrtPi = 0.5641895835477563;

// Two-sided 95 % Student-t quantile, Cornish-Fisher expansion in 1/nu.
double t_quantile_975(int nu) {
    if (nu < 1) nu = 1;
    const double z = 1.959963984540054;
    const double z3 = z * z * z;
    const double z5 = z3 * z * z;
    const double z7 = z5 * z * z;
    const double v = static_cast<double>(nu);
    return z + (z3 + z) / (4.0 * v) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * v * v) +
           (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * v * v * v);
}

}  // namespace

void DelayCurve::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].sigma_g2 < 0.0) throw ConfigError("negative uncertainty in delay curve");
        if (i > 0 && !(points[i].delay_ps > points[i - 1].delay_ps))
            throw ConfigError("delays must be strictly increasing");
    }
}

double erfcx(double x) {
    if (x < 25.0) return std::exp(x * x) * std::erfc(x);
    // Asymptotic series, relative error below 1e-13 for x >= 25.
    const double inv2x2 = 1.0 / (2.0 * x * x);
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k <= 5; ++k) {
        term *= -(2.0 * k - 1.0) * inv2x2;
        sum += term;
    }
    return sum * kInvSqrtPi / x;
}

double exp_gauss_model(double t, double c, double a, double sigma, double t0, double tau) {
    const double m = t - t0;
    const double w = (m - sigma * sigma / tau) / (kSqrt2 * sigma);
    if (w >= 0.0) {
        const double e = sigma * sigma / (2.0 * tau * tau) - m / tau;
        return c + 0.5 * a * std::exp(e) * (1.0 + std::erf(w));
    }
    // Rising flank: fold exp(E) into erfcx so nothing overflows.
    return c + 0.5 * a * erfcx(-w) * std::exp(-m * m / (2.0 * sigma * sigma));
}

std::array<double, 3> exp_gauss_gradient(double t, double a, double sigma, double t0,
                                         double tau) {
    const double m = t - t0;
    const double w = (m - sigma * sigma / tau) / (kSqrt2 * sigma);
    double g = 0.0;      // model value minus baseline
    double dg_dm = 0.0;  // derivative in m = t - t0
    double dg_dtau = 0.0;
    if (w >= 0.0) {
        const double e = sigma * sigma / (2.0 * tau * tau) - m / tau;
        const double gauss = std::exp(-m * m / (2.0 * sigma * sigma));
        g = 0.5 * a * std::exp(e) * (1.0 + std::erf(w));
        dg_dm = -g / tau + 0.5 * a * std::sqrt(2.0 / M_PI) / sigma * gauss;
        dg_dtau = g * (m / (tau * tau) - sigma * sigma / (tau * tau * tau)) +
                  0.5 * a * std::sqrt(2.0 / M_PI) * sigma / (tau * tau) * gauss;
    } else {
        const double z = -w;
        const double p = std::exp(-m * m / (2.0 * sigma * sigma));
        const double ex = erfcx(z);
        const double dex = 2.0 * z * ex - 2.0 * kInvSqrtPi;  // d erfcx / dz
        g = 0.5 * a * ex * p;
        dg_dm = 0.5 * a * (dex * (-1.0 / (kSqrt2 * sigma)) * p + ex * (-m / (sigma * sigma)) * p);
        dg_dtau = 0.5 * a * dex * (-sigma / (kSqrt2 * tau * tau)) * p;
    }
    const double df_da = (a != 0.0) ? g / a : 0.0;
    return {df_da, -dg_dm, dg_dtau};
}

namespace {

// Dense Levenberg-Marquardt with an analytic Jacobian. The callback fills
// weighted residuals and the Jacobian for a parameter vector; steps that
// leave the feasible region (checked by `feasible`) are rejected like
// failed steps.
struct LmOutcome {
    Eigen::VectorXd params;
    Eigen::MatrixXd jtj;
    double cost = 0.0;  // sum of squared weighted residuals
    int iterations = 0;
    bool converged = false;
};

using ResidualFn =
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>;
using FeasibleFn = std::function<bool(const Eigen::VectorXd&)>;

LmOutcome lm_fit(const ResidualFn& eval, const FeasibleFn& feasible, Eigen::VectorXd x0,
                 int n_residuals, int max_iterations) {
    const int n = static_cast<int>(x0.size());
    Eigen::VectorXd r(n_residuals);
    Eigen::MatrixXd jac(n_residuals, n);
    eval(x0, r, jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    LmOutcome out;
    out.params = x0;
    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        if (jtr.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + cost)) {
            out.converged = true;
            break;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (int i = 0; i < n; ++i)
                damped(i, i) += lambda * std::max(jtj(i, i), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
            const Eigen::VectorXd trial = x0 + delta;
            if (feasible(trial)) {
                Eigen::VectorXd r_trial(n_residuals);
                Eigen::MatrixXd jac_trial(n_residuals, n);
                eval(trial, r_trial, jac_trial);
                const double cost_trial = r_trial.squaredNorm();
                if (cost_trial < cost) {
                    const double rel_drop = (cost - cost_trial) / std::max(cost, 1e-300);
                    const double step = delta.cwiseAbs().maxCoeff();
                    x0 = trial;
                    r.swap(r_trial);
                    jac.swap(jac_trial);
                    cost = cost_trial;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    stepped = true;
                    if (rel_drop < 1e-14 || step < 1e-14 * (1.0 + x0.cwiseAbs().maxCoeff())) {
                        out.converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if (lambda > 1e14) break;
        }
        if (!stepped) {
            // Stalled: accept only if the gradient says we sit at a minimum.
            const double g_inf = (jac.transpose() * r).cwiseAbs().maxCoeff();
            out.converged = out.converged || cost < 1e-300 || g_inf < 1e-6 * (1.0 + cost);
            break;
        }
        if (out.converged) break;
    }
    out.params = x0;
    out.jtj = jac.transpose() * jac;
    out.cost = cost;
    out.iterations = iter + 1;
    return out;
}

// Nelder-Mead on the same weighted cost, used when LM stalls.
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& cost_fn,
                            Eigen::VectorXd x0, int max_iterations) {
    const int n = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> simplex(n + 1, x0);
    for (int i = 0; i < n; ++i)
        simplex[i + 1](i) += (x0(i) != 0.0) ? 0.1 * std::abs(x0(i)) : 0.1;
    std::vector<double> vals(n + 1);
    for (int i = 0; i <= n; ++i) vals[i] = cost_fn(simplex[i]);
    for (int iter = 0; iter < max_iterations; ++iter) {
        std::vector<int> order(n + 1);
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        const int best = order[0], worst = order[n], second = order[n - 1];
        if (std::abs(vals[worst] - vals[best]) <= 1e-14 * (1.0 + std::abs(vals[best]))) break;
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= n;
        const Eigen::VectorXd reflect = centroid + (centroid - simplex[worst]);
        const double fr = cost_fn(reflect);
        if (fr < vals[best]) {
            const Eigen::VectorXd expand = centroid + 2.0 * (centroid - simplex[worst]);
            const double fe = cost_fn(expand);
            simplex[worst] = (fe < fr) ? expand : reflect;
            vals[worst] = std::min(fe, fr);
        } else if (fr < vals[second]) {
            simplex[worst] = reflect;
            vals[worst] = fr;
        } else {
            const Eigen::VectorXd contract = centroid + 0.5 * (simplex[worst] - centroid);
            const double fc = cost_fn(contract);
            if (fc < vals[worst]) {
                simplex[worst] = contract;
                vals[worst] = fc;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
                    vals[i] = cost_fn(simplex[i]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    return simplex[best];
}

struct PreparedCurve {
    std::vector<double> t;
    std::vector<double> y;
    std::vector<double> inv_sigma;  // weight = 1/sigma per point
};

PreparedCurve prepare(const DelayCurve& curve, bool weighted) {
    curve.validate();
    if (curve.points.size() < 5) throw ConfigError("fit needs at least 5 points");
    PreparedCurve prep;
    bool have_all_sigmas = true;
    for (const auto& pt : curve.points) {
        prep.t.push_back(pt.delay_ps);
        prep.y.push_back(pt.g2);
        if (pt.sigma_g2 <= 0.0) have_all_sigmas = false;
    }
    const double spread = *std::max_element(prep.y.begin(), prep.y.end()) -
                          *std::min_element(prep.y.begin(), prep.y.end());
    if (spread <= 0.0) throw ConfigError("degenerate curve: all g2 values equal");
    for (const auto& pt : curve.points)
        prep.inv_sigma.push_back((weighted && have_all_sigmas) ? 1.0 / pt.sigma_g2 : 1.0);
    return prep;
}

// Initializer policy: t0 at the steepest rise, A from the peak excess,
// tau = 3 ps.
Eigen::VectorXd initial_guess(const PreparedCurve& prep, double fixed_c) {
    const std::size_t n = prep.t.size();
    double best_slope = -std::numeric_limits<double>::infinity();
    double t0_init = prep.t.front();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double slope =
            (prep.y[i + 1] - prep.y[i]) / std::max(prep.t[i + 1] - prep.t[i], 1e-12);
        if (slope > best_slope) {
            best_slope = slope;
            t0_init = 0.5 * (prep.t[i] + prep.t[i + 1]);
        }
    }
    const double a_init = *std::max_element(prep.y.begin(), prep.y.end()) - fixed_c;
    Eigen::VectorXd x(3);
    x << (a_init != 0.0 ? a_init : 1.0), t0_init, 3.0;
    return x;
}

FitResult run_decay_fit(const PreparedCurve& prep, const FitOptions& options) {
    const int n_pts = static_cast<int>(prep.t.size());
    const double sigma = options.fixed_sigma_ps;
    const double c = options.fixed_c;
    if (sigma <= 0.0) throw ConfigError("fixed sigma must be positive");

    const auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        for (int i = 0; i < n_pts; ++i) {
            const double f = exp_gauss_model(prep.t[i], c, x(0), sigma, x(1), x(2));
            const auto grad = exp_gauss_gradient(prep.t[i], x(0), sigma, x(1), x(2));
            const double w = prep.inv_sigma[i];
            r(i) = (f - prep.y[i]) * w;
            for (int j = 0; j < 3; ++j) jac(i, j) = grad[j] * w;
        }
    };
    const auto feasible = [](const Eigen::VectorXd& x) { return x(2) > 1e-6; };

    LmOutcome lm = lm_fit(eval, feasible, initial_guess(prep, c), n_pts, options.max_iterations);
    if (!lm.converged) {
        const auto cost_fn = [&](const Eigen::VectorXd& x) {
            if (!feasible(x)) return std::numeric_limits<double>::max();
            double cost = 0.0;
            for (int i = 0; i < n_pts; ++i) {
                const double f = exp_gauss_model(prep.t[i], c, x(0), sigma, x(1), x(2));
                const double r = (f - prep.y[i]) * prep.inv_sigma[i];
                cost += r * r;
            }
            return cost;
        };
        const Eigen::VectorXd nm = nelder_mead(cost_fn, lm.params, 4000);
        lm = lm_fit(eval, feasible, nm, n_pts, options.max_iterations);
        if (!lm.converged) throw NumericalError("decay fit did not converge");
    }

    FitResult result;
    result.c = c;
    result.a = lm.params(0);
    result.sigma = sigma;
    result.t0 = lm.params(1);
    result.tau = lm.params(2);
    result.residual_norm = lm.cost;
    result.iterations = lm.iterations;
    result.fixed_params = {"c", "sigma"};

    const int dof = std::max(n_pts - 3, 1);
    const double chi2_red = lm.cost / dof;
    Eigen::MatrixXd cov = lm.jtj.ldlt().solve(Eigen::MatrixXd::Identity(3, 3)) * chi2_red;
    const double tau_sd = std::sqrt(std::max(cov(2, 2), 0.0));
    result.a_stderr = std::sqrt(std::max(cov(0, 0), 0.0));
    const double tq = t_quantile_975(dof);
    result.tau_ci_lo = result.tau - tq * tau_sd;
    result.tau_ci_hi = result.tau + tq * tau_sd;
    return result;
}

}  // namespace

FitResult fit_decay(const DelayCurve& curve, const FitOptions& options) {
    PreparedCurve prep = prepare(curve, options.weighted);
    FitResult result = run_decay_fit(prep, options);

    if (options.bootstrap_ci) {
        // Residual resampling around the fitted model.
        std::vector<double> fitted(prep.t.size());
        std::vector<double> residuals(prep.t.size());
        for (std::size_t i = 0; i < prep.t.size(); ++i) {
            fitted[i] = exp_gauss_model(prep.t[i], result.c, result.a, result.sigma, result.t0,
                                        result.tau);
            residuals[i] = prep.y[i] - fitted[i];
        }
        rng::Xoshiro256pp gen(options.bootstrap_seed);
        std::vector<double> taus;
        taus.reserve(options.bootstrap_samples);
        for (int b = 0; b < options.bootstrap_samples; ++b) {
            PreparedCurve resampled = prep;
            for (std::size_t i = 0; i < prep.t.size(); ++i) {
                const std::size_t j = static_cast<std::size_t>(gen.next_double() * prep.t.size());
                resampled.y[i] = fitted[i] + residuals[std::min(j, prep.t.size() - 1)];
            }
            try {
                taus.push_back(run_decay_fit(resampled, options).tau);
            } catch (const NumericalError&) {
                // skip failed resamples
            }
        }
        if (taus.size() >= 20) {
            std::sort(taus.begin(), taus.end());
            const auto pick = [&](double q) {
                const double idx = q * (taus.size() - 1);
                return taus[static_cast<std::size_t>(std::llround(idx))];
            };
            result.tau_ci_lo = std::min(pick(0.025), result.tau);
            result.tau_ci_hi = std::max(pick(0.975), result.tau);
        }
    }
    return result;
}

GaussianIrfFit fit_gaussian_irf(const std::vector<std::pair<double, double>>& trace) {
    if (trace.size() < 5) throw ConfigError("IRF fit needs at least 5 points");
    const int n_pts = static_cast<int>(trace.size());
    double y_min = trace[0].second, y_max = trace[0].second, t_at_max = trace[0].first;
    for (const auto& [t, y] : trace) {
        y_min = std::min(y_min, y);
        if (y > y_max) {
            y_max = y;
            t_at_max = t;
        }
    }
    if (!(y_max > y_min)) throw ConfigError("degenerate IRF trace");

    // Moment-based initializer.
    double wsum = 0.0, msum = 0.0;
    for (const auto& [t, y] : trace) {
        const double w = std::max(y - y_min, 0.0);
        wsum += w;
        msum += w * (t - t_at_max) * (t - t_at_max);
    }
    const double sigma_init = std::sqrt(std::max(msum / std::max(wsum, 1e-300), 1e-12));

    const auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        // x = (amplitude, center, sigma, offset)
        for (int i = 0; i < n_pts; ++i) {
            const double dt = trace[i].first - x(1);
            const double e = std::exp(-dt * dt / (2.0 * x(2) * x(2)));
            r(i) = x(0) * e + x(3) - trace[i].second;
            jac(i, 0) = e;
            jac(i, 1) = x(0) * e * dt / (x(2) * x(2));
            jac(i, 2) = x(0) * e * dt * dt / (x(2) * x(2) * x(2));
            jac(i, 3) = 1.0;
        }
    };
    const auto feasible = [](const Eigen::VectorXd& x) { return x(2) > 1e-9; };
    Eigen::VectorXd x0(4);
    x0 << y_max - y_min, t_at_max, sigma_init, y_min;
    LmOutcome lm = lm_fit(eval, feasible, x0, n_pts, 500);
    if (!lm.converged) throw NumericalError("IRF fit did not converge");

    GaussianIrfFit fit;
    fit.amplitude = lm.params(0);
    fit.center = lm.params(1);
    fit.sigma = std::abs(lm.params(2));
    fit.offset = lm.params(3);

    // Flag clearly separated secondary maxima.
    int n_peaks = 0;
    for (int i = 1; i + 1 < n_pts; ++i) {
        const double y = trace[i].second;
        if (y > trace[i - 1].second && y > trace[i + 1].second &&
            y - fit.offset > 0.3 * fit.amplitude)
            ++n_peaks;
    }
    fit.multimodal_warning = n_peaks > 1;
    return fit;
}

DelayCurve normalize_curve(const DelayCurve& curve, const FitOptions& options) {
    const FitResult fit = fit_decay(curve, options);
    // Peak of the fitted model, scanned on a fine grid around the overlap.
    const double t_lo = fit.t0 - 4.0 * fit.sigma;
    const double t_hi = fit.t0 + 4.0 * fit.sigma + 3.0 * fit.tau;
    double peak = -std::numeric_limits<double>::infinity();
    const int n_scan = 2000;
    for (int i = 0; i <= n_scan; ++i) {
        const double t = t_lo + (t_hi - t_lo) * i / n_scan;
        peak = std::max(peak, exp_gauss_model(t, fit.c, fit.a, fit.sigma, fit.t0, fit.tau));
    }
    const double baseline = options.fixed_c;
    const double denom = peak - baseline;
    if (denom <= 0.0) throw NumericalError("normalize_curve: fitted peak at or below baseline");
    const double rel_peak_err = (fit.a != 0.0) ? fit.a_stderr / std::abs(fit.a) : 0.0;

    DelayCurve out;
    out.points.reserve(curve.points.size());
    for (const auto& pt : curve.points) {
        DelayPoint norm;
        norm.delay_ps = pt.delay_ps;
        norm.g2 = (pt.g2 - baseline) / denom;
        const double direct = pt.sigma_g2 / denom;
        const double from_peak = std::abs(pt.g2 - baseline) * rel_peak_err / denom;
        norm.sigma_g2 = std::sqrt(direct * direct + from_peak * from_peak);
        out.points.push_back(norm);
    }
    return out;
}

std::string FitResult::to_key_value_block() const {
    std::ostringstream os;
    os.precision(12);
    os << "c = " << c << "\n"
       << "a = " << a << "\n"
       << "sigma_ps = " << sigma << "\n"
       << "t0_ps = " << t0 << "\n"
       << "tau_ps = " << tau << "\n"
       << "tau_ci95_lo_ps = " << tau_ci_lo << "\n"
       << "tau_ci95_hi_ps = " << tau_ci_hi << "\n"
       << "residual_norm = " << residual_norm << "\n"
       << "iterations = " << iterations << "\n";
    os << "fixed =";
    for (std::size_t i = 0; i < fixed_params.size(); ++i)
        os << (i == 0 ? " " : ",") << fixed_params[i];
    os << "\n";
    return os.str();
}

}  // namespace sas::fitting
