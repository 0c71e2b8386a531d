#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sas::fitting {

struct DelayPoint {
    double delay_ps = 0.0;
    double g2 = 0.0;
    double sigma_g2 = 0.0;  // 0 means "no uncertainty supplied"
};

struct DelayCurve {
    std::vector<DelayPoint> points;

    void validate() const;  // delays strictly increasing, sigmas >= 0
};

// Exponential decay convolved with a Gaussian response of width sigma:
//   C + (A/2) exp(sigma^2/(2 tau^2)) exp(-(t-t0)/tau)
//       * (1 + erf((t - t0 - sigma^2/tau) / (sqrt(2) sigma)))
// Evaluated through erfcx on the rising flank so large positive exponents
// never overflow.
double exp_gauss_model(double t, double c, double a, double sigma, double t0, double tau);

// Partial derivatives with respect to (A, t0, tau) at fixed C and sigma.
std::array<double, 3> exp_gauss_gradient(double t, double a, double sigma, double t0, double tau);

// Scaled complementary error function exp(x^2) erfc(x) for x >= 0.
double erfcx(double x);

struct FitOptions {
    double fixed_sigma_ps = 0.22;
    double fixed_c = 1.0;
    bool weighted = true;       // weight residuals by 1/sigma_g2^2 when available
    bool bootstrap_ci = false;  // percentile CI from residual resampling
    int bootstrap_samples = 200;
    std::uint64_t bootstrap_seed = 1;
    int max_iterations = 500;
};

struct FitResult {
    double c = 1.0;
    double a = 0.0;
    double sigma = 0.22;
    double t0 = 0.0;
    double tau = 0.0;
    double tau_ci_lo = 0.0;
    double tau_ci_hi = 0.0;      // 95 % interval
    double a_stderr = 0.0;
    double residual_norm = 0.0;  // weighted sum of squared residuals
    int iterations = 0;
    std::vector<std::string> fixed_params;

    std::string to_key_value_block() const;
};

// Weighted least squares over {A, t0, tau} with sigma and C held fixed.
FitResult fit_decay(const DelayCurve& curve, const FitOptions& options = {});

struct GaussianIrfFit {
    double sigma = 0.0;
    double amplitude = 0.0;
    double center = 0.0;
    double offset = 0.0;
    bool multimodal_warning = false;
};

// Least-squares Gaussian (amplitude, center, sigma, offset) on a delay trace.
GaussianIrfFit fit_gaussian_irf(const std::vector<std::pair<double, double>>& trace);

// Maps g2 to (g2 - 1)/(g2_peak - 1) with the peak taken from the fitted
// model, not from the closest raw sample.
DelayCurve normalize_curve(const DelayCurve& curve, const FitOptions& options = {});

}  // namespace sas::fitting
