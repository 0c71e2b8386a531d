// Benchmark of the structured master-equation kernels against the dense
// reference, and of parallel against serial sweep/counting execution.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sas/counting.hpp"
#include "sas/lindblad.hpp"

using sas::lindblad::Frame;
using sas::lindblad::Propagator;
using sas::lindblad::SimConfig;
using sas::lindblad::StateMatrix;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void bench_rhs(bool smoke) {
    std::printf("--- right-hand side: structured kernels vs dense reference ---\n");
    for (int bump = 0; bump <= (smoke ? 0 : 1); ++bump) {
        SimConfig config = SimConfig::defaults();
        config.cutoff_s1 += bump;
        config.cutoff_s2 += bump;
        config.cutoff_as2 += bump;
        config.cutoff_phonon += bump;
        config.frame = Frame::kOmega0;
        Propagator prop(config);
        StateMatrix state = prop.initial_state();
        StateMatrix out;
        const int reps = smoke ? 20 : 200;

        auto t0 = std::chrono::steady_clock::now();
        for (int k = 0; k < reps; ++k) prop.rhs(state, 1.0 + 1e-4 * k, out);
        const double structured = seconds_since(t0) / reps;

        const sas::fock::Matrix rho = state.to_eigen();
        t0 = std::chrono::steady_clock::now();
        const int dense_reps = smoke ? 2 : 20;
        for (int k = 0; k < dense_reps; ++k)
            sas::lindblad::lindblad_rhs_reference(rho, 1.0 + 1e-4 * k, config, Frame::kOmega0);
        const double dense = seconds_since(t0) / dense_reps;

        std::printf("dim %4d: structured %8.3f us, dense reference %8.3f us, speedup %.1fx\n",
                    prop.layout().dim(), structured * 1e6, dense * 1e6, dense / structured);
    }
}

void bench_sweep(bool smoke) {
    std::printf("--- delay sweep: serial vs OpenMP over grid points ---\n");
    SimConfig config = SimConfig::defaults();
    config.write_pulse.amplitude = 0.2;
    config.read_pulse.amplitude = 3.0;
    config.top_population_guard = 0.05;
    std::vector<double> delays;
    const int n = smoke ? 2 : 8;
    for (int k = 0; k < n; ++k) delays.push_back(0.5 + k);

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    auto t0 = std::chrono::steady_clock::now();
    sas::lindblad::delay_sweep_g2(config, delays);
    const double serial = seconds_since(t0);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
    t0 = std::chrono::steady_clock::now();
    sas::lindblad::delay_sweep_g2(config, delays);
    const double parallel = seconds_since(t0);
    std::printf("%d points: serial %.2f s, %d threads %.2f s, speedup %.2fx\n", n, serial,
                max_threads, parallel, serial / parallel);
#else
    std::printf("%d points: serial %.2f s (OpenMP unavailable)\n", n, serial);
#endif
}

void bench_counts(bool smoke) {
    std::printf("--- coincidence counting: serial vs OpenMP over blocks ---\n");
    sas::counting::ClickModel model;
    model.p_s = 0.02;
    model.p_as = 0.01;
    model.p_joint = 0.002;
    model.n_reps = smoke ? 40000000ULL : 1000000000ULL;
    model.seed = 7;

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    auto t0 = std::chrono::steady_clock::now();
    const auto hist_serial = sas::counting::simulate_histogram(model);
    const double serial = seconds_since(t0);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
    t0 = std::chrono::steady_clock::now();
    const auto hist_parallel = sas::counting::simulate_histogram(model);
    const double parallel = seconds_since(t0);
    const bool identical = hist_serial.counts == hist_parallel.counts;
    std::printf("%llu reps: serial %.2f s, %d threads %.2f s, speedup %.2fx, identical: %s\n",
                static_cast<unsigned long long>(model.n_reps), serial, max_threads, parallel,
                serial / parallel, identical ? "yes" : "NO");
#else
    std::printf("%llu reps: serial %.2f s (OpenMP unavailable)\n",
                static_cast<unsigned long long>(model.n_reps), serial);
#endif
}

}  // namespace

int main(int argc, char** argv) {
    const bool smoke = argc > 1 && std::string(argv[1]) == "--smoke";
    bench_rhs(smoke);
    bench_sweep(smoke);
    bench_counts(smoke);
    return 0;
}
