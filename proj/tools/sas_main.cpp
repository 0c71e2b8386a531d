#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sas/errors.hpp"
#include "sas/pipeline.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;
constexpr int kExitAcceptanceError = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and analysis toolkit for phonon-mediated Stokes/anti-Stokes "
                 "photon correlation experiments"};
    app.require_subcommand(1);

    sas::pipeline::GlobalOptions opts;
    std::string out_dir;
    std::uint64_t seed = 0;
    app.add_option("--config", opts.config_path, "Configuration file (key = value sections)")
        ->check(CLI::ExistingFile);
    auto* out_opt = app.add_option("--out", out_dir, "Output directory");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed override");
    app.add_option("--threads", opts.threads, "Worker thread count (0 = default)");

    app.add_subcommand("analytic", "Closed-form detector-model sweep tables")->fallthrough();
    app.add_subcommand("simulate", "Master-equation trajectories and sweeps")->fallthrough();
    app.add_subcommand("counts", "Monte-Carlo coincidence counting and g2 extraction")
        ->fallthrough();
    auto* fit_cmd = app.add_subcommand("fit", "Fit delay curves with the decay model");
    fit_cmd->fallthrough();
    std::vector<std::string> curve_files;
    fit_cmd->add_option("curves", curve_files, "Delay-curve CSV files")
        ->check(CLI::ExistingFile);
    auto* repro_cmd =
        app.add_subcommand("reproduce", "Run a bundled scenario and check its report");
    repro_cmd->fallthrough();
    std::string target;
    repro_cmd->add_option("target", target, "One of: fig3c, fig5, decay")->required();

    CLI11_PARSE(app, argc, argv);

    if (*out_opt) {
        opts.out_dir = out_dir;
        opts.out_dir_set = true;
    }
    if (*seed_opt) {
        opts.seed = seed;
        opts.seed_set = true;
    }

    try {
        if (app.got_subcommand("analytic"))
            sas::pipeline::cmd_analytic(opts);
        else if (app.got_subcommand("simulate"))
            sas::pipeline::cmd_simulate(opts);
        else if (app.got_subcommand("counts"))
            sas::pipeline::cmd_counts(opts);
        else if (app.got_subcommand("fit"))
            sas::pipeline::cmd_fit(opts, curve_files);
        else if (app.got_subcommand("reproduce"))
            sas::pipeline::cmd_reproduce(target, opts);
    } catch (const sas::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const sas::AcceptanceError& e) {
        std::fprintf(stderr, "acceptance failure: %s\n", e.what());
        return kExitAcceptanceError;
    } catch (const sas::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumericalError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumericalError;
    }
    return 0;
}
