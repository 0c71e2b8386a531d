#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sas/config.hpp"

namespace sas::pipeline {

struct GlobalOptions {
    std::string config_path;  // empty: built-in defaults
    std::string out_dir = "out";
    bool out_dir_set = false;
    std::uint64_t seed = 1;
    bool seed_set = false;
    int threads = 0;  // 0: leave the OpenMP default
};

// Closed-form sweep tables: power sweep, conditional autocorrelation,
// mode-count law.
void cmd_analytic(const GlobalOptions& opts);

// Master-equation runs: trajectory, amplitude grid, delay sweep.
void cmd_simulate(const GlobalOptions& opts);

// Monte-Carlo coincidence counting and histogram analysis.
void cmd_counts(const GlobalOptions& opts);

// Decay fits of delay-curve CSVs (from file args or the config).
void cmd_fit(const GlobalOptions& opts, const std::vector<std::string>& curve_files);

// One-shot scenario reproductions with built-in configs and report:
// "fig3c" (read-power dependence of the closed-form correlation),
// "fig5" (master-equation power grid), "decay" (lifetime recovery).
void cmd_reproduce(const std::string& target, const GlobalOptions& opts);

}  // namespace sas::pipeline
