#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sas/csv.hpp"
#include "sas/errors.hpp"
#include "sas/fitting.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sas_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SAS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("analytic command writes the three tables and a manifest") {
    TempDir dir;
    const std::string out = dir.file("out");
    CHECK(run_cli("analytic --out " + out) == 0);
    CHECK(fs::exists(out + "/manifest.cfg"));

    const auto sweep = sas::csv::read_table(out + "/sweep.csv");
    REQUIRE(!sweep.rows.empty());
    CHECK(sweep.columns == std::vector<std::string>{"p_bar", "q_a", "q_b", "eta_a", "eta_b",
                                                    "g_ab", "g_aa_cond_bound"});

    const auto cond = sas::csv::read_table(out + "/conditional.csv");
    CHECK(!cond.rows.empty());

    const auto modes = sas::csv::read_table(out + "/mode_count.csv");
    CHECK(modes.columns == std::vector<std::string>{"n_modes", "g_aa"});
    REQUIRE(modes.rows.size() == 10);
    CHECK(modes.rows[0][1] == doctest::Approx(2.0).epsilon(1e-2));
    CHECK(modes.rows[9][1] == doctest::Approx(1.1).epsilon(1e-2));
}

TEST_CASE("analytic command is deterministic and replayable from its manifest") {
    TempDir dir;
    const std::string out_a = dir.file("a");
    const std::string out_b = dir.file("b");
    const std::string out_c = dir.file("c");
    CHECK(run_cli("analytic --out " + out_a) == 0);
    CHECK(run_cli("analytic --out " + out_b) == 0);
    CHECK(slurp(out_a + "/sweep.csv") == slurp(out_b + "/sweep.csv"));
    // manifests agree except for the pinned output directory
    std::istringstream ma(slurp(out_a + "/manifest.cfg")), mb(slurp(out_b + "/manifest.cfg"));
    std::string la, lb;
    while (std::getline(ma, la) && std::getline(mb, lb))
        if (la.find("out_dir") == std::string::npos) CHECK(la == lb);

    // replay from the manifest: the manifest pins out_dir, so override it
    CHECK(run_cli("analytic --config " + out_a + "/manifest.cfg --out " + out_c) == 0);
    CHECK(slurp(out_a + "/sweep.csv") == slurp(out_c + "/sweep.csv"));
}

TEST_CASE("unknown config keys fail with the config exit code") {
    TempDir dir;
    {
        std::ofstream cfg(dir.file("bad.cfg"));
        cfg << "[analytic]\nnonsense_key = 1\n";
    }
    CHECK(run_cli("analytic --config " + dir.file("bad.cfg") + " --out " + dir.file("out")) == 2);
}

TEST_CASE("counts command writes a histogram and a g2 estimate") {
    TempDir dir;
    {
        std::ofstream cfg(dir.file("counts.cfg"));
        cfg << "[counts]\n"
               "p_s = 0.01\np_as = 0.008\np_joint = 0.002\nn_reps = 2000000\n"
               "emit_events = false\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("counts --config " + dir.file("counts.cfg") + " --out " + out + " --seed 5") ==
          0);
    const auto hist = sas::csv::read_histogram(out + "/histogram.csv");
    CHECK(hist.seed == 5);
    CHECK(hist.n_reps == 2000000);
    const std::string g2_text = slurp(out + "/g2.txt");
    CHECK(g2_text.find("g2 = ") != std::string::npos);
    CHECK(g2_text.find("delta_g2 = ") != std::string::npos);

    // same seed, same bytes
    const std::string out2 = dir.file("out2");
    CHECK(run_cli("counts --config " + dir.file("counts.cfg") + " --out " + out2 + " --seed 5") ==
          0);
    CHECK(slurp(out + "/histogram.csv") == slurp(out2 + "/histogram.csv"));

    // different seed, different histogram
    const std::string out3 = dir.file("out3");
    CHECK(run_cli("counts --config " + dir.file("counts.cfg") + " --out " + out3 + " --seed 6") ==
          0);
    CHECK(slurp(out + "/histogram.csv") != slurp(out3 + "/histogram.csv"));
}

TEST_CASE("counts command derives probabilities from the detector model") {
    TempDir dir;
    {
        std::ofstream cfg(dir.file("counts.cfg"));
        cfg << "[counts]\nn_reps = 1000000\np_bar = 0.2\neta_b = 0.5\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("counts --config " + dir.file("counts.cfg") + " --out " + out) == 0);
    const std::string manifest = slurp(out + "/manifest.cfg");
    CHECK(manifest.find("p_s = ") != std::string::npos);
    CHECK(manifest.find("p_joint = ") != std::string::npos);
}

TEST_CASE("fit command fits a curve file and reports the lifetime") {
    TempDir dir;
    sas::fitting::DelayCurve curve;
    for (double t = -2.0; t <= 12.0; t += 0.5) {
        const double g = sas::fitting::exp_gauss_model(t, 1.0, 50.0, 0.22, 0.0, 3.9);
        curve.points.push_back({t, g, 0.05 * g});
    }
    sas::csv::write_delay_curve(dir.file("curve.csv"), curve);

    const std::string out = dir.file("out");
    CHECK(run_cli("fit " + dir.file("curve.csv") + " --out " + out) == 0);
    const std::string block = slurp(out + "/fit_curve.txt");
    CHECK(block.find("tau_ps = 3.9") != std::string::npos);
    CHECK(fs::exists(out + "/fit_results.csv"));
    CHECK(fs::exists(out + "/residuals_curve.csv"));

    const auto results = sas::csv::read_table(out + "/fit_results.csv");
    REQUIRE(results.rows.size() == 1);
    const double tau = results.rows[0][5];
    CHECK(tau == doctest::Approx(3.9).epsilon(1e-6));
}

TEST_CASE("fit command normalizes when asked") {
    TempDir dir;
    sas::fitting::DelayCurve curve;
    for (double t = -2.0; t <= 12.0; t += 0.5) {
        const double g = sas::fitting::exp_gauss_model(t, 1.0, 50.0, 0.22, 0.0, 4.0);
        curve.points.push_back({t, g, 0.05 * g});
    }
    sas::csv::write_delay_curve(dir.file("curve.csv"), curve);
    {
        std::ofstream cfg(dir.file("fit.cfg"));
        cfg << "[fit]\nnormalize = true\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("fit " + dir.file("curve.csv") + " --config " + dir.file("fit.cfg") +
                  " --out " + out) == 0);
    const auto norm = sas::csv::read_delay_curve(out + "/normalized_curve.csv");
    double peak = -1e9;
    for (const auto& pt : norm.points) peak = std::max(peak, pt.g2);
    CHECK(peak <= 1.0 + 1e-9);
    CHECK(peak > 0.95);
}

TEST_CASE("two curves fit together produce per-curve outputs") {
    TempDir dir;
    for (const auto& [name, amp] : {std::pair{"one", 50.0}, std::pair{"two", 5.0}}) {
        sas::fitting::DelayCurve curve;
        for (double t = -2.0; t <= 12.0; t += 0.5) {
            const double g = sas::fitting::exp_gauss_model(t, 1.0, amp, 0.22, 0.0, 4.0);
            curve.points.push_back({t, g, 0.0});
        }
        sas::csv::write_delay_curve(dir.file(std::string(name) + ".csv"), curve);
    }
    {
        std::ofstream cfg(dir.file("fit.cfg"));
        cfg << "[fit]\nnormalize = true\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("fit " + dir.file("one.csv") + " " + dir.file("two.csv") + " --config " +
                  dir.file("fit.cfg") + " --out " + out) == 0);
    const auto results = sas::csv::read_table(out + "/fit_results.csv");
    REQUIRE(results.rows.size() == 2);
    // equal lifetimes: the normalized curves overlay
    const auto n1 = sas::csv::read_delay_curve(out + "/normalized_one.csv");
    const auto n2 = sas::csv::read_delay_curve(out + "/normalized_two.csv");
    for (std::size_t k = 0; k < n1.points.size(); ++k)
        CHECK(n1.points[k].g2 == doctest::Approx(n2.points[k].g2).epsilon(1e-6));
}

TEST_CASE("numerical failures use their own exit code") {
    TempDir dir;
    {
        std::ofstream cfg(dir.file("counts.cfg"));
        // so few repetitions that the side peaks stay empty
        cfg << "[counts]\np_s = 1e-4\np_as = 1e-4\np_joint = 1e-4\nn_reps = 50\n";
    }
    CHECK(run_cli("counts --config " + dir.file("counts.cfg") + " --out " + dir.file("out")) ==
          3);
}

TEST_CASE("failed reproduction reports exit code four") {
    TempDir dir;
    {
        // read noise ordered backwards: the plateau-ordering check must fail
        std::ofstream cfg(dir.file("bad.cfg"));
        cfg << "[analytic]\nread_q_b = 9.547e-7, 2.111e-7, 5.845e-8\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("reproduce fig3c --config " + dir.file("bad.cfg") + " --out " + out) == 4);
    const std::string report = slurp(out + "/report.txt");
    CHECK(report.find("FAIL") != std::string::npos);
}

TEST_CASE("malformed curve input fails without partial outputs") {
    TempDir dir;
    {
        std::ofstream bad(dir.file("bad.csv"));
        bad << "delay_ps,g2,sigma_g2\n0,not_a_number,0\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("fit " + dir.file("bad.csv") + " --out " + out) == 2);
    CHECK(!fs::exists(out + "/fit_results.csv"));
    CHECK(!fs::exists(out + "/manifest.cfg"));
}

TEST_CASE("simulate command emits a trajectory") {
    TempDir dir;
    {
        std::ofstream cfg(dir.file("sim.cfg"));
        cfg << "[sim]\nt_end_ps = 3.0\nwrite_amp = 0.4\nread_amp = 1.0\n";
    }
    const std::string out = dir.file("out");
    CHECK(run_cli("simulate --config " + dir.file("sim.cfg") + " --out " + out) == 0);
    const auto traj = sas::csv::read_table(out + "/trajectory.csv");
    CHECK(traj.columns ==
          std::vector<std::string>{"time_ps", "n_s1", "n_s2", "n_as2", "n_phonon"});
    CHECK(traj.rows.size() > 100);
    CHECK(traj.rows.back()[0] == doctest::Approx(3.0));
    // populations grew during the pulses
    CHECK(traj.rows.back()[4] > 1e-5);
}

TEST_CASE("reproduce fig3c passes its report") {
    TempDir dir;
    const std::string out = dir.file("out");
    CHECK(run_cli("reproduce fig3c --out " + out) == 0);
    const std::string report = slurp(out + "/report.txt");
    CHECK(report.find("RESULT pass") != std::string::npos);
    CHECK(report.find("FAIL") == std::string::npos);
}

TEST_CASE("bad invocations exit non-zero") {
    TempDir dir;
    CHECK(run_cli("reproduce nonsense --out " + dir.file("x")) == 2);
    CHECK(run_cli("no_such_command") != 0);
    CHECK(run_cli("analytic --config /nonexistent.cfg") != 0);
}
