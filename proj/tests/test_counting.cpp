#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sas/counting.hpp"
#include "sas/errors.hpp"
#include "sas/rng.hpp"

using namespace sas;
using counting::ClickModel;
using counting::CoincidenceHistogram;

namespace {

ClickModel model(double p_s, double p_as, double p_joint, std::uint64_t n_reps,
                 std::uint64_t seed) {
    ClickModel m;
    m.p_s = p_s;
    m.p_as = p_as;
    m.p_joint = p_joint;
    m.n_reps = n_reps;
    m.seed = seed;
    return m;
}

CoincidenceHistogram synthetic_hist(std::int64_t central, std::int64_t side,
                                    std::int64_t floor_per_bin = 0) {
    ClickModel shell = model(0.1, 0.1, 0.01, 1000, 0);
    CoincidenceHistogram hist;
    hist.bin_width_ns = 0.512;
    hist.rep_period_ns = 12.5;
    hist.n_reps = 1000;
    const std::int64_t half = 660;
    hist.first_bin = -half;
    hist.counts.assign(2 * half + 1, floor_per_bin);
    hist.add_delay(0.0, central);
    for (int k = 1; k <= 26; ++k) {
        hist.add_delay(12.5 * k, side);
        hist.add_delay(-12.5 * k, side);
    }
    return hist;
}

}  // namespace

TEST_CASE("click model feasibility") {
    CHECK_THROWS_AS(model(0.1, 0.1, 0.2, 100, 1).validate(), ConfigError);   // p_j > min
    CHECK_THROWS_AS(model(0.9, 0.9, 0.5, 100, 1).validate(), ConfigError);   // p_j < p_s+p_as-1
    CHECK_THROWS_AS(model(1.2, 0.1, 0.1, 100, 1).validate(), ConfigError);
    CHECK_THROWS_AS(model(0.1, 0.1, 0.01, 0, 1).validate(), ConfigError);
    CHECK_NOTHROW(model(0.9, 0.9, 0.85, 100, 1).validate());
    CHECK_NOTHROW(model(0.1, 0.2, 0.02, 100, 1).validate());
}

TEST_CASE("event stream is deterministic and rep-ordered") {
    const ClickModel m = model(0.01, 0.005, 0.002, 200000, 42);
    const auto events = simulate_clicks(m);
    const auto events_again = simulate_clicks(m);
    REQUIRE(events.size() == events_again.size());
    for (std::size_t k = 0; k < events.size(); ++k) {
        CHECK(events[k].rep_index == events_again[k].rep_index);
        CHECK(events[k].channel == events_again[k].channel);
    }
    for (std::size_t k = 1; k < events.size(); ++k)
        CHECK(events[k].rep_index >= events[k - 1].rep_index);
    CHECK(events.front().timestamp_ns ==
          doctest::Approx(events.front().rep_index * 12.5));

    const auto different = simulate_clicks(model(0.01, 0.005, 0.002, 200000, 43));
    CHECK(different.size() != events.size());
}

TEST_CASE("click frequencies match the model probabilities") {
    const ClickModel m = model(0.02, 0.01, 0.004, 500000, 7);
    const auto events = simulate_clicks(m);
    std::uint64_t n_s = 0, n_as = 0;
    for (const auto& ev : events) (ev.channel == 'S' ? n_s : n_as)++;
    const double sd_s = std::sqrt(m.p_s * m.n_reps);
    const double sd_as = std::sqrt(m.p_as * m.n_reps);
    CHECK(std::abs(static_cast<double>(n_s) - m.p_s * m.n_reps) < 4 * sd_s);
    CHECK(std::abs(static_cast<double>(n_as) - m.p_as * m.n_reps) < 4 * sd_as);
}

TEST_CASE("histogram pairing of hand-built events") {
    // one coincident pair
    std::vector<counting::ClickEvent> events = {{100, 'S', 1250.0}, {100, 'A', 1250.0}};
    auto hist = counting::build_histogram(events, 0.512, 12.5);
    CHECK(hist.count_at(0) == 1);
    CHECK(hist.total_starts == 1);
    CHECK(hist.total_stops == 1);
    std::int64_t total = 0;
    for (auto c : hist.counts) total += c;
    CHECK(total == 1);

    // clicks in adjacent repetitions land on the first side peaks
    events = {{100, 'S', 1250.0}, {101, 'A', 1262.5}, {102, 'S', 1275.0}};
    hist = counting::build_histogram(events, 0.512, 12.5);
    const auto plus_one = static_cast<std::int64_t>(std::floor(12.5 / 0.512 + 0.5));
    CHECK(hist.count_at(plus_one) == 1);   // S then aS one period later
    CHECK(hist.count_at(-plus_one) == 1);  // aS then S one period later
    CHECK(hist.count_at(0) == 0);
}

TEST_CASE("build_histogram rejects empty and unsorted input") {
    CHECK_THROWS_AS(counting::build_histogram({}, 0.512, 12.5), ConfigError);
    std::vector<counting::ClickEvent> unsorted = {{5, 'S', 62.5}, {4, 'A', 50.0}};
    CHECK_THROWS_AS(counting::build_histogram(unsorted, 0.512, 12.5), ConfigError);
}

TEST_CASE("streaming accumulator agrees with the event-list path") {
    // boundary-heavy case: clicks dense enough that pairs straddle blocks
    const ClickModel m = model(0.03, 0.02, 0.01, (1ULL << 22) + 5000, 11);
    const auto streamed = counting::simulate_histogram(m);
    const auto listed = counting::build_histogram(simulate_clicks(m), 0.512, 12.5);
    CHECK(streamed.counts == listed.counts);
    CHECK(streamed.total_starts == listed.total_starts);
    CHECK(streamed.total_stops == listed.total_stops);
}

TEST_CASE("streaming histogram is byte-identical for any worker count") {
#ifdef _OPENMP
    const ClickModel m = model(0.005, 0.003, 0.001, 3000000, 5);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto serial = counting::simulate_histogram(m);
    omp_set_num_threads(saved);
    const auto parallel = counting::simulate_histogram(m);
    CHECK(serial.counts == parallel.counts);
    CHECK(serial.total_starts == parallel.total_starts);
#endif
}

TEST_CASE("independent channels give a flat histogram and unit correlation") {
    const double p_s = 0.01, p_as = 0.008;
    const ClickModel m = model(p_s, p_as, p_s * p_as, 40000000, 3);
    const auto hist = counting::simulate_histogram(m);
    const auto est = counting::extract_g2(hist);
    CHECK(std::abs(est.g2 - 1.0) < 3.0 * est.delta_g2);

    // side peaks flat within Poisson fluctuations
    for (double area : est.side_areas)
        CHECK(std::abs(area - est.side_mean) < 5.0 * std::sqrt(est.side_mean));

    // uniformity of the side-peak populations, chi^2 per dof near one
    double chi2 = 0.0;
    for (double area : est.side_areas)
        chi2 += (area - est.side_mean) * (area - est.side_mean) / est.side_mean;
    CHECK(chi2 / est.side_areas.size() < 2.5);
}

TEST_CASE("perfect pairing concentrates counts in the central peak") {
    const ClickModel m = model(0.01, 0.01, 0.01, 1000000, 9);
    const auto hist = counting::simulate_histogram(m);
    const auto est = counting::extract_g2(hist);
    CHECK(est.central_area > 20.0 * est.side_mean);
}

TEST_CASE("g2 extraction on constructed histograms") {
    // flat: every peak equal
    auto flat = counting::extract_g2(synthetic_hist(400, 400));
    CHECK(flat.g2 == doctest::Approx(1.0));
    CHECK(flat.delta_g2 == doctest::Approx(std::sqrt(1.0 / 400.0)).epsilon(0.05));

    // bunched: central peak 63.4 times the side average
    auto bunched = counting::extract_g2(synthetic_hist(6340, 100));
    CHECK(bunched.g2 == doctest::Approx(63.4));
    CHECK(bunched.side_areas_negative.size() == 25);

    // flat dark floor is removed when requested
    auto with_floor = synthetic_hist(6340, 100, 7);
    auto raw = counting::extract_g2(with_floor, 1.536, 25, false);
    auto cleaned = counting::extract_g2(with_floor, 1.536, 25, true);
    CHECK(raw.g2 < 63.4);
    CHECK(cleaned.g2 == doctest::Approx(63.4).epsilon(1e-6));
}

TEST_CASE("g2 extraction validates span and side peaks") {
    const auto hist = synthetic_hist(100, 10);
    CHECK_THROWS_AS(counting::extract_g2(hist, 1.536, 60), ConfigError);
    CHECK_THROWS_AS(counting::extract_g2(hist, -1.0, 25), ConfigError);
    auto empty = synthetic_hist(0, 0);
    CHECK_THROWS_AS(counting::extract_g2(empty), NumericalError);
}

TEST_CASE("uncertainty shrinks with the square root of the acquisition") {
    double sum_ratio = 0.0;
    const int n_seeds = 8;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const ClickModel small = model(0.004, 0.002, 0.0008, 6000000, 100 + seed);
        ClickModel big = small;
        big.n_reps *= 2;
        const auto est_small = counting::extract_g2(counting::simulate_histogram(small));
        const auto est_big = counting::extract_g2(counting::simulate_histogram(big));
        sum_ratio += est_small.delta_g2 / est_big.delta_g2;
    }
    CHECK(sum_ratio / n_seeds == doctest::Approx(std::sqrt(2.0)).epsilon(0.12));
}

TEST_CASE("estimator consistency over random feasible triples") {
    rng::Xoshiro256pp gen(2024);
    int failures = 0;
    const int n_trials = 100;
    for (int trial = 0; trial < n_trials; ++trial) {
        const double p_s = 0.002 + 0.01 * gen.next_double();
        const double p_as = 0.002 + 0.01 * gen.next_double();
        const double lo = std::max(0.0, p_s + p_as - 1.0);
        const double hi = std::min(p_s, p_as);
        const double p_joint = lo + (hi - lo) * (0.05 + 0.9 * gen.next_double());
        const ClickModel m = model(p_s, p_as, p_joint, 4000000, 5000 + trial);
        const auto est = counting::extract_g2(counting::simulate_histogram(m));
        const double truth = p_joint / (p_s * p_as);
        if (std::abs(est.g2 - truth) > 3.0 * est.delta_g2) ++failures;
    }
    CHECK(failures <= 3);
}

TEST_CASE("reported uncertainty tracks the seed-to-seed spread") {
    const int n_seeds = 60;
    std::vector<double> estimates;
    double delta_sum = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const ClickModel m = model(0.003, 0.0015, 0.0006, 8000000, 900 + seed);
        const auto est = counting::extract_g2(counting::simulate_histogram(m));
        estimates.push_back(est.g2);
        delta_sum += est.delta_g2;
    }
    double mean = 0.0;
    for (double g : estimates) mean += g;
    mean /= n_seeds;
    double var = 0.0;
    for (double g : estimates) var += (g - mean) * (g - mean);
    const double empirical = std::sqrt(var / (n_seeds - 1));
    const double reported = delta_sum / n_seeds;
    CHECK(reported / empirical > 1.0 / 1.5);
    CHECK(reported / empirical < 1.5);
}

TEST_CASE("crosstalk subtraction") {
    const auto both = synthetic_hist(6340, 100, 5);
    const auto leak = synthetic_hist(0, 0, 5);

    // identical inputs cancel completely
    const auto zero = counting::subtract_crosstalk(both, both);
    for (auto c : zero.counts) CHECK(c == 0);

    // a zero histogram leaves the input unchanged
    const auto same = counting::subtract_crosstalk(both, synthetic_hist(0, 0, 0));
    CHECK(same.counts == both.counts);
    CHECK(!same.notes.empty());

    // a flat write-only floor removes floor * bins-per-window counts per peak
    const auto cleaned = counting::subtract_crosstalk(both, leak);
    const auto est_clean = counting::extract_g2(cleaned);
    const auto est_raw = counting::extract_g2(both);
    const double bins_per_window = 1.536 / 0.512;
    CHECK(est_raw.side_mean - est_clean.side_mean ==
          doctest::Approx(5.0 * bins_per_window).epsilon(1e-9));
    CHECK(est_raw.central_area - est_clean.central_area ==
          doctest::Approx(5.0 * bins_per_window).epsilon(1e-9));

    // clamping keeps all bins non-negative
    const auto clamped = counting::subtract_crosstalk(leak, both);
    for (auto c : clamped.counts) CHECK(c >= 0);

    // acquisition-length normalization scales the subtrahend
    auto longer = leak;
    longer.n_reps = 2000;
    for (auto& c : longer.counts) c *= 2;
    const auto normalized = counting::subtract_crosstalk(both, longer);
    CHECK(normalized.counts == cleaned.counts);

    // binning mismatch is rejected
    auto other = both;
    other.bin_width_ns = 0.256;
    CHECK_THROWS_AS(counting::subtract_crosstalk(both, other), ConfigError);
}

TEST_CASE("histogram span properties") {
    const auto hist = synthetic_hist(10, 10);
    CHECK(hist.positive_span_periods() >= 26.0);
    auto short_hist = hist;
    short_hist.counts.resize(100);
    CHECK_THROWS_AS(short_hist.validate(), ConfigError);
}
