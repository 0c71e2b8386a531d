#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sas::counting {

// Per-repetition Bernoulli model of the two detection channels. p_joint
// carries the correlation; the remaining mass splits into single-channel
// and empty repetitions.
struct ClickModel {
    double p_s = 0.0;
    double p_as = 0.0;
    double p_joint = 0.0;
    double rep_period_ns = 12.5;
    std::uint64_t n_reps = 0;
    std::uint64_t seed = 1;

    void validate() const;  // feasibility of the probability triple
};

struct ClickEvent {
    std::uint64_t rep_index = 0;
    char channel = 'S';  // 'S' = Stokes (start), 'A' = anti-Stokes (stop)
    double timestamp_ns = 0.0;
};

// Explicit event stream; intended for small runs and tests. Clicks are
// identical to what the streaming accumulator draws for the same model.
std::vector<ClickEvent> simulate_clicks(const ClickModel& model);

// Start-stop delay histogram. Bin b covers delays in
// [b*w - w/2, b*w + w/2) so coincidence peaks sit on bin centers.
struct CoincidenceHistogram {
    double bin_width_ns = 0.512;
    double rep_period_ns = 12.5;
    std::uint64_t n_reps = 0;
    std::uint64_t seed = 0;
    std::string rng_id;
    std::int64_t first_bin = 0;
    std::vector<std::int64_t> counts;
    std::uint64_t total_starts = 0;
    std::uint64_t total_stops = 0;
    std::vector<std::string> notes;

    std::int64_t last_bin() const { return first_bin + static_cast<std::int64_t>(counts.size()) - 1; }
    std::int64_t count_at(std::int64_t bin) const;
    void add_delay(double delay_ns, std::int64_t n = 1);
    double positive_span_periods() const;

    void validate() const;
};

// Pairs every start with the stops in a +-window_periods window.
CoincidenceHistogram build_histogram(const std::vector<ClickEvent>& events, double bin_width_ns,
                                     double rep_period_ns, int window_periods = 27);

// Streaming generate-and-accumulate path: never materializes the event
// list, partitions repetitions into blocks with derived RNG streams, and
// returns byte-identical histograms for any thread count.
CoincidenceHistogram simulate_histogram(const ClickModel& model, double bin_width_ns = 0.512,
                                        int window_periods = 27);

struct G2Estimate {
    double g2 = 0.0;
    double delta_g2 = 0.0;
    double central_area = 0.0;
    double side_mean = 0.0;
    double side_stddev = 0.0;  // sample std over the positive side peaks
    int n_side_peaks = 0;
    std::vector<double> side_areas;           // positive delays, diagnostics
    std::vector<double> side_areas_negative;  // negative delays, diagnostics
};

// Ratio of the central-peak area to the mean positive side-peak area,
// integrating analysis_bin_ns around each peak. The uncertainty combines
// the Poisson error of the central peak with the standard error of the
// side-peak mean.
G2Estimate extract_g2(const CoincidenceHistogram& hist, double analysis_bin_ns = 1.536,
                      int n_side_peaks = 25, bool dark_floor_subtraction = false);

// Per-bin subtraction of a write-only histogram (clamped at zero). Counts
// are rescaled when the acquisitions differ in length.
CoincidenceHistogram subtract_crosstalk(const CoincidenceHistogram& both,
                                        const CoincidenceHistogram& write_only);

}  // namespace sas::counting
