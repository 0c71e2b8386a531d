#include "sas/counting.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sas/errors.hpp"
#include "sas/rng.hpp"

namespace sas::counting {

namespace {

constexpr std::uint64_t kBlockReps = 1ULL << 22;

enum class Outcome { kBoth, kStokesOnly, kAntiStokesOnly };

// Calls fn(rep_index, outcome) for every repetition in [rep_begin, rep_end)
// that produced at least one click. Empty repetitions are skipped with a
// geometric jump so the cost scales with the click rate, not the rep count.
template <typename Fn>
void generate_block(const ClickModel& model, std::uint64_t block_index, std::uint64_t rep_begin,
                    std::uint64_t rep_end, Fn&& fn) {
    const double p_any = model.p_s + model.p_as - model.p_joint;
    if (p_any <= 0.0) return;
    rng::Xoshiro256pp gen = rng::Xoshiro256pp::for_block(model.seed, block_index);
    const double frac_both = model.p_joint / p_any;
    const double frac_s = (model.p_s - model.p_joint) / p_any;
    std::uint64_t rep = rep_begin;
    while (true) {
        const std::uint64_t gap = gen.next_geometric(p_any);
        if (gap >= rep_end - rep) break;
        rep += gap;
        const double u = gen.next_double();
        Outcome outcome = Outcome::kAntiStokesOnly;
        if (u < frac_both)
            outcome = Outcome::kBoth;
        else if (u < frac_both + frac_s)
            outcome = Outcome::kStokesOnly;
        fn(rep, outcome);
        if (++rep >= rep_end) break;
    }
}

// Sliding-window coincidence counter. Feed clicks in repetition order; it
// pairs each click with earlier opposite-channel clicks within the window
// (same-repetition pairs are credited to the anti-Stokes side only, so
// every pair is counted exactly once).
class PairAccumulator {
  public:
    PairAccumulator(CoincidenceHistogram& hist, int window_periods)
        : hist_(hist), window_(static_cast<std::uint64_t>(window_periods)) {}

    void stokes(std::uint64_t rep) {
        trim(rep);
        for (std::uint64_t r_as : recent_as_)
            hist_.add_delay((static_cast<double>(r_as) - static_cast<double>(rep)) *
                            hist_.rep_period_ns);
        recent_s_.push_back(rep);
        ++hist_.total_starts;
    }

    void antistokes(std::uint64_t rep) {
        trim(rep);
        for (std::uint64_t r_s : recent_s_)
            hist_.add_delay((static_cast<double>(rep) - static_cast<double>(r_s)) *
                            hist_.rep_period_ns);
        recent_as_.push_back(rep);
        ++hist_.total_stops;
    }

    void click(std::uint64_t rep, Outcome outcome) {
        // Stokes first so a joint event pairs with itself at zero delay.
        if (outcome != Outcome::kAntiStokesOnly) stokes(rep);
        if (outcome != Outcome::kStokesOnly) antistokes(rep);
    }

  private:
    void trim(std::uint64_t rep) {
        while (!recent_s_.empty() && rep - recent_s_.front() > window_) recent_s_.pop_front();
        while (!recent_as_.empty() && rep - recent_as_.front() > window_) recent_as_.pop_front();
    }

    CoincidenceHistogram& hist_;
    std::uint64_t window_;
    std::deque<std::uint64_t> recent_s_;
    std::deque<std::uint64_t> recent_as_;
};

CoincidenceHistogram make_histogram_shell(const ClickModel& model, double bin_width_ns,
                                          int window_periods) {
    if (bin_width_ns <= 0.0) throw ConfigError("bin width must be positive");
    if (window_periods < 26)
        throw ConfigError("histogram window must cover at least 26 repetition periods");
    CoincidenceHistogram hist;
    hist.bin_width_ns = bin_width_ns;
    hist.rep_period_ns = model.rep_period_ns;
    hist.n_reps = model.n_reps;
    hist.seed = model.seed;
    hist.rng_id = rng::Xoshiro256pp::kAlgorithmId;
    const auto half_span = static_cast<std::int64_t>(
        std::ceil((window_periods + 0.5) * model.rep_period_ns / bin_width_ns));
    hist.first_bin = -half_span;
    hist.counts.assign(static_cast<std::size_t>(2 * half_span + 1), 0);
    return hist;
}

struct EdgeClicks {
    std::vector<std::uint64_t> early_s, early_as, late_s, late_as;
};

}  // namespace

void ClickModel::validate() const {
    if (!(p_s >= 0.0 && p_s <= 1.0) || !(p_as >= 0.0 && p_as <= 1.0) ||
        !(p_joint >= 0.0 && p_joint <= 1.0))
        throw ConfigError("click probabilities must lie in [0, 1]");
    const double lower = std::max(0.0, p_s + p_as - 1.0);
    const double upper = std::min(p_s, p_as);
    if (p_joint < lower - 1e-15 || p_joint > upper + 1e-15)
        throw ConfigError("infeasible click probability triple");
    if (rep_period_ns <= 0.0) throw ConfigError("repetition period must be positive");
    if (n_reps == 0) throw ConfigError("n_reps must be positive");
}

std::int64_t CoincidenceHistogram::count_at(std::int64_t bin) const {
    if (bin < first_bin || bin > last_bin()) return 0;
    return counts[static_cast<std::size_t>(bin - first_bin)];
}

void CoincidenceHistogram::add_delay(double delay_ns, std::int64_t n) {
    const auto bin = static_cast<std::int64_t>(std::floor(delay_ns / bin_width_ns + 0.5));
    if (bin < first_bin || bin > last_bin()) return;
    counts[static_cast<std::size_t>(bin - first_bin)] += n;
}

double CoincidenceHistogram::positive_span_periods() const {
    return (static_cast<double>(last_bin()) + 0.5) * bin_width_ns / rep_period_ns;
}

void CoincidenceHistogram::validate() const {
    if (bin_width_ns <= 0.0) throw ConfigError("bin width must be positive");
    if (rep_period_ns <= 0.0) throw ConfigError("repetition period must be positive");
    for (std::int64_t c : counts)
        if (c < 0) throw ConfigError("negative histogram count");
    if (positive_span_periods() < 26.0)
        throw ConfigError("histogram span must cover 26 repetition periods");
}

std::vector<ClickEvent> simulate_clicks(const ClickModel& model) {
    model.validate();
    std::vector<ClickEvent> events;
    const std::uint64_t n_blocks = (model.n_reps + kBlockReps - 1) / kBlockReps;
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        const std::uint64_t begin = b * kBlockReps;
        const std::uint64_t end = std::min(model.n_reps, begin + kBlockReps);
        generate_block(model, b, begin, end, [&](std::uint64_t rep, Outcome outcome) {
            const double t = static_cast<double>(rep) * model.rep_period_ns;
            if (outcome != Outcome::kAntiStokesOnly) events.push_back({rep, 'S', t});
            if (outcome != Outcome::kStokesOnly) events.push_back({rep, 'A', t});
        });
    }
    return events;
}

CoincidenceHistogram build_histogram(const std::vector<ClickEvent>& events, double bin_width_ns,
                                     double rep_period_ns, int window_periods) {
    if (events.empty()) throw ConfigError("build_histogram: empty event stream");
    ClickModel shell;
    shell.rep_period_ns = rep_period_ns;
    shell.n_reps = events.back().rep_index + 1;
    CoincidenceHistogram hist = make_histogram_shell(shell, bin_width_ns, window_periods);
    hist.seed = 0;
    hist.rng_id.clear();

    PairAccumulator acc(hist, window_periods);
    std::uint64_t last_rep = 0;
    for (const auto& ev : events) {
        if (ev.rep_index < last_rep)
            throw ConfigError("build_histogram: events must be sorted by repetition");
        last_rep = ev.rep_index;
        if (ev.channel == 'S')
            acc.stokes(ev.rep_index);
        else if (ev.channel == 'A')
            acc.antistokes(ev.rep_index);
        else
            throw ConfigError("build_histogram: unknown channel");
    }
    return hist;
}

CoincidenceHistogram simulate_histogram(const ClickModel& model, double bin_width_ns,
                                        int window_periods) {
    model.validate();
    CoincidenceHistogram total = make_histogram_shell(model, bin_width_ns, window_periods);
    const std::uint64_t n_blocks = (model.n_reps + kBlockReps - 1) / kBlockReps;
    const auto window = static_cast<std::uint64_t>(window_periods);
    std::vector<EdgeClicks> edges(n_blocks);

#ifdef _OPENMP
#pragma omp parallel
#endif
    {
        CoincidenceHistogram local = total;  // zero-count shell
#ifdef _OPENMP
#pragma omp for schedule(dynamic)
#endif
        for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(n_blocks); ++bi) {
            const auto b = static_cast<std::uint64_t>(bi);
            const std::uint64_t begin = b * kBlockReps;
            const std::uint64_t end = std::min(model.n_reps, begin + kBlockReps);
            PairAccumulator acc(local, window_periods);
            EdgeClicks& edge = edges[b];
            generate_block(model, b, begin, end, [&](std::uint64_t rep, Outcome outcome) {
                acc.click(rep, outcome);
                const bool early = rep < begin + window;
                const bool late = rep + window >= end;
                if (outcome != Outcome::kAntiStokesOnly) {
                    if (early) edge.early_s.push_back(rep);
                    if (late) edge.late_s.push_back(rep);
                }
                if (outcome != Outcome::kStokesOnly) {
                    if (early) edge.early_as.push_back(rep);
                    if (late) edge.late_as.push_back(rep);
                }
            });
        }
#ifdef _OPENMP
#pragma omp critical
#endif
        {
            for (std::size_t i = 0; i < total.counts.size(); ++i)
                total.counts[i] += local.counts[i];
            total.total_starts += local.total_starts;
            total.total_stops += local.total_stops;
        }
    }

    // Cross-boundary pairs: clicks in adjacent blocks within the window.
    for (std::uint64_t b = 1; b < n_blocks; ++b) {
        const EdgeClicks& prev = edges[b - 1];
        const EdgeClicks& cur = edges[b];
        for (std::uint64_t r_s : prev.late_s)
            for (std::uint64_t r_as : cur.early_as)
                if (r_as - r_s <= window)
                    total.add_delay((static_cast<double>(r_as) - static_cast<double>(r_s)) *
                                    model.rep_period_ns);
        for (std::uint64_t r_as : prev.late_as)
            for (std::uint64_t r_s : cur.early_s)
                if (r_s - r_as <= window)
                    total.add_delay((static_cast<double>(r_as) - static_cast<double>(r_s)) *
                                    model.rep_period_ns);
    }
    return total;
}

G2Estimate extract_g2(const CoincidenceHistogram& hist, double analysis_bin_ns, int n_side_peaks,
                      bool dark_floor_subtraction) {
    hist.validate();
    if (analysis_bin_ns <= 0.0) throw ConfigError("analysis bin must be positive");
    if (n_side_peaks < 2) throw ConfigError("need at least 2 side peaks");

    const double w = hist.bin_width_ns;
    const auto bins_in_window = [&](double center_ns) {
        std::vector<std::int64_t> bins;
        const auto lo = static_cast<std::int64_t>(std::ceil((center_ns - 0.5 * analysis_bin_ns) / w - 0.5));
        const auto hi = static_cast<std::int64_t>(std::floor((center_ns + 0.5 * analysis_bin_ns) / w + 0.5));
        for (std::int64_t b = lo; b <= hi; ++b)
            if (std::abs(b * w - center_ns) <= 0.5 * analysis_bin_ns + 1e-12) bins.push_back(b);
        return bins;
    };

    const double needed = n_side_peaks * hist.rep_period_ns + 0.5 * analysis_bin_ns;
    if ((static_cast<double>(hist.last_bin()) + 0.5) * w < needed)
        throw ConfigError("histogram span too short for requested side peaks");

    // Flat background estimate from bins clear of every peak window.
    double floor_per_bin = 0.0;
    if (dark_floor_subtraction) {
        const double guard = 0.5 * analysis_bin_ns + w;
        std::int64_t n_off = 0;
        std::int64_t sum_off = 0;
        for (std::int64_t b = hist.first_bin; b <= hist.last_bin(); ++b) {
            const double t = b * w;
            const double nearest_peak = std::abs(t - hist.rep_period_ns *
                                                         std::round(t / hist.rep_period_ns));
            if (nearest_peak > guard) {
                ++n_off;
                sum_off += hist.count_at(b);
            }
        }
        if (n_off > 0) floor_per_bin = static_cast<double>(sum_off) / static_cast<double>(n_off);
    }

    const auto peak_area = [&](int k) {
        const auto bins = bins_in_window(k * hist.rep_period_ns);
        double area = 0.0;
        for (std::int64_t b : bins) area += static_cast<double>(hist.count_at(b));
        return area - floor_per_bin * static_cast<double>(bins.size());
    };

    G2Estimate est;
    est.n_side_peaks = n_side_peaks;
    est.central_area = peak_area(0);
    for (int k = 1; k <= n_side_peaks; ++k) {
        est.side_areas.push_back(peak_area(k));
        est.side_areas_negative.push_back(peak_area(-k));
    }

    double mean = 0.0;
    for (double a : est.side_areas) mean += a;
    mean /= n_side_peaks;
    double var = 0.0;
    for (double a : est.side_areas) var += (a - mean) * (a - mean);
    var /= (n_side_peaks - 1);
    est.side_mean = mean;
    est.side_stddev = std::sqrt(var);

    if (mean <= 0.0) throw NumericalError("extract_g2: zero side-peak average");
    est.g2 = est.central_area / mean;
    const double side_term = est.side_stddev / (std::sqrt(static_cast<double>(n_side_peaks)) * mean);
    const double central_term = (est.central_area > 0.0) ? 1.0 / est.central_area : 0.0;
    est.delta_g2 = est.g2 * std::sqrt(side_term * side_term + central_term);
    return est;
}

CoincidenceHistogram subtract_crosstalk(const CoincidenceHistogram& both,
                                        const CoincidenceHistogram& write_only) {
    both.validate();
    write_only.validate();
    if (both.bin_width_ns != write_only.bin_width_ns ||
        both.rep_period_ns != write_only.rep_period_ns ||
        both.first_bin != write_only.first_bin || both.counts.size() != write_only.counts.size())
        throw ConfigError("subtract_crosstalk: binning mismatch");

    const double scale = (both.n_reps == write_only.n_reps || write_only.n_reps == 0)
                             ? 1.0
                             : static_cast<double>(both.n_reps) /
                                   static_cast<double>(write_only.n_reps);
    CoincidenceHistogram out = both;
    for (std::size_t i = 0; i < out.counts.size(); ++i) {
        const auto sub = static_cast<std::int64_t>(
            std::llround(static_cast<double>(write_only.counts[i]) * scale));
        out.counts[i] = std::max<std::int64_t>(0, both.counts[i] - sub);
    }
    out.notes.push_back(scale == 1.0 ? "crosstalk_subtracted"
                                     : "crosstalk_subtracted_scaled");
    return out;
}

}  // namespace sas::counting
