#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sas/counting.hpp"
#include "sas/fitting.hpp"

namespace sas::csv {

// Shortest representation that round-trips a double.
std::string format_double(double v);

struct Table {
    std::vector<std::pair<std::string, std::string>> metadata;  // "# key = value" lines
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

void write_table(const std::string& path, const Table& table);
Table read_table(const std::string& path);

void write_delay_curve(const std::string& path, const fitting::DelayCurve& curve);
fitting::DelayCurve read_delay_curve(const std::string& path);

void write_histogram(const std::string& path, const counting::CoincidenceHistogram& hist);
counting::CoincidenceHistogram read_histogram(const std::string& path);

void write_events(const std::string& path, const std::vector<counting::ClickEvent>& events);

}  // namespace sas::csv
