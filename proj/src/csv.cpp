#include "sas/csv.hpp"

#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sas/errors.hpp"

namespace sas::csv {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    return parts;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& s, const std::string& path) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin && trim(s.substr(end - begin)).empty() && std::isfinite(v)) return v;
    throw ConfigError(path + ": bad numeric value '" + s + "'");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read file: " + path);
    return in;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == v) {
        // try shorter forms for readability
        for (int prec = 1; prec <= 16; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
            std::sscanf(shorter, "%lg", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

void write_table(const std::string& path, const Table& table) {
    std::ofstream out = open_out(path);
    for (const auto& [key, value] : table.metadata) out << "# " << key << " = " << value << "\n";
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << table.columns[c];
    out << "\n";
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw ConfigError("table row width does not match header");
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << format_double(row[c]);
        out << "\n";
    }
}

Table read_table(const std::string& path) {
    std::ifstream in = open_in(path);
    Table table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos)
                table.metadata.emplace_back(trim(line.substr(1, eq - 1)),
                                            trim(line.substr(eq + 1)));
            continue;
        }
        if (!have_header) {
            for (auto& col : split(line, ',')) table.columns.push_back(trim(col));
            have_header = true;
            continue;
        }
        const auto parts = split(line, ',');
        if (parts.size() != table.columns.size())
            throw ConfigError(path + ": row has " + std::to_string(parts.size()) +
                              " fields, expected " + std::to_string(table.columns.size()));
        std::vector<double> row;
        row.reserve(parts.size());
        for (const auto& part : parts) row.push_back(parse_double(trim(part), path));
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw ConfigError(path + ": missing column header");
    return table;
}

void write_delay_curve(const std::string& path, const fitting::DelayCurve& curve) {
    Table table;
    table.columns = {"delay_ps", "g2", "sigma_g2"};
    for (const auto& pt : curve.points) table.rows.push_back({pt.delay_ps, pt.g2, pt.sigma_g2});
    write_table(path, table);
}

fitting::DelayCurve read_delay_curve(const std::string& path) {
    const Table table = read_table(path);
    if (table.columns.size() < 2 || table.columns[0] != "delay_ps" || table.columns[1] != "g2")
        throw ConfigError(path + ": expected columns delay_ps,g2[,sigma_g2]");
    const bool have_sigma = table.columns.size() > 2 && table.columns[2] == "sigma_g2";
    fitting::DelayCurve curve;
    for (const auto& row : table.rows)
        curve.points.push_back({row[0], row[1], have_sigma ? row[2] : 0.0});
    curve.validate();
    return curve;
}

void write_histogram(const std::string& path, const counting::CoincidenceHistogram& hist) {
    std::ofstream out = open_out(path);
    out << "# bin_width_ns = " << format_double(hist.bin_width_ns) << "\n";
    out << "# rep_period_ns = " << format_double(hist.rep_period_ns) << "\n";
    out << "# n_reps = " << hist.n_reps << "\n";
    out << "# seed = " << hist.seed << "\n";
    if (!hist.rng_id.empty()) out << "# rng = " << hist.rng_id << "\n";
    out << "# total_starts = " << hist.total_starts << "\n";
    out << "# total_stops = " << hist.total_stops << "\n";
    for (const auto& note : hist.notes) out << "# note = " << note << "\n";
    out << "bin_start_ns,count\n";
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        const double start =
            (static_cast<double>(hist.first_bin + static_cast<std::int64_t>(i)) - 0.5) *
            hist.bin_width_ns;
        out << format_double(start) << "," << hist.counts[i] << "\n";
    }
}

counting::CoincidenceHistogram read_histogram(const std::string& path) {
    std::ifstream in = open_in(path);
    counting::CoincidenceHistogram hist;
    std::string line;
    bool have_header = false;
    std::vector<std::pair<double, std::int64_t>> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = trim(line.substr(1, eq - 1));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "bin_width_ns") hist.bin_width_ns = parse_double(value, path);
            else if (key == "rep_period_ns") hist.rep_period_ns = parse_double(value, path);
            else if (key == "n_reps") hist.n_reps = std::stoull(value);
            else if (key == "seed") hist.seed = std::stoull(value);
            else if (key == "rng") hist.rng_id = value;
            else if (key == "total_starts") hist.total_starts = std::stoull(value);
            else if (key == "total_stops") hist.total_stops = std::stoull(value);
            else if (key == "note") hist.notes.push_back(value);
            continue;
        }
        if (!have_header) {
            if (line != "bin_start_ns,count")
                throw ConfigError(path + ": expected header bin_start_ns,count");
            have_header = true;
            continue;
        }
        const auto parts = split(line, ',');
        if (parts.size() != 2) throw ConfigError(path + ": malformed histogram row");
        rows.emplace_back(parse_double(trim(parts[0]), path), std::stoll(trim(parts[1])));
    }
    if (!have_header || rows.empty()) throw ConfigError(path + ": empty histogram");
    hist.first_bin =
        static_cast<std::int64_t>(std::llround(rows.front().first / hist.bin_width_ns + 0.5));
    hist.counts.reserve(rows.size());
    for (const auto& [start, count] : rows) hist.counts.push_back(count);
    hist.validate();
    return hist;
}

void write_events(const std::string& path, const std::vector<counting::ClickEvent>& events) {
    std::ofstream out = open_out(path);
    out << "rep_index,channel,timestamp_ns\n";
    for (const auto& ev : events)
        out << ev.rep_index << "," << ev.channel << "," << format_double(ev.timestamp_ns) << "\n";
}

}  // namespace sas::csv
