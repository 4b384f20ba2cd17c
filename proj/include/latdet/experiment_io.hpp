#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "latdet/simulation.hpp"
#include "latdet/version.hpp"

namespace latdet {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    if (!s.empty() && s.back() == ',') parts.emplace_back();
    return parts;
}

inline long long parse_integer(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(t, &used);
    } catch (const std::exception&) {
        throw ConfigError(what + ": '" + text + "' is not an integer");
    }
    if (used != t.size()) throw ConfigError(what + ": '" + text + "' is not an integer");
    return v;
}

inline double parse_real(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ConfigError(what + ": '" + text + "' is not a number");
    }
    if (used != t.size()) throw ConfigError(what + ": '" + text + "' is not a number");
    return v;
}

}  // namespace detail

inline std::vector<double> parse_snr_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : detail::split_list(text)) {
        out.push_back(detail::parse_real(item, "snr_grid"));
    }
    if (out.empty()) throw ConfigError("snr_grid: list must not be empty");
    return out;
}

inline std::vector<int> parse_schedule_list(const std::string& text) {
    std::vector<int> out;
    for (const auto& item : detail::split_list(text)) {
        const long long v = detail::parse_integer(item, "schedule");
        if (v < 1 || v > std::numeric_limits<int>::max()) {
            throw ConfigError("schedule: limit '" + item + "' out of range");
        }
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ConfigError("schedule: list must not be empty");
    return out;
}

/// Parses a comma-separated detector list; duplicates collapse to one entry.
inline std::vector<Detector> parse_detector_list(const std::string& text) {
    std::vector<Detector> out;
    for (const auto& item : detail::split_list(text)) {
        Detector d{};
        try {
            d = detector_from_name(item);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("detector_set: ") + e.what());
        }
        if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    }
    if (out.empty()) throw ConfigError("detector_set: list must not be empty");
    return out;
}

namespace detail {

inline void apply_config_entry(SimConfig& config, const std::string& key, const std::string& value,
                               int line_no) {
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
        if (key == "n_tx") {
            config.n_tx = static_cast<int>(parse_integer(value, "n_tx"));
        } else if (key == "n_rx") {
            config.n_rx = static_cast<int>(parse_integer(value, "n_rx"));
        } else if (key == "constellation_size") {
            config.constellation_size = static_cast<int>(parse_integer(value, "constellation_size"));
        } else if (key == "schedule") {
            config.schedule = parse_schedule_list(value);
        } else if (key == "snr_grid") {
            config.snr_grid = parse_snr_list(value);
        } else if (key == "trials_per_snr") {
            const long long v = parse_integer(value, "trials_per_snr");
            if (v < 1) throw ConfigError("trials_per_snr: must be >= 1");
            config.trials_per_snr = static_cast<std::uint64_t>(v);
        } else if (key == "master_seed") {
            config.master_seed = static_cast<std::uint64_t>(parse_integer(value, "master_seed"));
        } else if (key == "detector_set") {
            config.detectors = parse_detector_list(value);
        } else if (key == "ordering") {
            try {
                config.ordering = ordering_from_name(value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("ordering: ") + e.what());
            }
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    }
}

}  // namespace detail

/// Parses the `key = value` config format: one entry per line, `#` starts a
/// comment, blank lines are skipped, unknown keys are errors.
inline void parse_config_stream(std::istream& in, SimConfig& config) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string entry = detail::trim(line);
        if (entry.empty()) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + entry + "'");
        }
        const std::string key = detail::trim(entry.substr(0, eq));
        const std::string value = detail::trim(entry.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        }
        if (value.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty value for key '" + key +
                              "'");
        }
        detail::apply_config_entry(config, key, value, line_no);
    }
}

/// Optional command-line overrides applied on top of the config file.
struct CliOverrides {
    std::optional<std::vector<double>> snr_grid;
    std::optional<std::uint64_t> trials_per_snr;
    std::optional<std::uint64_t> master_seed;
    std::optional<std::vector<Detector>> detectors;
    std::optional<Ordering> ordering;
};

/// Builds the experiment config: defaults, then the config file (if any),
/// then command-line overrides. Validates the final result.
inline SimConfig load_config(const std::optional<std::string>& config_path,
                             const CliOverrides& overrides = {}) {
    SimConfig config;
    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw ConfigError("cannot open config file '" + *config_path + "'");
        try {
            parse_config_stream(in, config);
        } catch (const ConfigError& e) {
            throw ConfigError(*config_path + ": " + e.what());
        }
    }
    if (overrides.snr_grid) config.snr_grid = *overrides.snr_grid;
    if (overrides.trials_per_snr) config.trials_per_snr = *overrides.trials_per_snr;
    if (overrides.master_seed) config.master_seed = *overrides.master_seed;
    if (overrides.detectors) config.detectors = *overrides.detectors;
    if (overrides.ordering) config.ordering = *overrides.ordering;
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return config;
}

namespace detail {

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::vector<Detector> sorted_detectors(const SimConfig& config) {
    std::vector<Detector> ds = config.detectors;
    std::sort(ds.begin(), ds.end(),
              [](Detector a, Detector b) { return detector_name(a) < detector_name(b); });
    ds.erase(std::unique(ds.begin(), ds.end()), ds.end());
    return ds;
}

inline std::string join_detector_names(const std::vector<Detector>& ds) {
    std::string out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (i) out += ',';
        out += detector_name(ds[i]);
    }
    return out;
}

// Row order of the CSV: SNR ascending, then detector name ascending.
inline std::vector<std::size_t> snr_order(const ExperimentStats& stats) {
    std::vector<std::size_t> order(stats.per_snr.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return stats.per_snr[a].snr_db < stats.per_snr[b].snr_db;
    });
    return order;
}

}  // namespace detail

/// Writes the experiment results as CSV: `#` preamble describing the run, a
/// header row, then one row per (SNR, detector) with SNR ascending and
/// detector names ascending. Rates are formatted with %.10g; the
/// ulbc_equals_qrdm_fraction column is nan when qrdm did not run.
inline void write_csv(const ExperimentStats& stats, std::ostream& out) {
    const SimConfig& c = stats.config;
    const PamAlphabet alphabet = make_alphabet(c.constellation_size);
    const MSchedule schedule = c.make_schedule(alphabet);
    const std::vector<Detector> detectors = detail::sorted_detectors(c);

    out << "# latdet " << kVersion << "\n";
    out << "# one node = one evaluation of a single-stage squared-residual metric term\n";
    out << "# n_tx = " << c.n_tx << ", n_rx = " << c.n_rx << ", constellation_size = "
        << c.constellation_size << ", ordering = " << ordering_name(c.ordering) << "\n";
    out << "# schedule = " << detail::join_ints(schedule.limits) << "\n";
    out << "# trials_per_snr = " << c.trials_per_snr << ", master_seed = " << c.master_seed
        << "\n";
    out << "# detectors = " << detail::join_detector_names(detectors) << "\n";
    out << "snr_db,detector,trials,vector_error_rate,symbol_error_rate,nodes_mean,nodes_max,"
           "nodes_min,f_lb,f_qrdm,f_ub,ulbc_equals_qrdm_fraction,early_termination_fraction\n";

    const bool have_qrdm = c.enabled(Detector::QrdM);
    for (std::size_t i : detail::snr_order(stats)) {
        const SnrStats& snr = stats.per_snr[i];
        for (Detector d : detectors) {
            const DetectorStats& ds = snr.stats(d);
            const auto trials = static_cast<double>(ds.trials);
            const double ser = ds.trials == 0
                                   ? 0.0
                                   : static_cast<double>(ds.symbol_errors) /
                                         (trials * static_cast<double>(c.n_tx));
            const double eq_qrdm = have_qrdm && ds.trials > 0
                                       ? static_cast<double>(ds.equals_qrdm) / trials
                                       : std::numeric_limits<double>::quiet_NaN();
            const double early =
                ds.trials == 0 ? 0.0 : static_cast<double>(ds.early_terminations) / trials;
            out << detail::format_real(snr.snr_db) << ',' << detector_name(d) << ',' << ds.trials
                << ',' << detail::format_real(ds.vector_error_rate()) << ','
                << detail::format_real(ser) << ',' << detail::format_real(ds.nodes_mean()) << ','
                << ds.nodes_max << ',' << (ds.trials == 0 ? 0 : ds.nodes_min) << ','
                << stats.bounds.f_lb << ',' << stats.bounds.f_qrdm << ',' << stats.bounds.f_ub
                << ',' << detail::format_real(eq_qrdm) << ',' << detail::format_real(early)
                << "\n";
        }
    }
}

inline void write_csv_file(const ExperimentStats& stats, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: keep \n on every platform
    if (!out) throw ConfigError("cannot open output file '" + path + "'");
    write_csv(stats, out);
    if (!out) throw ConfigError("failed writing output file '" + path + "'");
}

/// Three-line report of the complexity bounds for a schedule.
inline std::string format_bounds(const ComplexityBounds& bounds) {
    return "f_lb = " + std::to_string(bounds.f_lb) + "\nf_qrdm = " + std::to_string(bounds.f_qrdm) +
           "\nf_ub = " + std::to_string(bounds.f_ub) + "\n";
}

/// Human-readable per-SNR table, for terminal output after a run.
inline void write_summary(const ExperimentStats& stats, std::ostream& out) {
    const std::vector<Detector> detectors = detail::sorted_detectors(stats.config);
    out << "bounds: f_lb = " << stats.bounds.f_lb << ", f_qrdm = " << stats.bounds.f_qrdm
        << ", f_ub = " << stats.bounds.f_ub << ", full enumeration = " << stats.full_enumeration
        << " nodes\n";
    for (std::size_t i : detail::snr_order(stats)) {
        const SnrStats& snr = stats.per_snr[i];
        out << "snr " << detail::format_real(snr.snr_db) << " dB";
        if (snr.channel_redraws > 0) out << " (" << snr.channel_redraws << " channel redraws)";
        out << "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-12s %10s %10s %12s %8s %8s %7s\n", "detector", "VER",
                      "SER", "nodes mean", "min", "max", "early%");
        out << buf;
        for (Detector d : detectors) {
            const DetectorStats& ds = snr.stats(d);
            if (ds.trials == 0) continue;
            const auto trials = static_cast<double>(ds.trials);
            const double ser = static_cast<double>(ds.symbol_errors) /
                               (trials * static_cast<double>(stats.config.n_tx));
            const double early = 100.0 * static_cast<double>(ds.early_terminations) / trials;
            std::snprintf(buf, sizeof buf, "  %-12s %10.3g %10.3g %12.6g %8llu %8llu %7.1f\n",
                          detector_name(d).c_str(), ds.vector_error_rate(), ser, ds.nodes_mean(),
                          static_cast<unsigned long long>(ds.nodes_min),
                          static_cast<unsigned long long>(ds.nodes_max), early);
            out << buf;
        }
    }
}

}  // namespace latdet
