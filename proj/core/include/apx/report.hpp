#pragma once

#include <string>
#include <utility>
#include <vector>

#include "apx/construct.hpp"
#include "apx/errors.hpp"

namespace apx {

// Flat key=value run configuration: one pair per line, '#' starts a comment,
// blank lines ignored. Parsing is total or fails with the offending line
// number; consumers reject unknown keys via check_keys.
struct RunConfig {
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };
    std::vector<Entry> entries;

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key) const;
    long get_long(const std::string& key, long fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;

    // Throws ConfigError naming the first key outside the allowed set.
    void check_keys(const std::vector<std::string>& allowed) const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Numbers in reports carry 17 significant digits (value-exact for doubles).
std::string format_sig17(double v);

// Comma-separated CSV with a header row and LF line endings, written
// byte-deterministically.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Plain-text manifest: one "key = value" line per field, LF endings.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& fields);

// Minimal hand-emitted SVG line chart: axes, ticks, one polyline per series,
// legend text. Log axes use decade ticks.
struct ChartSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series, bool log_x,
                      bool log_y, const std::string& annotation = "");

// Normalized separable sine target on [0,1]^d: prod_l sin(2 pi x_l) scaled by
// (2 pi)^{-s} so every partial of order <= s is bounded by 1.
TargetFunction sine_target(int d, double s);

}  // namespace apx
