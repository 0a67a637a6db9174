#include "apx/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apx {
namespace {

constexpr double kPi = 3.14159265358979323846;

const RunConfig::Entry* find_entry(const RunConfig& cfg, const std::string& key) {
    for (const RunConfig::Entry& e : cfg.entries) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' has non-numeric value '" + text + "'");
    }
}

long parse_long(const std::string& key, const std::string& text) {
    try {
        size_t used = 0;
        long v = std::stol(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' has non-integer value '" + text + "'");
    }
}

std::ofstream open_binary(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file '" + path + "'");
    return os;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v, bool log_axis) {
    char buf[48];
    if (log_axis) {
        std::snprintf(buf, sizeof buf, "%.3g", std::pow(10.0, v));
    } else {
        std::snprintf(buf, sizeof buf, "%.4g", v);
    }
    return buf;
}

}  // namespace

bool RunConfig::has(const std::string& key) const {
    return find_entry(*this, key) != nullptr;
}

std::string RunConfig::get_string(const std::string& key) const {
    const Entry* e = find_entry(*this, key);
    if (!e) throw ConfigError("missing required key '" + key + "'");
    return e->value;
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& fallback) const {
    const Entry* e = find_entry(*this, key);
    return e ? e->value : fallback;
}

double RunConfig::get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const Entry* e = find_entry(*this, key);
    return e ? parse_double(key, e->value) : fallback;
}

long RunConfig::get_long(const std::string& key) const {
    return parse_long(key, get_string(key));
}

long RunConfig::get_long(const std::string& key, long fallback) const {
    const Entry* e = find_entry(*this, key);
    return e ? parse_long(key, e->value) : fallback;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::string text = get_string(key);
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError("key '" + key + "' has an empty list element");
        }
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) throw ConfigError("key '" + key + "' has an empty list");
    return out;
}

void RunConfig::check_keys(const std::vector<std::string>& allowed) const {
    for (const Entry& e : entries) {
        if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
            throw ConfigError("unknown key '" + e.key + "' at line " +
                              std::to_string(e.line));
        }
    }
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        }
        RunConfig::Entry e;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        }
        if (find_entry(cfg, e.key)) {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": duplicate key '" + e.key + "'");
        }
        cfg.entries.push_back(std::move(e));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

std::string format_sig17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream os = open_binary(path);
    for (size_t c = 0; c < header.size(); ++c) {
        if (c) os << ',';
        os << header[c];
    }
    os << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) {
            throw ShapeMismatch("csv row width vs header width");
        }
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) os << ',';
            os << row[c];
        }
        os << '\n';
    }
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& fields) {
    std::ofstream os = open_binary(path);
    for (const auto& [key, value] : fields) os << key << " = " << value << '\n';
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series, bool log_x,
                      bool log_y, const std::string& annotation) {
    const double width = 640.0, height = 480.0;
    const double ml = 70.0, mr = 24.0, mt = 40.0, mb = 56.0;
    const double pw = width - ml - mr, ph = height - mt - mb;
    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                     "#9467bd", "#ff7f0e", "#8c564b"};

    // Collect plottable points in (possibly log-transformed) coordinates.
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    std::vector<std::vector<std::pair<double, double>>> pts(series.size());
    for (size_t si = 0; si < series.size(); ++si) {
        for (auto [x, y] : series[si].points) {
            if (log_x) {
                if (!(x > 0.0)) continue;
                x = std::log10(x);
            }
            if (log_y) {
                if (!(y > 0.0)) continue;
                y = std::log10(y);
            }
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            pts[si].emplace_back(x, y);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    auto ticks_for = [](double lo, double hi, bool log_axis) {
        std::vector<double> t;
        if (log_axis) {
            for (int k = static_cast<int>(std::ceil(lo - 1e-9));
                 k <= static_cast<int>(std::floor(hi + 1e-9)); ++k) {
                t.push_back(static_cast<double>(k));
            }
            if (t.size() < 2) {  // under one decade: fall back to linear ticks
                t.clear();
                for (int k = 0; k <= 4; ++k) t.push_back(lo + (hi - lo) * k / 4.0);
            }
        } else {
            for (int k = 0; k <= 4; ++k) t.push_back(lo + (hi - lo) * k / 4.0);
        }
        return t;
    };

    std::ofstream os = open_binary(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
       << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << fixed2(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"monospace\" font-size=\"15\">"
       << svg_escape(title) << "</text>\n";

    // Axes.
    os << "<line x1=\"" << fixed2(ml) << "\" y1=\"" << fixed2(mt + ph) << "\" x2=\""
       << fixed2(ml + pw) << "\" y2=\"" << fixed2(mt + ph)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << fixed2(ml) << "\" y1=\"" << fixed2(mt) << "\" x2=\""
       << fixed2(ml) << "\" y2=\"" << fixed2(mt + ph) << "\" stroke=\"black\"/>\n";

    for (double t : ticks_for(xmin, xmax, log_x)) {
        double gx = px(t);
        os << "<line x1=\"" << fixed2(gx) << "\" y1=\"" << fixed2(mt + ph)
           << "\" x2=\"" << fixed2(gx) << "\" y2=\"" << fixed2(mt + ph + 5)
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fixed2(gx) << "\" y=\"" << fixed2(mt + ph + 18)
           << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
           << tick_label(t, log_x) << "</text>\n";
    }
    for (double t : ticks_for(ymin, ymax, log_y)) {
        double gy = py(t);
        os << "<line x1=\"" << fixed2(ml - 5) << "\" y1=\"" << fixed2(gy)
           << "\" x2=\"" << fixed2(ml) << "\" y2=\"" << fixed2(gy)
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fixed2(ml - 8) << "\" y=\"" << fixed2(gy + 4)
           << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">"
           << tick_label(t, log_y) << "</text>\n";
    }
    os << "<text x=\"" << fixed2(ml + pw / 2) << "\" y=\"" << fixed2(height - 12)
       << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">"
       << svg_escape(x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << fixed2(mt + ph / 2)
       << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << fixed2(mt + ph / 2) << ")\">" << svg_escape(y_label) << "</text>\n";

    // Series polylines plus point markers.
    for (size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % 6];
        if (pts[si].size() >= 2) {
            os << "<polyline fill=\"none\" stroke=\"" << color
               << "\" stroke-width=\"1.5\" points=\"";
            for (size_t k = 0; k < pts[si].size(); ++k) {
                if (k) os << ' ';
                os << fixed2(px(pts[si][k].first)) << ','
                   << fixed2(py(pts[si][k].second));
            }
            os << "\"/>\n";
        }
        for (const auto& [x, y] : pts[si]) {
            os << "<circle cx=\"" << fixed2(px(x)) << "\" cy=\"" << fixed2(py(y))
               << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        os << "<text x=\"" << fixed2(ml + pw - 6) << "\" y=\""
           << fixed2(mt + 16 + 16 * static_cast<double>(si))
           << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\" "
              "fill=\""
           << color << "\">" << svg_escape(series[si].label) << "</text>\n";
    }
    if (!annotation.empty()) {
        os << "<text x=\"" << fixed2(ml + 8) << "\" y=\"" << fixed2(mt + 16)
           << "\" font-family=\"monospace\" font-size=\"12\">"
           << svg_escape(annotation) << "</text>\n";
    }
    os << "</svg>\n";
}

TargetFunction sine_target(int d, double s) {
    if (d < 1 || !(s > 0.0)) {
        throw PreconditionFailed("sine target needs d >= 1 and s > 0");
    }
    double scale = std::pow(2.0 * kPi, -s);
    TargetFunction f;
    f.d = d;
    f.sobolev_bound = 1.0;
    f.value = [d, scale](const std::vector<double>& x) {
        double v = scale;
        for (int l = 0; l < d; ++l) v *= std::sin(2.0 * kPi * x[l]);
        return v;
    };
    f.partial = [d, scale](const MultiIndex& alpha, const std::vector<double>& x) {
        double v = scale;
        for (int l = 0; l < d; ++l) {
            int m = alpha.alpha[l];
            v *= std::pow(2.0 * kPi, m) *
                 std::sin(2.0 * kPi * x[l] + m * kPi / 2.0);
        }
        return v;
    };
    return f;
}

}  // namespace apx
