#ifndef UNICAD_REPORT_HPP
#define UNICAD_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicad/common.hpp"
#include "unicad/pipeline.hpp"

// Report emission. Every file written here is a pure function of the report
// contents: fixed column order, fixed float formatting, no timestamps, so two
// runs from the same seed produce byte-identical artifacts.

namespace unicad {

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << body;
    if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace detail

inline std::string results_csv(const MetricsReport& report) {
    std::string csv = "scenario,accuracy,tp,fp,tn,fn\n";
    for (const auto& m : report.scenarios) {
        csv += m.name + ',' + detail::fmt("%.4f", m.accuracy) + ',' +
               std::to_string(m.tp) + ',' + std::to_string(m.fp) + ',' +
               std::to_string(m.tn) + ',' + std::to_string(m.fn) + '\n';
    }
    return csv;
}

inline std::string trace_jsonl(const MetricsReport& report) {
    std::string body;
    for (const auto& row : report.trace) {
        nlohmann::ordered_json j;
        j["scenario"] = row.scenario;
        j["input_id"] = row.input_id;
        j["truth"] = row.truth;
        j["lambda"] = row.outcome.lambda;
        j["threshold"] = row.outcome.threshold;
        j["verdict"] = verdict_name(row.outcome.verdict);
        j["label"] = row.outcome.label;
        if (row.outcome.lambda_denoised)
            j["lambda_denoised"] = *row.outcome.lambda_denoised;
        if (row.outcome.new_prototype_id >= 0)
            j["new_prototype_id"] = row.outcome.new_prototype_id;
        j["stats_i"] = row.stats_i;
        j["stats_mean"] = row.stats_mean;
        j["stats_sigma"] = row.stats_sigma;
        body += j.dump();
        body += '\n';
    }
    return body;
}

namespace detail {

// Horizontal bar chart over [0,100] with one bar per labelled value.
inline std::string svg_bars(const std::string& title,
                            const std::vector<std::pair<std::string, double>>& bars,
                            const char* fill) {
    const int bar_h = 28, gap = 14, left = 150, right = 70, top = 46;
    const int width = left + 400 + right;
    const int height = top + static_cast<int>(bars.size()) * (bar_h + gap) + 20;
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + std::to_string(left) + "\" y=\"24\" font-size=\"16\">" + title +
         "</text>\n";
    int y = top;
    for (const auto& [name, value] : bars) {
        const int w = static_cast<int>(value * 4.0 + 0.5);
        s += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" +
             std::to_string(y + bar_h - 9) + "\" font-size=\"13\" text-anchor=\"end\">" +
             name + "</text>\n";
        s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(y) +
             "\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(bar_h) +
             "\" fill=\"" + fill + "\"/>\n";
        s += "<text x=\"" + std::to_string(left + w + 6) + "\" y=\"" +
             std::to_string(y + bar_h - 9) + "\" font-size=\"13\">" +
             fmt("%.2f", value) + "</text>\n";
        y += bar_h + gap;
    }
    s += "</svg>\n";
    return s;
}

}  // namespace detail

inline std::string accuracy_svg(const MetricsReport& report) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& m : report.scenarios) bars.emplace_back(m.name, m.accuracy);
    return detail::svg_bars("Accuracy per scenario (%)", bars, "#4878a8");
}

inline std::string detection_svg(const MetricsReport& report) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& m : report.scenarios) bars.emplace_back(m.name, m.det_rate);
    return detail::svg_bars("Detection rate per scenario (%)", bars, "#5a9a68");
}

// Writes results.csv, trace.jsonl, accuracy.svg and detection.svg into dir.
// Re-running with the same report overwrites each file with identical bytes.
inline void emit_report(const MetricsReport& report, const std::string& dir) {
    if (report.scenarios.empty()) throw DomainError("report has no scenarios");
    const std::filesystem::path base(dir);
    std::filesystem::create_directories(base);
    detail::write_text(base / "results.csv", results_csv(report));
    detail::write_text(base / "trace.jsonl", trace_jsonl(report));
    detail::write_text(base / "accuracy.svg", accuracy_svg(report));
    detail::write_text(base / "detection.svg", detection_svg(report));
}

// Model-by-attack accuracy grid, one row per defence configuration.
struct ComparisonTable {
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::vector<double>>> rows;
};

inline std::string comparison_csv(const ComparisonTable& table) {
    std::string csv = "model";
    for (const auto& c : table.columns) csv += ',' + c;
    csv += '\n';
    for (const auto& [name, values] : table.rows) {
        if (values.size() != table.columns.size())
            throw DimensionError("comparison row '" + name + "' has " +
                                 std::to_string(values.size()) + " values for " +
                                 std::to_string(table.columns.size()) + " columns");
        csv += name;
        for (double v : values) csv += ',' + detail::fmt("%.4f", v);
        csv += '\n';
    }
    return csv;
}

inline void emit_comparison(const ComparisonTable& table, const std::string& path) {
    detail::write_text(path, comparison_csv(table));
}

}  // namespace unicad

#endif
