// Hand-emitted SVG reward charts: one panel for proxy reward, one for true
// reward, one series per metrics file (raw trace faint, 10-step moving
// average bold). No chart dependency; the needs here are two line panels.
#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "driftlab/trainer.hpp"

namespace driftlab {

struct MetricsSeries {
    std::string label;
    std::vector<double> steps;
    std::vector<double> proxy;
    std::vector<double> truth;
};

inline MetricsSeries parse_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("plot: cannot open " + path);
    MetricsSeries s;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (fields.size() != 8)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 8 fields, found " +
                                     std::to_string(fields.size()));
        if (lineno == 1) {
            if (line != "step,method,rank,proxy_reward,true_reward,kl,grad_norm,loophole_copy_rate")
                throw std::runtime_error(path + ":1: unrecognized metrics header");
            continue;
        }
        try {
            s.steps.push_back(std::stod(fields[0]));
            s.proxy.push_back(std::stod(fields[3]));
            s.truth.push_back(std::stod(fields[4]));
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed numeric field");
        }
        if (s.label.empty()) s.label = fields[1] + " (rank " + fields[2] + ")";
    }
    if (s.steps.empty()) throw std::runtime_error(path + ": no metric rows to plot");
    return s;
}

namespace detail {

inline std::vector<double> moving_average(const std::vector<double>& xs, int window) {
    std::vector<double> out(xs.size());
    double acc = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        acc += xs[i];
        if (i >= static_cast<size_t>(window)) acc -= xs[i - window];
        out[i] = acc / static_cast<double>(std::min<size_t>(i + 1, window));
    }
    return out;
}

struct PanelScale {
    double x0, x1, y0, y1;
    double px(double x) const { return 60.0 + (x - x0) / (x1 - x0) * 700.0; }
    double py(double y) const { return 340.0 - (y - y0) / (y1 - y0) * 300.0; }
};

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline void emit_panel(std::string& svg, double x_off, const std::string& title,
                       const std::vector<MetricsSeries>& series, bool proxy_panel,
                       const std::vector<std::string>& palette) {
    PanelScale sc{1e300, -1e300, 1e300, -1e300};
    for (const auto& s : series) {
        const auto& ys = proxy_panel ? s.proxy : s.truth;
        for (size_t i = 0; i < s.steps.size(); ++i) {
            sc.x0 = std::min(sc.x0, s.steps[i]);
            sc.x1 = std::max(sc.x1, s.steps[i]);
            sc.y0 = std::min(sc.y0, ys[i]);
            sc.y1 = std::max(sc.y1, ys[i]);
        }
    }
    if (sc.x1 <= sc.x0) sc.x1 = sc.x0 + 1.0;
    if (sc.y1 <= sc.y0) sc.y1 = sc.y0 + 1.0;
    const double pad = 0.05 * (sc.y1 - sc.y0);
    sc.y0 -= pad;
    sc.y1 += pad;

    svg += "<g transform=\"translate(" + fmt(x_off) + ",0)\">\n";
    svg += "<rect x=\"60\" y=\"40\" width=\"700\" height=\"300\" fill=\"none\" stroke=\"#333\"/>\n";
    svg += "<text x=\"410\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-family=\"sans-serif\">" +
           title + "</text>\n";
    for (int i = 0; i <= 5; ++i) {  // 5 even divisions per axis
        const double xv = sc.x0 + (sc.x1 - sc.x0) * i / 5.0;
        const double yv = sc.y0 + (sc.y1 - sc.y0) * i / 5.0;
        svg += "<line x1=\"" + fmt(sc.px(xv)) + "\" y1=\"340\" x2=\"" + fmt(sc.px(xv)) +
               "\" y2=\"346\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + fmt(sc.px(xv)) + "\" y=\"362\" text-anchor=\"middle\" font-size=\"11\" "
               "font-family=\"sans-serif\">" + fmt(xv) + "</text>\n";
        svg += "<line x1=\"54\" y1=\"" + fmt(sc.py(yv)) + "\" x2=\"60\" y2=\"" + fmt(sc.py(yv)) +
               "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"50\" y=\"" + fmt(sc.py(yv) + 4.0) + "\" text-anchor=\"end\" font-size=\"11\" "
               "font-family=\"sans-serif\">" + fmt(yv) + "</text>\n";
    }
    svg += "<text x=\"410\" y=\"388\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">step</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const auto& raw = proxy_panel ? s.proxy : s.truth;
        const std::vector<double> smooth = moving_average(raw, 10);
        const std::string& color = palette[si % palette.size()];
        for (int pass = 0; pass < 2; ++pass) {
            const auto& ys = pass == 0 ? raw : smooth;
            svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
                   (pass == 0 ? std::string("1") : std::string("2.5")) + "\" stroke-opacity=\"" +
                   (pass == 0 ? std::string("0.25") : std::string("1.0")) + "\" points=\"";
            for (size_t i = 0; i < s.steps.size(); ++i) {
                svg += fmt(sc.px(s.steps[i])) + "," + fmt(sc.py(ys[i]));
                if (i + 1 < s.steps.size()) svg += " ";
            }
            svg += "\"/>\n";
        }
        const double ly = 56.0 + 16.0 * static_cast<double>(si);
        svg += "<line x1=\"600\" y1=\"" + fmt(ly - 4.0) + "\" x2=\"624\" y2=\"" + fmt(ly - 4.0) +
               "\" stroke=\"" + color + "\" stroke-width=\"2.5\"/>\n";
        svg += "<text x=\"630\" y=\"" + fmt(ly) + "\" font-size=\"12\" font-family=\"sans-serif\">" + s.label +
               "</text>\n";
    }
    svg += "</g>\n";
}

}  // namespace detail

// Two 800x400 panels side by side: proxy reward and true reward vs step.
inline std::string render_reward_svg(const std::vector<MetricsSeries>& series) {
    if (series.empty()) throw std::invalid_argument("plot: no series");
    static const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c",
                                                     "#9467bd", "#ff7f0e", "#8c564b"};
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1600\" height=\"400\" "
                      "viewBox=\"0 0 1600 400\">\n";
    detail::emit_panel(svg, 0.0, "proxy reward", series, true, palette);
    detail::emit_panel(svg, 800.0, "true reward", series, false, palette);
    svg += "</svg>\n";
    return svg;
}

inline void plot_metrics(const std::vector<std::string>& csv_paths, const std::string& out_path) {
    std::vector<MetricsSeries> series;
    for (const auto& p : csv_paths) series.push_back(parse_metrics_csv(p));
    write_text_file(out_path, render_reward_svg(series));
}

}  // namespace driftlab
