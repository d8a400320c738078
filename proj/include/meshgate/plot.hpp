// Copyright 2026 meshgate contributors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// @file plot.hpp
/// @brief Static SVG charts for the experiment reports.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace meshgate::plot {

namespace detail {

inline std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return b;
}

/// Smallest "nice" value >= v (1, 2, 5 times a power of ten).
inline double nice_ceil(double v) {
    if (v <= 0) return 1;
    const double p = std::pow(10.0, std::floor(std::log10(v)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * p >= v) return m * p;
    }
    return 10 * p;
}

struct Frame {
    double w = 640, h = 400, left = 70, right = 70, top = 40, bottom = 50;
    double pw() const { return w - left - right; }
    double ph() const { return h - top - bottom; }
};

inline std::string header(const Frame& f, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.w) + "\" height=\"" + num(f.h) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(f.w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
}

inline std::string axes(const Frame& f) {
    const double x0 = f.left, y0 = f.top + f.ph();
    return "<line x1=\"" + num(x0) + "\" y1=\"" + num(f.top) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y0) +
           "\" stroke=\"black\"/>\n<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0 + f.pw()) +
           "\" y2=\"" + num(y0) + "\" stroke=\"black\"/>\n";
}

inline std::string y_ticks(const Frame& f, double max, double x, const char* anchor, const std::string& color) {
    std::string out;
    for (int i = 0; i <= 5; ++i) {
        const double v = max * i / 5.0;
        const double y = f.top + f.ph() - f.ph() * i / 5.0;
        out += "<text x=\"" + num(x) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"" + anchor + "\" fill=\"" + color +
               "\">" + num(v) + "</text>\n";
    }
    return out;
}

}  // namespace detail

/// Mean delay and jitter against mote count, two y axes.
/// `report` is the traffic report JSON ({levels: [{motes, mean_delay_ms, jitter_ms}]}).
inline std::string traffic_svg(const nlohmann::json& report) {
    using namespace detail;
    Frame f;
    const auto& lv = report.at("levels");
    std::vector<double> x, mean, jit;
    for (const auto& l : lv) {
        x.push_back(l.at("motes").get<double>());
        mean.push_back(l.at("mean_delay_ms").get<double>());
        jit.push_back(l.at("jitter_ms").get<double>());
    }
    const double xmin = x.empty() ? 0 : *std::min_element(x.begin(), x.end());
    const double xmax = x.empty() ? 1 : std::max(xmin + 1, *std::max_element(x.begin(), x.end()));
    const double mmax = nice_ceil(mean.empty() ? 1 : *std::max_element(mean.begin(), mean.end()));
    const double jmax = nice_ceil(jit.empty() ? 1 : *std::max_element(jit.begin(), jit.end()));
    auto px = [&](double v) { return f.left + f.pw() * (v - xmin) / (xmax - xmin); };
    auto py = [&](double v, double m) { return f.top + f.ph() - f.ph() * v / m; };

    std::string s = header(f, "Delay and jitter against number of motes") + axes(f);
    s += "<line x1=\"" + num(f.left + f.pw()) + "\" y1=\"" + num(f.top) + "\" x2=\"" + num(f.left + f.pw()) + "\" y2=\"" +
         num(f.top + f.ph()) + "\" stroke=\"black\"/>\n";
    s += y_ticks(f, mmax, f.left - 6, "end", "#1f5fa8");
    s += y_ticks(f, jmax, f.left + f.pw() + 6, "start", "#c0392b");
    for (double v : x) {
        s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(f.top + f.ph() + 16) + "\" text-anchor=\"middle\">" +
             num(v).substr(0, num(v).find('.')) + "</text>\n";
    }
    s += "<text x=\"" + num(f.left + f.pw() / 2) + "\" y=\"" + num(f.h - 10) +
         "\" text-anchor=\"middle\">motes</text>\n";
    s += "<text x=\"14\" y=\"" + num(f.top + f.ph() / 2) + "\" fill=\"#1f5fa8\" transform=\"rotate(-90 14 " +
         num(f.top + f.ph() / 2) + ")\" text-anchor=\"middle\">mean delay (ms)</text>\n";
    s += "<text x=\"" + num(f.w - 10) + "\" y=\"" + num(f.top + f.ph() / 2) + "\" fill=\"#c0392b\" transform=\"rotate(90 " +
         num(f.w - 10) + " " + num(f.top + f.ph() / 2) + ")\" text-anchor=\"middle\">jitter (ms)</text>\n";
    auto series = [&](const std::vector<double>& ys, double m, const char* color) {
        std::string pts;
        for (std::size_t i = 0; i < x.size(); ++i) pts += num(px(x[i])) + "," + num(py(ys[i], m)) + " ";
        std::string out = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
                          pts + "\"/>\n";
        for (std::size_t i = 0; i < x.size(); ++i) {
            out += "<circle cx=\"" + num(px(x[i])) + "\" cy=\"" + num(py(ys[i], m)) + "\" r=\"3\" fill=\"" + color +
                   "\"/>\n";
        }
        return out;
    };
    s += series(mean, mmax, "#1f5fa8");
    s += series(jit, jmax, "#c0392b");
    s += "</svg>\n";
    return s;
}

/// Histogram of transformation times. `report` is the xlat report JSON
/// ({bins: [...], bin_width_us, mean_us, jitter_us, count}).
inline std::string xlat_svg(const nlohmann::json& report) {
    using namespace detail;
    Frame f;
    f.right = 20;
    const auto bins = report.at("bins").get<std::vector<std::size_t>>();
    const double w = report.at("bin_width_us").get<double>();
    const std::size_t top = bins.empty() ? 1 : *std::max_element(bins.begin(), bins.end());
    const double ymax = nice_ceil(static_cast<double>(top));
    const double n = static_cast<double>(std::max<std::size_t>(bins.size(), 1));
    const double bw = f.pw() / n;

    std::string s = header(f, "Gateway transformation time (n=" + std::to_string(report.at("count").get<std::size_t>()) +
                                  ", mean " + num(report.at("mean_us").get<double>()) + " us)") +
                    axes(f);
    s += y_ticks(f, ymax, f.left - 6, "end", "black");
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const double h = f.ph() * static_cast<double>(bins[i]) / ymax;
        s += "<rect x=\"" + num(f.left + bw * static_cast<double>(i) + 1) + "\" y=\"" + num(f.top + f.ph() - h) +
             "\" width=\"" + num(std::max(1.0, bw - 2)) + "\" height=\"" + num(h) + "\" fill=\"#1f5fa8\"/>\n";
    }
    const std::size_t step = std::max<std::size_t>(1, bins.size() / 10);
    for (std::size_t i = 0; i <= bins.size(); i += step) {
        s += "<text x=\"" + num(f.left + bw * static_cast<double>(i)) + "\" y=\"" + num(f.top + f.ph() + 16) +
             "\" text-anchor=\"middle\">" + std::to_string(static_cast<long long>(w * static_cast<double>(i))) +
             "</text>\n";
    }
    s += "<text x=\"" + num(f.left + f.pw() / 2) + "\" y=\"" + num(f.h - 10) +
         "\" text-anchor=\"middle\">transformation time (us)</text>\n";
    s += "<text x=\"14\" y=\"" + num(f.top + f.ph() / 2) + "\" transform=\"rotate(-90 14 " + num(f.top + f.ph() / 2) +
         ")\" text-anchor=\"middle\">packets</text>\n";
    s += "</svg>\n";
    return s;
}

}  // namespace meshgate::plot
