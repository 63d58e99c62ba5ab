#pragma once

// Static SVG charts: grouped bars (condition x method) and latency box plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "llmshape/metrics.hpp"

namespace llmshape {

struct BarSeries {
  std::string name;               // method
  std::map<std::string, double> values;  // condition -> value
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  return colors[i % 6];
}

inline std::string svg_open(int w, int h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + std::to_string(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + svg_escape(title) +
         "</text>\n";
}

}  // namespace detail

/// Grouped bar chart. Condition order follows `conditions`.
inline std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                                 const std::vector<std::string>& conditions, const std::vector<BarSeries>& series) {
  const int w = 640, h = 360, left = 60, right = 20, top = 40, bottom = 60;
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (const auto& [k, v] : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double plot_h = h - top - bottom;
  auto y_of = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

  std::string out = detail::svg_open(w, h, title);
  out += "<text x=\"14\" y=\"" + std::to_string(top + static_cast<int>(plot_h / 2)) +
         "\" transform=\"rotate(-90 14 " + std::to_string(top + static_cast<int>(plot_h / 2)) +
         ")\" text-anchor=\"middle\">" + detail::svg_escape(y_label) + "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const std::string y = detail::svg_num(y_of(v));
    out += "<line x1=\"" + std::to_string(left) + "\" x2=\"" + std::to_string(w - right) + "\" y1=\"" + y + "\" y2=\"" + y +
           "\" stroke=\"#ddd\"/>\n<text x=\"" + std::to_string(left - 4) + "\" y=\"" + y +
           "\" text-anchor=\"end\" dominant-baseline=\"middle\">" + detail::svg_num(v) + "</text>\n";
  }
  const double group_w = static_cast<double>(w - left - right) / std::max<std::size_t>(conditions.size(), 1);
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(series.size(), 1);
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    const double gx = left + group_w * static_cast<double>(c) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      auto it = series[s].values.find(conditions[c]);
      if (it == series[s].values.end()) continue;
      const double y0 = y_of(0.0), y1 = y_of(it->second);
      out += "<rect x=\"" + detail::svg_num(gx + bar_w * static_cast<double>(s)) + "\" y=\"" +
             detail::svg_num(std::min(y0, y1)) + "\" width=\"" + detail::svg_num(bar_w * 0.95) + "\" height=\"" +
             detail::svg_num(std::abs(y1 - y0)) + "\" fill=\"" + detail::palette(s) + "\"/>\n";
    }
    out += "<text x=\"" + detail::svg_num(gx + group_w * 0.4) + "\" y=\"" + std::to_string(h - bottom + 16) +
           "\" text-anchor=\"middle\">" + detail::svg_escape(conditions[c]) + "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const int lx = left + static_cast<int>(s) * 140;
    out += "<rect x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(h - 24) + "\" width=\"12\" height=\"12\" fill=\"" +
           detail::palette(s) + "\"/>\n<text x=\"" + std::to_string(lx + 16) + "\" y=\"" + std::to_string(h - 14) + "\">" +
           detail::svg_escape(series[s].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// One box (q1..q3, median line, whiskers at min/max) per labelled sample.
inline std::string svg_box_plot(const std::string& title, const std::string& y_label,
                                const std::vector<std::pair<std::string, LatencySummary>>& boxes) {
  const int w = 640, h = 360, left = 60, right = 20, top = 40, bottom = 50;
  double hi = 0.0;
  for (const auto& [name, s] : boxes) hi = std::max(hi, s.max);
  if (hi <= 0.0) hi = 1.0;
  const double plot_h = h - top - bottom;
  auto y_of = [&](double v) { return top + (hi - v) / hi * plot_h; };

  std::string out = detail::svg_open(w, h, title);
  out += "<text x=\"14\" y=\"" + std::to_string(top + static_cast<int>(plot_h / 2)) +
         "\" transform=\"rotate(-90 14 " + std::to_string(top + static_cast<int>(plot_h / 2)) +
         ")\" text-anchor=\"middle\">" + detail::svg_escape(y_label) + "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = hi * k / 4.0;
    const std::string y = detail::svg_num(y_of(v));
    out += "<line x1=\"" + std::to_string(left) + "\" x2=\"" + std::to_string(w - right) + "\" y1=\"" + y + "\" y2=\"" + y +
           "\" stroke=\"#ddd\"/>\n<text x=\"" + std::to_string(left - 4) + "\" y=\"" + y +
           "\" text-anchor=\"end\" dominant-baseline=\"middle\">" + detail::svg_num(v) + "</text>\n";
  }
  const double slot = static_cast<double>(w - left - right) / std::max<std::size_t>(boxes.size(), 1);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& [name, s] = boxes[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double bw = slot * 0.4;
    const std::string x0 = detail::svg_num(cx - bw / 2), xc = detail::svg_num(cx);
    out += "<line x1=\"" + xc + "\" x2=\"" + xc + "\" y1=\"" + detail::svg_num(y_of(s.min)) + "\" y2=\"" +
           detail::svg_num(y_of(s.max)) + "\" stroke=\"black\"/>\n";
    out += "<rect x=\"" + x0 + "\" y=\"" + detail::svg_num(y_of(s.q3)) + "\" width=\"" + detail::svg_num(bw) +
           "\" height=\"" + detail::svg_num(std::max(y_of(s.q1) - y_of(s.q3), 0.5)) + "\" fill=\"" + detail::palette(i) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + x0 + "\" x2=\"" + detail::svg_num(cx + bw / 2) + "\" y1=\"" + detail::svg_num(y_of(s.median)) +
           "\" y2=\"" + detail::svg_num(y_of(s.median)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + xc + "\" y=\"" + std::to_string(h - bottom + 16) + "\" text-anchor=\"middle\">" +
           detail::svg_escape(name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace llmshape
