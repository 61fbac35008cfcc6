// Copyright 2026 The probekit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal static SVG charts. Output is a pure function of the inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace probekit::svg {

namespace detail {

inline std::string num(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  return colors[i % 6];
}

inline std::string header(int w, int h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(title) + "</text>\n";
}

struct Axis {
  double x0, y0, x1, y1;  // plot area in pixels (y0 top)
  double lo, hi;          // value range on y

  double y(double v) const { return y1 - (v - lo) / (hi - lo) * (y1 - y0); }
};

inline std::string y_axis(const Axis& a, const std::string& label, int ticks = 5) {
  std::string s = "<line x1=\"" + num(a.x0) + "\" y1=\"" + num(a.y0) + "\" x2=\"" + num(a.x0) +
                  "\" y2=\"" + num(a.y1) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(a.x0) + "\" y1=\"" + num(a.y1) + "\" x2=\"" + num(a.x1) + "\" y2=\"" +
       num(a.y1) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= ticks; ++t) {
    double v = a.lo + (a.hi - a.lo) * t / ticks;
    double y = a.y(v);
    s += "<line x1=\"" + num(a.x0 - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(a.x1) + "\" y2=\"" +
         num(y) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + num(a.x0 - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
         num(v, 2) + "</text>\n";
  }
  s += "<text transform=\"translate(14," + num((a.y0 + a.y1) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(label) + "</text>\n";
  return s;
}

}  // namespace detail

struct BarSeries {
  std::string name;
  std::vector<std::optional<double>> values;  // one per group; nullopt = no bar
  std::vector<std::optional<std::pair<double, double>>> errors;  // optional [low, high]
  std::vector<bool> emphasize;  // bold italic value label
};

/// Grouped bars: one group per category, one bar per series.
inline std::string bar_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::string>& groups,
                             const std::vector<BarSeries>& series, double y_lo, double y_hi) {
  const int width = std::max(360, 110 * static_cast<int>(groups.size()) + 120);
  const int height = 340;
  detail::Axis ax{60, 40, static_cast<double>(width - 20), static_cast<double>(height - 70), y_lo, y_hi};
  std::string s = detail::header(width, height, title);
  s += detail::y_axis(ax, y_label);
  const double group_w = (ax.x1 - ax.x0) / std::max<std::size_t>(1, groups.size());
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, series.size());
  auto clampv = [&](double v) { return std::clamp(v, y_lo, y_hi); };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double gx = ax.x0 + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t k = 0; k < series.size(); ++k) {
      const auto& ser = series[k];
      if (g >= ser.values.size() || !ser.values[g]) continue;
      double v = *ser.values[g];
      double x = gx + bar_w * static_cast<double>(k);
      double top = ax.y(clampv(std::max(v, 0.0))), base = ax.y(clampv(std::min(v, 0.0)));
      s += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(top) + "\" width=\"" +
           detail::num(bar_w * 0.9) + "\" height=\"" + detail::num(base - top) + "\" fill=\"" +
           detail::palette(k) + "\"/>\n";
      if (g < ser.errors.size() && ser.errors[g]) {
        double cx = x + bar_w * 0.45;
        double ylo = ax.y(clampv(ser.errors[g]->first)), yhi = ax.y(clampv(ser.errors[g]->second));
        s += "<line x1=\"" + detail::num(cx) + "\" y1=\"" + detail::num(ylo) + "\" x2=\"" +
             detail::num(cx) + "\" y2=\"" + detail::num(yhi) + "\" stroke=\"black\"/>\n";
        for (double yy : {ylo, yhi})
          s += "<line x1=\"" + detail::num(cx - 4) + "\" y1=\"" + detail::num(yy) + "\" x2=\"" +
               detail::num(cx + 4) + "\" y2=\"" + detail::num(yy) + "\" stroke=\"black\"/>\n";
      }
      bool bold = g < ser.emphasize.size() && ser.emphasize[g];
      s += "<text x=\"" + detail::num(x + bar_w * 0.45) + "\" y=\"" + detail::num(top - 4) +
           "\" text-anchor=\"middle\" font-size=\"9\"" +
           (bold ? " font-weight=\"bold\" font-style=\"italic\"" : "") + ">" + detail::num(v, 2) +
           "</text>\n";
    }
    s += "<text x=\"" + detail::num(ax.x0 + group_w * (static_cast<double>(g) + 0.5)) + "\" y=\"" +
         detail::num(ax.y1 + 16) + "\" text-anchor=\"middle\">" + detail::escape(groups[g]) + "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    double lx = ax.x0 + 10 + 90 * static_cast<double>(k);
    s += "<rect x=\"" + detail::num(lx) + "\" y=\"" + std::to_string(height - 30) +
         "\" width=\"10\" height=\"10\" fill=\"" + detail::palette(k) + "\"/>\n";
    s += "<text x=\"" + detail::num(lx + 14) + "\" y=\"" + std::to_string(height - 21) + "\">" +
         detail::escape(series[k].name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// One polyline with markers.
inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<double>& xs,
                              const std::vector<double>& ys) {
  const int width = 480, height = 320;
  double lo = 0.0, hi = 1.0;
  if (!ys.empty()) {
    hi = *std::max_element(ys.begin(), ys.end());
    hi = hi > 0.0 ? hi * 1.15 : 1.0;
  }
  detail::Axis ax{60, 40, width - 20.0, height - 50.0, lo, hi};
  std::string s = detail::header(width, height, title);
  s += detail::y_axis(ax, y_label);
  double xmin = xs.empty() ? 0.0 : *std::min_element(xs.begin(), xs.end());
  double xmax = xs.empty() ? 1.0 : *std::max_element(xs.begin(), xs.end());
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  auto px = [&](double x) { return ax.x0 + 20 + (x - xmin) / (xmax - xmin) * (ax.x1 - ax.x0 - 40); };
  std::string pts;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    pts += (i ? " " : "") + detail::num(px(xs[i])) + "," + detail::num(ax.y(ys[i]));
    s += "<circle cx=\"" + detail::num(px(xs[i])) + "\" cy=\"" + detail::num(ax.y(ys[i])) +
         "\" r=\"3\" fill=\"" + detail::palette(0) + "\"/>\n";
    s += "<text x=\"" + detail::num(px(xs[i])) + "\" y=\"" + detail::num(ax.y1 + 16) +
         "\" text-anchor=\"middle\">" + detail::num(xs[i], 2) + "</text>\n";
  }
  s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + detail::palette(0) + "\"/>\n";
  s += "<text x=\"" + detail::num((ax.x0 + ax.x1) / 2) + "\" y=\"" + std::to_string(height - 10) +
       "\" text-anchor=\"middle\">" + detail::escape(x_label) + "</text>\n";
  s += "</svg>\n";
  return s;
}

struct HistSeries {
  std::string name;
  std::vector<double> values;
};

/// Overlaid normalized histograms on a shared range.
inline std::string histogram_chart(const std::string& title, const std::string& x_label,
                                   const std::vector<HistSeries>& series, int bins = 30) {
  const int width = 480, height = 320;
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& ser : series)
    for (double v : ser.values) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<std::vector<double>> hist;
  double peak = 0.0;
  for (const auto& ser : series) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : ser.values) {
      int k = std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1);
      h[static_cast<std::size_t>(k)] += 1.0 / static_cast<double>(ser.values.size());
    }
    for (double x : h) peak = std::max(peak, x);
    hist.push_back(std::move(h));
  }
  detail::Axis ax{60, 40, width - 20.0, height - 60.0, 0.0, peak > 0.0 ? peak * 1.1 : 1.0};
  std::string s = detail::header(width, height, title);
  s += detail::y_axis(ax, "fraction");
  const double bw = (ax.x1 - ax.x0) / bins;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    for (int b = 0; b < bins; ++b) {
      double v = hist[k][static_cast<std::size_t>(b)];
      if (v <= 0.0) continue;
      double top = ax.y(v);
      s += "<rect x=\"" + detail::num(ax.x0 + bw * b) + "\" y=\"" + detail::num(top) + "\" width=\"" +
           detail::num(bw) + "\" height=\"" + detail::num(ax.y1 - top) + "\" fill=\"" +
           detail::palette(k) + "\" fill-opacity=\"0.5\"/>\n";
    }
    s += "<rect x=\"" + detail::num(ax.x1 - 90) + "\" y=\"" + detail::num(ax.y0 + 14.0 * k) +
         "\" width=\"10\" height=\"10\" fill=\"" + detail::palette(k) + "\"/>\n";
    s += "<text x=\"" + detail::num(ax.x1 - 76) + "\" y=\"" + detail::num(ax.y0 + 9 + 14.0 * k) + "\">" +
         detail::escape(series[k].name) + "</text>\n";
  }
  s += "<text x=\"" + detail::num(ax.x0) + "\" y=\"" + detail::num(ax.y1 + 16) + "\">" + detail::num(lo, 3) + "</text>\n";
  s += "<text x=\"" + detail::num(ax.x1) + "\" y=\"" + detail::num(ax.y1 + 16) + "\" text-anchor=\"end\">" +
       detail::num(hi, 3) + "</text>\n";
  s += "<text x=\"" + detail::num((ax.x0 + ax.x1) / 2) + "\" y=\"" + std::to_string(height - 16) +
       "\" text-anchor=\"middle\">" + detail::escape(x_label) + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace probekit::svg
