#pragma once

// Minimal SVG plots: scatter with fitted line, and diverging heatmaps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ubd/stats.hpp"

namespace ubd::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12,
                        const char* extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\"" + extra + ">" + escape(s) + "</text>\n";
}

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return colors[i % 6];
}

/// Scatter of every series with a least-squares line per series and the
/// y = x diagonal for reference.
inline std::string scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  const double W = 520, H = 440, L = 70, R = 20, T = 40, B = 60;
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      lo = any ? std::min({lo, x, y}) : std::min(x, y);
      hi = any ? std::max({hi, x, y}) : std::max(x, y);
      any = true;
    }
  }
  if (!any || hi - lo < 1e-9) {
    lo -= 0.05;
    hi += 0.05;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto sx = [&](double v) { return L + (v - lo) / (hi - lo) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - lo) / (hi - lo) * (H - T - B); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                    "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += text(W / 2, 22, title, "middle", 14);
  out += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(W - L - R) + "\" height=\"" +
         num(H - T - B) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    out += text(sx(v), H - B + 16, num(v), "middle", 10);
    out += text(L - 6, sy(v) + 4, num(v), "end", 10);
  }
  if (lo < 0.0 && hi > 0.0) {
    out += "<line x1=\"" + num(sx(0)) + "\" y1=\"" + num(T) + "\" x2=\"" + num(sx(0)) + "\" y2=\"" + num(H - B) +
           "\" stroke=\"#bbb\"/>\n";
    out += "<line x1=\"" + num(L) + "\" y1=\"" + num(sy(0)) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(sy(0)) +
           "\" stroke=\"#bbb\"/>\n";
  }
  out += "<line x1=\"" + num(sx(lo)) + "\" y1=\"" + num(sy(lo)) + "\" x2=\"" + num(sx(hi)) + "\" y2=\"" + num(sy(hi)) +
         "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [x, y] : s.points) {
      out += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"3\" fill=\"" + s.color +
             "\" fill-opacity=\"0.7\"/>\n";
      xs.push_back(x);
      ys.push_back(y);
    }
    if (const auto fit = stats::least_squares(xs, ys)) {
      const double y0 = fit->slope * lo + fit->intercept;
      const double y1 = fit->slope * hi + fit->intercept;
      out += "<line x1=\"" + num(sx(lo)) + "\" y1=\"" + num(sy(y0)) + "\" x2=\"" + num(sx(hi)) + "\" y2=\"" +
             num(sy(y1)) + "\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"/>\n";
    }
    out += "<circle cx=\"" + num(L + 14) + "\" cy=\"" + num(T + 14 + 16 * k) + "\" r=\"4\" fill=\"" + s.color + "\"/>\n";
    out += text(L + 24, T + 18 + 16 * k, s.label, "start", 11);
  }
  out += text(W / 2, H - 18, x_label, "middle", 12);
  out += text(16, H / 2, y_label, "middle", 12,
              (" transform=\"rotate(-90 16 " + num(H / 2) + ")\"").c_str());
  out += "</svg>\n";
  return out;
}

/// Blue (negative) to white (0) to red (positive).
inline std::string diverging_color(double v, double limit) {
  const double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
  int r = 255;
  int g = 255;
  int b = 255;
  if (t > 0) {
    g = b = static_cast<int>(std::lround(255 * (1.0 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1.0 + t)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

struct HeatmapPanel {
  std::string title;
  std::vector<std::vector<double>> values;  // [row][col]
};

/// Side-by-side heatmaps sharing one color scale centered at zero. Rows are
/// drawn top to bottom, labelled 1..n.
inline std::string heatmaps(const std::string& title, const std::string& row_label, const std::string& col_label,
                            const std::vector<HeatmapPanel>& panels) {
  const double cell = 22;
  const double L = 60, T = 50, gap = 60;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double limit = 0.0;
  for (const auto& p : panels) {
    rows = std::max(rows, p.values.size());
    for (const auto& row : p.values) {
      cols = std::max(cols, row.size());
      for (double v : row) limit = std::max(limit, std::abs(v));
    }
  }
  const double pw = cell * static_cast<double>(cols);
  const double W = L + static_cast<double>(panels.size()) * (pw + gap) + 40;
  const double H = T + cell * static_cast<double>(rows) + 70;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                    "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += text(W / 2, 20, title, "middle", 14);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const double x0 = L + static_cast<double>(k) * (pw + gap);
    out += text(x0 + pw / 2, T - 10, panels[k].title, "middle", 12);
    for (std::size_t i = 0; i < panels[k].values.size(); ++i) {
      for (std::size_t j = 0; j < panels[k].values[i].size(); ++j) {
        const double v = panels[k].values[i][j];
        out += "<rect x=\"" + num(x0 + cell * j) + "\" y=\"" + num(T + cell * i) + "\" width=\"" + num(cell) +
               "\" height=\"" + num(cell) + "\" fill=\"" + diverging_color(v, limit) + "\"><title>" + num(v) +
               "</title></rect>\n";
      }
      out += text(x0 - 6, T + cell * i + cell / 2 + 4, std::to_string(i + 1), "end", 9);
    }
    for (std::size_t j = 0; j < cols; ++j)
      out += text(x0 + cell * j + cell / 2, T + cell * rows + 12, std::to_string(j + 1), "middle", 9);
    out += text(x0 + pw / 2, T + cell * rows + 30, col_label, "middle", 11);
  }
  out += text(14, T + cell * rows / 2, row_label, "middle", 11,
              (" transform=\"rotate(-90 14 " + num(T + cell * rows / 2) + ")\"").c_str());
  out += text(W / 2, H - 12, "color scale: blue < 0 < red, |max| = " + num(limit), "middle", 10);
  out += "</svg>\n";
  return out;
}

}  // namespace ubd::svg
