#pragma once

// Minimal SVG plots for run and ablation reports: grouped bars with error
// whiskers, and multi-series line charts. Fixed-format numbers keep the
// output byte-stable.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace sgrs::svg {

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;  // half-width of the whisker; 0 draws none
  bool highlight = false;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> error;  // optional, same length as y
};

namespace detail {

inline std::string f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
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
      default: out += c;
    }
  }
  return out;
}

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % 6];
}

struct Frame {
  double width = 640, height = 360, left = 60, right = 20, top = 40, bottom = 70;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string open(const Frame& fr, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(fr.width) + "\" height=\"" +
                  f(fr.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + f(fr.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  return s;
}

inline std::string y_axis(const Frame& fr, const std::string& label) {
  std::string s = "<line x1=\"" + f(fr.left) + "\" y1=\"" + f(fr.py(fr.y0)) + "\" x2=\"" + f(fr.left) + "\" y2=\"" +
                  f(fr.py(fr.y1)) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = fr.y0 + (fr.y1 - fr.y0) * i / 5.0;
    s += "<line x1=\"" + f(fr.left - 4) + "\" y1=\"" + f(fr.py(v)) + "\" x2=\"" + f(fr.width - fr.right) +
         "\" y2=\"" + f(fr.py(v)) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + f(fr.left - 6) + "\" y=\"" + f(fr.py(v) + 4) + "\" text-anchor=\"end\">" + tick(v) +
         "</text>\n";
  }
  s += "<text transform=\"translate(14," + f((fr.top + fr.height - fr.bottom) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(label) + "</text>\n";
  return s;
}

inline void pad_range(double& lo, double& hi) {
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

}  // namespace detail

inline std::string bar_chart(const std::string& title, const std::vector<Bar>& bars, const std::string& y_label) {
  detail::Frame fr;
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    lo = std::min(lo, b.value - b.error);
    hi = std::max(hi, b.value + b.error);
  }
  if (hi <= lo) hi = lo + 1.0;
  fr.y0 = lo;
  fr.y1 = hi * 1.05;
  fr.x0 = 0;
  fr.x1 = static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  std::string s = detail::open(fr, title) + detail::y_axis(fr, y_label);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double xl = fr.px(i + 0.15), xr = fr.px(i + 0.85), xm = fr.px(i + 0.5);
    const double top = fr.py(std::max(b.value, 0.0)), base = fr.py(std::min(b.value, 0.0));
    s += "<rect x=\"" + detail::f(xl) + "\" y=\"" + detail::f(top) + "\" width=\"" + detail::f(xr - xl) +
         "\" height=\"" + detail::f(base - top) + "\" fill=\"" + (b.highlight ? "#d62728" : "#1f77b4") + "\"/>\n";
    if (b.error > 0) {
      s += "<line x1=\"" + detail::f(xm) + "\" y1=\"" + detail::f(fr.py(b.value - b.error)) + "\" x2=\"" +
           detail::f(xm) + "\" y2=\"" + detail::f(fr.py(b.value + b.error)) + "\" stroke=\"black\"/>\n";
    }
    s += "<text x=\"" + detail::f(xm) + "\" y=\"" + detail::f(top - 4) + "\" text-anchor=\"middle\">" +
         detail::tick(b.value) + "</text>\n";
    s += "<text x=\"" + detail::f(xm) + "\" y=\"" + detail::f(fr.height - fr.bottom + 16) +
         "\" text-anchor=\"middle\">" + detail::escape(b.label) + "</text>\n";
  }
  return s + "</svg>\n";
}

inline std::string line_chart(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                              const std::string& y_label) {
  detail::Frame fr;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& sr : series) {
    for (std::size_t i = 0; i < sr.y.size(); ++i) {
      const double e = i < sr.error.size() ? sr.error[i] : 0.0;
      xlo = std::min(xlo, sr.x[i]);
      xhi = std::max(xhi, sr.x[i]);
      ylo = std::min(ylo, sr.y[i] - e);
      yhi = std::max(yhi, sr.y[i] + e);
    }
  }
  if (!std::isfinite(xlo)) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  detail::pad_range(xlo, xhi);
  detail::pad_range(ylo, yhi);
  fr.x0 = xlo, fr.x1 = xhi, fr.y0 = ylo, fr.y1 = yhi;
  std::string s = detail::open(fr, title) + detail::y_axis(fr, y_label);
  s += "<line x1=\"" + detail::f(fr.left) + "\" y1=\"" + detail::f(fr.py(ylo)) + "\" x2=\"" +
       detail::f(fr.width - fr.right) + "\" y2=\"" + detail::f(fr.py(ylo)) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = xlo + (xhi - xlo) * i / 5.0;
    s += "<text x=\"" + detail::f(fr.px(v)) + "\" y=\"" + detail::f(fr.py(ylo) + 16) + "\" text-anchor=\"middle\">" +
         detail::tick(v) + "</text>\n";
  }
  s += "<text x=\"" + detail::f((fr.left + fr.width - fr.right) / 2) + "\" y=\"" + detail::f(fr.height - 36) +
       "\" text-anchor=\"middle\">" + detail::escape(x_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    std::string pts;
    for (std::size_t i = 0; i < sr.y.size(); ++i) {
      pts += detail::f(fr.px(sr.x[i])) + "," + detail::f(fr.py(sr.y[i])) + " ";
      if (i < sr.error.size() && sr.error[i] > 0) {
        s += "<line x1=\"" + detail::f(fr.px(sr.x[i])) + "\" y1=\"" + detail::f(fr.py(sr.y[i] - sr.error[i])) +
             "\" x2=\"" + detail::f(fr.px(sr.x[i])) + "\" y2=\"" + detail::f(fr.py(sr.y[i] + sr.error[i])) +
             "\" stroke=\"" + detail::colour(k) + "\"/>\n";
      }
      s += "<circle cx=\"" + detail::f(fr.px(sr.x[i])) + "\" cy=\"" + detail::f(fr.py(sr.y[i])) + "\" r=\"2.5\" fill=\"" +
           detail::colour(k) + "\"/>\n";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(detail::colour(k)) + "\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + detail::f(fr.left + 10 + 130.0 * static_cast<double>(k)) + "\" y=\"" +
         detail::f(fr.height - 12) + "\" fill=\"" + detail::colour(k) + "\">" + detail::escape(sr.name) + "</text>\n";
  }
  return s + "</svg>\n";
}

// Several charts stacked vertically in one document.
inline std::string stack(const std::vector<std::string>& charts, double height = 360, double width = 640) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::f(width) + "\" height=\"" +
                  detail::f(height * static_cast<double>(charts.size())) + "\">\n";
  for (std::size_t i = 0; i < charts.size(); ++i) {
    s += "<g transform=\"translate(0," + detail::f(height * static_cast<double>(i)) + ")\">\n" + charts[i] + "</g>\n";
  }
  return s + "</svg>\n";
}

}  // namespace sgrs::svg
