#include "stoiht/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace stoiht::svg {

namespace {

constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

// Tick spacing of 1, 2 or 5 times a power of ten giving about `count` ticks.
double nice_step(double span, int count) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / count;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0}) {
    if (raw <= f * mag) return f * mag;
  }
  return 10.0 * mag;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;
  double floor = 1e-12;

  double value(double v) const {
    return log ? std::log10(std::max(v, floor)) : v;
  }
};

}  // namespace

std::string palette(std::size_t i) {
  static constexpr std::array<const char*, 8> colors = {
      "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
      "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % colors.size()];
}

std::string render(const Chart& chart) {
  Axis xa, ya;
  ya.log = chart.log_y;
  ya.floor = chart.log_floor;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ya.value(s.y[i]));
      ymax = std::max(ymax, ya.value(s.y[i]));
      if (!s.band_low.empty()) {
        ymin = std::min(ymin, ya.value(s.band_low[i]));
        ymax = std::max(ymax, ya.value(s.band_high[i]));
      }
    }
  }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  if (ya.log) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  } else {
    const double pad = 0.05 * (ymax - ymin);
    ymin = std::max(0.0, ymin - pad);
    ymax += pad;
  }
  xa.lo = xmin, xa.hi = xmax, ya.lo = ymin, ya.hi = ymax;

  const double plot_w = chart.width - kLeft - kRight;
  const double plot_h = chart.height - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - xa.lo) / (xa.hi - xa.lo) * plot_w; };
  auto py = [&](double v) {
    return kTop + plot_h - (ya.value(v) - ya.lo) / (ya.hi - ya.lo) * plot_h;
  };
  auto py_raw = [&](double v) {
    return kTop + plot_h - (v - ya.lo) / (ya.hi - ya.lo) * plot_h;
  };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      chart.width, chart.height, chart.width, chart.height);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
                     chart.width, chart.height);
  out += fmt::format(
      "<text x=\"{:.1f}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
      kLeft + plot_w / 2, escape(chart.title));

  // Grid and ticks.
  const double xstep = nice_step(xa.hi - xa.lo, 8);
  for (double v = std::ceil(xa.lo / xstep) * xstep; v <= xa.hi + 1e-9 * xstep;
       v += xstep) {
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
        "stroke=\"#e0e0e0\"/>\n<text x=\"{0:.1f}\" y=\"{3:.1f}\" "
        "text-anchor=\"middle\">{4:g}</text>\n",
        px(v), kTop, kTop + plot_h, kTop + plot_h + 18, v);
  }
  const double ystep = ya.log ? std::max(1.0, std::ceil((ya.hi - ya.lo) / 8))
                              : nice_step(ya.hi - ya.lo, 6);
  for (double v = std::ceil(ya.lo / ystep) * ystep; v <= ya.hi + 1e-9 * ystep;
       v += ystep) {
    const std::string label =
        ya.log ? fmt::format("1e{:g}", v) : fmt::format("{:g}", v);
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
        "stroke=\"#e0e0e0\"/>\n<text x=\"{3:.1f}\" y=\"{4:.1f}\" "
        "text-anchor=\"end\">{5}</text>\n",
        kLeft, py_raw(v), kLeft + plot_w, kLeft - 6, py_raw(v) + 4, label);
  }
  out += fmt::format(
      "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
      "fill=\"none\" stroke=\"black\"/>\n",
      kLeft, kTop, plot_w, plot_h);
  out += fmt::format(
      "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
      kLeft + plot_w / 2, chart.height - 16.0, escape(chart.x_label));
  out += fmt::format(
      "<text transform=\"translate(18 {:.1f}) rotate(-90)\" "
      "text-anchor=\"middle\">{}</text>\n",
      kTop + plot_h / 2, escape(chart.y_label));

  for (const auto& s : chart.series) {
    if (!s.band_low.empty() && !s.x.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.band_high[i]));
      }
      for (std::size_t i = s.x.size(); i-- > 0;) {
        pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.band_low[i]));
      }
      out += fmt::format(
          "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
          pts, s.color);
    }
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    }
    out += fmt::format(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
        pts, s.color, s.dashed ? " stroke-dasharray=\"6 4\"" : "");
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out += fmt::format(
            "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
            px(s.x[i]), py(s.y[i]), s.color);
      }
    }
  }

  // Legend.
  double ly = kTop + 10;
  for (const auto& s : chart.series) {
    const double lx = kLeft + plot_w + 14;
    out += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" "
        "stroke=\"{}\" stroke-width=\"2\"{}/>\n<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n",
        lx, ly, lx + 24, ly, s.color,
        s.dashed ? " stroke-dasharray=\"6 4\"" : "", lx + 30, ly + 4,
        escape(s.label));
    ly += 20;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace stoiht::svg
