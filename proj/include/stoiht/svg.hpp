#pragma once

#include <string>
#include <vector>

namespace stoiht::svg {

struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x;
  std::vector<double> y;
  /// Optional shaded band; same length as x when present.
  std::vector<double> band_low;
  std::vector<double> band_high;
  bool dashed = false;
  bool markers = false;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  /// Values below this are clamped on a log axis.
  double log_floor = 1e-12;
  int width = 760;
  int height = 480;
  std::vector<Series> series;
};

/// Self-contained SVG document. Output depends only on the chart.
std::string render(const Chart& chart);

/// A categorical palette entry, cycling.
std::string palette(std::size_t i);

}  // namespace stoiht::svg
