#pragma once

#include <span>
#include <string>
#include <vector>

namespace gradsim {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

/// Standalone SVG line plot with axes, ticks and a legend. Points that cannot
/// be drawn (non-finite, or non-positive on a log axis) are skipped. The
/// output is a deterministic function of the inputs.
std::string render_svg(const PlotSpec& spec, std::span<const Series> series);

} // namespace gradsim
