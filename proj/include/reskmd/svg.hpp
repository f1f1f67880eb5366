// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace reskmd {

struct PlotLine {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// Draw the y = x reference (ROC charts).
  bool diagonal = false;
  /// Pin both axes to [0, 1] (ROC charts).
  bool unit_square = false;
};

/// Standalone SVG line chart with axes, ticks and a legend.
std::string render_line_chart(const std::vector<PlotLine>& lines, const PlotSpec& spec);

void write_line_chart(const std::filesystem::path& path, const std::vector<PlotLine>& lines,
                      const PlotSpec& spec);

}  // namespace reskmd
