// SPDX-License-Identifier: Apache-2.0
#include "reskmd/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "reskmd/error.hpp"

namespace reskmd {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo <= 1e-300 * std::max(1.0, std::abs(lo))) {
      const double pad = std::abs(lo) > 0.0 ? 0.05 * std::abs(lo) : 0.5;
      lo -= pad;
      hi += pad;
    }
  }
};

std::string tick_label(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

std::string render_line_chart(const std::vector<PlotLine>& lines, const PlotSpec& spec) {
  Range xr, yr;
  if (spec.unit_square) {
    xr = {0.0, 1.0};
    yr = {0.0, 1.0};
  } else {
    for (const auto& l : lines) {
      for (double v : l.x) xr.add(v);
      for (double v : l.y) yr.add(v);
    }
    xr.finish();
    yr.finish();
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(spec.title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(fx)
        << "\" y2=\"" << kTop + ph + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18
        << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
    svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << kLeft
        << "\" y2=\"" << py(fy) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">"
        << tick_label(fy) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << kTop + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(spec.y_label) << "</text>\n";

  if (spec.diagonal) {
    svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
        << py(1) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    const char* colour = kPalette[k % kPalette.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < std::min(l.x.size(), l.y.size()); ++i) {
      if (!std::isfinite(l.x[i]) || !std::isfinite(l.y[i])) continue;
      svg << px(l.x[i]) << ',' << py(l.y[i]) << ' ';
    }
    svg << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(k) + 6.0;
    svg << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\""
        << kWidth - kRight + 30 << "\" y2=\"" << ly << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kRight + 34 << "\" y=\"" << ly + 4 << "\">"
        << escape(l.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_line_chart(const std::filesystem::path& path, const std::vector<PlotLine>& lines,
                      const PlotSpec& spec) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << render_line_chart(lines, spec);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace reskmd
