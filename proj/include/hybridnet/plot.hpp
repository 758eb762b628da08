#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hybridnet/metrics.hpp"

namespace hybridnet {

struct LabeledSeries {
  std::string label;
  MetricsSeries series;
};

namespace detail {

inline std::string fmt(double v, int prec = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

/// Two stacked panels over iterations: polarization (top, y in [0, 1]) and
/// NCI (bottom, y in [-1, 1]). Undefined NCI values break the line.
inline void render_series_svg(const std::vector<LabeledSeries>& all, std::ostream& out) {
  static constexpr std::array<const char*, 6> kColors{"#d9668f", "#e07b00", "#4682b4", "#3a9a4a", "#7a5195", "#444444"};
  constexpr double W = 640, panel_h = 260, left = 70, right = 170, top = 30, gap = 60;
  const double plot_w = W - left - right;
  const double H = top + 2 * panel_h + gap + 50;

  int max_iter = 1;
  for (const auto& s : all) {
    for (const auto& r : s.series.records) max_iter = std::max(max_iter, r.iteration);
  }
  auto xpos = [&](int it) { return left + plot_w * it / max_iter; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  struct Panel {
    const char* title;
    double y0, ymin, ymax;
  };
  const std::array<Panel, 2> panels{{{"Polarization P_z", top, 0.0, 1.0}, {"Neighbors Correlation Index", top + panel_h + gap, -1.0, 1.0}}};

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& P = panels[p];
    auto ypos = [&](double v) { return P.y0 + panel_h * (P.ymax - v) / (P.ymax - P.ymin); };
    out << "<text x=\"" << left << "\" y=\"" << P.y0 - 10 << "\" font-weight=\"bold\">" << P.title << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << P.y0 << "\" width=\"" << plot_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      double v = P.ymin + (P.ymax - P.ymin) * k / 4.0;
      out << "<line x1=\"" << left - 4 << "\" x2=\"" << left + plot_w << "\" y1=\"" << ypos(v) << "\" y2=\""
          << ypos(v) << "\" stroke=\"#ddd\"/>\n";
      out << "<text x=\"" << left - 8 << "\" y=\"" << ypos(v) + 4 << "\" text-anchor=\"end\">" << detail::fmt(v)
          << "</text>\n";
    }
    for (int it = 0; it <= max_iter; ++it) {
      out << "<text x=\"" << xpos(it) << "\" y=\"" << P.y0 + panel_h + 16 << "\" text-anchor=\"middle\">" << it
          << "</text>\n";
    }
    for (std::size_t s = 0; s < all.size(); ++s) {
      const char* color = kColors[s % kColors.size()];
      std::string path;
      bool pen_down = false;
      for (const auto& r : all[s].series.records) {
        std::optional<double> v = p == 0 ? std::optional<double>(r.polarization) : r.nci;
        if (!v) {
          pen_down = false;
          continue;
        }
        path += (pen_down ? " L " : " M ") + detail::fmt(xpos(r.iteration), 1) + " " + detail::fmt(ypos(*v), 1);
        pen_down = true;
        out << "<circle cx=\"" << detail::fmt(xpos(r.iteration), 1) << "\" cy=\"" << detail::fmt(ypos(*v), 1)
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
      if (!path.empty()) {
        out << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      }
    }
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">iteration</text>\n";
  for (std::size_t s = 0; s < all.size(); ++s) {
    double y = top + 20 + 20.0 * s;
    out << "<rect x=\"" << W - right + 15 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << kColors[s % kColors.size()] << "\"/>\n";
    out << "<text x=\"" << W - right + 33 << "\" y=\"" << y + 1 << "\">" << detail::xml_escape(all[s].label)
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace hybridnet
