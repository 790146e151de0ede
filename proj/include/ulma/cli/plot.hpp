#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace ulma::cli {

struct Band {
  double x0, x1;
};

struct Marker {
  double x, y;
};

/// Minimal static SVG line plot: one polyline, optional shaded x-bands and point markers.
struct SvgPlot {
  std::string title;
  std::vector<std::pair<double, double>> line;
  std::vector<Band> bands;
  std::vector<Marker> markers;
  double width = 800, height = 300, margin = 40;

  std::string render() const {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!line.empty()) {
      xmin = xmax = line.front().first;
      ymin = ymax = line.front().second;
      for (const auto& [x, y] : line) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    for (const auto& m : markers) {
      ymin = std::min(ymin, m.y);
      ymax = std::max(ymax, m.y);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pw = width - 2 * margin, ph = height - 2 * margin;
    auto sx = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * ph; };
    auto f = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      return std::string(buf);
    };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(width) + "\" height=\"" + f(height) + "\">\n";
    s += "<!-- ulma-kit v1 -->\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& b : bands)
      s += "<rect x=\"" + f(sx(b.x0)) + "\" y=\"" + f(margin) + "\" width=\"" + f(sx(b.x1) - sx(b.x0)) + "\" height=\"" +
           f(ph) + "\" fill=\"orange\" fill-opacity=\"0.25\"/>\n";
    s += "<line x1=\"" + f(margin) + "\" y1=\"" + f(height - margin) + "\" x2=\"" + f(width - margin) + "\" y2=\"" +
         f(height - margin) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + f(margin) + "\" y1=\"" + f(margin) + "\" x2=\"" + f(margin) + "\" y2=\"" + f(height - margin) +
         "\" stroke=\"black\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : line) s += f(sx(x)) + "," + f(sy(y)) + " ";
    s += "\"/>\n";
    for (const auto& m : markers)
      s += "<circle cx=\"" + f(sx(m.x)) + "\" cy=\"" + f(sy(m.y)) + "\" r=\"4\" fill=\"crimson\"/>\n";
    s += "<text x=\"" + f(margin) + "\" y=\"" + f(margin - 10) + "\" font-size=\"14\">" + title + "</text>\n";
    s += "<text x=\"" + f(margin) + "\" y=\"" + f(height - 10) + "\" font-size=\"11\">" + f(xmin) + "</text>\n";
    s += "<text x=\"" + f(width - margin) + "\" y=\"" + f(height - 10) + "\" font-size=\"11\" text-anchor=\"end\">" +
         f(xmax) + "</text>\n";
    s += "</svg>\n";
    return s;
  }
};

}  // namespace ulma::cli
