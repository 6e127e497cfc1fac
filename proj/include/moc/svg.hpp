#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "moc/metrics.hpp"

namespace moc {

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace svg_detail

// Step-curve plot of two survival groups with the log-rank p-value in the
// legend. Returns the SVG document as a string.
inline std::string km_svg(const KMCurve& high, const KMCurve& low, double p_value) {
  const double width = 640, height = 440;
  const double left = 70, right = 20, top = 30, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double t_max = 1.0;
  for (double t : high.times) t_max = std::max(t_max, t);
  for (double t : low.times) t_max = std::max(t_max, t);
  t_max *= 1.05;

  auto x_of = [&](double t) { return left + plot_w * (t / t_max); };
  auto y_of = [&](double s) { return top + plot_h * (1.0 - s); };

  auto step_path = [&](const KMCurve& c) {
    std::string d = "M " + svg_detail::num(x_of(0)) + " " + svg_detail::num(y_of(1.0));
    double s = 1.0;
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      d += " L " + svg_detail::num(x_of(c.times[i])) + " " + svg_detail::num(y_of(s));
      s = c.survival[i];
      d += " L " + svg_detail::num(x_of(c.times[i])) + " " + svg_detail::num(y_of(s));
    }
    d += " L " + svg_detail::num(left + plot_w) + " " + svg_detail::num(y_of(s));
    return d;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_detail::num(width) +
         "\" height=\"" + svg_detail::num(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes
  out += "<line x1=\"" + svg_detail::num(left) + "\" y1=\"" + svg_detail::num(top) + "\" x2=\"" +
         svg_detail::num(left) + "\" y2=\"" + svg_detail::num(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + svg_detail::num(left) + "\" y1=\"" + svg_detail::num(top + plot_h) +
         "\" x2=\"" + svg_detail::num(left + plot_w) + "\" y2=\"" +
         svg_detail::num(top + plot_h) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double s = i / 5.0;
    out += "<text x=\"" + svg_detail::num(left - 8) + "\" y=\"" + svg_detail::num(y_of(s) + 4) +
           "\" font-size=\"12\" text-anchor=\"end\">" + svg_detail::num(s) + "</text>\n";
    const double t = t_max * s;
    out += "<text x=\"" + svg_detail::num(x_of(t)) + "\" y=\"" +
           svg_detail::num(top + plot_h + 18) + "\" font-size=\"12\" text-anchor=\"middle\">" +
           svg_detail::num(t) + "</text>\n";
  }
  out += "<text x=\"" + svg_detail::num(left + plot_w / 2) + "\" y=\"" +
         svg_detail::num(height - 15) + "\" font-size=\"13\" text-anchor=\"middle\">time</text>\n";
  out += "<text x=\"18\" y=\"" + svg_detail::num(top + plot_h / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         svg_detail::num(top + plot_h / 2) + ")\">survival probability</text>\n";

  out += "<path d=\"" + step_path(high) + "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
  out += "<path d=\"" + step_path(low) + "\" fill=\"none\" stroke=\"#2471a3\" stroke-width=\"2\"/>\n";

  char pbuf[64];
  std::snprintf(pbuf, sizeof(pbuf), "log-rank p = %.3e", p_value);
  out += "<text x=\"" + svg_detail::num(left + 12) + "\" y=\"" + svg_detail::num(top + 18) +
         "\" font-size=\"13\">" + pbuf + "</text>\n";
  out += "<text x=\"" + svg_detail::num(left + 12) + "\" y=\"" + svg_detail::num(top + 36) +
         "\" font-size=\"12\" fill=\"#c0392b\">high risk</text>\n";
  out += "<text x=\"" + svg_detail::num(left + 12) + "\" y=\"" + svg_detail::num(top + 52) +
         "\" font-size=\"12\" fill=\"#2471a3\">low risk</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace moc
