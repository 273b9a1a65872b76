#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "ikt/drift.hpp"
#include "ikt/error.hpp"

// Static SVG charts. No plotting dependency; every byte is a deterministic
// function of the data, and the numbers are embedded as a comment table so
// scripts can scrape them without an XML parser.

namespace ikt::svg {

namespace detail {

inline std::string fmt(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{
      "#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3", "#937860"};
  return colors;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Scatter of a 2D embedding, one marker shape/color per school.
inline std::string scatter(const drift::Embedding2D& emb,
                           const std::string& title) {
  const std::size_t n = emb.points.rows();
  if (emb.labels.size() != n)
    throw ConfigError("parameter", "scatter needs one label per point");

  std::vector<std::string> schools;
  for (const auto& [school, _] : emb.labels)
    if (std::find(schools.begin(), schools.end(), school) == schools.end())
      schools.push_back(school);

  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    min_x = std::min(min_x, emb.points.at(i, 0));
    max_x = std::max(max_x, emb.points.at(i, 0));
    min_y = std::min(min_y, emb.points.at(i, 1));
    max_y = std::max(max_y, emb.points.at(i, 1));
  }
  const double pad_x = 0.05 * std::max(max_x - min_x, 1e-9);
  const double pad_y = 0.05 * std::max(max_y - min_y, 1e-9);
  min_x -= pad_x;
  max_x += pad_x;
  min_y -= pad_y;
  max_y += pad_y;

  const double w = 640, h = 480, left = 60, top = 40, right = 150, bottom = 50;
  auto sx = [&](double x) {
    return left + (x - min_x) / (max_x - min_x) * (w - left - right);
  };
  auto sy = [&](double y) {
    return top + (max_y - y) / (max_y - min_y) * (h - top - bottom);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         detail::fmt(w, 0) + "\" height=\"" + detail::fmt(h, 0) + "\">\n";
  out += "<!-- data: school,user,x,y\n";
  for (std::size_t i = 0; i < n; ++i)
    out += emb.labels[i].first + "," + emb.labels[i].second + "," +
           detail::fmt(emb.points.at(i, 0), 6) + "," +
           detail::fmt(emb.points.at(i, 1), 6) + "\n";
  out += "-->\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::fmt(w / 2, 0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" +
         detail::escape(title) + "</text>\n";
  out += "<rect x=\"" + detail::fmt(left, 0) + "\" y=\"" + detail::fmt(top, 0) +
         "\" width=\"" + detail::fmt(w - left - right, 0) + "\" height=\"" +
         detail::fmt(h - top - bottom, 0) +
         "\" fill=\"none\" stroke=\"#999\"/>\n";

  for (std::size_t i = 0; i < n; ++i) {
    const auto it =
        std::find(schools.begin(), schools.end(), emb.labels[i].first);
    const std::size_t s =
        static_cast<std::size_t>(it - schools.begin());
    const std::string& color = detail::palette()[s % detail::palette().size()];
    const double cx = sx(emb.points.at(i, 0)), cy = sy(emb.points.at(i, 1));
    switch (s % 3) {
      case 0:
        out += "<circle cx=\"" + detail::fmt(cx) + "\" cy=\"" +
               detail::fmt(cy) + "\" r=\"3.5\" fill=\"" + color +
               "\" fill-opacity=\"0.8\"/>\n";
        break;
      case 1:
        out += "<rect x=\"" + detail::fmt(cx - 3) + "\" y=\"" +
               detail::fmt(cy - 3) + "\" width=\"6\" height=\"6\" fill=\"" +
               color + "\" fill-opacity=\"0.8\"/>\n";
        break;
      default:
        out += "<path d=\"M " + detail::fmt(cx) + " " + detail::fmt(cy - 4) +
               " L " + detail::fmt(cx - 4) + " " + detail::fmt(cy + 3) + " L " +
               detail::fmt(cx + 4) + " " + detail::fmt(cy + 3) +
               " Z\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
    }
  }

  for (std::size_t s = 0; s < schools.size(); ++s) {
    const double ly = top + 16 + 20 * static_cast<double>(s);
    out += "<circle cx=\"" + detail::fmt(w - right + 16) + "\" cy=\"" +
           detail::fmt(ly - 4) + "\" r=\"5\" fill=\"" +
           detail::palette()[s % detail::palette().size()] + "\"/>\n";
    out += "<text x=\"" + detail::fmt(w - right + 28) + "\" y=\"" +
           detail::fmt(ly) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::escape(schools[s]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// Grouped bars in one or more metric panels: values[panel][series][group],
// missing entries rendered as gaps.
inline std::string grouped_bars(
    const std::string& title, const std::vector<std::string>& panels,
    const std::vector<std::string>& groups,
    const std::vector<std::string>& series,
    const std::vector<std::vector<std::vector<std::optional<double>>>>& values) {
  const double panel_w = 300, h = 360, top = 52, bottom = 70, left = 44,
               gap = 28;
  const double w =
      left + (panel_w + gap) * static_cast<double>(panels.size()) + 20;
  const double plot_h = h - top - bottom;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         detail::fmt(w, 0) + "\" height=\"" + detail::fmt(h, 0) + "\">\n";
  out += "<!-- data: panel,series,group,value\n";
  for (std::size_t p = 0; p < panels.size(); ++p)
    for (std::size_t s = 0; s < series.size(); ++s)
      for (std::size_t g = 0; g < groups.size(); ++g)
        out += panels[p] + "," + series[s] + "," + groups[g] + "," +
               (values[p][s][g] ? detail::fmt(*values[p][s][g], 6)
                                : std::string("NA")) +
               "\n";
  out += "-->\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::fmt(w / 2, 0) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" +
         detail::escape(title) + "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x0 = left + (panel_w + gap) * static_cast<double>(p);
    out += "<text x=\"" + detail::fmt(x0 + panel_w / 2) +
           "\" y=\"44\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\">" +
           detail::escape(panels[p]) + "</text>\n";
    out += "<rect x=\"" + detail::fmt(x0) + "\" y=\"" + detail::fmt(top) +
           "\" width=\"" + detail::fmt(panel_w) + "\" height=\"" +
           detail::fmt(plot_h) + "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = 0.25 * tick;
      const double y = top + plot_h * (1.0 - v);
      out += "<line x1=\"" + detail::fmt(x0) + "\" y1=\"" + detail::fmt(y) +
             "\" x2=\"" + detail::fmt(x0 + panel_w) + "\" y2=\"" +
             detail::fmt(y) + "\" stroke=\"#eee\"/>\n";
      if (p == 0)
        out += "<text x=\"" + detail::fmt(x0 - 6) + "\" y=\"" +
               detail::fmt(y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" "
               "font-size=\"10\">" +
               detail::fmt(v, 2) + "</text>\n";
    }

    const double group_w = panel_w / static_cast<double>(groups.size());
    const double bar_w =
        0.8 * group_w / static_cast<double>(series.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double gx = x0 + group_w * static_cast<double>(g);
      out += "<text x=\"" + detail::fmt(gx + group_w / 2) + "\" y=\"" +
             detail::fmt(h - bottom + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">" +
             detail::escape(groups[g]) + "</text>\n";
      for (std::size_t s = 0; s < series.size(); ++s) {
        if (!values[p][s][g]) continue;
        const double v = std::clamp(*values[p][s][g], 0.0, 1.0);
        const double bx = gx + 0.1 * group_w + bar_w * static_cast<double>(s);
        const double bh = plot_h * v;
        out += "<rect x=\"" + detail::fmt(bx) + "\" y=\"" +
               detail::fmt(top + plot_h - bh) + "\" width=\"" +
               detail::fmt(bar_w - 2) + "\" height=\"" + detail::fmt(bh) +
               "\" fill=\"" +
               detail::palette()[s % detail::palette().size()] + "\"/>\n";
      }
    }
  }

  for (std::size_t s = 0; s < series.size(); ++s) {
    const double lx = left + 120 * static_cast<double>(s);
    out += "<rect x=\"" + detail::fmt(lx) + "\" y=\"" + detail::fmt(h - 28) +
           "\" width=\"12\" height=\"12\" fill=\"" +
           detail::palette()[s % detail::palette().size()] + "\"/>\n";
    out += "<text x=\"" + detail::fmt(lx + 18) + "\" y=\"" +
           detail::fmt(h - 18) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::escape(series[s]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// Line chart over ordered x labels; one polyline per series, gaps skipped.
inline std::string lines(
    const std::string& title, const std::vector<std::string>& x_labels,
    const std::vector<std::string>& series,
    const std::vector<std::vector<std::optional<double>>>& values) {
  const double w = 560, h = 400, left = 60, top = 48, right = 140, bottom = 56;
  const double plot_w = w - left - right, plot_h = h - top - bottom;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         detail::fmt(w, 0) + "\" height=\"" + detail::fmt(h, 0) + "\">\n";
  out += "<!-- data: series,x,value\n";
  for (std::size_t s = 0; s < series.size(); ++s)
    for (std::size_t i = 0; i < x_labels.size(); ++i)
      out += series[s] + "," + x_labels[i] + "," +
             (values[s][i] ? detail::fmt(*values[s][i], 6) : std::string("NA")) +
             "\n";
  out += "-->\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::fmt(w / 2, 0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" +
         detail::escape(title) + "</text>\n";
  out += "<rect x=\"" + detail::fmt(left) + "\" y=\"" + detail::fmt(top) +
         "\" width=\"" + detail::fmt(plot_w) + "\" height=\"" +
         detail::fmt(plot_h) + "\" fill=\"none\" stroke=\"#999\"/>\n";

  for (int tick = 0; tick <= 4; ++tick) {
    const double v = 0.25 * tick;
    const double y = top + plot_h * (1.0 - v);
    out += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(y) +
           "\" x2=\"" + detail::fmt(left + plot_w) + "\" y2=\"" +
           detail::fmt(y) + "\" stroke=\"#eee\"/>\n";
    out += "<text x=\"" + detail::fmt(left - 6) + "\" y=\"" +
           detail::fmt(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           detail::fmt(v, 2) + "</text>\n";
  }
  const double denom = x_labels.size() > 1
                           ? static_cast<double>(x_labels.size() - 1)
                           : 1.0;
  for (std::size_t i = 0; i < x_labels.size(); ++i) {
    const double x = left + plot_w * static_cast<double>(i) / denom;
    out += "<text x=\"" + detail::fmt(x) + "\" y=\"" +
           detail::fmt(h - bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           detail::escape(x_labels[i]) + "</text>\n";
  }

  for (std::size_t s = 0; s < series.size(); ++s) {
    const std::string& color = detail::palette()[s % detail::palette().size()];
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < x_labels.size(); ++i) {
      if (!values[s][i]) {
        pen_down = false;
        continue;
      }
      const double x = left + plot_w * static_cast<double>(i) / denom;
      const double y =
          top + plot_h * (1.0 - std::clamp(*values[s][i], 0.0, 1.0));
      path += (pen_down ? " L " : " M ") + detail::fmt(x) + " " + detail::fmt(y);
      pen_down = true;
      out += "<circle cx=\"" + detail::fmt(x) + "\" cy=\"" + detail::fmt(y) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    if (!path.empty())
      out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
    const double ly = top + 16 + 20 * static_cast<double>(s);
    out += "<line x1=\"" + detail::fmt(w - right + 10) + "\" y1=\"" +
           detail::fmt(ly - 4) + "\" x2=\"" + detail::fmt(w - right + 26) +
           "\" y2=\"" + detail::fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + detail::fmt(w - right + 32) + "\" y=\"" +
           detail::fmt(ly) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::escape(series[s]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace ikt::svg
