#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/measure.hpp"
#include "equipart/polygon.hpp"

namespace equipart {

namespace detail {

inline std::string cell_fill(std::size_t index, std::size_t total) {
  // evenly spaced hues, fixed saturation/lightness
  const double h = 360.0 * static_cast<double>(index) /
                   static_cast<double>(std::max<std::size_t>(total, 1));
  const double s = 0.55, l = 0.72;
  const double c = (1.0 - std::abs(2.0 * l - 1.0)) * s;
  const double hp = h / 60.0;
  const double xx = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = xx;
  } else if (hp < 2) {
    r = xx; g = c;
  } else if (hp < 3) {
    g = c; b = xx;
  } else if (hp < 4) {
    g = xx; b = c;
  } else if (hp < 5) {
    r = xx; b = c;
  } else {
    r = c; b = xx;
  }
  const double m = l - c / 2.0;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(255 * (r + m)),
                static_cast<int>(255 * (g + m)),
                static_cast<int>(255 * (b + m)));
  return buf;
}

}  // namespace detail

/// Standalone SVG of a planar partition: cell polygons clipped to the
/// measures' bounding box with density heat-dots from the sample caches.
inline void write_partition_svg(const std::string& path,
                                const std::vector<std::vector<Halfspace>>& parts,
                                const std::vector<Measure>& measures,
                                std::size_t dots_per_measure = 1500) {
  if (measures.empty() || measures.front().dimension() != 2)
    throw std::invalid_argument("write_partition_svg: d = 2 only");
  BoundingBox bb = measures.front().support().bounding_box();
  for (std::size_t i = 1; i < measures.size(); ++i)
    bb = bb.merged(measures[i].support().bounding_box());

  const double w = bb.hi[0] - bb.lo[0];
  const double h = bb.hi[1] - bb.lo[1];
  const double pad = 0.03 * std::max(w, h);
  const double view_w = w + 2 * pad, view_h = h + 2 * pad;
  const double px = 900.0;
  const double scale = px / view_w;

  auto sx = [&](double x) { return (x - bb.lo[0] + pad) * scale; };
  auto sy = [&](double y) { return (bb.hi[1] + pad - y) * scale; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_partition_svg: cannot open " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px
      << "\" height=\"" << format_short(view_h * scale) << "\" viewBox=\"0 0 "
      << px << " " << format_short(view_h * scale) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const ConvexBody clip = ConvexBody::box(bb.lo, bb.hi);
  const std::vector<Polygon2D> polys = clip_cells_2d(parts, clip);
  for (std::size_t i = 0; i < polys.size(); ++i) {
    if (polys[i].empty()) continue;
    out << "<polygon points=\"";
    for (std::size_t v = 0; v < polys[i].vertex_count(); ++v) {
      if (v) out << ' ';
      out << format_short(sx(polys[i].xy[2 * v])) << ','
          << format_short(sy(polys[i].xy[2 * v + 1]));
    }
    out << "\" fill=\"" << detail::cell_fill(i, polys.size())
        << "\" stroke=\"#333333\" stroke-width=\"1.2\" fill-opacity=\"0.55\"/>\n";
  }

  const char* dot_colors[] = {"#b2182b", "#2166ac", "#1b7837", "#762a83",
                              "#b35806", "#1a1a1a"};
  for (std::size_t mi = 0; mi < measures.size(); ++mi) {
    const SampleCache& sc = measures[mi].cache();
    const std::size_t stride =
        std::max<std::size_t>(1, sc.count / std::max<std::size_t>(1, dots_per_measure));
    out << "<g fill=\"" << dot_colors[mi % 6] << "\" fill-opacity=\"0.45\">\n";
    for (std::size_t s = 0; s < sc.count; s += stride) {
      const auto pt = sc.point(s);
      out << "<circle cx=\"" << format_short(sx(pt[0])) << "\" cy=\""
          << format_short(sy(pt[1])) << "\" r=\"1.4\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace equipart
