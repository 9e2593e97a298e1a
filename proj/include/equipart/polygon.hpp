#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/convex_body.hpp"
#include "equipart/power_diagram.hpp"

namespace equipart {

/// Planar polygon, counterclockwise vertex order.
struct Polygon2D {
  std::vector<double> xy;  // x0 y0 x1 y1 ...

  std::size_t vertex_count() const { return xy.size() / 2; }
  bool empty() const { return xy.size() < 6; }

  /// Shoelace area; positive for counterclockwise order.
  double area() const {
    const std::size_t n = vertex_count();
    if (n < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      acc += xy[2 * i] * xy[2 * j + 1] - xy[2 * j] * xy[2 * i + 1];
    }
    return 0.5 * acc;
  }
};

/// Sutherland-Hodgman clip of a convex polygon by one closed halfspace.
/// Vertices within the collinearity tolerance of the boundary are kept.
inline Polygon2D clip_polygon(const Polygon2D& poly, const Halfspace& h,
                              double collinear_tol = 1e-12) {
  const std::size_t n = poly.vertex_count();
  if (n == 0) return {};
  const double nx = h.normal[0], ny = h.normal[1];
  const double scale =
      std::max({1.0, std::abs(h.offset), std::abs(nx), std::abs(ny)});
  const double tol = collinear_tol * scale;

  Polygon2D out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double ax = poly.xy[2 * i], ay = poly.xy[2 * i + 1];
    const double bx = poly.xy[2 * j], by = poly.xy[2 * j + 1];
    const double da = nx * ax + ny * ay - h.offset;
    const double db = nx * bx + ny * by - h.offset;
    const bool ain = da <= tol, bin = db <= tol;
    if (ain) {
      out.xy.push_back(ax);
      out.xy.push_back(ay);
    }
    if (ain != bin) {
      const double t = da / (da - db);
      out.xy.push_back(ax + t * (bx - ax));
      out.xy.push_back(ay + t * (by - ay));
    }
  }
  if (out.vertex_count() < 3) return {};
  return out;
}

inline Polygon2D clip_polygon(Polygon2D poly, const std::vector<Halfspace>& hs,
                              double collinear_tol = 1e-12) {
  for (const auto& h : hs) {
    poly = clip_polygon(poly, h, collinear_tol);
    if (poly.empty()) return {};
  }
  return poly;
}

/// Polygonal rendering of a planar convex body: the exact boundary for
/// boxes and polytopes, an inscribed regular n-gon for balls.  Extra cuts
/// carried by the body are applied afterwards.
inline Polygon2D body_polygon_2d(const ConvexBody& body,
                                 int ball_segments = 128) {
  if (body.dimension() != 2)
    throw std::invalid_argument("body_polygon_2d: d = 2 only");
  Polygon2D poly;
  const BoundingBox& bb = body.bounding_box();
  switch (body.base_kind()) {
    case ConvexBody::Kind::box:
    case ConvexBody::Kind::polytope:
      poly.xy = {bb.lo[0], bb.lo[1], bb.hi[0], bb.lo[1],
                 bb.hi[0], bb.hi[1], bb.lo[0], bb.hi[1]};
      break;
    case ConvexBody::Kind::ball: {
      const double cx = body.ball_center()[0], cy = body.ball_center()[1];
      const double r = body.ball_radius();
      for (int i = 0; i < ball_segments; ++i) {
        const double a = 2.0 * std::numbers::pi * i / ball_segments;
        poly.xy.push_back(cx + r * std::cos(a));
        poly.xy.push_back(cy + r * std::sin(a));
      }
      break;
    }
  }
  return clip_polygon(std::move(poly), body.cuts());
}

/// Exact cell polygons in the plane: the clip body successively clipped by
/// each cell's halfspaces.  Cells emptied by the clip come back as empty
/// polygons.
inline std::vector<Polygon2D> extract_polygons_2d(const PowerPartition& p,
                                                  const ConvexBody& clip) {
  if (p.config().dim != 2)
    throw std::invalid_argument("extract_polygons_2d: d = 2 only");
  const Polygon2D base = body_polygon_2d(clip);
  std::vector<Polygon2D> out;
  out.reserve(p.cell_count());
  for (std::size_t i = 0; i < p.cell_count(); ++i)
    out.push_back(clip_polygon(base, p.cell_halfspaces(i)));
  return out;
}

/// Cell polygons for an arbitrary halfspace-list partition (used for the
/// rendered output of the recursion driver).
inline std::vector<Polygon2D> clip_cells_2d(
    const std::vector<std::vector<Halfspace>>& parts, const ConvexBody& clip) {
  const Polygon2D base = body_polygon_2d(clip);
  std::vector<Polygon2D> out;
  out.reserve(parts.size());
  for (const auto& cell : parts) out.push_back(clip_polygon(base, cell));
  return out;
}

}  // namespace equipart
