#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "equipart/common.hpp"

namespace equipart {

struct BoundingBox {
  std::vector<double> lo, hi;

  int dimension() const { return static_cast<int>(lo.size()); }

  bool contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }

  /// Euclidean diagonal.
  double diameter() const {
    double s = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const double e = hi[i] - lo[i];
      s += e * e;
    }
    return std::sqrt(s);
  }

  double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
    return v;
  }

  BoundingBox merged(const BoundingBox& other) const {
    BoundingBox out = *this;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      out.lo[i] = std::min(out.lo[i], other.lo[i]);
      out.hi[i] = std::max(out.hi[i], other.hi[i]);
    }
    return out;
  }
};

/// Bounded convex region with nonempty interior: an axis box, a ball, or a
/// halfspace-list polytope.  Any body may additionally carry clipping
/// halfspaces (restrictions keep the base geometry and append cuts).
class ConvexBody {
 public:
  enum class Kind { box, ball, polytope };

  static ConvexBody box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty())
      throw std::invalid_argument("box: corner dimensions disagree");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i]))
        throw std::invalid_argument("box: empty interior");
    ConvexBody b;
    b.kind_ = Kind::box;
    b.bounds_ = BoundingBox{std::move(lo), std::move(hi)};
    return b;
  }

  static ConvexBody ball(std::vector<double> center, double radius) {
    if (center.empty()) throw std::invalid_argument("ball: empty center");
    if (!(radius > 0.0)) throw std::invalid_argument("ball: radius <= 0");
    ConvexBody b;
    b.kind_ = Kind::ball;
    b.center_ = center;
    b.radius_ = radius;
    std::vector<double> lo(center.size()), hi(center.size());
    for (std::size_t i = 0; i < center.size(); ++i) {
      lo[i] = center[i] - radius;
      hi[i] = center[i] + radius;
    }
    b.bounds_ = BoundingBox{std::move(lo), std::move(hi)};
    return b;
  }

  /// Bounded polytope; the explicit bounding box is required (it is what
  /// certifies boundedness and drives rejection sampling).
  static ConvexBody polytope(std::vector<Halfspace> faces, BoundingBox bounds) {
    if (bounds.lo.empty())
      throw std::invalid_argument("polytope: missing bounding box");
    for (std::size_t i = 0; i < bounds.lo.size(); ++i)
      if (!(bounds.lo[i] < bounds.hi[i]))
        throw std::invalid_argument("polytope: degenerate bounding box");
    for (const auto& f : faces)
      if (f.dimension() != bounds.dimension())
        throw std::invalid_argument("polytope: halfspace dimension mismatch");
    ConvexBody b;
    b.kind_ = Kind::polytope;
    b.bounds_ = std::move(bounds);
    b.cuts_ = std::move(faces);
    return b;
  }

  Kind kind() const {
    if (kind_ != Kind::polytope && !cuts_.empty()) return Kind::polytope;
    return kind_;
  }

  int dimension() const { return bounds_.dimension(); }
  const BoundingBox& bounding_box() const { return bounds_; }
  double diameter() const { return bounds_.diameter(); }
  const std::vector<Halfspace>& cuts() const { return cuts_; }

  bool contains(std::span<const double> x) const {
    if (!bounds_.contains(x)) return false;
    if (kind_ == Kind::ball &&
        squared_distance(x, center_) > radius_ * radius_)
      return false;
    return satisfies_all(cuts_, x);
  }

  /// Exact volume where the geometry is closed-form (box or ball without
  /// extra cuts); nullopt otherwise.
  std::optional<double> exact_volume() const {
    if (!cuts_.empty()) return std::nullopt;
    if (kind_ == Kind::box) return bounds_.volume();
    if (kind_ == Kind::ball) {
      const int d = dimension();
      const double v = std::pow(std::numbers::pi, d / 2.0) /
                       std::tgamma(d / 2.0 + 1.0) * std::pow(radius_, d);
      return v;
    }
    return std::nullopt;
  }

  /// Same base geometry with additional clipping halfspaces.
  ConvexBody intersect(const std::vector<Halfspace>& more) const {
    ConvexBody out = *this;
    for (const auto& h : more) {
      if (h.dimension() != dimension())
        throw std::invalid_argument("intersect: halfspace dimension mismatch");
      out.cuts_.push_back(h);
    }
    return out;
  }

  const std::vector<double>& ball_center() const { return center_; }
  double ball_radius() const { return radius_; }
  Kind base_kind() const { return kind_; }

 private:
  Kind kind_ = Kind::box;
  BoundingBox bounds_;
  std::vector<double> center_;
  double radius_ = 0.0;
  std::vector<Halfspace> cuts_;
};

}  // namespace equipart
