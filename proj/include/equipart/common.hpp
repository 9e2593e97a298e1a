#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace equipart {

using Point = std::vector<double>;

/// Closed halfspace { x : normal . x <= offset }.
struct Halfspace {
  std::vector<double> normal;
  double offset = 0.0;

  int dimension() const { return static_cast<int>(normal.size()); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

inline bool satisfies(const Halfspace& h, std::span<const double> x) {
  return dot(h.normal, x) <= h.offset;
}

inline bool satisfies_all(const std::vector<Halfspace>& hs,
                          std::span<const double> x) {
  for (const auto& h : hs)
    if (!satisfies(h, x)) return false;
  return true;
}

/// 17 significant decimal digits; round-trips a double exactly.
inline std::string format_full(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_short(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace equipart
