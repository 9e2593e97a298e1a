#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/measure.hpp"
#include "equipart/rng.hpp"

namespace equipart {

struct VerifyOptions {
  int convexity_pairs_per_part = 4;
  int convexity_points_per_segment = 100;
  std::uint64_t seed = 0x5eedULL;
  double deviation_target = 0.0;  // 0 = total_mass / part count, per measure
};

/// Independent recomputation of a claimed partition's quality.  Masses come
/// from fresh classification of the sample caches against the halfspace
/// lists alone; samples satisfying several parts are assigned to the lowest
/// part index, and any sample in zero or two-or-more parts is a coverage
/// defect.
struct PartitionReport {
  std::vector<std::vector<double>> masses;  // [measure][part]
  double max_deviation = 0.0;
  std::int64_t coverage_defects = 0;
  bool convexity_ok = true;
  std::string convexity_note;
};

inline PartitionReport verify_partition(
    const std::vector<std::vector<Halfspace>>& parts,
    const std::vector<Measure>& measures, const VerifyOptions& opts = {}) {
  if (parts.empty())
    throw std::invalid_argument("verify_partition: no parts");
  if (measures.empty())
    throw std::invalid_argument("verify_partition: no measures");
  const int d = measures.front().dimension();
  for (const auto& m : measures)
    if (m.dimension() != d)
      throw std::invalid_argument("verify_partition: measure dimensions differ");
  for (const auto& part : parts)
    for (const auto& h : part)
      if (h.dimension() != d)
        throw std::invalid_argument("verify_partition: halfspace dimension");

  const std::size_t k = parts.size();
  PartitionReport rep;
  rep.masses.assign(measures.size(), std::vector<double>(k, 0.0));

  // reservoir of assigned sample indices per part, for the convexity checks
  std::vector<std::vector<std::size_t>> reservoir(k);

  for (std::size_t mi = 0; mi < measures.size(); ++mi) {
    const Measure& m = measures[mi];
    const SampleCache& sc = m.cache();
    std::vector<std::int64_t> counts(k, 0);
    std::vector<double> wsums(k, 0.0);
    for (std::size_t s = 0; s < sc.count; ++s) {
      const auto x = sc.point(s);
      int hits = 0;
      std::size_t first = k;
      for (std::size_t j = 0; j < k; ++j) {
        if (satisfies_all(parts[j], x)) {
          if (hits == 0) first = j;
          if (++hits == 2) break;
        }
      }
      if (hits != 1) ++rep.coverage_defects;
      if (first < k) {
        ++counts[first];
        if (sc.weighted()) wsums[first] += sc.weights[s];
        if (mi == 0 && reservoir[first].size() < 64)
          reservoir[first].push_back(s);
      }
    }
    for (std::size_t j = 0; j < k; ++j)
      rep.masses[mi][j] =
          sc.weighted()
              ? m.total_mass() * wsums[j]
              : m.total_mass() * (static_cast<double>(counts[j]) /
                                  static_cast<double>(sc.count));
  }

  rep.max_deviation = 0.0;
  for (std::size_t mi = 0; mi < measures.size(); ++mi) {
    const double target = opts.deviation_target > 0.0
                              ? opts.deviation_target
                              : measures[mi].total_mass() /
                                    static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j)
      rep.max_deviation =
          std::max(rep.max_deviation, std::abs(rep.masses[mi][j] - target));
  }

  // Convexity spot checks: points on segments between samples of one part
  // must stay inside that part's halfspace list (up to rounding slack).
  Rng rng(opts.seed);
  const SampleCache& sc0 = measures.front().cache();
  std::vector<double> probe(d);
  for (std::size_t j = 0; j < k && rep.convexity_ok; ++j) {
    const auto& pool = reservoir[j];
    if (pool.size() < 2) continue;
    for (int pair = 0; pair < opts.convexity_pairs_per_part; ++pair) {
      const auto a = sc0.point(pool[rng.index(pool.size())]);
      const auto b = sc0.point(pool[rng.index(pool.size())]);
      for (int q = 1; q < opts.convexity_points_per_segment; ++q) {
        const double tau =
            static_cast<double>(q) / opts.convexity_points_per_segment;
        for (int kk = 0; kk < d; ++kk)
          probe[kk] = (1.0 - tau) * a[kk] + tau * b[kk];
        bool ok = true;
        for (const auto& h : parts[j]) {
          const double slack = 1e-12 * (1.0 + std::abs(h.offset));
          if (dot(h.normal, probe) > h.offset + slack) {
            ok = false;
            break;
          }
        }
        if (!ok) {
          rep.convexity_ok = false;
          rep.convexity_note = "part " + std::to_string(j) +
                               ": segment point escapes the halfspace list";
          break;
        }
      }
      if (!rep.convexity_ok) break;
    }
  }
  return rep;
}

struct BruteForceGrid {
  int angles = 720;
  int offsets = 500;
};

struct HyperplaneSearchResult {
  Halfspace halfspace;  // best cut { x : n.x <= o }, |n| = 1
  double deviation = std::numeric_limits<double>::infinity();
  double angle = 0.0;
};

/// Exhaustive angle-by-offset grid search for a hyperplane halving all
/// measures (d = 2, each of total mass 2): minimizes max_i |mu_i(H+) - 1|.
/// Counting is exact per grid offset via per-angle histograms whose bin
/// edges are the offset grid.  Doubling either resolution refines the grid
/// in place (old grid points are kept), so the optimum never worsens.
inline HyperplaneSearchResult brute_force_hyperplane(
    const std::vector<Measure>& measures, BruteForceGrid grid = {}) {
  if (measures.empty())
    throw std::invalid_argument("brute_force_hyperplane: no measures");
  for (const auto& m : measures) {
    if (m.dimension() != 2)
      throw std::invalid_argument("brute_force_hyperplane: d = 2 only");
    if (std::abs(m.total_mass() - 2.0) > 1e-6)
      throw std::invalid_argument(
          "brute_force_hyperplane: measures must have total mass 2");
  }
  if (grid.angles < 1 || grid.offsets < 2)
    throw std::invalid_argument("brute_force_hyperplane: degenerate grid");

  BoundingBox bb = measures.front().support().bounding_box();
  for (std::size_t i = 1; i < measures.size(); ++i)
    bb = bb.merged(measures[i].support().bounding_box());
  const double cx[4] = {bb.lo[0], bb.hi[0], bb.lo[0], bb.hi[0]};
  const double cy[4] = {bb.lo[1], bb.lo[1], bb.hi[1], bb.hi[1]};

  HyperplaneSearchResult best;
  const int B = grid.offsets;
  std::vector<std::vector<double>> below(measures.size(),
                                         std::vector<double>(B + 1, 0.0));
  std::vector<double> bins(B, 0.0);

  for (int a = 0; a < grid.angles; ++a) {
    const double theta = std::numbers::pi * a / grid.angles;
    const double ux = std::cos(theta), uy = std::sin(theta);
    double vlo = std::numeric_limits<double>::infinity();
    double vhi = -vlo;
    for (int c = 0; c < 4; ++c) {
      const double v = ux * cx[c] + uy * cy[c];
      vlo = std::min(vlo, v);
      vhi = std::max(vhi, v);
    }
    const double width = (vhi - vlo) / B;

    for (std::size_t mi = 0; mi < measures.size(); ++mi) {
      const SampleCache& sc = measures[mi].cache();
      std::fill(bins.begin(), bins.end(), 0.0);
      const double unit =
          sc.weighted() ? 1.0 : 1.0 / static_cast<double>(sc.count);
      for (std::size_t s = 0; s < sc.count; ++s) {
        const double* x = sc.coords.data() + 2 * s;
        const double v = ux * x[0] + uy * x[1];
        int b = static_cast<int>((v - vlo) / width);
        b = std::clamp(b, 0, B - 1);
        bins[b] += sc.weighted() ? sc.weights[s] : unit;
      }
      auto& pref = below[mi];
      pref[0] = 0.0;
      for (int b = 0; b < B; ++b) pref[b + 1] = pref[b] + bins[b];
    }

    for (int j = 1; j < B; ++j) {
      double dev = 0.0;
      for (std::size_t mi = 0; mi < measures.size(); ++mi) {
        const double mass_below = measures[mi].total_mass() * below[mi][j];
        dev = std::max(dev, std::abs(mass_below - 1.0));
      }
      if (dev < best.deviation) {
        best.deviation = dev;
        best.angle = theta;
        best.halfspace.normal = {ux, uy};
        best.halfspace.offset = vlo + width * j;
      }
    }
  }
  return best;
}

}  // namespace equipart
