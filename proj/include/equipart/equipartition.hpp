#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "equipart/capacity_solver.hpp"
#include "equipart/measure.hpp"
#include "equipart/power_diagram.hpp"
#include "equipart/verify.hpp"

namespace equipart {

/// Ordered tuple of points in R^d, repetitions allowed, not all equal.
struct TupleConfig {
  int dim = 0;
  std::vector<double> points;  // p * dim, row-major

  std::size_t point_count() const {
    return dim > 0 ? points.size() / static_cast<std::size_t>(dim) : 0;
  }

  std::span<const double> point(std::size_t j) const {
    return {points.data() + static_cast<std::size_t>(dim) * j,
            static_cast<std::size_t>(dim)};
  }
};

/// Distinct sites of a tuple in order of first appearance, with their
/// occurrence counts.  Multiplicities become capacities.
struct CollapsedConfig {
  SiteConfig config;                // capacities = multiplicities
  std::vector<int> multiplicities;  // t, sums to p
  std::vector<int> site_of_point;   // p -> site index
};

inline CollapsedConfig collapse_tuple(const TupleConfig& x,
                                      double merge_epsilon) {
  const std::size_t p = x.point_count();
  if (p == 0) throw std::invalid_argument("collapse_tuple: empty tuple");
  CollapsedConfig cc;
  cc.config.dim = x.dim;
  cc.site_of_point.resize(p);
  const double eps2 = merge_epsilon * merge_epsilon;
  for (std::size_t j = 0; j < p; ++j) {
    const auto pt = x.point(j);
    std::size_t assigned = cc.multiplicities.size();
    for (std::size_t h = 0; h < cc.multiplicities.size(); ++h) {
      if (squared_distance(pt, cc.config.site(h)) <= eps2) {
        assigned = h;
        break;
      }
    }
    if (assigned == cc.multiplicities.size()) {
      cc.config.sites.insert(cc.config.sites.end(), pt.begin(), pt.end());
      cc.multiplicities.push_back(0);
    }
    ++cc.multiplicities[assigned];
    cc.site_of_point[j] = static_cast<int>(assigned);
  }
  cc.config.capacities.assign(cc.multiplicities.begin(),
                              cc.multiplicities.end());
  return cc;
}

inline bool is_prime(int n) {
  if (n < 2) return false;
  for (int q = 2; q * q <= n; ++q)
    if (n % q == 0) return false;
  return true;
}

inline int smallest_prime_factor(int n) {
  for (int q = 2; q * q <= n; ++q)
    if (n % q == 0) return q;
  return n;
}

inline int prime_factor_count(int n) {
  int count = 0;
  while (n > 1) {
    n /= smallest_prime_factor(n);
    ++count;
  }
  return count;
}

namespace detail {

inline double union_support_diameter(const std::vector<Measure>& measures) {
  BoundingBox bb = measures.front().support().bounding_box();
  for (std::size_t i = 1; i < measures.size(); ++i)
    bb = bb.merged(measures[i].support().bounding_box());
  return bb.diameter();
}

// Warm-start store for the capacity solves inside the tuple search: per
// measure, the last solution keyed by the multiplicity signature.
struct ProfileContext {
  double cap_tolerance = 0.0;  // 0 = solver default
  int cap_iterations = 300;
  std::vector<std::map<std::vector<int>, std::vector<double>>> warm;
};

struct ProfileOutcome {
  std::vector<double> profile;  // length p
  std::vector<double> collapsed_weights;
  double residual = 0.0;
  bool converged = false;
};

inline ProfileOutcome solve_profile(const CollapsedConfig& cc,
                                    const Measure& m, std::size_t mi,
                                    ProfileContext& ctx, bool want_trace) {
  CapacityProblem prob;
  prob.config = cc.config;
  prob.measure = m;
  prob.tolerance = ctx.cap_tolerance;
  prob.max_iterations = ctx.cap_iterations;
  prob.want_trace = want_trace;

  const WeightVector* warm = nullptr;
  WeightVector warm_store;
  if (mi < ctx.warm.size()) {
    auto it = ctx.warm[mi].find(cc.multiplicities);
    if (it != ctx.warm[mi].end()) {
      warm_store.w = it->second;
      warm = &warm_store;
    }
  }
  CapacitySolution sol = solve_capacities(prob, warm);
  if (mi < ctx.warm.size())
    ctx.warm[mi][cc.multiplicities] = sol.weights.w;

  ProfileOutcome out;
  out.collapsed_weights = sol.weights.w;
  out.residual = sol.residual;
  out.converged = sol.converged;
  out.profile.resize(cc.site_of_point.size());
  for (std::size_t j = 0; j < cc.site_of_point.size(); ++j)
    out.profile[j] = sol.weights.w[static_cast<std::size_t>(cc.site_of_point[j])];
  return out;
}

}  // namespace detail

/// Weight profile of a tuple against one measure of total mass p: collapse
/// the tuple, solve for the weights realizing the multiplicities as cell
/// masses, and expand the weights back to tuple positions.  Entries sum to
/// zero because the collapsed weights satisfy w . c = 0.
inline std::vector<double> weight_profile(const TupleConfig& x,
                                          const Measure& m,
                                          double merge_epsilon = 0.0) {
  const std::size_t p = x.point_count();
  if (p == 0) throw std::invalid_argument("weight_profile: empty tuple");
  if (std::abs(m.total_mass() - static_cast<double>(p)) >
      1e-9 * static_cast<double>(p))
    throw std::invalid_argument(
        "weight_profile: measure total mass must equal the tuple size");
  if (merge_epsilon <= 0.0)
    merge_epsilon = default_merge_epsilon(m.support().diameter());
  CollapsedConfig cc = collapse_tuple(x, merge_epsilon);
  if (cc.config.site_count() < 2 && p >= 2)
    throw std::invalid_argument("weight_profile: all tuple points coincide");
  detail::ProfileContext ctx;
  ctx.cap_iterations = 10000;
  detail::ProfileOutcome out = detail::solve_profile(cc, m, ~0ULL, ctx, false);
  if (!out.converged)
    throw std::runtime_error("weight_profile: capacity solve failed (residual " +
                             std::to_string(out.residual) + ")");
  return out.profile;
}

/// Discrepancy map over a list of measures of total mass p each: the
/// concatenation of weight_profile(x, mu_1) - weight_profile(x, mu_i) for
/// i = 2..d.  Identically empty for a single measure.  A zero vector
/// certifies that one weight vector equips every measure simultaneously.
inline std::vector<double> discrepancy_map(const TupleConfig& x,
                                           const std::vector<Measure>& measures,
                                           double merge_epsilon = 0.0) {
  if (measures.empty())
    throw std::invalid_argument("discrepancy_map: no measures");
  if (merge_epsilon <= 0.0)
    merge_epsilon =
        default_merge_epsilon(detail::union_support_diameter(measures));
  const std::size_t p = x.point_count();
  std::vector<double> first;
  std::vector<double> f;
  f.reserve(p * (measures.size() - 1));
  for (std::size_t i = 0; i < measures.size(); ++i) {
    std::vector<double> prof;
    try {
      prof = weight_profile(x, measures[i], merge_epsilon);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("discrepancy_map: measure " +
                               std::to_string(i) + ": " + e.what());
    }
    if (i == 0) {
      first = std::move(prof);
    } else {
      for (std::size_t j = 0; j < p; ++j)
        f.push_back(first[j] - prof[j]);
    }
  }
  return f;
}

/// Multi-start simplex search controls.
struct SearchParams {
  int restarts = 32;
  int max_iterations = 2000;  // per restart
  double tolerance = 0.0;     // on ||f||; 0 = 1e-3 * p
  std::uint64_t seed = 0;
  std::size_t coarse_samples_per_unit = 50000;  // 0 disables the coarse phase
  double cell_mass_gate = 0.0;  // relative per-cell mass gate; 0 disables
  bool allow_composite_p = false;  // experimental: skip the primality check
};

struct PrimeSolveResult {
  bool success = false;
  int p = 0;
  std::vector<double> sites;        // t * d collapsed sites
  std::vector<int> multiplicities;  // t
  std::vector<double> weights;      // t, w . c = 0
  std::vector<std::vector<Halfspace>> cells;     // t halfspace lists
  std::vector<std::vector<double>> cell_masses;  // [measure][cell]
  double residual_norm = std::numeric_limits<double>::infinity();
  int restarts_used = 0;
  long objective_evaluations = 0;
  std::vector<double> best_tuple;  // accepted tuple, or best seen on failure
};

namespace detail {

struct SimplexResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool hit_target = false;
};

// Nelder-Mead reflection/expansion/contraction/shrink on a raw objective.
template <typename F>
SimplexResult nelder_mead(F&& f, const std::vector<double>& x0, double scale,
                          int max_iterations, double target) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> vx(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i < n; ++i) vx[i + 1][i] += scale;
  for (std::size_t i = 0; i <= n; ++i) fv[i] = f(vx[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  SimplexResult res;

  for (int iter = 0; iter < max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&fv](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order[0], worst = order[n],
                      second = order[n - 1];
    res.iterations = iter + 1;
    if (fv[best] <= target) {
      res.x = vx[best];
      res.value = fv[best];
      res.hit_target = true;
      return res;
    }
    // simplex collapsed numerically: nothing more to gain
    if (fv[worst] - fv[best] <=
        1e-14 * (std::abs(fv[best]) + std::abs(fv[worst])) + 1e-300)
      break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < n; ++k) centroid[k] += vx[i][k];
    }
    for (std::size_t k = 0; k < n; ++k) centroid[k] /= static_cast<double>(n);

    for (std::size_t k = 0; k < n; ++k)
      xr[k] = centroid[k] + (centroid[k] - vx[worst][k]);
    const double fr = f(xr);

    if (fr < fv[best]) {
      for (std::size_t k = 0; k < n; ++k)
        xe[k] = centroid[k] + 2.0 * (centroid[k] - vx[worst][k]);
      const double fe = f(xe);
      if (fe < fr) {
        vx[worst] = xe;
        fv[worst] = fe;
      } else {
        vx[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      vx[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      if (outside) {
        for (std::size_t k = 0; k < n; ++k)
          xc[k] = centroid[k] + 0.5 * (xr[k] - centroid[k]);
      } else {
        for (std::size_t k = 0; k < n; ++k)
          xc[k] = centroid[k] - 0.5 * (centroid[k] - vx[worst][k]);
      }
      const double fc = f(xc);
      if ((outside && fc <= fr) || (!outside && fc < fv[worst])) {
        vx[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t k = 0; k < n; ++k)
            vx[i][k] = vx[best][k] + 0.5 * (vx[i][k] - vx[best][k]);
          fv[i] = f(vx[i]);
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  res.x = vx[best];
  res.value = fv[best];
  return res;
}

// Squared norm of the discrepancy map, lenient about inner solve failures
// (they surface as a large penalty, never as an exception).
struct TupleObjective {
  const std::vector<Measure>* measures = nullptr;
  int dim = 0;
  double merge_eps = 0.0;
  ProfileContext ctx;
  long evals = 0;

  double operator()(const std::vector<double>& flat) {
    ++evals;
    TupleConfig tc{dim, flat};
    CollapsedConfig cc = collapse_tuple(tc, merge_eps);
    if (cc.config.site_count() < 2) return 1e30;
    double value = 0.0;
    std::vector<double> first;
    double penalty = 0.0;
    for (std::size_t i = 0; i < measures->size(); ++i) {
      ProfileOutcome out = solve_profile(cc, (*measures)[i], i, ctx, false);
      if (!out.converged) penalty += 1e6 * (1.0 + out.residual);
      if (i == 0) {
        first = std::move(out.profile);
      } else {
        for (std::size_t j = 0; j < first.size(); ++j) {
          const double diff = first[j] - out.profile[j];
          value += diff * diff;
        }
      }
    }
    return value + penalty;
  }
};

}  // namespace detail

/// Search for a tuple of p points whose collapsed power diagram splits all
/// measures (each of total mass p) into cells of equal integer masses: a
/// multi-start simplex descent on ||discrepancy_map||^2, restarts seeded
/// from the measures' own samples.  Honest failure report when every
/// restart stays above tolerance.
inline PrimeSolveResult solve_prime(int p,
                                    const std::vector<Measure>& measures,
                                    const SearchParams& params = {}) {
  if (measures.empty())
    throw std::invalid_argument("solve_prime: no measures");
  if (p < 2) throw std::invalid_argument("solve_prime: p < 2");
  if (!is_prime(p) && !params.allow_composite_p)
    throw std::invalid_argument("solve_prime: p must be prime");
  const int d = measures.front().dimension();
  for (const auto& m : measures) {
    if (m.dimension() != d)
      throw std::invalid_argument("solve_prime: measure dimensions differ");
    if (std::abs(m.total_mass() - p) > 1e-9 * p)
      throw std::invalid_argument(
          "solve_prime: measures must have total mass p");
  }

  const double diam = detail::union_support_diameter(measures);
  const double merge_eps = default_merge_epsilon(diam);
  const double tol =
      params.tolerance > 0.0 ? params.tolerance : 1e-3 * static_cast<double>(p);
  const double target = tol * tol;

  std::vector<Measure> coarse;
  const bool use_coarse = params.coarse_samples_per_unit > 0;
  if (use_coarse) {
    coarse.reserve(measures.size());
    for (const auto& m : measures)
      coarse.push_back(
          m.coarsened(params.coarse_samples_per_unit * static_cast<std::size_t>(p)));
  }

  detail::TupleObjective full{&measures, d, merge_eps, {}, 0};
  full.ctx.warm.resize(measures.size());
  detail::TupleObjective rough{use_coarse ? &coarse : &measures, d, merge_eps,
                               {}, 0};
  rough.ctx.warm.resize(measures.size());

  PrimeSolveResult result;
  result.p = p;
  Rng rng(params.seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t n_dims = static_cast<std::size_t>(p) * d;
  std::vector<double> best_x;
  double best_f = std::numeric_limits<double>::infinity();

  // Acceptance check at a candidate tuple: strict per-measure solves, the
  // discrepancy norm below tolerance, and (when gated) every cell mass
  // within the per-level budget of its multiplicity under the combined
  // weights.  Fills `result` on success.
  auto try_accept = [&](const std::vector<double>& x, double& fsq_out) {
    fsq_out = std::numeric_limits<double>::infinity();
    TupleConfig tc{d, x};
    CollapsedConfig cc = collapse_tuple(tc, merge_eps);
    if (cc.config.site_count() < 2) return false;
    detail::ProfileContext strict;
    strict.cap_iterations = 10000;
    strict.warm = full.ctx.warm;
    std::vector<std::vector<double>> profiles;
    std::vector<std::vector<double>> weights;
    for (std::size_t i = 0; i < measures.size(); ++i) {
      detail::ProfileOutcome out =
          detail::solve_profile(cc, measures[i], i, strict, false);
      if (!out.converged) return false;
      profiles.push_back(std::move(out.profile));
      weights.push_back(std::move(out.collapsed_weights));
    }
    double fsq = 0.0;
    for (std::size_t i = 1; i < profiles.size(); ++i)
      for (std::size_t j = 0; j < profiles[i].size(); ++j) {
        const double diff = profiles[0][j] - profiles[i][j];
        fsq += diff * diff;
      }
    fsq_out = fsq;
    if (fsq > target) return false;

    // combined weights: mean of the per-measure solutions, re-normalized
    const std::size_t t = cc.config.site_count();
    WeightVector wbar;
    wbar.w.assign(t, 0.0);
    for (const auto& w : weights)
      for (std::size_t h = 0; h < t; ++h) wbar.w[h] += w[h];
    for (auto& v : wbar.w) v /= static_cast<double>(weights.size());
    normalize_weights(wbar, cc.config.capacities);

    PowerPartition part(cc.config, wbar);
    std::vector<std::vector<Halfspace>> cells(t);
    for (std::size_t h = 0; h < t; ++h) cells[h] = part.cell_halfspaces(h);
    std::vector<std::vector<double>> masses(measures.size());
    for (std::size_t i = 0; i < measures.size(); ++i) {
      masses[i] = part.cell_measures(measures[i]);
      if (params.cell_mass_gate > 0.0) {
        for (std::size_t h = 0; h < t; ++h) {
          const double rel =
              std::abs(masses[i][h] / cc.multiplicities[h] - 1.0);
          if (rel > params.cell_mass_gate) return false;
        }
      }
    }

    result.success = true;
    result.sites = cc.config.sites;
    result.multiplicities = cc.multiplicities;
    result.weights = wbar.w;
    result.cells = std::move(cells);
    result.cell_masses = std::move(masses);
    result.residual_norm = std::sqrt(fsq);
    result.best_tuple = x;
    return true;
  };

  for (int restart = 0; restart < params.restarts; ++restart) {
    // seed: p points drawn from the caches, cycling through the measures;
    // every third restart duplicates a point to visit collapsed configs
    std::vector<double> x0(n_dims);
    for (int j = 0; j < p; ++j) {
      const Measure& m =
          measures[(static_cast<std::size_t>(restart) + j) % measures.size()];
      const auto pt = m.cache().point(rng.index(m.cache().count));
      std::copy(pt.begin(), pt.end(),
                x0.begin() + static_cast<std::size_t>(j) * d);
    }
    if (p >= 3 && restart % 3 == 2)
      std::copy(x0.begin(), x0.begin() + d, x0.begin() + d);

    result.restarts_used = restart + 1;
    std::vector<double> x = x0;
    double scale = 0.2 * diam;
    double local_target = target;
    if (use_coarse) {
      detail::SimplexResult coarse_stage = detail::nelder_mead(
          rough, x, scale, std::min(params.max_iterations, 600),
          0.25 * target);
      x = coarse_stage.x;
      scale = 0.02 * diam;
    }

    // Descend, then push the target down while the mass gate is the
    // binding constraint (the weight-space tolerance is only a surrogate
    // for the per-level mass budget).
    for (int push = 0; push < 4; ++push) {
      detail::SimplexResult stage = detail::nelder_mead(
          full, x, scale, params.max_iterations, local_target);
      if (stage.value < best_f) {
        best_f = stage.value;
        best_x = stage.x;
      }
      if (!stage.hit_target) break;
      double fsq = 0.0;
      if (try_accept(stage.x, fsq)) {
        result.objective_evaluations = full.evals + rough.evals;
        return result;
      }
      if (fsq < best_f) {
        best_f = fsq;
        best_x = stage.x;
      }
      x = stage.x;
      scale = 0.005 * diam;
      local_target *= 0.1;
      if (local_target < 1e-10 * target) break;
    }
  }

  result.success = false;
  result.residual_norm = std::sqrt(std::max(best_f, 0.0));
  result.best_tuple = best_x;
  result.objective_evaluations = full.evals + rough.evals;
  return result;
}

/// Recursion trace of the equipartition driver.
struct PartitionNode {
  enum class Kind { leaf, prime_split, quantile_split };
  Kind kind = Kind::leaf;
  int parts_target = 1;  // parts produced by this subtree
  int prime_p = 0;       // tuple size at a prime split
  int cofactor = 1;      // child target = multiplicity * cofactor
  std::vector<double> sites;
  std::vector<int> multiplicities;
  std::vector<double> weights;
  double search_residual = 0.0;
  int restarts_used = 0;
  std::vector<std::vector<Halfspace>> cells;  // local child cells
  std::vector<int> child_targets;
  std::vector<PartitionNode> children;
};

struct EquipartitionParams {
  double global_tolerance = 2e-2;
  SearchParams search;
};

struct EquipartitionResult {
  bool success = false;
  int k = 0;
  int dim = 0;
  std::vector<std::vector<Halfspace>> parts;  // k flattened convex cells
  std::vector<std::vector<double>> masses;    // [measure][part]
  double max_deviation = 0.0;
  PartitionNode tree;
  std::string failure_stage;
  double failure_residual = 0.0;
  std::vector<double> failure_best_tuple;
};

namespace detail {

struct SolveFailure {
  std::string stage;
  double residual = 0.0;
  std::vector<double> best_tuple;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0xd1342543de82ef95ULL * (salt + 1));
  return splitmix64_next(s);
}

inline PartitionNode quantile_split_1d(int k, const Measure& m) {
  const SampleCache& sc = m.cache();
  std::vector<double> values(sc.coords);
  std::vector<double> cuts;
  if (!sc.weighted()) {
    std::sort(values.begin(), values.end());
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    for (int j = 1; j < k; ++j) {
      auto idx = static_cast<std::ptrdiff_t>(
          std::llround(static_cast<double>(j) * n / k));
      idx = std::clamp<std::ptrdiff_t>(idx, 1, n - 1);
      cuts.push_back(0.5 * (values[idx - 1] + values[idx]));
    }
  } else {
    std::vector<std::size_t> order(sc.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sc.coords[a] < sc.coords[b];
    });
    double acc = 0.0;
    int next = 1;
    for (std::size_t i = 0; i < order.size() && next < k; ++i) {
      acc += sc.weights[order[i]];
      if (acc >= static_cast<double>(next) / k) {
        const double here = sc.coords[order[i]];
        const double after =
            i + 1 < order.size() ? sc.coords[order[i + 1]] : here + 1.0;
        cuts.push_back(0.5 * (here + after));
        ++next;
      }
    }
    const double top =
        values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    while (static_cast<int>(cuts.size()) < k - 1) cuts.push_back(top + 1.0);
  }

  PartitionNode node;
  node.kind = PartitionNode::Kind::quantile_split;
  node.parts_target = k;
  for (int j = 0; j < k; ++j) {
    std::vector<Halfspace> cell;
    if (j > 0) cell.push_back(Halfspace{{-1.0}, -cuts[j - 1]});
    if (j < k - 1) cell.push_back(Halfspace{{1.0}, cuts[j]});
    node.cells.push_back(std::move(cell));
    node.child_targets.push_back(1);
    PartitionNode leaf;
    leaf.kind = PartitionNode::Kind::leaf;
    node.children.push_back(std::move(leaf));
  }
  return node;
}

inline PartitionNode build_tree(int k, std::vector<Measure> measures,
                                const EquipartitionParams& params,
                                double level_gate, const std::string& path,
                                std::uint64_t seed) {
  for (auto& m : measures) m = m.with_total_mass(static_cast<double>(k));

  if (k == 1) {
    PartitionNode leaf;
    leaf.kind = PartitionNode::Kind::leaf;
    return leaf;
  }
  if (measures.front().dimension() == 1)
    return quantile_split_1d(k, measures.front());

  const int a = smallest_prime_factor(k);
  const int b = k / a;

  std::vector<Measure> scaled;
  scaled.reserve(measures.size());
  for (const auto& m : measures)
    scaled.push_back(m.with_total_mass(static_cast<double>(a)));

  SearchParams sp = params.search;
  sp.seed = derive_seed(seed, 0);
  sp.cell_mass_gate = level_gate;
  PrimeSolveResult prime = solve_prime(a, scaled, sp);
  if (!prime.success)
    throw SolveFailure{"prime search (k=" + std::to_string(k) +
                           ", p=" + std::to_string(a) + ") at '" + path + "'",
                       prime.residual_norm, prime.best_tuple};

  PartitionNode node;
  node.kind = PartitionNode::Kind::prime_split;
  node.parts_target = k;
  node.prime_p = a;
  node.cofactor = b;
  node.sites = prime.sites;
  node.multiplicities = prime.multiplicities;
  node.weights = prime.weights;
  node.search_residual = prime.residual_norm;
  node.restarts_used = prime.restarts_used;
  node.cells = prime.cells;

  for (std::size_t j = 0; j < prime.cells.size(); ++j) {
    const int kj = prime.multiplicities[j] * b;
    node.child_targets.push_back(kj);
    if (kj == 1) {
      PartitionNode leaf;
      leaf.kind = PartitionNode::Kind::leaf;
      node.children.push_back(std::move(leaf));
      continue;
    }
    std::vector<Measure> restricted;
    restricted.reserve(measures.size());
    for (const auto& m : measures) {
      try {
        restricted.push_back(m.restricted(prime.cells[j]));
      } catch (const std::runtime_error&) {
        throw SolveFailure{"degenerate restriction (k=" + std::to_string(k) +
                               ", cell " + std::to_string(j) + ") at '" +
                               path + "'",
                           prime.residual_norm,
                           {}};
      }
    }
    node.children.push_back(build_tree(
        kj, std::move(restricted), params, level_gate,
        path + "/" + std::to_string(j), derive_seed(seed, j + 1)));
  }
  return node;
}

inline void flatten_tree(const PartitionNode& node,
                         std::vector<Halfspace>& prefix,
                         std::vector<std::vector<Halfspace>>& out) {
  if (node.kind == PartitionNode::Kind::leaf) {
    out.push_back(prefix);
    return;
  }
  for (std::size_t j = 0; j < node.children.size(); ++j) {
    const std::size_t mark = prefix.size();
    prefix.insert(prefix.end(), node.cells[j].begin(), node.cells[j].end());
    flatten_tree(node.children[j], prefix, out);
    prefix.resize(mark);
  }
}

inline void finish_result(EquipartitionResult& result,
                          const std::vector<Measure>& measures) {
  std::vector<Halfspace> prefix;
  flatten_tree(result.tree, prefix, result.parts);
  VerifyOptions vo;
  vo.deviation_target = 1.0;
  PartitionReport rep = verify_partition(result.parts, measures, vo);
  result.masses = rep.masses;
  result.max_deviation = rep.max_deviation;
}

}  // namespace detail

/// Equipartition driver: strong induction on k.  k = 1 is the whole space;
/// composite k splits off its smallest prime factor; prime k runs the tuple
/// search, then parts of integer mass > 1 are recursed on the restricted
/// measures.  Measures are rescaled to total mass k on entry.
inline EquipartitionResult equipartition(int k, std::vector<Measure> measures,
                                         const EquipartitionParams& params =
                                             {}) {
  if (k < 1) throw std::invalid_argument("equipartition: k < 1");
  if (measures.empty())
    throw std::invalid_argument("equipartition: no measures");
  const int d = measures.front().dimension();
  for (const auto& m : measures)
    if (m.dimension() != d)
      throw std::invalid_argument("equipartition: measure dimensions differ");
  if (static_cast<int>(measures.size()) > d)
    throw std::invalid_argument(
        "equipartition: more measures than the dimension supports");

  for (auto& m : measures) m = m.with_total_mass(static_cast<double>(k));

  EquipartitionResult result;
  result.k = k;
  result.dim = d;

  const int levels = std::max(1, prime_factor_count(k));
  const double level_gate = params.global_tolerance / levels;

  try {
    result.tree = detail::build_tree(k, measures, params, level_gate, "",
                                     params.search.seed);
  } catch (const detail::SolveFailure& fail) {
    result.success = false;
    result.failure_stage = fail.stage;
    result.failure_residual = fail.residual;
    result.failure_best_tuple = fail.best_tuple;
    return result;
  }

  detail::finish_result(result, measures);
  result.success = true;
  return result;
}

namespace detail {

inline PartitionNode graft_tree(PartitionNode node,
                                const std::vector<PartitionNode>& subtrees,
                                int b, std::size_t& next_leaf) {
  node.parts_target *= b;
  if (node.kind == PartitionNode::Kind::leaf)
    return subtrees[next_leaf++];
  node.cofactor *= b;
  for (auto& t : node.child_targets) t *= b;
  for (auto& child : node.children)
    child = graft_tree(std::move(child), subtrees, b, next_leaf);
  return node;
}

}  // namespace detail

/// Two-stage recursion for k = a * b: equipartition into a parts of mass b,
/// restrict every measure to each part, recurse with k = b, and return the
/// a*b pairwise intersections.
inline EquipartitionResult solve_composite(int a, int b,
                                           std::vector<Measure> measures,
                                           const EquipartitionParams& params =
                                               {}) {
  if (a < 1 || b < 1)
    throw std::invalid_argument("solve_composite: factors must be positive");
  if (a == 1) return equipartition(b, std::move(measures), params);
  if (b == 1) return equipartition(a, std::move(measures), params);
  const int k = a * b;
  for (auto& m : measures) m = m.with_total_mass(static_cast<double>(k));

  EquipartitionResult result;
  result.k = k;
  result.dim = measures.front().dimension();

  std::vector<Measure> scaled;
  scaled.reserve(measures.size());
  for (const auto& m : measures)
    scaled.push_back(m.with_total_mass(static_cast<double>(a)));

  EquipartitionParams first_params = params;
  first_params.search.seed = detail::derive_seed(params.search.seed, 101);
  EquipartitionResult first = equipartition(a, scaled, first_params);
  if (!first.success) {
    result.failure_stage = "composite a-split: " + first.failure_stage;
    result.failure_residual = first.failure_residual;
    result.failure_best_tuple = first.failure_best_tuple;
    return result;
  }

  std::vector<PartitionNode> subtrees;
  for (int j = 0; j < a; ++j) {
    std::vector<Measure> restricted;
    restricted.reserve(measures.size());
    for (const auto& m : measures)
      restricted.push_back(m.restricted(first.parts[j]));
    EquipartitionParams child_params = params;
    child_params.search.seed =
        detail::derive_seed(params.search.seed, 200 + j);
    EquipartitionResult sub = equipartition(b, restricted, child_params);
    if (!sub.success) {
      result.failure_stage = "composite b-stage (part " + std::to_string(j) +
                             "): " + sub.failure_stage;
      result.failure_residual = sub.failure_residual;
      result.failure_best_tuple = sub.failure_best_tuple;
      return result;
    }
    subtrees.push_back(sub.tree);
    for (const auto& sub_part : sub.parts) {
      std::vector<Halfspace> cell = first.parts[j];
      cell.insert(cell.end(), sub_part.begin(), sub_part.end());
      result.parts.push_back(std::move(cell));
    }
  }

  std::size_t next_leaf = 0;
  result.tree = detail::graft_tree(first.tree, subtrees, b, next_leaf);

  VerifyOptions vo;
  vo.deviation_target = 1.0;
  PartitionReport rep = verify_partition(result.parts, measures, vo);
  result.masses = rep.masses;
  result.max_deviation = rep.max_deviation;
  result.success = true;
  return result;
}

}  // namespace equipart
