#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "equipart/measure.hpp"
#include "equipart/power_diagram.hpp"

namespace equipart {

/// Find the weight vector whose power diagram realizes prescribed cell
/// masses.  Weights are reported in the w . c = 0 normalization.
struct CapacityProblem {
  SiteConfig config;
  Measure measure;
  double tolerance = 0.0;    // max |mass_i - c_i|; 0 = 1e-3 * min c_i
  int max_iterations = 10000;
  bool want_trace = true;    // skip trace bookkeeping in inner loops
};

struct CapacitySolution {
  WeightVector weights;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // nondecreasing: accepted steps only
  std::vector<double> residual_trace;   // alongside objective_trace
  std::vector<double> cell_masses;
};

/// Concave dual whose stationary points realize the capacities:
///   Phi(w) = sum_i c_i w_i + integral of min_i h_i(x) d mu(x),
/// with supergradient component i equal to c_i - mu(C_i(w)).
inline double dual_objective(const CapacityProblem& p, const WeightVector& w) {
  if (w.w.size() != p.config.site_count())
    throw std::invalid_argument("dual_objective: weight count mismatch");
  PowerPartition part(p.config, w);
  ClassifyStats st = part.classify_cache(p.measure.cache());
  double linear = 0.0;
  for (std::size_t i = 0; i < w.w.size(); ++i)
    linear += p.config.capacities[i] * w.w[i];
  return linear + p.measure.total_mass() * st.mean_min_power;
}

namespace detail {

struct AscentEval {
  double objective = 0.0;
  double residual = 0.0;
  std::vector<double> masses;
  std::vector<double> grad;
};

inline AscentEval evaluate_dual(const CapacityProblem& p,
                                const WeightVector& w) {
  PowerPartition part(p.config, w);
  ClassifyStats st = part.classify_cache(p.measure.cache());
  AscentEval ev;
  const std::size_t t = p.config.site_count();
  const double mass = p.measure.total_mass();
  ev.masses.resize(t);
  ev.grad.resize(t);
  double linear = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    ev.masses[i] = mass * st.fractions[i];
    ev.grad[i] = p.config.capacities[i] - ev.masses[i];
    ev.residual = std::max(ev.residual, std::abs(ev.grad[i]));
    linear += p.config.capacities[i] * w.w[i];
  }
  ev.objective = linear + mass * st.mean_min_power;
  return ev;
}

inline void validate_problem(const CapacityProblem& p, double merge_eps) {
  p.config.validate(merge_eps);
  if (p.config.dim != p.measure.dimension())
    throw std::invalid_argument("solve_capacities: dimension mismatch");
  const double mass = p.measure.total_mass();
  for (double c : p.config.capacities)
    if (c > mass + 1e-9 * std::max(1.0, mass))
      throw std::invalid_argument(
          "solve_capacities: capacity exceeds total mass");
  const double sum = p.config.capacity_sum();
  if (std::abs(sum - mass) > 1e-9 * std::max(1.0, mass))
    throw std::invalid_argument(
        "solve_capacities: capacities do not sum to total mass");
}

// Two sites admit an exact solution by selection: a sample lies in cell 1
// iff v(x) <= w_1 - w_2 with v(x) = -2 x.(x_1 - x_2) + |x_1|^2 - |x_2|^2,
// so the optimal weight gap is a quantile of v over the cache.
inline CapacitySolution solve_two_sites(const CapacityProblem& p,
                                        double tol) {
  const SampleCache& sc = p.measure.cache();
  const int d = p.config.dim;
  const auto s1 = p.config.site(0);
  const auto s2 = p.config.site(1);
  std::vector<double> diff(d);
  for (int k = 0; k < d; ++k) diff[k] = -2.0 * (s1[k] - s2[k]);
  const double bias = squared_norm(s1) - squared_norm(s2);

  std::vector<double> v(sc.count);
  for (std::size_t s = 0; s < sc.count; ++s) {
    const double* x = sc.coords.data() + s * static_cast<std::size_t>(d);
    double acc = bias;
    for (int k = 0; k < d; ++k) acc += diff[k] * x[k];
    v[s] = acc;
  }

  const double mass = p.measure.total_mass();
  double delta;
  if (!sc.weighted()) {
    const auto n = static_cast<std::ptrdiff_t>(sc.count);
    auto m = static_cast<std::ptrdiff_t>(
        std::llround(p.config.capacities[0] / mass * static_cast<double>(n)));
    m = std::clamp<std::ptrdiff_t>(m, 0, n);
    if (m == 0) {
      delta = *std::min_element(v.begin(), v.end()) - 1.0;
    } else if (m == n) {
      delta = *std::max_element(v.begin(), v.end()) + 1.0;
    } else {
      std::nth_element(v.begin(), v.begin() + (m - 1), v.end());
      const double below = v[m - 1];
      const double above = *std::min_element(v.begin() + m, v.end());
      delta = 0.5 * (below + above);
    }
  } else {
    std::vector<std::size_t> order(sc.count);
    for (std::size_t i = 0; i < sc.count; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    const double target = p.config.capacities[0] / mass;
    double acc = 0.0;
    delta = v[order.back()] + 1.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      acc += sc.weights[order[i]];
      if (acc >= target) {
        delta = i + 1 < order.size()
                    ? 0.5 * (v[order[i]] + v[order[i + 1]])
                    : v[order[i]] + 1.0;
        break;
      }
    }
  }

  const double csum = p.config.capacities[0] + p.config.capacities[1];
  WeightVector w{{delta * p.config.capacities[1] / csum,
                  -delta * p.config.capacities[0] / csum}};
  normalize_weights(w, p.config.capacities);

  CapacitySolution sol;
  sol.weights = w;
  sol.iterations = 1;
  AscentEval ev = evaluate_dual(p, w);
  sol.residual = ev.residual;
  sol.cell_masses = ev.masses;
  sol.converged = sol.residual <= tol;
  if (p.want_trace) {
    sol.objective_trace.push_back(ev.objective);
    sol.residual_trace.push_back(ev.residual);
  }
  return sol;
}

}  // namespace detail

/// Ascent core, also exposed for testing the two-site fast path against it.
inline CapacitySolution solve_capacities_ascent(const CapacityProblem& p,
                                                const WeightVector* warm,
                                                double tol) {
  const std::size_t t = p.config.site_count();
  const double mass = p.measure.total_mass();
  const double diam = p.measure.support().diameter();

  WeightVector w;
  if (warm && warm->w.size() == t) {
    w = *warm;
  } else {
    w.w.assign(t, 0.0);
  }
  normalize_weights(w, p.config.capacities);

  detail::AscentEval cur = detail::evaluate_dual(p, w);
  CapacitySolution sol;
  if (p.want_trace) {
    sol.objective_trace.push_back(cur.objective);
    sol.residual_trace.push_back(cur.residual);
  }
  WeightVector best_w = w;
  double best_res = cur.residual;

  double step = diam * diam / std::max(mass, 1e-300);
  int stagnant = 0;

  while (sol.iterations < p.max_iterations && cur.residual > tol) {
    bool accepted = false;
    double trial = step;
    detail::AscentEval cand;
    WeightVector w_cand;
    int backtracks = 0;
    for (; backtracks < 60; ++backtracks) {
      w_cand.w.resize(t);
      for (std::size_t i = 0; i < t; ++i)
        w_cand.w[i] = w.w[i] + trial * cur.grad[i];
      normalize_weights(w_cand, p.config.capacities);
      cand = detail::evaluate_dual(p, w_cand);
      if (cand.objective >= cur.objective) {
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) break;  // ridge finer than sample granularity

    if (cand.objective == cur.objective && cand.residual >= cur.residual) {
      if (++stagnant > 100) break;
    } else {
      stagnant = 0;
    }
    w = w_cand;
    cur = cand;
    ++sol.iterations;
    if (p.want_trace) {
      sol.objective_trace.push_back(cur.objective);
      sol.residual_trace.push_back(cur.residual);
    }
    if (cur.residual < best_res) {
      best_res = cur.residual;
      best_w = w;
    }
    step = backtracks == 0 ? trial * 1.7 : trial;
  }

  if (cur.residual <= tol) {
    sol.weights = w;
    sol.residual = cur.residual;
    sol.cell_masses = cur.masses;
    sol.converged = true;
  } else {
    sol.weights = best_w;
    sol.residual = best_res;
    detail::AscentEval ev = detail::evaluate_dual(p, best_w);
    sol.cell_masses = ev.masses;
    sol.converged = false;
  }
  return sol;
}

/// Projected supergradient ascent with backtracking line search on the
/// concave dual; every accepted step is re-projected onto w . c = 0.
/// One- and two-site problems short-circuit through exact solves.
inline CapacitySolution solve_capacities(const CapacityProblem& p,
                                         const WeightVector* warm_start =
                                             nullptr) {
  const double diam = p.measure.support().diameter();
  detail::validate_problem(p, default_merge_epsilon(diam));
  const std::size_t t = p.config.site_count();
  double min_cap = std::numeric_limits<double>::infinity();
  for (double c : p.config.capacities) min_cap = std::min(min_cap, c);
  const double tol = p.tolerance > 0.0 ? p.tolerance : 1e-3 * min_cap;

  if (t == 1) {
    CapacitySolution sol;
    sol.weights.w = {0.0};
    sol.residual = std::abs(p.measure.total_mass() - p.config.capacities[0]);
    sol.iterations = 0;
    sol.converged = sol.residual <= std::max(tol, 1e-9);
    sol.cell_masses = {p.measure.total_mass()};
    if (p.want_trace) {
      sol.objective_trace.push_back(dual_objective(p, sol.weights));
      sol.residual_trace.push_back(sol.residual);
    }
    return sol;
  }
  if (t == 2) {
    CapacitySolution sol = detail::solve_two_sites(p, tol);
    if (sol.converged) return sol;
    // duplicate-value pathologies: refine by ascent from the selection start
    return solve_capacities_ascent(p, &sol.weights, tol);
  }
  return solve_capacities_ascent(p, warm_start, tol);
}

/// Report of solving a capacity problem along a trajectory of two sites
/// moving toward a common point while the rest stay fixed.
struct MergeProbeReport {
  std::vector<double> gaps;       // |w_a - w_b| per time step
  std::vector<double> distances;  // site pair distance per time step
  bool vacuous = false;           // the pair never approached
  double initial_gap = 0.0;
  double final_gap = 0.0;
  double min_gap = 0.0;
};

/// Solve the same capacity problem along a time-indexed site trajectory and
/// record the weight gap of the designated pair.  Warm-starts each step
/// from the previous solution.  A trajectory whose pair never comes within
/// the approach threshold yields a vacuous report (no assertion intended).
inline MergeProbeReport merge_continuity_probe(
    const std::vector<SiteConfig>& trajectory, const Measure& measure,
    std::size_t site_a, std::size_t site_b,
    std::vector<double> capacities, double tolerance = 0.0,
    int max_iterations = 10000, double approach_threshold = 0.0) {
  if (trajectory.empty())
    throw std::invalid_argument("merge_continuity_probe: empty trajectory");
  MergeProbeReport rep;
  const double diam = measure.support().diameter();
  if (approach_threshold <= 0.0) approach_threshold = 1e-3 * diam;

  WeightVector warm;
  bool have_warm = false;
  for (std::size_t step = 0; step < trajectory.size(); ++step) {
    CapacityProblem prob;
    prob.config = trajectory[step];
    prob.config.capacities = capacities;
    prob.measure = measure;
    prob.tolerance = tolerance;
    prob.max_iterations = max_iterations;
    prob.want_trace = false;
    CapacitySolution sol =
        solve_capacities(prob, have_warm ? &warm : nullptr);
    if (!sol.converged)
      throw std::runtime_error(
          "merge_continuity_probe: capacity solve failed at step " +
          std::to_string(step));
    warm = sol.weights;
    have_warm = true;
    rep.gaps.push_back(std::abs(sol.weights.w[site_a] - sol.weights.w[site_b]));
    rep.distances.push_back(std::sqrt(squared_distance(
        trajectory[step].site(site_a), trajectory[step].site(site_b))));
  }
  rep.initial_gap = rep.gaps.front();
  rep.final_gap = rep.gaps.back();
  rep.min_gap = *std::min_element(rep.gaps.begin(), rep.gaps.end());
  rep.vacuous = rep.distances.back() > approach_threshold;
  return rep;
}

}  // namespace equipart
