#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/measure.hpp"

namespace equipart {

/// Below this pairwise distance two sites are treated as merged.
inline double default_merge_epsilon(double support_diameter) {
  return 1e-9 * support_diameter;
}

/// Ordered distinct sites with their prescribed cell masses.
struct SiteConfig {
  int dim = 0;
  std::vector<double> sites;       // t * dim, row-major
  std::vector<double> capacities;  // t, strictly positive

  std::size_t site_count() const { return capacities.size(); }

  std::span<const double> site(std::size_t i) const {
    return {sites.data() + static_cast<std::size_t>(dim) * i,
            static_cast<std::size_t>(dim)};
  }

  double capacity_sum() const {
    double s = 0.0;
    for (double c : capacities) s += c;
    return s;
  }

  double min_pairwise_distance() const {
    const std::size_t t = site_count();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = i + 1; j < t; ++j)
        best = std::min(best, squared_distance(site(i), site(j)));
    return std::sqrt(best);
  }

  void validate(double merge_epsilon) const {
    const std::size_t t = site_count();
    if (t == 0) throw std::invalid_argument("SiteConfig: no sites");
    if (sites.size() != t * static_cast<std::size_t>(dim))
      throw std::invalid_argument("SiteConfig: coordinate count mismatch");
    for (double c : capacities)
      if (!(c > 0.0))
        throw std::invalid_argument("SiteConfig: capacity <= 0");
    if (t >= 2 && min_pairwise_distance() <= merge_epsilon)
      throw std::invalid_argument("SiteConfig: sites closer than merge epsilon");
  }
};

struct WeightVector {
  std::vector<double> w;
};

/// Shift along the diagonal so that w . c = 0; the diagram is unchanged.
/// Two passes bring the residual down to rounding level.
inline void normalize_weights(WeightVector& wv,
                              std::span<const double> capacities) {
  double csum = 0.0;
  for (double c : capacities) csum += c;
  for (int pass = 0; pass < 2; ++pass) {
    double wc = 0.0;
    for (std::size_t i = 0; i < wv.w.size(); ++i) wc += wv.w[i] * capacities[i];
    const double shift = wc / csum;
    for (double& x : wv.w) x -= shift;
  }
}

/// Per-cell tallies of one pass over a sample cache.
struct ClassifyStats {
  std::vector<std::int64_t> counts;  // per cell
  std::vector<double> fractions;     // per cell, sums to 1
  double mean_min_power = 0.0;       // cache average of min_i h_i
};

/// Sites plus weights; cells are implicit argmin regions of the power
/// functions h_i(x) = |x - x_i|^2 - w_i.  Immutable and cheap to build.
class PowerPartition {
 public:
  PowerPartition(SiteConfig config, WeightVector weights)
      : config_(std::move(config)), weights_(std::move(weights)) {
    const std::size_t t = config_.site_count();
    if (weights_.w.size() != t)
      throw std::invalid_argument("PowerPartition: weight count mismatch");
    scaled_sites_.resize(config_.sites.size());
    for (std::size_t i = 0; i < config_.sites.size(); ++i)
      scaled_sites_[i] = -2.0 * config_.sites[i];
    bias_.resize(t);
    for (std::size_t i = 0; i < t; ++i)
      bias_[i] = squared_norm(config_.site(i)) - weights_.w[i];
  }

  const SiteConfig& config() const { return config_; }
  const WeightVector& weights() const { return weights_; }
  std::size_t cell_count() const { return config_.site_count(); }

  /// h_i(x) = squared distance to site i minus its weight.
  double power_value(std::size_t i, std::span<const double> x) const {
    return squared_distance(x, config_.site(i)) - weights_.w[i];
  }

  /// Smallest index attaining the minimal power value.  Uses the reduced
  /// form h_i(x) - |x|^2 = -2 x_i . x + |x_i|^2 - w_i, which has the same
  /// argmin; the identical arithmetic is used for bulk cache passes so the
  /// two agree sample for sample.
  std::size_t classify(std::span<const double> x) const {
    const std::size_t t = cell_count();
    const int d = config_.dim;
    std::size_t best = 0;
    double gbest = reduced_power(0, x.data(), d);
    for (std::size_t i = 1; i < t; ++i) {
      const double g = reduced_power(i, x.data(), d);
      if (g < gbest) {
        gbest = g;
        best = i;
      }
    }
    return best;
  }

  /// The t-1 closed halfspaces whose intersection is cell i:
  /// h_i <= h_j  <=>  2(x_j - x_i) . x <= (|x_j|^2 - |x_i|^2) + (w_i - w_j).
  std::vector<Halfspace> cell_halfspaces(std::size_t i) const {
    const std::size_t t = cell_count();
    const int d = config_.dim;
    if (i >= t) throw std::out_of_range("cell_halfspaces: index");
    std::vector<Halfspace> out;
    out.reserve(t > 0 ? t - 1 : 0);
    const auto si = config_.site(i);
    for (std::size_t j = 0; j < t; ++j) {
      if (j == i) continue;
      const auto sj = config_.site(j);
      Halfspace h;
      h.normal.resize(d);
      for (int k = 0; k < d; ++k) h.normal[k] = 2.0 * (sj[k] - si[k]);
      h.offset = (squared_norm(sj) - squared_norm(si)) +
                 (weights_.w[i] - weights_.w[j]);
      out.push_back(std::move(h));
    }
    return out;
  }

  /// One pass over a cache: per-cell sample counts and the cache mean of
  /// the minimal power value (for the dual objective).
  ClassifyStats classify_cache(const SampleCache& sc) const {
    const std::size_t t = cell_count();
    const int d = config_.dim;
    if (sc.dim != d)
      throw std::invalid_argument("classify_cache: dimension mismatch");
    ClassifyStats st;
    st.counts.assign(t, 0);
    st.fractions.assign(t, 0.0);
    double acc = 0.0;
    const double* coords = sc.coords.data();
    if (!sc.weighted()) {
      for (std::size_t s = 0; s < sc.count; ++s) {
        const double* x = coords + s * static_cast<std::size_t>(d);
        std::size_t best = 0;
        double gbest = reduced_power(0, x, d);
        for (std::size_t i = 1; i < t; ++i) {
          const double g = reduced_power(i, x, d);
          if (g < gbest) {
            gbest = g;
            best = i;
          }
        }
        ++st.counts[best];
        acc += sc.sqnorm[s] + gbest;
      }
      for (std::size_t i = 0; i < t; ++i)
        st.fractions[i] = static_cast<double>(st.counts[i]) /
                          static_cast<double>(sc.count);
      st.mean_min_power = acc / static_cast<double>(sc.count);
    } else {
      for (std::size_t s = 0; s < sc.count; ++s) {
        const double* x = coords + s * static_cast<std::size_t>(d);
        std::size_t best = 0;
        double gbest = reduced_power(0, x, d);
        for (std::size_t i = 1; i < t; ++i) {
          const double g = reduced_power(i, x, d);
          if (g < gbest) {
            gbest = g;
            best = i;
          }
        }
        ++st.counts[best];
        st.fractions[best] += sc.weights[s];
        acc += sc.weights[s] * (sc.sqnorm[s] + gbest);
      }
      st.mean_min_power = acc;
    }
    return st;
  }

  /// Cell masses of a measure: mass times cache fraction classified to each
  /// cell.  Entries sum to the total mass (every sample lands in exactly
  /// one cell).
  std::vector<double> cell_measures(const Measure& m) const {
    ClassifyStats st = classify_cache(m.cache());
    std::vector<double> out(st.fractions.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = m.total_mass() * st.fractions[i];
    return out;
  }

 private:
  double reduced_power(std::size_t i, const double* x, int d) const {
    const double* s = scaled_sites_.data() + static_cast<std::size_t>(d) * i;
    if (d == 2) return s[0] * x[0] + s[1] * x[1] + bias_[i];
    if (d == 3) return s[0] * x[0] + s[1] * x[1] + s[2] * x[2] + bias_[i];
    double acc = bias_[i];
    for (int k = 0; k < d; ++k) acc += s[k] * x[k];
    return acc;
  }

  SiteConfig config_;
  WeightVector weights_;
  std::vector<double> scaled_sites_;  // -2 * site coords
  std::vector<double> bias_;          // |x_i|^2 - w_i
};

}  // namespace equipart
