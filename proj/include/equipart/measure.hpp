#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/convex_body.hpp"
#include "equipart/rng.hpp"

namespace equipart {

/// Cached Monte Carlo points drawn per unit of total mass.
constexpr std::size_t kDefaultSamplesPerUnitMass = 200000;

/// Frozen i.i.d. sample cloud.  Empty `weights` means equal-weight samples,
/// in which case all integration is exact integer counting over the cache.
struct SampleCache {
  int dim = 0;
  std::size_t count = 0;
  std::vector<double> coords;   // count * dim, row-major
  std::vector<double> weights;  // normalized to sum 1 when present
  std::vector<double> sqnorm;   // |x|^2 per sample

  std::span<const double> point(std::size_t i) const {
    return {coords.data() + static_cast<std::size_t>(dim) * i,
            static_cast<std::size_t>(dim)};
  }

  bool weighted() const { return !weights.empty(); }

  void finalize_sqnorm() {
    sqnorm.resize(count);
    for (std::size_t i = 0; i < count; ++i) sqnorm[i] = squared_norm(point(i));
  }
};

struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> sigma;  // per-axis standard deviation
};

/// One mixture component: uniform on `body`, or a Gaussian truncated to
/// `body` and renormalized over it.
struct MixtureComponent {
  double weight = 1.0;  // relative, must be positive
  ConvexBody body;
  std::optional<GaussianParams> gaussian;  // nullopt = uniform
};

struct MeasureSpec {
  int dimension = 0;
  double total_mass = 1.0;
  std::uint64_t seed = 0;
  std::size_t sample_budget = 0;  // 0 = kDefaultSamplesPerUnitMass * mass
  std::vector<MixtureComponent> components;

  static MeasureSpec uniform(ConvexBody body, double mass, std::uint64_t seed,
                             std::size_t budget = 0) {
    MeasureSpec s;
    s.dimension = body.dimension();
    s.total_mass = mass;
    s.seed = seed;
    s.sample_budget = budget;
    s.components.push_back({1.0, std::move(body), std::nullopt});
    return s;
  }

  static MeasureSpec gaussian(ConvexBody body, std::vector<double> mean,
                              std::vector<double> sigma, double mass,
                              std::uint64_t seed, std::size_t budget = 0) {
    MeasureSpec s;
    s.dimension = body.dimension();
    s.total_mass = mass;
    s.seed = seed;
    s.sample_budget = budget;
    s.components.push_back(
        {1.0, std::move(body), GaussianParams{std::move(mean), std::move(sigma)}});
    return s;
  }
};

namespace detail {

// Build-time constants of one component: its normalized mixture weight and
// the normalizer of the raw density over the (possibly clipped) body.
struct ComponentInfo {
  MixtureComponent spec;
  double lambda = 1.0;      // normalized mixture weight
  double normalizer = 1.0;  // integral of raw density over the body
};

inline double gaussian_raw_density(const GaussianParams& g,
                                   std::span<const double> x) {
  double q = 0.0, norm = 1.0;
  for (std::size_t i = 0; i < g.mean.size(); ++i) {
    const double z = (x[i] - g.mean[i]) / g.sigma[i];
    q += z * z;
    norm *= g.sigma[i] * std::sqrt(2.0 * std::numbers::pi);
  }
  return std::exp(-0.5 * q) / norm;
}

}  // namespace detail

/// A "nice measure" surrogate: a density over a bounded convex support,
/// evaluated and integrated through a frozen Monte Carlo sample cache.
/// Immutable after construction; copies share the cache.
class Measure {
 public:
  Measure() = default;

  int dimension() const { return cache_->dim; }
  double total_mass() const { return total_mass_; }
  const ConvexBody& support() const { return support_; }
  const SampleCache& cache() const { return *cache_; }
  const std::shared_ptr<const SampleCache>& cache_ptr() const { return cache_; }

  /// File-loaded clouds have no evaluable density.
  bool empirical() const { return components_.empty(); }

  double density_at(std::span<const double> x) const {
    if (empirical())
      throw std::logic_error("density_at: empirical measure has no density");
    if (!satisfies_all(clip_, x)) return 0.0;
    double q = 0.0;
    for (const auto& c : components_) {
      if (!c.spec.body.contains(x)) continue;
      const double raw = c.spec.gaussian
                             ? detail::gaussian_raw_density(*c.spec.gaussian, x)
                             : 1.0;
      q += c.lambda * raw / c.normalizer;
    }
    return density_scale_ * q;
  }

  /// Monte Carlo integral of `pred` against this measure: total mass times
  /// the cache fraction satisfying it.  Deterministic given the cache.
  template <typename Pred>
  double integrate(Pred&& pred) const {
    const SampleCache& sc = *cache_;
    if (!sc.weighted()) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < sc.count; ++i)
        if (pred(sc.point(i))) ++hits;
      return total_mass_ * (static_cast<double>(hits) /
                            static_cast<double>(sc.count));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < sc.count; ++i)
      if (pred(sc.point(i))) acc += sc.weights[i];
    return total_mass_ * acc;
  }

  double integrate_cell(const std::vector<Halfspace>& cell) const {
    return integrate(
        [&cell](std::span<const double> x) { return satisfies_all(cell, x); });
  }

  /// Restriction to the intersection of `cell` (a nice measure again).
  /// The child cache is exactly the subset of cached samples inside the cell;
  /// its total mass is integrate_cell(cell).  Throws on an (estimated)
  /// zero-measure cell: that signals a degenerate partition step.
  Measure restricted(const std::vector<Halfspace>& cell) const {
    const SampleCache& sc = *cache_;
    auto child = std::make_shared<SampleCache>();
    child->dim = sc.dim;
    for (std::size_t i = 0; i < sc.count; ++i) {
      if (!satisfies_all(cell, sc.point(i))) continue;
      auto p = sc.point(i);
      child->coords.insert(child->coords.end(), p.begin(), p.end());
      if (sc.weighted()) child->weights.push_back(sc.weights[i]);
      ++child->count;
    }
    if (child->count == 0)
      throw std::runtime_error("restricted: cell has zero estimated measure");
    double mass;
    if (!sc.weighted()) {
      mass = total_mass_ * (static_cast<double>(child->count) /
                            static_cast<double>(sc.count));
    } else {
      double acc = 0.0;
      for (double w : child->weights) acc += w;
      mass = total_mass_ * acc;
      // renormalize child weights to sum 1
      for (double& w : child->weights) w /= acc;
    }
    child->finalize_sqnorm();

    Measure out = *this;
    out.cache_ = std::move(child);
    out.total_mass_ = mass;
    out.support_ = support_.intersect(cell);
    out.clip_.insert(out.clip_.end(), cell.begin(), cell.end());
    return out;
  }

  /// Same cache, rescaled total mass (density scales with it).
  Measure with_total_mass(double mass) const {
    if (!(mass > 0.0))
      throw std::invalid_argument("with_total_mass: nonpositive mass");
    Measure out = *this;
    out.density_scale_ = density_scale_ * mass / total_mass_;
    out.total_mass_ = mass;
    return out;
  }

  /// Deterministic prefix subsample (the prefix of an i.i.d. cache is again
  /// i.i.d.).  Used for the coarse phase of the tuple search.
  Measure coarsened(std::size_t max_samples) const {
    if (max_samples >= cache_->count || max_samples == 0) return *this;
    auto child = std::make_shared<SampleCache>();
    child->dim = cache_->dim;
    child->count = max_samples;
    child->coords.assign(
        cache_->coords.begin(),
        cache_->coords.begin() +
            static_cast<std::ptrdiff_t>(max_samples * cache_->dim));
    if (cache_->weighted()) {
      child->weights.assign(cache_->weights.begin(),
                            cache_->weights.begin() +
                                static_cast<std::ptrdiff_t>(max_samples));
      double acc = 0.0;
      for (double w : child->weights) acc += w;
      for (double& w : child->weights) w /= acc;
    }
    child->finalize_sqnorm();
    Measure out = *this;
    out.cache_ = std::move(child);
    return out;
  }

  // Construction helpers (see free functions below).
  static Measure from_parts(ConvexBody support, double mass,
                            std::shared_ptr<const SampleCache> cache,
                            std::vector<detail::ComponentInfo> components,
                            double density_scale) {
    Measure m;
    m.support_ = std::move(support);
    m.total_mass_ = mass;
    m.cache_ = std::move(cache);
    m.components_ = std::move(components);
    m.density_scale_ = density_scale;
    return m;
  }

 private:
  ConvexBody support_;
  double total_mass_ = 0.0;
  std::shared_ptr<const SampleCache> cache_;
  std::vector<detail::ComponentInfo> components_;  // empty = empirical
  std::vector<Halfspace> clip_;  // accumulated restriction cuts
  double density_scale_ = 1.0;
};

namespace detail {

inline void sample_in_body(const ConvexBody& body, Rng& rng, double* out,
                           int d) {
  const BoundingBox& bb = body.bounding_box();
  for (int tries = 0; tries < 100000; ++tries) {
    switch (body.base_kind()) {
      case ConvexBody::Kind::box:
        for (int i = 0; i < d; ++i)
          out[i] = rng.uniform(bb.lo[i], bb.hi[i]);
        break;
      case ConvexBody::Kind::ball: {
        // radial: direction from normals, radius by u^(1/d)
        double nrm = 0.0;
        for (int i = 0; i < d; ++i) {
          out[i] = rng.normal();
          nrm += out[i] * out[i];
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) continue;
        const double r =
            body.ball_radius() * std::pow(rng.uniform01(), 1.0 / d);
        for (int i = 0; i < d; ++i)
          out[i] = body.ball_center()[i] + r * out[i] / nrm;
        break;
      }
      case ConvexBody::Kind::polytope:
        for (int i = 0; i < d; ++i)
          out[i] = rng.uniform(bb.lo[i], bb.hi[i]);
        break;
    }
    if (body.contains({out, static_cast<std::size_t>(d)})) return;
  }
  throw std::runtime_error(
      "sample_in_body: rejection acceptance too low (empty interior?)");
}

}  // namespace detail

/// Build a measure from its spec: validate, draw the frozen i.i.d. cache
/// proportional to the density, and estimate component normalizers.
inline Measure build_measure(const MeasureSpec& spec) {
  const int d = spec.dimension;
  if (d < 1) throw std::invalid_argument("build_measure: dimension < 1");
  if (!(spec.total_mass > 0.0))
    throw std::invalid_argument("build_measure: nonpositive total mass");
  if (spec.components.empty())
    throw std::invalid_argument("build_measure: no density components");

  double weight_sum = 0.0;
  for (const auto& c : spec.components) {
    if (!(c.weight > 0.0))
      throw std::invalid_argument("build_measure: mixture weight <= 0");
    if (c.body.dimension() != d)
      throw std::invalid_argument("build_measure: component dimension mismatch");
    if (c.gaussian) {
      if (static_cast<int>(c.gaussian->mean.size()) != d ||
          static_cast<int>(c.gaussian->sigma.size()) != d)
        throw std::invalid_argument("build_measure: gaussian parameter size");
      for (double s : c.gaussian->sigma)
        if (!(s > 0.0))
          throw std::invalid_argument("build_measure: gaussian sigma <= 0");
    }
    weight_sum += c.weight;
  }

  std::vector<detail::ComponentInfo> infos;
  infos.reserve(spec.components.size());
  for (const auto& c : spec.components)
    infos.push_back({c, c.weight / weight_sum, 1.0});

  const std::size_t budget =
      spec.sample_budget > 0
          ? spec.sample_budget
          : static_cast<std::size_t>(
                std::llround(kDefaultSamplesPerUnitMass * spec.total_mass));
  if (budget == 0) throw std::invalid_argument("build_measure: zero budget");

  auto cache = std::make_shared<SampleCache>();
  cache->dim = d;
  cache->count = budget;
  cache->coords.resize(budget * static_cast<std::size_t>(d));

  Rng rng(spec.seed);
  std::vector<std::int64_t> proposals(infos.size(), 0);
  std::vector<std::int64_t> accepts(infos.size(), 0);
  std::vector<double> scratch(d);

  for (std::size_t s = 0; s < budget; ++s) {
    // pick component by normalized weight
    std::size_t ci = infos.size() - 1;
    double u = rng.uniform01(), acc = 0.0;
    for (std::size_t i = 0; i < infos.size(); ++i) {
      acc += infos[i].lambda;
      if (u < acc) {
        ci = i;
        break;
      }
    }
    const auto& comp = infos[ci].spec;
    double* out = cache->coords.data() + s * static_cast<std::size_t>(d);
    if (!comp.gaussian) {
      detail::sample_in_body(comp.body, rng, out, d);
    } else {
      const auto& g = *comp.gaussian;
      bool done = false;
      for (int tries = 0; tries < 1000000; ++tries) {
        ++proposals[ci];
        for (int i = 0; i < d; ++i)
          scratch[i] = g.mean[i] + g.sigma[i] * rng.normal();
        if (comp.body.contains(scratch)) {
          std::copy(scratch.begin(), scratch.end(), out);
          done = true;
          break;
        }
      }
      if (!done)
        throw std::runtime_error(
            "build_measure: truncated gaussian acceptance too low");
      ++accepts[ci];
    }
  }
  cache->finalize_sqnorm();

  // Normalizers: integral of the raw component density over its body.
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const auto& comp = infos[i].spec;
    if (!comp.gaussian) {
      if (auto v = comp.body.exact_volume()) {
        infos[i].normalizer = *v;
      } else {
        // volume estimate from this component's own rejection rate is not
        // tracked for uniform bodies sampled directly; estimate afresh
        const BoundingBox& bb = comp.body.bounding_box();
        Rng vr(spec.seed ^ 0xa5a5a5a5ULL ^ (i * 0x9e37ULL));
        const int trials = 200000;
        int in = 0;
        std::vector<double> pt(d);
        for (int t = 0; t < trials; ++t) {
          for (int k = 0; k < d; ++k) pt[k] = vr.uniform(bb.lo[k], bb.hi[k]);
          if (comp.body.contains(pt)) ++in;
        }
        if (in == 0)
          throw std::runtime_error("build_measure: polytope appears empty");
        infos[i].normalizer = bb.volume() * in / trials;
      }
    } else {
      // truncation renormalizer from the sampler's acceptance rate
      if (accepts[i] > 0) {
        infos[i].normalizer = static_cast<double>(accepts[i]) /
                              static_cast<double>(proposals[i]);
      } else {
        // component never chosen (tiny weight): estimate directly
        Rng vr(spec.seed ^ 0x5a5a5a5aULL ^ (i * 0x79b9ULL));
        const auto& g = *comp.gaussian;
        const int trials = 200000;
        int in = 0;
        std::vector<double> pt(d);
        for (int t = 0; t < trials; ++t) {
          for (int k = 0; k < d; ++k)
            pt[k] = g.mean[k] + g.sigma[k] * vr.normal();
          if (comp.body.contains(pt)) ++in;
        }
        if (in == 0)
          throw std::runtime_error(
              "build_measure: truncated gaussian mass vanishes on body");
        infos[i].normalizer = static_cast<double>(in) / trials;
      }
    }
  }

  // Support: union bounding box of the components, kept as a box for a
  // single component, else the merged bounding box.
  ConvexBody support = spec.components.front().body;
  if (spec.components.size() > 1) {
    BoundingBox bb = spec.components.front().body.bounding_box();
    for (std::size_t i = 1; i < spec.components.size(); ++i)
      bb = bb.merged(spec.components[i].body.bounding_box());
    support = ConvexBody::box(bb.lo, bb.hi);
  }

  return Measure::from_parts(std::move(support), spec.total_mass,
                             std::move(cache), std::move(infos),
                             spec.total_mass);
}

/// Empirical measure from an explicit point set (optionally weighted).
/// The support is the points' bounding box; no density is available.
inline Measure measure_from_points(int dim, std::vector<double> coords,
                                   std::vector<double> weights,
                                   double total_mass) {
  if (dim < 1) throw std::invalid_argument("measure_from_points: dimension");
  if (!(total_mass > 0.0))
    throw std::invalid_argument("measure_from_points: nonpositive mass");
  const std::size_t n = coords.size() / static_cast<std::size_t>(dim);
  if (n * static_cast<std::size_t>(dim) != coords.size())
    throw std::invalid_argument("measure_from_points: ragged coordinates");
  if (n < static_cast<std::size_t>(dim) + 1)
    throw std::invalid_argument(
        "measure_from_points: fewer than d+1 points");
  if (!weights.empty()) {
    if (weights.size() != n)
      throw std::invalid_argument("measure_from_points: weight count");
    double acc = 0.0;
    for (double w : weights) {
      if (!(w > 0.0))
        throw std::invalid_argument("measure_from_points: weight <= 0");
      acc += w;
    }
    bool uniform = true;
    for (double w : weights)
      if (std::abs(w - weights.front()) > 1e-15 * std::abs(weights.front()))
        uniform = false;
    if (uniform) {
      weights.clear();  // equal weights: use exact counting
    } else {
      for (double& w : weights) w /= acc;
    }
  }

  std::vector<double> lo(dim), hi(dim);
  for (int k = 0; k < dim; ++k) {
    lo[k] = hi[k] = coords[static_cast<std::size_t>(k)];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < dim; ++k) {
      const double v = coords[i * dim + k];
      lo[k] = std::min(lo[k], v);
      hi[k] = std::max(hi[k], v);
    }
  for (int k = 0; k < dim; ++k)
    if (!(lo[k] < hi[k])) {
      // degenerate axis: widen so the box is a valid body
      const double pad = std::max(1e-9, 1e-9 * std::abs(lo[k]));
      lo[k] -= pad;
      hi[k] += pad;
    }

  auto cache = std::make_shared<SampleCache>();
  cache->dim = dim;
  cache->count = n;
  cache->coords = std::move(coords);
  cache->weights = std::move(weights);
  cache->finalize_sqnorm();

  return Measure::from_parts(ConvexBody::box(std::move(lo), std::move(hi)),
                             total_mass, std::move(cache), {}, 1.0);
}

}  // namespace equipart
