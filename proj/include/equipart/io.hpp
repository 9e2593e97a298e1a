#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "equipart/common.hpp"
#include "equipart/equipartition.hpp"
#include "equipart/measure.hpp"
#include "equipart/verify.hpp"

namespace equipart {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::vector<std::string>> read_token_lines(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  std::vector<std::vector<std::string>> lines;
  std::string raw;
  while (std::getline(in, raw)) {
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    for (char& c : raw)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ss(raw);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    if (!toks.empty()) lines.push_back(std::move(toks));
  }
  return lines;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected a number for " + what + ", got '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected an integer for " + what + ", got '" + s + "'");
  }
}

}  // namespace detail

/// Measure spec file: line-oriented key/value text.
///
///   kind uniform | gaussian | mixture
///   dimension d
///   total_mass m
///   seed s
///   sample_budget n            (optional)
///   component uniform weight w      (mixture only; starts a component)
///   component gaussian weight w
///   mean <d floats>                 (gaussian component)
///   sigma <d floats>
///   support box <lo...> <hi...>
///   support ball <center...> <radius>
///   support polytope <bbox lo...> <bbox hi...>
///   halfspace <normal...> <offset>  (faces of a polytope support)
inline MeasureSpec parse_measure_spec_lines(
    const std::vector<std::vector<std::string>>& lines) {
  MeasureSpec spec;
  std::string kind;
  struct PendingComponent {
    double weight = 1.0;
    bool gaussian = false;
    std::vector<double> mean, sigma;
    std::optional<ConvexBody> body;
    std::vector<double> poly_lo, poly_hi;
    std::vector<Halfspace> poly_faces;
    bool poly = false;
  };
  std::vector<PendingComponent> pending;
  bool saw_component_line = false;

  auto finish_body = [](PendingComponent& pc) {
    if (pc.poly && !pc.body) {
      pc.body = ConvexBody::polytope(pc.poly_faces,
                                     BoundingBox{pc.poly_lo, pc.poly_hi});
    }
  };

  for (const auto& toks : lines) {
    const std::string& key = toks[0];
    if (key == "kind") {
      kind = toks.at(1);
      if (kind != "uniform" && kind != "gaussian" && kind != "mixture")
        throw ParseError("unknown measure kind '" + kind + "'");
      if (kind != "mixture") {
        pending.emplace_back();
        pending.back().gaussian = (kind == "gaussian");
      }
    } else if (key == "dimension") {
      spec.dimension = static_cast<int>(detail::parse_int(toks.at(1), key));
    } else if (key == "total_mass") {
      spec.total_mass = detail::parse_double(toks.at(1), key);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(detail::parse_int(toks.at(1), key));
    } else if (key == "sample_budget") {
      spec.sample_budget =
          static_cast<std::size_t>(detail::parse_int(toks.at(1), key));
    } else if (key == "component") {
      if (kind != "mixture")
        throw ParseError("'component' lines require kind mixture");
      saw_component_line = true;
      PendingComponent pc;
      pc.gaussian = toks.at(1) == "gaussian";
      if (!pc.gaussian && toks.at(1) != "uniform")
        throw ParseError("component kind must be uniform or gaussian");
      if (toks.size() >= 4 && toks[2] == "weight")
        pc.weight = detail::parse_double(toks[3], "component weight");
      pending.push_back(std::move(pc));
    } else if (key == "mean" || key == "sigma") {
      if (pending.empty()) throw ParseError("'" + key + "' before a component");
      std::vector<double> vals;
      for (std::size_t i = 1; i < toks.size(); ++i)
        vals.push_back(detail::parse_double(toks[i], key));
      (key == "mean" ? pending.back().mean : pending.back().sigma) =
          std::move(vals);
    } else if (key == "support") {
      if (pending.empty()) throw ParseError("'support' before a component");
      PendingComponent& pc = pending.back();
      const std::string& form = toks.at(1);
      std::vector<double> vals;
      for (std::size_t i = 2; i < toks.size(); ++i)
        vals.push_back(detail::parse_double(toks[i], "support"));
      const int d = spec.dimension;
      if (d <= 0) throw ParseError("'dimension' must precede 'support'");
      if (form == "box") {
        if (static_cast<int>(vals.size()) != 2 * d)
          throw ParseError("support box needs 2*d numbers");
        pc.body = ConvexBody::box({vals.begin(), vals.begin() + d},
                                  {vals.begin() + d, vals.end()});
      } else if (form == "ball") {
        if (static_cast<int>(vals.size()) != d + 1)
          throw ParseError("support ball needs d+1 numbers");
        pc.body = ConvexBody::ball({vals.begin(), vals.begin() + d},
                                   vals.back());
      } else if (form == "polytope") {
        if (static_cast<int>(vals.size()) != 2 * d)
          throw ParseError("support polytope needs the 2*d bounding box");
        pc.poly = true;
        pc.poly_lo.assign(vals.begin(), vals.begin() + d);
        pc.poly_hi.assign(vals.begin() + d, vals.end());
      } else {
        throw ParseError("unknown support form '" + form + "'");
      }
    } else if (key == "halfspace") {
      if (pending.empty() || !pending.back().poly)
        throw ParseError("'halfspace' outside a polytope support");
      const int d = spec.dimension;
      if (static_cast<int>(toks.size()) != d + 2)
        throw ParseError("halfspace needs d+1 numbers");
      Halfspace h;
      for (int i = 0; i < d; ++i)
        h.normal.push_back(detail::parse_double(toks[i + 1], "halfspace"));
      h.offset = detail::parse_double(toks.back(), "halfspace");
      pending.back().poly_faces.push_back(std::move(h));
    } else {
      throw ParseError("unknown measure spec key '" + key + "'");
    }
  }

  if (kind.empty()) throw ParseError("measure spec is missing 'kind'");
  if (spec.dimension <= 0) throw ParseError("measure spec is missing 'dimension'");
  if (kind == "mixture" && !saw_component_line)
    throw ParseError("mixture spec has no components");

  for (auto& pc : pending) {
    finish_body(pc);
    if (!pc.body) throw ParseError("component is missing its support");
    MixtureComponent mc;
    mc.weight = pc.weight;
    mc.body = *pc.body;
    if (pc.gaussian) {
      if (pc.mean.empty() || pc.sigma.empty())
        throw ParseError("gaussian component needs mean and sigma");
      mc.gaussian = GaussianParams{pc.mean, pc.sigma};
    }
    spec.components.push_back(std::move(mc));
  }
  return spec;
}

inline MeasureSpec load_measure_spec(const std::string& path) {
  return parse_measure_spec_lines(detail::read_token_lines(path));
}

/// Sample cloud: one point per line, d floats, optional trailing weight
/// column enabled by a leading "dim d" line.  All rows must agree in width.
inline Measure load_sample_cloud(const std::string& path, double total_mass) {
  auto lines = detail::read_token_lines(path);
  if (lines.empty()) throw ParseError("sample cloud is empty: " + path);
  std::size_t row = 0;
  int dim = -1;
  bool weighted = false;
  if (lines[0].size() == 2 && lines[0][0] == "dim") {
    dim = static_cast<int>(detail::parse_int(lines[0][1], "dim"));
    row = 1;
    if (row >= lines.size()) throw ParseError("sample cloud has no points");
    weighted = static_cast<int>(lines[row].size()) == dim + 1;
  } else {
    dim = static_cast<int>(lines[0].size());
  }
  const std::size_t width = static_cast<std::size_t>(dim) + (weighted ? 1 : 0);

  std::vector<double> coords;
  std::vector<double> weights;
  for (; row < lines.size(); ++row) {
    if (lines[row].size() != width)
      throw ParseError("sample cloud row " + std::to_string(row + 1) +
                       " has " + std::to_string(lines[row].size()) +
                       " fields, expected " + std::to_string(width));
    for (int i = 0; i < dim; ++i)
      coords.push_back(detail::parse_double(lines[row][i], "coordinate"));
    if (weighted)
      weights.push_back(detail::parse_double(lines[row][dim], "weight"));
  }
  return measure_from_points(dim, std::move(coords), std::move(weights),
                             total_mass);
}

/// Sites file: one site per line, d floats then a capacity column; a file
/// of bare points gets equal capacities summing to the measure mass.
inline SiteConfig load_sites_file(const std::string& path, int dim,
                                  double total_mass) {
  auto lines = detail::read_token_lines(path);
  if (lines.empty()) throw ParseError("sites file is empty: " + path);
  SiteConfig config;
  config.dim = dim;
  bool with_caps = static_cast<int>(lines[0].size()) == dim + 1;
  if (!with_caps && static_cast<int>(lines[0].size()) != dim)
    throw ParseError("sites file rows must have d or d+1 fields");
  for (std::size_t r = 0; r < lines.size(); ++r) {
    if (static_cast<int>(lines[r].size()) != dim + (with_caps ? 1 : 0))
      throw ParseError("sites file row " + std::to_string(r + 1) +
                       " width mismatch");
    for (int i = 0; i < dim; ++i)
      config.sites.push_back(detail::parse_double(lines[r][i], "site"));
    if (with_caps)
      config.capacities.push_back(
          detail::parse_double(lines[r][dim], "capacity"));
  }
  const std::size_t t = config.sites.size() / static_cast<std::size_t>(dim);
  if (!with_caps)
    config.capacities.assign(t, total_mass / static_cast<double>(t));
  return config;
}

// ---------------------------------------------------------------------------
// Partition file
// ---------------------------------------------------------------------------

struct PartitionFile {
  int version = 1;
  int dim = 0;
  int k = 0;
  int measure_count = 0;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  double max_deviation = 0.0;
  std::vector<std::vector<double>> masses;  // [measure][part]
  std::vector<std::vector<Halfspace>> parts;
  PartitionNode tree;
};

namespace detail {

inline void write_halfspace(std::ofstream& out, const Halfspace& h) {
  out << "halfspace";
  for (double v : h.normal) out << ' ' << format_full(v);
  out << ' ' << format_full(h.offset) << '\n';
}

inline void write_node(std::ofstream& out, const PartitionNode& node,
                       int dim) {
  if (node.kind == PartitionNode::Kind::leaf) {
    out << "leaf\n";
    return;
  }
  const bool prime = node.kind == PartitionNode::Kind::prime_split;
  out << "node " << (prime ? "prime" : "quantile") << " k "
      << node.parts_target;
  if (prime)
    out << " p " << node.prime_p << " cofactor " << node.cofactor
        << " residual " << format_full(node.search_residual) << " restarts "
        << node.restarts_used << " sites " << node.multiplicities.size();
  out << '\n';
  if (prime) {
    for (std::size_t h = 0; h < node.multiplicities.size(); ++h) {
      out << "site";
      for (int i = 0; i < dim; ++i)
        out << ' '
            << format_full(node.sites[h * static_cast<std::size_t>(dim) + i]);
      out << " mult " << node.multiplicities[h] << " weight "
          << format_full(node.weights[h]) << '\n';
    }
  }
  out << "cells " << node.cells.size() << '\n';
  for (std::size_t j = 0; j < node.cells.size(); ++j) {
    out << "cell " << j << " target " << node.child_targets[j]
        << " halfspaces " << node.cells[j].size() << '\n';
    for (const auto& h : node.cells[j]) write_halfspace(out, h);
  }
  out << "children " << node.children.size() << '\n';
  for (const auto& child : node.children) write_node(out, child, dim);
  out << "endnode\n";
}

struct TokenCursor {
  const std::vector<std::vector<std::string>>* lines;
  std::size_t row = 0;

  const std::vector<std::string>& peek() const {
    if (row >= lines->size()) throw ParseError("unexpected end of file");
    return (*lines)[row];
  }
  std::vector<std::string> take() {
    auto l = peek();
    ++row;
    return l;
  }
  bool done() const { return row >= lines->size(); }
};

inline Halfspace parse_halfspace_line(const std::vector<std::string>& toks,
                                      int dim) {
  if (toks[0] != "halfspace" || static_cast<int>(toks.size()) != dim + 2)
    throw ParseError("malformed halfspace line");
  Halfspace h;
  for (int i = 0; i < dim; ++i)
    h.normal.push_back(parse_double(toks[i + 1], "halfspace normal"));
  h.offset = parse_double(toks.back(), "halfspace offset");
  return h;
}

inline PartitionNode parse_node(TokenCursor& cur, int dim) {
  auto head = cur.take();
  PartitionNode node;
  if (head[0] == "leaf") return node;
  if (head[0] != "node") throw ParseError("expected 'node' or 'leaf'");
  node.kind = head.at(1) == "prime" ? PartitionNode::Kind::prime_split
                                    : PartitionNode::Kind::quantile_split;
  std::size_t site_count = 0;
  for (std::size_t i = 2; i + 1 < head.size(); i += 2) {
    const std::string& key = head[i];
    const std::string& val = head[i + 1];
    if (key == "k")
      node.parts_target = static_cast<int>(parse_int(val, key));
    else if (key == "p")
      node.prime_p = static_cast<int>(parse_int(val, key));
    else if (key == "cofactor")
      node.cofactor = static_cast<int>(parse_int(val, key));
    else if (key == "residual")
      node.search_residual = parse_double(val, key);
    else if (key == "restarts")
      node.restarts_used = static_cast<int>(parse_int(val, key));
    else if (key == "sites")
      site_count = static_cast<std::size_t>(parse_int(val, key));
    else
      throw ParseError("unknown node attribute '" + key + "'");
  }
  for (std::size_t h = 0; h < site_count; ++h) {
    auto toks = cur.take();
    if (toks[0] != "site" ||
        static_cast<int>(toks.size()) != dim + 5)
      throw ParseError("malformed site line");
    for (int i = 0; i < dim; ++i)
      node.sites.push_back(parse_double(toks[i + 1], "site"));
    if (toks[dim + 1] != "mult" || toks[dim + 3] != "weight")
      throw ParseError("malformed site line");
    node.multiplicities.push_back(
        static_cast<int>(parse_int(toks[dim + 2], "mult")));
    node.weights.push_back(parse_double(toks[dim + 4], "weight"));
  }
  auto cells_line = cur.take();
  if (cells_line[0] != "cells") throw ParseError("expected 'cells'");
  const auto ncells =
      static_cast<std::size_t>(parse_int(cells_line.at(1), "cells"));
  for (std::size_t j = 0; j < ncells; ++j) {
    auto ch = cur.take();
    if (ch[0] != "cell" || ch.size() < 6) throw ParseError("expected 'cell'");
    node.child_targets.push_back(
        static_cast<int>(parse_int(ch.at(3), "target")));
    const auto nh = static_cast<std::size_t>(parse_int(ch.at(5), "halfspaces"));
    std::vector<Halfspace> cell;
    for (std::size_t i = 0; i < nh; ++i)
      cell.push_back(parse_halfspace_line(cur.take(), dim));
    node.cells.push_back(std::move(cell));
  }
  auto children_line = cur.take();
  if (children_line[0] != "children") throw ParseError("expected 'children'");
  const auto nchildren =
      static_cast<std::size_t>(parse_int(children_line.at(1), "children"));
  for (std::size_t j = 0; j < nchildren; ++j)
    node.children.push_back(parse_node(cur, dim));
  auto end = cur.take();
  if (end[0] != "endnode") throw ParseError("expected 'endnode'");
  return node;
}

}  // namespace detail

inline void write_partition_file(const std::string& path,
                                 const PartitionFile& pf) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write partition file: " + path);
  out << "equipart-partition " << pf.version << '\n';
  out << "dimension " << pf.dim << '\n';
  out << "k " << pf.k << '\n';
  out << "measures " << pf.measure_count << '\n';
  out << "seed " << pf.seed << '\n';
  out << "tolerance " << format_full(pf.tolerance) << '\n';
  out << "max_deviation " << format_full(pf.max_deviation) << '\n';
  out << "masses " << pf.masses.size() << '\n';
  for (const auto& row : pf.masses) {
    out << "mass_row";
    for (double v : row) out << ' ' << format_full(v);
    out << '\n';
  }
  for (std::size_t j = 0; j < pf.parts.size(); ++j) {
    out << "part " << j << " halfspaces " << pf.parts[j].size() << '\n';
    for (const auto& h : pf.parts[j]) detail::write_halfspace(out, h);
  }
  out << "tree\n";
  detail::write_node(out, pf.tree, pf.dim);
  out << "endtree\n";
}

inline PartitionFile read_partition_file(const std::string& path) {
  auto lines = detail::read_token_lines(path);
  detail::TokenCursor cur{&lines, 0};
  PartitionFile pf;

  auto magic = cur.take();
  if (magic[0] != "equipart-partition")
    throw ParseError("not a partition file: " + path);
  pf.version = static_cast<int>(detail::parse_int(magic.at(1), "version"));

  while (!cur.done()) {
    auto toks = cur.peek();
    const std::string& key = toks[0];
    if (key == "dimension") {
      pf.dim = static_cast<int>(detail::parse_int(toks.at(1), key));
      cur.take();
    } else if (key == "k") {
      pf.k = static_cast<int>(detail::parse_int(toks.at(1), key));
      cur.take();
    } else if (key == "measures") {
      pf.measure_count = static_cast<int>(detail::parse_int(toks.at(1), key));
      cur.take();
    } else if (key == "seed") {
      pf.seed =
          static_cast<std::uint64_t>(detail::parse_int(toks.at(1), key));
      cur.take();
    } else if (key == "tolerance") {
      pf.tolerance = detail::parse_double(toks.at(1), key);
      cur.take();
    } else if (key == "max_deviation") {
      pf.max_deviation = detail::parse_double(toks.at(1), key);
      cur.take();
    } else if (key == "masses") {
      const auto rows =
          static_cast<std::size_t>(detail::parse_int(toks.at(1), key));
      cur.take();
      for (std::size_t r = 0; r < rows; ++r) {
        auto row = cur.take();
        if (row[0] != "mass_row") throw ParseError("expected 'mass_row'");
        std::vector<double> vals;
        for (std::size_t i = 1; i < row.size(); ++i)
          vals.push_back(detail::parse_double(row[i], "mass"));
        pf.masses.push_back(std::move(vals));
      }
    } else if (key == "part") {
      auto head = cur.take();
      const auto nh =
          static_cast<std::size_t>(detail::parse_int(head.at(3), "halfspaces"));
      std::vector<Halfspace> cell;
      for (std::size_t i = 0; i < nh; ++i)
        cell.push_back(detail::parse_halfspace_line(cur.take(), pf.dim));
      pf.parts.push_back(std::move(cell));
    } else if (key == "tree") {
      cur.take();
      pf.tree = detail::parse_node(cur, pf.dim);
      auto end = cur.take();
      if (end[0] != "endtree") throw ParseError("expected 'endtree'");
    } else {
      throw ParseError("unknown partition file key '" + key + "'");
    }
  }
  if (pf.dim <= 0 || pf.k <= 0 || pf.parts.empty())
    throw ParseError("partition file is incomplete");
  return pf;
}

/// Verification report with fixed field names, machine diffable.
inline void write_verification_report(const std::string& path,
                                      const PartitionReport& frozen,
                                      const PartitionReport* fresh,
                                      double tolerance, bool pass) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "equipart-verification-report 1\n";
  out << "parts " << (frozen.masses.empty() ? 0 : frozen.masses[0].size())
      << '\n';
  out << "measures " << frozen.masses.size() << '\n';
  out << "tolerance " << format_full(tolerance) << '\n';
  out << "frozen_max_deviation " << format_full(frozen.max_deviation) << '\n';
  out << "coverage_defects " << frozen.coverage_defects << '\n';
  out << "convexity_spot_checks " << (frozen.convexity_ok ? "pass" : "fail")
      << '\n';
  if (!frozen.convexity_ok)
    out << "convexity_note " << frozen.convexity_note << '\n';
  out << "masses " << frozen.masses.size() << '\n';
  for (const auto& row : frozen.masses) {
    out << "mass_row";
    for (double v : row) out << ' ' << format_full(v);
    out << '\n';
  }
  if (fresh) {
    out << "fresh_seed_max_deviation " << format_full(fresh->max_deviation)
        << '\n';
    out << "fresh_seed_coverage_defects " << fresh->coverage_defects << '\n';
  }
  out << "status " << (pass ? "pass" : "fail") << '\n';
}

}  // namespace equipart
