// Command-line driver: equipartition solves, capacity solves, partition
// verification, and the planar hyperplane cross-check.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "equipart/capacity_solver.hpp"
#include "equipart/equipartition.hpp"
#include "equipart/io.hpp"
#include "equipart/measure.hpp"
#include "equipart/svg.hpp"
#include "equipart/verify.hpp"

namespace {

namespace fs = std::filesystem;
using namespace equipart;

struct CommonOpts {
  std::vector<std::string> measure_paths;
  std::string out_dir = "equipart-out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  double tolerance = 2e-2;
  std::size_t samples_per_unit = 0;  // 0 = spec/default
  bool svg = false;
};

std::vector<Measure> load_measures(const CommonOpts& opts) {
  if (opts.measure_paths.empty())
    throw ParseError("at least one --measure is required");
  std::vector<Measure> measures;
  int dim = -1;
  for (std::size_t i = 0; i < opts.measure_paths.size(); ++i) {
    MeasureSpec spec = load_measure_spec(opts.measure_paths[i]);
    if (opts.seed_given) spec.seed = opts.seed + i;
    if (opts.samples_per_unit > 0)
      spec.sample_budget = static_cast<std::size_t>(
          static_cast<double>(opts.samples_per_unit) * spec.total_mass);
    Measure m = build_measure(spec);
    if (dim < 0) dim = m.dimension();
    if (m.dimension() != dim)
      throw ParseError("measure dimensions are inconsistent");
    measures.push_back(std::move(m));
  }
  return measures;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

int run_equipartition(const CommonOpts& opts, int k, int restarts,
                      int iterations) {
  std::vector<Measure> measures = load_measures(opts);
  ensure_out_dir(opts.out_dir);

  EquipartitionParams params;
  params.global_tolerance = opts.tolerance;
  params.search.seed = opts.seed;
  if (restarts > 0) params.search.restarts = restarts;
  if (iterations > 0) params.search.max_iterations = iterations;

  EquipartitionResult result = equipartition(k, measures, params);
  if (!result.success) {
    const std::string fail_path = opts.out_dir + "/failure.txt";
    std::ofstream out(fail_path);
    out << "equipart-failure 1\n";
    out << "stage " << result.failure_stage << '\n';
    out << "best_residual " << format_full(result.failure_residual) << '\n';
    out << "best_tuple";
    for (double v : result.failure_best_tuple) out << ' ' << format_full(v);
    out << '\n';
    std::cerr << "equipartition failed: " << result.failure_stage
              << " (best residual " << result.failure_residual
              << "); report: " << fail_path << '\n';
    return 1;
  }

  for (auto& m : measures) m = m.with_total_mass(static_cast<double>(k));

  PartitionFile pf;
  pf.dim = result.dim;
  pf.k = result.k;
  pf.measure_count = static_cast<int>(measures.size());
  pf.seed = opts.seed;
  pf.tolerance = opts.tolerance;
  pf.max_deviation = result.max_deviation;
  pf.masses = result.masses;
  pf.parts = result.parts;
  pf.tree = result.tree;
  const std::string part_path = opts.out_dir + "/partition.txt";
  write_partition_file(part_path, pf);

  VerifyOptions vo;
  vo.deviation_target = 1.0;
  PartitionReport report = verify_partition(result.parts, measures, vo);
  const bool pass = report.max_deviation <= opts.tolerance &&
                    report.coverage_defects == 0 && report.convexity_ok;
  write_verification_report(opts.out_dir + "/report.txt", report, nullptr,
                            opts.tolerance, pass);

  if (opts.svg) {
    if (result.dim == 2) {
      write_partition_svg(opts.out_dir + "/partition.svg", result.parts,
                          measures);
    } else {
      std::cout << "svg: skipped (rendering is d = 2 only)\n";
    }
  }

  std::cout << "parts " << result.parts.size() << ", max deviation "
            << result.max_deviation << " (tolerance " << opts.tolerance
            << "), files in " << opts.out_dir << '\n';
  return pass ? 0 : 1;
}

int run_capacities(const CommonOpts& opts, const std::string& sites_path,
                   double cap_tol, int iterations, bool trace) {
  std::vector<Measure> measures = load_measures(opts);
  const Measure& m = measures.front();
  ensure_out_dir(opts.out_dir);

  CapacityProblem prob;
  prob.config = load_sites_file(sites_path, m.dimension(), m.total_mass());
  prob.measure = m;
  prob.tolerance = cap_tol;
  if (iterations > 0) prob.max_iterations = iterations;
  CapacitySolution sol = solve_capacities(prob);

  const std::string out_path = opts.out_dir + "/capacities.txt";
  std::ofstream out(out_path);
  out << "equipart-capacities 1\n";
  out << "dimension " << m.dimension() << '\n';
  out << "sites " << prob.config.site_count() << '\n';
  for (std::size_t i = 0; i < prob.config.site_count(); ++i) {
    out << "site";
    for (double v : prob.config.site(i)) out << ' ' << format_full(v);
    out << " capacity " << format_full(prob.config.capacities[i])
        << " weight " << format_full(sol.weights.w[i]) << " mass "
        << format_full(sol.cell_masses[i]) << '\n';
  }
  out << "residual " << format_full(sol.residual) << '\n';
  out << "iterations " << sol.iterations << '\n';
  out << "converged " << (sol.converged ? "yes" : "no") << '\n';
  if (trace) {
    out << "trace " << sol.objective_trace.size() << '\n';
    for (std::size_t i = 0; i < sol.objective_trace.size(); ++i)
      out << "iteration " << i << " objective "
          << format_full(sol.objective_trace[i]) << " residual "
          << format_full(sol.residual_trace[i]) << '\n';
  }

  if (opts.svg && m.dimension() == 2) {
    PowerPartition part(prob.config, sol.weights);
    std::vector<std::vector<Halfspace>> cells;
    for (std::size_t i = 0; i < part.cell_count(); ++i)
      cells.push_back(part.cell_halfspaces(i));
    write_partition_svg(opts.out_dir + "/capacities.svg", cells, measures);
  }

  std::cout << "residual " << sol.residual << " after " << sol.iterations
            << " iterations; results in " << out_path << '\n';
  return sol.converged ? 0 : 1;
}

int run_verify(const CommonOpts& opts, const std::string& partition_path,
               bool fresh_seed) {
  PartitionFile pf = read_partition_file(partition_path);
  CommonOpts measure_opts = opts;
  std::vector<Measure> measures = load_measures(measure_opts);
  if (static_cast<int>(measures.size()) != pf.measure_count)
    std::cerr << "note: measure count differs from the partition file\n";
  for (auto& m : measures)
    m = m.with_total_mass(static_cast<double>(pf.k));
  ensure_out_dir(opts.out_dir);

  VerifyOptions vo;
  vo.deviation_target = 1.0;
  PartitionReport frozen = verify_partition(pf.parts, measures, vo);

  PartitionReport fresh;
  bool have_fresh = false;
  if (fresh_seed) {
    std::vector<Measure> remeasured;
    for (std::size_t i = 0; i < opts.measure_paths.size(); ++i) {
      MeasureSpec spec = load_measure_spec(opts.measure_paths[i]);
      if (opts.seed_given) spec.seed = opts.seed + i;
      spec.seed += 1000003;  // fresh draw for an honest MC error estimate
      if (opts.samples_per_unit > 0)
        spec.sample_budget = static_cast<std::size_t>(
            static_cast<double>(opts.samples_per_unit) * spec.total_mass);
      remeasured.push_back(build_measure(spec).with_total_mass(
          static_cast<double>(pf.k)));
    }
    fresh = verify_partition(pf.parts, remeasured, vo);
    have_fresh = true;
  }

  const bool pass = frozen.max_deviation <= opts.tolerance &&
                    frozen.coverage_defects == 0 && frozen.convexity_ok;
  write_verification_report(opts.out_dir + "/report.txt", frozen,
                            have_fresh ? &fresh : nullptr, opts.tolerance,
                            pass);
  std::cout << "max deviation " << frozen.max_deviation << ", defects "
            << frozen.coverage_defects << ", convexity "
            << (frozen.convexity_ok ? "pass" : "fail");
  if (have_fresh) std::cout << ", fresh-seed deviation " << fresh.max_deviation;
  std::cout << " -> " << (pass ? "pass" : "fail") << '\n';
  return pass ? 0 : 1;
}

int run_hamcheck(const CommonOpts& opts, int angles, int offsets,
                 int restarts) {
  std::vector<Measure> measures = load_measures(opts);
  if (measures.front().dimension() != 2)
    throw ParseError("hamcheck requires d = 2 measures");
  for (auto& m : measures) m = m.with_total_mass(2.0);
  ensure_out_dir(opts.out_dir);

  EquipartitionParams params;
  params.search.seed = opts.seed;
  if (restarts > 0) params.search.restarts = restarts;
  EquipartitionResult solved = equipartition(2, measures, params);

  HyperplaneSearchResult oracle =
      brute_force_hyperplane(measures, BruteForceGrid{angles, offsets});

  const std::string out_path = opts.out_dir + "/hamcheck.txt";
  std::ofstream out(out_path);
  out << "equipart-hamcheck 1\n";
  out << "solver_deviation "
      << format_full(solved.success ? solved.max_deviation : -1.0) << '\n';
  out << "oracle_deviation " << format_full(oracle.deviation) << '\n';
  out << "oracle_angle " << format_full(oracle.angle) << '\n';
  out << "oracle_offset " << format_full(oracle.halfspace.offset) << '\n';

  const bool pass =
      solved.success && solved.max_deviation <= oracle.deviation + 5e-3;
  out << "status " << (pass ? "pass" : "fail") << '\n';
  std::cout << "solver " << (solved.success ? solved.max_deviation : -1.0)
            << " vs oracle " << oracle.deviation << " -> "
            << (pass ? "pass" : "fail") << '\n';
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex equipartition of measures via power diagrams"};
  app.require_subcommand(1);

  CommonOpts opts;
  int k = 1;
  int restarts = 0, iterations = 0;
  double cap_tol = 0.0;
  std::string sites_path, partition_path;
  bool trace = false, fresh_seed = false;
  int angles = 720, offsets = 500;

  auto add_common = [&](CLI::App* cmd, bool need_out) {
    cmd->add_option("--measure", opts.measure_paths,
                    "measure spec file (repeatable)")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    auto* seed_opt =
        cmd->add_option("--seed", opts.seed, "seed override (per-measure +i)");
    cmd->callback([&, seed_opt] { opts.seed_given = seed_opt->count() > 0; });
    cmd->add_option("--tol", opts.tolerance, "acceptance tolerance");
    cmd->add_option("--samples", opts.samples_per_unit,
                    "sample budget per unit mass (overrides spec)");
    cmd->add_flag("--svg", opts.svg, "emit an SVG rendering (d = 2)");
    (void)need_out;
  };

  auto* eq = app.add_subcommand("equipartition",
                                "split all measures into k unit parts");
  eq->add_option("--k", k, "number of parts")->required();
  eq->add_option("--restarts", restarts, "search restarts");
  eq->add_option("--iterations", iterations, "search iterations per restart");
  add_common(eq, true);

  auto* caps = app.add_subcommand("capacities",
                                  "solve weights for prescribed cell masses");
  caps->add_option("--sites", sites_path, "sites file (d floats + capacity)")
      ->required();
  caps->add_option("--cap-tol", cap_tol, "capacity residual tolerance");
  caps->add_option("--iterations", iterations, "ascent iteration cap");
  caps->add_flag("--trace", trace, "emit the iteration trace");
  add_common(caps, true);

  auto* ver = app.add_subcommand("verify", "recheck a partition file");
  ver->add_option("--partition", partition_path, "partition file")
      ->required();
  ver->add_flag("--fresh-seed", fresh_seed,
                "also verify against fresh-seed measures");
  add_common(ver, true);

  auto* ham = app.add_subcommand("hamcheck",
                                 "k = 2 solver vs brute-force hyperplane");
  ham->add_option("--angles", angles, "oracle angle grid");
  ham->add_option("--offsets", offsets, "oracle offset grid");
  ham->add_option("--restarts", restarts, "search restarts");
  add_common(ham, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (eq->parsed()) return run_equipartition(opts, k, restarts, iterations);
    if (caps->parsed())
      return run_capacities(opts, sites_path, cap_tol, iterations, trace);
    if (ver->parsed()) return run_verify(opts, partition_path, fresh_seed);
    if (ham->parsed()) return run_hamcheck(opts, angles, offsets, restarts);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
