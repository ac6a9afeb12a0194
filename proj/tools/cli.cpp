#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "qsspf/analysis.hpp"
#include "qsspf/casefile.hpp"
#include "qsspf/harness.hpp"
#include "qsspf/network.hpp"
#include "qsspf/solvers.hpp"

namespace qsspf::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string method_list() {
  std::string out;
  for (const Method m : kAllMethods) {
    if (!out.empty()) out += ", ";
    out += method_name(m);
  }
  return out;
}

Method to_method(const std::string& name) {
  if (auto m = parse_method(name)) return *m;
  throw UsageError("unknown method '" + name + "'; expected one of: " + method_list());
}

std::vector<Method> to_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  if (names.empty()) return {std::begin(kAllMethods), std::end(kAllMethods)};
  for (const auto& n : names) out.push_back(to_method(n));
  return out;
}

void add_overrides(CLI::App* cmd, SolverOverrides& o) {
  cmd->add_option("--h0", o.h0, "Initial (or fixed) step size");
  cmd->add_option("--dq", o.quantum, "QSS quantum");
  cmd->add_option("--hmax", o.h_max, "Maximum step size");
  cmd->add_option("--tol", o.tol, "Outer and residual tolerance");
  cmd->add_option("--inner-max", o.max_inner, "Maximum inner iterations (BEM-J variants)");
  cmd->add_option("--max-outer", o.max_outer, "Maximum outer iterations");
  cmd->add_flag("--fixed-step", o.fixed_step, "Disable the BEM-J heuristic step controller");
  cmd->add_flag("--estimate-cond", o.estimate_condition,
                "Record a 1-norm condition estimate of the Jacobian per iteration");
}

NetworkCase load_case(const std::string& path, std::ostream& err) {
  std::vector<std::string> warnings;
  NetworkCase c = read_case_file(path, &warnings);
  for (const auto& w : warnings) err << "warning: " << path << ": " << w << '\n';
  return c;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  return f;
}

StateVector start_state(const PowerNetwork& net, double alpha, bool flat) {
  return flat ? net.flat_start() : net.assemble_state(alpha);
}

struct SolveArgs {
  std::string case_path;
  std::string method;
  SolverOverrides overrides;
  double alpha = 1.0;
  bool flat = false;
  bool trace_states = false;
  std::string out_dir = ".";
};

int cmd_solve(const SolveArgs& a, std::ostream& out, std::ostream& err) {
  const Method method = to_method(a.method);
  const PowerNetwork net(load_case(a.case_path, err));
  SolverOverrides o = a.overrides;
  o.record_states = a.trace_states;
  const SolverReport rep = solve(net, start_state(net, a.alpha, a.flat), o.apply(method));

  {
    auto f = open_output(a.out_dir, "trace.csv");
    write_trace_csv(rep, f);
  }
  if (a.trace_states) {
    auto f = open_output(a.out_dir, "states.csv");
    write_state_trace_csv(rep, *net.state_index(), f);
  }
  if (rep.converged()) {
    const auto solution = net.back_substitute(rep.final_state.values);
    auto f = open_output(a.out_dir, "solution.csv");
    write_solution(net.case_data(), solution, f);
  }

  out << "case:             " << net.case_data().name << " (" << net.bus_count() << " buses)\n";
  out << "method:           " << method_label(method) << '\n';
  out << "verdict:          " << verdict_name(rep.verdict) << '\n';
  out << "outer iterations: " << rep.outer_iterations << '\n';
  if (is_bem(method)) out << "inner iterations: " << rep.inner_iterations << '\n';
  out << "wall time [s]:    " << rep.wall_seconds << '\n';
  if (!rep.iterations.empty()) {
    out << "final residual:   " << rep.iterations.back().residual_norm << '\n';
  }
  if (!rep.message.empty()) out << "note:             " << rep.message << '\n';
  return exit_code(rep.verdict);
}

struct CompareArgs {
  std::string case_path;
  std::vector<std::string> methods;
  SolverOverrides overrides;
  double alpha = 1.0;
  bool flat = false;
  std::string out_dir;
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<Method> methods = to_methods(a.methods);
  const PowerNetwork net(load_case(a.case_path, err));
  const Comparison cmp =
      compare_methods(net, start_state(net, a.alpha, a.flat), methods, a.overrides);
  write_comparison_table(cmp, out);
  if (cmp.all_converged) {
    out << (cmp.states_agree ? "all converged states agree within 1e-6\n"
                             : "converged states DISAGREE beyond 1e-6\n");
  }
  if (!a.out_dir.empty()) {
    auto f = open_output(a.out_dir, "compare.csv");
    f << "method,verdict,outer,inner,wall_seconds,deviation\n";
    for (const auto& r : cmp.rows) {
      f << method_name(r.method) << ',' << verdict_name(r.verdict) << ',' << r.outer << ','
        << r.inner << ',' << r.wall_seconds << ',';
      if (r.deviation) f << *r.deviation;
      f << '\n';
    }
  }
  return cmp.all_converged && cmp.states_agree ? 0 : 1;
}

struct SweepArgs {
  std::string case_path = QSSPF_DEFAULT_CASE;
  std::vector<std::string> methods;
  SweepConfig cfg;
  std::string out_dir = ".";
};

int cmd_sweep(SweepArgs a, std::ostream& out, std::ostream& err) {
  a.cfg.methods = to_methods(a.methods);
  const PowerNetwork net(load_case(a.case_path, err));
  const SweepResult result = run_sweep(net, a.cfg);
  write_sweep_outputs(result, a.out_dir);

  out << "seed " << result.seed << ", " << result.alphas.size() << " samples of alpha in ("
      << a.cfg.alpha_lo << ", " << a.cfg.alpha_hi << "]\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %14s %10s %6s %11s\n", "Method", "Convergence [%]",
                "max alpha", "runs", "stragglers");
  out << line;
  for (const auto& s : result.summaries) {
    std::snprintf(line, sizeof line, "%-12s %14.2f %10s %6d %11zu\n",
                  std::string(method_label(s.method)).c_str(), s.converged_pct,
                  s.max_alpha ? std::to_string(*s.max_alpha).c_str() : "--", s.total_runs,
                  s.stragglers.size());
    out << line;
  }
  return 0;
}

struct RegionArgs {
  std::string scheme;
  std::string grid = "0.05:0.05:3";
  std::optional<double> eta;
  std::optional<double> eps_res;
  std::string out_dir;
};

int cmd_region(const RegionArgs& a, std::ostream& out, std::ostream&) {
  PencilSpec spec;
  if (a.scheme == "fem") {
    spec.scheme = Scheme::FEM;
  } else if (a.scheme == "bem") {
    spec.scheme = Scheme::BEM;
  } else {
    throw UsageError("unknown scheme '" + a.scheme + "'; expected fem or bem");
  }
  if (a.eta || a.eps_res) {
    if (spec.scheme == Scheme::BEM) throw UsageError("--eta/--eps-res apply to fem only");
    spec.distortion = Distortion{a.eta.value_or(0.0), a.eps_res.value_or(0.0)};
  }
  std::vector<double> grid;
  try {
    grid = parse_grid(a.grid);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
  const PencilSpectrum spectrum = region_scan(spec, grid);
  if (a.out_dir.empty()) {
    write_region_csv(spectrum, out);
    return 0;
  }
  auto f = open_output(a.out_dir, "region_" + a.scheme + ".csv");
  write_region_csv(spectrum, f);
  const StabilityInterval bound = stability_bound(spec);
  if (bound.empty) {
    out << "no positive step is locally stable\n";
  } else {
    out << "locally stable for " << bound.lo << " < h < "
        << (bound.hi ? std::to_string(*bound.hi) : std::string("inf")) << '\n';
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Newton-flow power flow solvers with quantized-state step control"};
  app.name("qsspf");
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one case with one method");
  solve_cmd->add_option("--case", solve_args.case_path, "MATPOWER case file")->required();
  solve_cmd->add_option("--method", solve_args.method, "One of: " + method_list())->required();
  solve_cmd->add_option("--alpha", solve_args.alpha, "Initial angle scale factor");
  solve_cmd->add_flag("--flat-start", solve_args.flat, "Start from a flat voltage profile");
  solve_cmd->add_flag("--trace-states", solve_args.trace_states, "Also write states.csv");
  solve_cmd->add_option("--out-dir", solve_args.out_dir, "Output directory");
  add_overrides(solve_cmd, solve_args.overrides);

  CompareArgs compare_args;
  auto* compare_cmd = app.add_subcommand("compare", "Run several methods on one case");
  compare_cmd->add_option("--case", compare_args.case_path, "MATPOWER case file")->required();
  compare_cmd->add_option("--method", compare_args.methods, "Methods (default: all)");
  compare_cmd->add_option("--alpha", compare_args.alpha, "Initial angle scale factor");
  compare_cmd->add_flag("--flat-start", compare_args.flat, "Start from a flat voltage profile");
  compare_cmd->add_option("--out-dir", compare_args.out_dir, "Write compare.csv here");
  add_overrides(compare_cmd, compare_args.overrides);

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Initial-angle scaling robustness sweep");
  sweep_cmd->add_option("--case", sweep_args.case_path, "MATPOWER case file")
      ->capture_default_str();
  sweep_cmd->add_option("--method", sweep_args.methods, "Methods (default: all)");
  sweep_cmd->add_option("--alpha-lo", sweep_args.cfg.alpha_lo, "Lower alpha bound (exclusive)")
      ->capture_default_str();
  sweep_cmd->add_option("--alpha-hi", sweep_args.cfg.alpha_hi, "Upper alpha bound")
      ->capture_default_str();
  sweep_cmd->add_option("--samples", sweep_args.cfg.samples, "Number of alpha samples")
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sweep_args.cfg.seed, "Sampling seed")->capture_default_str();
  sweep_cmd->add_flag("--alpha-grid", sweep_args.cfg.even_grid,
                      "Evenly spaced alphas instead of random sampling");
  sweep_cmd->add_flag("--allow-low-alpha", sweep_args.cfg.allow_alpha_below_one,
                      "Permit alpha-lo below 1");
  sweep_cmd->add_option("--jobs", sweep_args.cfg.jobs, "Parallel solves")->capture_default_str();
  sweep_cmd->add_option("--out-dir", sweep_args.out_dir, "Output directory");
  add_overrides(sweep_cmd, sweep_args.cfg.overrides);

  RegionArgs region_args;
  auto* region_cmd = app.add_subcommand("region", "Local convergence region of FEM/BEM");
  region_cmd->add_option("--scheme", region_args.scheme, "fem or bem")->required();
  region_cmd->add_option("--grid", region_args.grid, "lo:step:hi or comma list")
      ->capture_default_str();
  region_cmd->add_option("--eta", region_args.eta, "Factorization imprecision (fem)");
  region_cmd->add_option("--eps-res", region_args.eps_res, "Accumulated residual error (fem)");
  region_cmd->add_option("--out-dir", region_args.out_dir, "Write region_<scheme>.csv here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageExitCode;
  }

  try {
    if (*solve_cmd) return cmd_solve(solve_args, out, err);
    if (*compare_cmd) return cmd_compare(compare_args, out, err);
    if (*sweep_cmd) return cmd_sweep(sweep_args, out, err);
    if (*region_cmd) return cmd_region(region_args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << app.help() << '\n';
    return kUsageExitCode;
  } catch (const CaseParseError& e) {
    err << "error: parse failed: " << e.what() << '\n';
    return kUsageExitCode;
  } catch (const CaseValidationError& e) {
    err << "error: invalid case: " << e.what() << '\n';
    return kUsageExitCode;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageExitCode;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageExitCode;
  }
  return kUsageExitCode;
}

}  // namespace qsspf::cli
