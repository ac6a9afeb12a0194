#pragma once

// Experiment driver: method comparisons on one start point and the
// angle-scaling robustness sweep.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "qsspf/network.hpp"
#include "qsspf/solvers.hpp"

namespace qsspf {

/// Command-line tunables layered over SolverConfig::defaults_for().
struct SolverOverrides {
  std::optional<double> h0;
  std::optional<double> quantum;
  std::optional<double> h_max;
  std::optional<double> tol;  // both outer and residual tolerance
  std::optional<int> max_inner;
  std::optional<int> max_outer;
  bool fixed_step = false;
  bool estimate_condition = false;
  bool record_states = false;

  SolverConfig apply(Method m) const;
};

/// Process exit status for a verdict: 0 when converged, 1 otherwise.
/// Input and usage errors use 2.
int exit_code(Verdict v);
inline constexpr int kUsageExitCode = 2;

inline constexpr double kAgreementTol = 1e-6;

struct CompareRow {
  Method method = Method::FEM;
  Verdict verdict = Verdict::IterationLimit;
  int outer = 0;
  int inner = 0;
  double wall_seconds = 0.0;
  /// ||y - y_ref||_inf against the first converged row; empty if this row
  /// or every row failed.
  std::optional<double> deviation;
};

struct Comparison {
  std::vector<CompareRow> rows;
  std::vector<SolverReport> reports;
  bool all_converged = false;
  bool states_agree = false;
};

Comparison compare_methods(const PowerNetwork& network, const StateVector& y0,
                           std::span<const Method> methods, const SolverOverrides& overrides);

/// Text table with columns Method, Main loop, Inner loop, CPU time [s],
/// Verdict; single-loop methods print "--" for the inner count.
void write_comparison_table(const Comparison& cmp, std::ostream& sink);

struct SweepConfig {
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  double alpha_lo = 1.0;  // exclusive unless equal to alpha_hi
  double alpha_hi = 2.0;
  int samples = 500;
  std::uint64_t seed = 1;
  bool even_grid = false;
  bool allow_alpha_below_one = false;
  int jobs = 1;
  SolverOverrides overrides;

  void validate() const;
};

/// Angle scale factors in (lo, hi]. Random sampling uses a 64-bit Mersenne
/// Twister and a fixed 53-bit mapping, so the stream is identical on every
/// platform. With `even_grid`, alpha_i = lo + (i + 1)(hi - lo)/n.
std::vector<double> sample_alphas(double lo, double hi, int n, std::uint64_t seed,
                                  bool even_grid);

struct SweepRun {
  int sample = 0;
  double alpha = 0.0;
  Method method = Method::FEM;
  Verdict verdict = Verdict::IterationLimit;
  int outer = 0;
  int inner = 0;
  double wall_seconds = 0.0;
  /// Converged and within kAgreementTol of the sample's reference state
  /// (the first converged method in list order).
  bool agrees = false;
};

struct MethodSummary {
  Method method = Method::FEM;
  int total_runs = 0;
  int converged = 0;
  double converged_pct = 0.0;
  std::optional<double> max_alpha;
  /// Sampled alphas below max_alpha that did not converge.
  std::vector<double> stragglers;
};

struct SweepResult {
  std::uint64_t seed = 0;
  std::vector<double> alphas;
  std::vector<SweepRun> runs;  // sample-major, methods in config order
  std::vector<MethodSummary> summaries;

  const MethodSummary& summary(Method m) const;
};

/// Runs every (alpha, method) pair. Individual failures are recorded, never
/// thrown. Results do not depend on `jobs`.
SweepResult run_sweep(const PowerNetwork& network, const SweepConfig& cfg);

/// `seed,sample,alpha,method,verdict,outer,inner,agrees`
void write_sweep_runs_csv(const SweepResult& result, std::ostream& sink);
/// `method,converged_pct,max_alpha,total_runs`
void write_sweep_summary_csv(const SweepResult& result, std::ostream& sink);
/// `sample,alpha,method,wall_seconds` (not deterministic)
void write_sweep_timing_csv(const SweepResult& result, std::ostream& sink);

/// Writes sweep_runs.csv, sweep_summary.csv and sweep_timing.csv.
void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir);

}  // namespace qsspf
