#pragma once

// Discretizations of the Newton flow g_y(y) y' = -g(y).
//
//   FEM         forward Euler, fixed step (h = 1 is Newton-Raphson)
//   FDPF        fast decoupled load flow, XB scheme
//   RK4         classical Runge-Kutta, step-doubling error control
//   BEM-J1      backward Euler, one inner Newton iteration, fixed step
//   BEM-J       backward Euler, inner loop to tolerance, heuristic step
//   BEM-J1-QSS  BEM-J1 with the quantized-state step rule
//   BEM-J-QSS   BEM-J with the quantized-state step rule
//
// The BEM inner loop approximates the Jacobian of
// phi(z) = g_y(z) (z - y_k) + h g(z) by (1 + h) g_y(z), dropping the
// Hessian term.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsspf/flow_problem.hpp"
#include "qsspf/network.hpp"

namespace qsspf {

enum class Method { FEM, FDPF, RK4, BEM_J1, BEM_J, BEM_J1_QSS, BEM_J_QSS };

inline constexpr Method kAllMethods[] = {Method::FEM,    Method::FDPF,       Method::RK4,
                                         Method::BEM_J1, Method::BEM_J,      Method::BEM_J1_QSS,
                                         Method::BEM_J_QSS};

/// Lower-case CLI name: fem, fdpf, rk4, bem-j1, bem-j, bem-j1-qss, bem-j-qss.
std::string_view method_name(Method m);
/// Display name as used in tables, e.g. "BEM-J1-QSS".
std::string_view method_label(Method m);
/// Accepts either spelling, case-insensitively.
std::optional<Method> parse_method(std::string_view name);

bool is_bem(Method m);
bool is_qss(Method m);

struct SolverConfig {
  Method method = Method::FEM;
  double h0 = 1.0;
  double quantum = 20.0;
  double h_max = 8000.0;
  double outer_tol = 1e-8;     // on ||y_{k+1} - y_k||_inf
  double residual_tol = 1e-8;  // on ||g(y_{k+1})||_inf
  int max_outer = 200;
  int max_inner = 20;
  double inner_tol = 1e-8;
  double divergence_threshold = 1e6;
  double rk4_tol = 1e-3;
  int max_rejections = 8;
  bool fixed_step = false;  // BEM-J: disable the heuristic controller
  bool estimate_condition = false;
  bool record_states = false;

  /// Defaults for `m`; the BEM-J1 variants get max_inner = 1.
  static SolverConfig defaults_for(Method m);

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct IterationRecord {
  int k = 0;
  double h = 0.0;
  int inner_iters = 0;
  double residual_norm = 0.0;
  double state_delta_norm = 0.0;
  std::optional<double> condition_estimate;
  std::optional<double> derivative_norm;  // max |f_j| fed to the QSS rule
  int quantization_events = 0;
  int rejections = 0;
};

enum class Verdict { Converged, Diverged, IterationLimit, SingularJacobian };

std::string_view verdict_name(Verdict v);

struct SolverReport {
  Method method = Method::FEM;
  Verdict verdict = Verdict::IterationLimit;
  std::vector<IterationRecord> iterations;
  StateVector final_state;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double wall_seconds = 0.0;
  /// Outer iteration at which divergence or singularity was detected.
  std::optional<int> failed_iteration;
  std::string message;
  /// y_0, y_1, ... when SolverConfig::record_states is set.
  std::vector<Vector> states;

  bool converged() const noexcept { return verdict == Verdict::Converged; }
};

SolverReport solve_fem(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg);
SolverReport solve_rk4(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg);
SolverReport solve_bem(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg);
SolverReport solve_fdpf(const PowerNetwork& network, const Vector& y0, const SolverConfig& cfg);

/// Dispatches on cfg.method.
SolverReport solve(const PowerNetwork& network, const StateVector& y0, const SolverConfig& cfg);

/// Quantized-state step: min_j (quantum / |f_j|), clamped to (0, h_max].
double qss_step(std::span<const double> derivative, double quantum, double h_max);

/// Inner-loop driven step update: double when the inner loop took at most
/// 3 iterations, halve when it took at least ceil(3 i_max / 4), else keep.
double heuristic_step(double prev_h, int inner_iters, int i_max, double h_max);

struct QuantizerUpdate {
  std::vector<double> q;
  std::vector<std::size_t> events;
};

/// q_j <- y_j wherever |y_j - q_j| >= quantum.
QuantizerUpdate quantizer_update(std::span<const double> y, std::span<const double> q,
                                 double quantum);

/// One classical RK4 step of y' = -g_y(y)^-1 g(y). Throws
/// SingularMatrixError if any stage Jacobian is singular.
Vector rk4_step(const FlowProblem& problem, const Vector& y, double h);

struct StepDoubling {
  Vector full;    // one step of size h
  Vector halves;  // two steps of size h/2
  double error = 0.0;  // ||full - halves||_inf / 15
  /// error / ||halves - y||_inf; the RK4 controller keeps this below rk4_tol.
  double relative_error = 0.0;
};

StepDoubling rk4_step_doubling(const FlowProblem& problem, const Vector& y, double h);

/// One inner BEM iteration from y_k with the Hessian neglected; equals the
/// forward Euler step with step h / (1 + h).
Vector bem_single_inner_step(const FlowProblem& problem, const Vector& y, double h);

/// Forward Euler step y - h g_y(y)^-1 g(y).
Vector fem_step(const FlowProblem& problem, const Vector& y, double h);

/// CSV `k,h_k,inner_iters,residual_norm,state_delta_norm,cond_est`.
void write_trace_csv(const SolverReport& report, std::ostream& sink);

/// CSV of recorded states: `k` followed by one column per state variable
/// named `theta_<bus>` / `vm_<bus>`.
void write_state_trace_csv(const SolverReport& report, const StateIndex& index,
                           std::ostream& sink);

}  // namespace qsspf
