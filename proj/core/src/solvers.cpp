#include "qsspf/solvers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace qsspf {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Shared bookkeeping for the outer loop of every method: trace records,
// convergence and divergence tests, timing.
class OuterLoop {
 public:
  OuterLoop(const SolverConfig& cfg, const FlowProblem& problem, const Vector& y0)
      : cfg_(cfg), start_(std::chrono::steady_clock::now()) {
    report_.method = cfg.method;
    report_.final_state.index = problem.state_index();
    report_.final_state.values = y0;
    if (cfg.record_states) report_.states.push_back(y0);
  }

  // Records iteration `rec` that moved the state to `y`. Returns true when
  // the loop must stop.
  bool record(const IterationRecord& rec, const Vector& y) {
    report_.iterations.push_back(rec);
    report_.outer_iterations += 1;
    report_.inner_iterations += rec.inner_iters;
    report_.final_state.values = y;
    if (cfg_.record_states) report_.states.push_back(y);

    if (!y.allFinite() || !std::isfinite(rec.residual_norm)) {
      return fail(Verdict::Diverged, rec.k, "non-finite state or residual");
    }
    if (rec.residual_norm > cfg_.divergence_threshold) {
      return fail(Verdict::Diverged, rec.k, "residual norm exceeded divergence threshold");
    }
    if (rec.state_delta_norm < cfg_.outer_tol && rec.residual_norm < cfg_.residual_tol) {
      report_.verdict = Verdict::Converged;
      decided_ = true;
      return true;
    }
    return false;
  }

  bool fail(Verdict v, int k, std::string message) {
    report_.verdict = v;
    report_.failed_iteration = k;
    report_.message = std::move(message);
    decided_ = true;
    return true;
  }

  SolverReport finish() {
    if (!decided_) {
      report_.verdict = Verdict::IterationLimit;
      report_.message = "outer iteration limit reached";
    }
    report_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return std::move(report_);
  }

 private:
  const SolverConfig& cfg_;
  std::chrono::steady_clock::time_point start_;
  SolverReport report_;
  bool decided_ = false;
};

std::optional<double> maybe_condition(const SolverConfig& cfg, const Factorization& f,
                                      const SparseMatrix& a) {
  if (!cfg.estimate_condition) return std::nullopt;
  return condition_estimate(f, a);
}

// Newton direction g_y(y)^-1 g(y).
Vector newton_direction(const FlowProblem& problem, const Vector& y) {
  SparseMatrix jac;
  problem.jacobian(y, jac);
  return factorize(jac).solve(problem.residual(y));
}

double rk4_next_step(double h, double error, const SolverConfig& cfg) {
  double factor = 4.0;
  if (!std::isfinite(error)) {
    factor = 0.25;
  } else if (error > 0.0) {
    factor = std::clamp(0.9 * std::pow(cfg.rk4_tol / error, 0.2), 0.25, 4.0);
  }
  return std::min(h * factor, cfg.h_max);
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::FEM: return "fem";
    case Method::FDPF: return "fdpf";
    case Method::RK4: return "rk4";
    case Method::BEM_J1: return "bem-j1";
    case Method::BEM_J: return "bem-j";
    case Method::BEM_J1_QSS: return "bem-j1-qss";
    case Method::BEM_J_QSS: return "bem-j-qss";
  }
  return "?";
}

std::string_view method_label(Method m) {
  switch (m) {
    case Method::FEM: return "FEM";
    case Method::FDPF: return "FDPF";
    case Method::RK4: return "RK4";
    case Method::BEM_J1: return "BEM-J1";
    case Method::BEM_J: return "BEM-J";
    case Method::BEM_J1_QSS: return "BEM-J1-QSS";
    case Method::BEM_J_QSS: return "BEM-J-QSS";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  const std::string key = lower(name);
  for (const Method m : kAllMethods) {
    if (key == method_name(m)) return m;
  }
  return std::nullopt;
}

bool is_bem(Method m) {
  return m == Method::BEM_J1 || m == Method::BEM_J || m == Method::BEM_J1_QSS ||
         m == Method::BEM_J_QSS;
}

bool is_qss(Method m) { return m == Method::BEM_J1_QSS || m == Method::BEM_J_QSS; }

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "Converged";
    case Verdict::Diverged: return "Diverged";
    case Verdict::IterationLimit: return "IterationLimit";
    case Verdict::SingularJacobian: return "SingularJacobian";
  }
  return "?";
}

SolverConfig SolverConfig::defaults_for(Method m) {
  SolverConfig cfg;
  cfg.method = m;
  if (m == Method::BEM_J1 || m == Method::BEM_J1_QSS) cfg.max_inner = 1;
  return cfg;
}

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid solver config: ") + what);
  };
  require(h0 > 0.0, "h0 must be positive");
  require(quantum > 0.0, "quantum must be positive");
  require(h_max >= h0, "h_max must be at least h0");
  require(max_inner >= 1, "max_inner must be at least 1");
  require(max_outer >= 1, "max_outer must be at least 1");
  require(outer_tol > 0.0 && residual_tol > 0.0 && inner_tol > 0.0 && rk4_tol > 0.0,
          "tolerances must be positive");
  require(divergence_threshold > 0.0, "divergence threshold must be positive");
  require(max_rejections >= 0, "max_rejections must be nonnegative");
}

double qss_step(std::span<const double> derivative, double quantum, double h_max) {
  // min_j quantum/|f_j| == quantum / max_j |f_j|
  double largest = 0.0;
  for (const double f : derivative) largest = std::max(largest, std::abs(f));
  if (largest * h_max <= quantum) return h_max;
  return std::min(quantum / largest, h_max);
}

double heuristic_step(double prev_h, int inner_iters, int i_max, double h_max) {
  if (inner_iters <= 3) return std::min(2.0 * prev_h, h_max);
  const int slow = (3 * i_max + 3) / 4;
  if (inner_iters >= slow) return prev_h / 2.0;
  return prev_h;
}

QuantizerUpdate quantizer_update(std::span<const double> y, std::span<const double> q,
                                 double quantum) {
  if (y.size() != q.size()) throw std::invalid_argument("quantizer_update: length mismatch");
  QuantizerUpdate out;
  out.q.assign(q.begin(), q.end());
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (std::abs(y[j] - q[j]) >= quantum) {
      out.q[j] = y[j];
      out.events.push_back(j);
    }
  }
  return out;
}

Vector fem_step(const FlowProblem& problem, const Vector& y, double h) {
  return y - h * newton_direction(problem, y);
}

Vector bem_single_inner_step(const FlowProblem& problem, const Vector& y, double h) {
  // phi(y_k) = h g(y_k) and phi_y ~ (1 + h) g_y(y_k)
  SparseMatrix jac;
  problem.jacobian(y, jac);
  const Vector phi = h * problem.residual(y);
  return y - factorize(jac).solve(phi) / (1.0 + h);
}

Vector rk4_step(const FlowProblem& problem, const Vector& y, double h) {
  auto f = [&](const Vector& x) -> Vector { return -newton_direction(problem, x); };
  const Vector k1 = f(y);
  const Vector k2 = f(y + 0.5 * h * k1);
  const Vector k3 = f(y + 0.5 * h * k2);
  const Vector k4 = f(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

StepDoubling rk4_step_doubling(const FlowProblem& problem, const Vector& y, double h) {
  StepDoubling out;
  out.full = rk4_step(problem, y, h);
  out.halves = rk4_step(problem, rk4_step(problem, y, 0.5 * h), 0.5 * h);
  out.error = inf_norm(out.full - out.halves) / 15.0;
  const double step = inf_norm(out.halves - y);
  out.relative_error = step > 0.0 ? out.error / step : out.error;
  return out;
}

SolverReport solve_fem(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg) {
  cfg.validate();
  OuterLoop loop(cfg, problem, y0);
  Vector y = y0;
  Vector g = problem.residual(y);
  SparseMatrix jac;
  for (int k = 1; k <= cfg.max_outer; ++k) {
    problem.jacobian(y, jac);
    IterationRecord rec;
    rec.k = k;
    rec.h = cfg.h0;
    try {
      const Factorization f = factorize(jac);
      rec.condition_estimate = maybe_condition(cfg, f, jac);
      const Vector dy = -cfg.h0 * f.solve(g);
      y += dy;
      rec.state_delta_norm = inf_norm(dy);
    } catch (const SingularMatrixError& e) {
      loop.fail(Verdict::SingularJacobian, k, e.what());
      break;
    }
    g = problem.residual(y);
    rec.residual_norm = inf_norm(g);
    if (loop.record(rec, y)) break;
  }
  return loop.finish();
}

SolverReport solve_rk4(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg) {
  cfg.validate();
  OuterLoop loop(cfg, problem, y0);
  Vector y = y0;
  double h = cfg.h0;
  SparseMatrix jac;
  for (int k = 1; k <= cfg.max_outer; ++k) {
    IterationRecord rec;
    rec.k = k;
    StepDoubling step;
    try {
      if (cfg.estimate_condition) {
        problem.jacobian(y, jac);
        rec.condition_estimate = maybe_condition(cfg, factorize(jac), jac);
      }
      while (true) {
        step = rk4_step_doubling(problem, y, h);
        if (std::isfinite(step.relative_error) && step.relative_error <= cfg.rk4_tol) break;
        if (++rec.rejections > cfg.max_rejections) break;
        h = rk4_next_step(h, step.relative_error, cfg);
      }
    } catch (const SingularMatrixError& e) {
      loop.fail(Verdict::SingularJacobian, k, e.what());
      break;
    }
    if (rec.rejections > cfg.max_rejections) {
      loop.fail(Verdict::Diverged, k, "step rejected too many times");
      break;
    }
    rec.h = h;
    rec.state_delta_norm = inf_norm(step.halves - y);
    y = step.halves;
    rec.residual_norm = inf_norm(problem.residual(y));
    h = rk4_next_step(h, step.relative_error, cfg);
    if (loop.record(rec, y)) break;
  }
  return loop.finish();
}

namespace {

struct InnerResult {
  bool ok = false;
  Vector z;
  Vector g;
  int iterations = 0;
};

// Solves phi(z) = g_y(z)(z - y) + h g(z) = 0 starting from z = y. The first
// iteration reuses the factorization of g_y(y) through `newton`, which
// holds g_y(y)^-1 g(y).
InnerResult bem_inner(const FlowProblem& problem, const Vector& y, const Vector& newton,
                      double h, int i_max, double inner_tol) {
  InnerResult out;
  out.z = y - (h / (1.0 + h)) * newton;
  out.iterations = 1;
  if (i_max == 1) {
    out.g = problem.residual(out.z);
    out.ok = true;
    return out;
  }
  SparseMatrix jac;
  while (true) {
    out.g = problem.residual(out.z);
    problem.jacobian(out.z, jac);
    const Vector phi = jac * (out.z - y) + h * out.g;
    if (!phi.allFinite()) return out;
    if (inf_norm(phi) < inner_tol) {
      out.ok = true;
      return out;
    }
    if (out.iterations >= i_max) return out;
    try {
      out.z -= factorize(jac).solve(phi) / (1.0 + h);
    } catch (const SingularMatrixError&) {
      return out;
    }
    ++out.iterations;
  }
}

}  // namespace

SolverReport solve_bem(const FlowProblem& problem, const Vector& y0, const SolverConfig& cfg) {
  cfg.validate();
  if (!is_bem(cfg.method)) throw std::invalid_argument("solve_bem: method is not a BEM variant");
  const bool qss = is_qss(cfg.method);
  const bool single_inner = cfg.method == Method::BEM_J1 || cfg.method == Method::BEM_J1_QSS;
  const int i_max = single_inner ? 1 : cfg.max_inner;

  OuterLoop loop(cfg, problem, y0);
  Vector y = y0;
  Vector g = problem.residual(y);
  std::vector<double> quantized(y0.data(), y0.data() + y0.size());
  double h = cfg.h0;
  SparseMatrix jac;

  for (int k = 1; k <= cfg.max_outer; ++k) {
    IterationRecord rec;
    rec.k = k;
    Vector newton;
    problem.jacobian(y, jac);
    try {
      const Factorization f = factorize(jac);
      rec.condition_estimate = maybe_condition(cfg, f, jac);
      newton = f.solve(g);
    } catch (const SingularMatrixError& e) {
      loop.fail(Verdict::SingularJacobian, k, e.what());
      break;
    }
    if (qss) {
      // f(y_k) = -g_y^-1 g drives the per-variable quantization times.
      rec.derivative_norm = inf_norm(newton);
      if (k > 1) h = qss_step(std::span<const double>(newton.data(), newton.size()),
                              cfg.quantum, cfg.h_max);
    }

    InnerResult inner;
    while (true) {
      inner = bem_inner(problem, y, newton, h, i_max, cfg.inner_tol);
      rec.inner_iters += inner.iterations;
      if (inner.ok || rec.rejections >= cfg.max_rejections) break;
      ++rec.rejections;
      h /= 2.0;
    }
    if (!inner.ok) {
      loop.fail(Verdict::Diverged, k, "inner loop failed after step rejections");
      break;
    }

    rec.h = h;
    rec.state_delta_norm = inf_norm(inner.z - y);
    rec.residual_norm = inf_norm(inner.g);
    if (qss) {
      auto update = quantizer_update(std::span<const double>(inner.z.data(), inner.z.size()),
                                     quantized, cfg.quantum);
      rec.quantization_events = static_cast<int>(update.events.size());
      quantized = std::move(update.q);
    }
    y = std::move(inner.z);
    g = std::move(inner.g);
    if (loop.record(rec, y)) break;

    if (cfg.method == Method::BEM_J && !cfg.fixed_step) {
      h = heuristic_step(h, inner.iterations, i_max, cfg.h_max);
    }
  }
  return loop.finish();
}

SolverReport solve_fdpf(const PowerNetwork& network, const Vector& y0, const SolverConfig& cfg) {
  cfg.validate();
  OuterLoop loop(cfg, network, y0);
  const auto na = static_cast<Eigen::Index>(network.angle_positions().size());
  const auto nm = static_cast<Eigen::Index>(network.mag_positions().size());

  std::optional<Factorization> fp, fpp;
  try {
    const DecoupledMatrices b = network.decoupled_matrices();
    fp = factorize(b.b_prime);
    fpp = factorize(b.b_double_prime);
  } catch (const SingularMatrixError& e) {
    loop.fail(Verdict::SingularJacobian, 0, std::string("decoupled matrix: ") + e.what());
    return loop.finish();
  }

  auto mismatch = [&](const Vector& y, BusVoltages& v) {
    v = network.voltages(y);
    return ComplexVector(network.injections(v) - network.scheduled());
  };

  Vector y = y0;
  SparseMatrix jac;
  for (int k = 1; k <= cfg.max_outer; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.h = cfg.h0;
    if (cfg.estimate_condition) {
      network.jacobian(y, jac);
      try {
        rec.condition_estimate = maybe_condition(cfg, factorize(jac), jac);
      } catch (const SingularMatrixError&) {
        rec.condition_estimate = std::numeric_limits<double>::infinity();
      }
    }
    const Vector y_prev = y;
    BusVoltages v;

    // P-theta half iteration
    ComplexVector mis = mismatch(y, v);
    Vector rhs(na);
    for (Eigen::Index r = 0; r < na; ++r) {
      const auto p = static_cast<Eigen::Index>(network.angle_positions()[static_cast<std::size_t>(r)]);
      rhs[r] = mis[p].real() / v.v_mag[p];
    }
    y.head(na) -= cfg.h0 * fp->solve(rhs);

    // Q-V half iteration
    if (nm > 0) {
      mis = mismatch(y, v);
      rhs.resize(nm);
      for (Eigen::Index r = 0; r < nm; ++r) {
        const auto p = static_cast<Eigen::Index>(network.mag_positions()[static_cast<std::size_t>(r)]);
        rhs[r] = mis[p].imag() / v.v_mag[p];
      }
      y.tail(nm) -= cfg.h0 * fpp->solve(rhs);
    }

    rec.state_delta_norm = inf_norm(y - y_prev);
    rec.residual_norm = inf_norm(network.residual(y));
    if (loop.record(rec, y)) break;
  }
  return loop.finish();
}

SolverReport solve(const PowerNetwork& network, const StateVector& y0, const SolverConfig& cfg) {
  if (static_cast<std::size_t>(y0.values.size()) != network.dimension()) {
    throw std::invalid_argument("initial state dimension does not match the network");
  }
  switch (cfg.method) {
    case Method::FEM: return solve_fem(network, y0.values, cfg);
    case Method::FDPF: return solve_fdpf(network, y0.values, cfg);
    case Method::RK4: return solve_rk4(network, y0.values, cfg);
    case Method::BEM_J1:
    case Method::BEM_J:
    case Method::BEM_J1_QSS:
    case Method::BEM_J_QSS: return solve_bem(network, y0.values, cfg);
  }
  throw std::invalid_argument("unknown method");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_trace_csv(const SolverReport& report, std::ostream& sink) {
  sink << "k,h_k,inner_iters,residual_norm,state_delta_norm,cond_est\n";
  for (const auto& r : report.iterations) {
    sink << r.k << ',' << num(r.h) << ',' << r.inner_iters << ',' << num(r.residual_norm) << ','
         << num(r.state_delta_norm) << ',';
    if (r.condition_estimate) sink << num(*r.condition_estimate);
    sink << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write trace");
}

void write_state_trace_csv(const SolverReport& report, const StateIndex& index,
                           std::ostream& sink) {
  sink << 'k';
  for (const int id : index.angle_vars) sink << ",theta_" << id;
  for (const int id : index.mag_vars) sink << ",vm_" << id;
  sink << '\n';
  for (std::size_t k = 0; k < report.states.size(); ++k) {
    sink << k;
    for (Eigen::Index j = 0; j < report.states[k].size(); ++j) sink << ',' << num(report.states[k][j]);
    sink << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write state trace");
}

}  // namespace qsspf
