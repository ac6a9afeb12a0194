// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qsspf/analysis.hpp"
#include "qsspf/harness.hpp"
#include "qsspf/network.hpp"
#include "qsspf/solvers.hpp"
#include "scalar_flow.hpp"
#include "support.hpp"

using namespace qsspf;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double inf_norm(const Vector& v) { return v.lpNorm<Eigen::Infinity>(); }

Vector random_state(const PowerNetwork& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-0.6, 0.6);
  std::uniform_real_distribution<double> mag(0.85, 1.15);
  const auto& idx = *net.state_index();
  Vector y(idx.n());
  for (std::size_t k = 0; k < idx.angle_vars.size(); ++k) y[k] = ang(rng);
  for (std::size_t k = idx.angle_vars.size(); k < idx.n(); ++k) y[k] = mag(rng);
  return y;
}

Outcome fem_stability_bound() {
  Outcome o;
  const testsupport::ScalarFlow scalar(1.0);
  const PowerNetwork two(testsupport::load("case2"));
  const auto sol = solve(two, two.flat_start(), SolverConfig::defaults_for(Method::FEM));
  o.require(sol.converged(), "2-bus reference solve failed");
  Vector near = sol.final_state.values;
  near.array() += 1e-3;

  for (double h : {0.5, 1.0, 1.9, 2.1, 2.5}) {
    const bool expect = h < 2.0;
    auto cfg = SolverConfig::defaults_for(Method::FEM);
    cfg.h0 = h;
    cfg.max_outer = 5000;
    const auto lin = solve_fem(scalar, Vector::Constant(1, 1.0 + 1e-3), cfg);
    const auto net = solve_fem(two, near, cfg);
    const std::string tag = "h=" + fmt("%g", h);
    o.require(lin.converged() == expect, tag + " scalar verdict " + std::string(verdict_name(lin.verdict)));
    o.require(net.converged() == expect, tag + " 2-bus verdict " + std::string(verdict_name(net.verdict)));
    if (!expect) {
      o.require(lin.verdict == Verdict::Diverged, tag + " scalar not Diverged");
      o.require(net.verdict == Verdict::Diverged, tag + " 2-bus not Diverged");
    }
  }
  const double boundary = std::abs(pencil_eigen(PencilSpec{Scheme::FEM, std::nullopt}, 2.0));
  o.require(std::abs(boundary - 1.0) < 1e-12, "|z(2)| = " + fmt("%.17g", boundary));
  if (o.pass) o.detail = "h in {0.5,1,1.9} converge, {2.1,2.5} diverge; |z(2)| = 1";
  return o;
}

Outcome bem_unconditional_stability() {
  Outcome o;
  const testsupport::ScalarFlow scalar(0.0);
  const PowerNetwork two(testsupport::load("case2"));
  double worst = 0.0;
  for (double h : {0.1, 1.0, 10.0, 1000.0, 8000.0}) {
    const double factor = 1.0 / (1.0 + h);
    const double z = pencil_eigen(PencilSpec{Scheme::BEM, std::nullopt}, h).real();
    o.require(z == factor, "pencil eigenvalue mismatch at h=" + fmt("%g", h));
    // One BEM step on y' = -y from y = 1; relative error limited by the
    // rounding of 1 - h/(1+h).
    const double step = bem_single_inner_step(scalar, Vector::Constant(1, 1.0), h)[0];
    worst = std::max(worst, std::abs(step - factor) / factor);

    auto cfg = SolverConfig::defaults_for(Method::BEM_J);
    cfg.h0 = h;
    cfg.fixed_step = true;
    const auto rep = solve_bem(two, two.flat_start().values, cfg);
    o.require(rep.converged(), "2-bus BEM h=" + fmt("%g", h) + " " +
                                   std::string(verdict_name(rep.verdict)));
  }
  o.require(worst < 1e-11, "scalar contraction rel. error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "factor 1/(1+h) (rel. err " + fmt("%.2g", worst) + "), 2-bus converges for all h";
  return o;
}

Outcome distorted_bound() {
  Outcome o;
  const auto b = stability_bound(PencilSpec{Scheme::FEM, Distortion{2.33, -0.7}});
  o.require(!b.empty && b.hi.has_value(), "bound empty or unbounded");
  if (b.hi) {
    o.require(std::abs(*b.hi - 0.6003) <= 1e-3, "upper endpoint " + fmt("%.6f", *b.hi));
    if (o.pass) o.detail = "(" + fmt("%g", b.lo) + ", " + fmt("%.6f", *b.hi) + ")";
  }
  return o;
}

Outcome fem_is_newton() {
  Outcome o;
  double worst = 0.0;
  for (const char* name : {"case2", "case14", "case118"}) {
    const NetworkCase c = testsupport::load(name);
    const PowerNetwork net(c);
    const oracle::DenseFlow ref(c);
    auto cfg = SolverConfig::defaults_for(Method::FEM);
    cfg.record_states = true;
    const StateVector y0 = std::string(name) == "case2" ? net.flat_start() : net.assemble_state();
    const auto rep = solve(net, y0, cfg);
    const auto nr = ref.newton(y0.values, cfg.outer_tol, cfg.max_outer);
    o.require(rep.converged(), std::string(name) + " FEM did not converge");
    o.require(rep.states.size() == nr.size(), std::string(name) + " iteration count differs");
    for (std::size_t k = 0; k < std::min(rep.states.size(), nr.size()); ++k) {
      worst = std::max(worst, inf_norm(rep.states[k] - nr[k]));
    }
  }
  o.require(worst < 1e-12, "max iterate gap " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max iterate gap " + fmt("%.2g", worst) + " on 2/14/118-bus";
  return o;
}

Outcome bem_j1_damping_identity() {
  Outcome o;
  const PowerNetwork net(testsupport::load("case14"));
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (double h : {0.5, 1.0, 4.0}) {
    for (int t = 0; t < 20; ++t) {
      const Vector y = random_state(net, rng);
      worst = std::max(worst,
                       inf_norm(bem_single_inner_step(net, y, h) - fem_step(net, y, h / (1.0 + h))));
    }
  }
  o.require(worst < 1e-12, "max gap " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max gap " + fmt("%.2g", worst) + " over 60 random states";
  return o;
}

Outcome qss_step_rule() {
  Outcome o;
  const double f[] = {2.0, -4.0, 1.0};
  o.require(qss_step(f, 20.0, 8000.0) == 5.0, "qss_step((2,-4,1)) != 5");
  const double zero[] = {0.0, 0.0, 0.0};
  o.require(qss_step(zero, 20.0, 8000.0) == 8000.0, "zero derivative != h_max");
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_real_distribution<double> cdist(1.0, 50.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(10), w(10);
    const double c = cdist(rng);
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = u(rng);
      w[j] = c * v[j];
    }
    const double h = qss_step(v, 20.0, 1e300);
    worst = std::max(worst, std::abs(qss_step(w, 20.0, 1e300) * c - h) / h);
  }
  o.require(worst < 1e-14, "reciprocity rel. error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "examples exact; reciprocity rel. error " + fmt("%.2g", worst);
  return o;
}

Outcome jacobian_correctness() {
  Outcome o;
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (const char* name : testsupport::kBundledCases) {
    const PowerNetwork net(testsupport::load(name));
    for (int t = 0; t < 20; ++t) {
      const Vector y = random_state(net, rng);
      const Eigen::MatrixXd j(net.jacobian(y));
      const Eigen::MatrixXd fd =
          oracle::finite_difference([&](const Vector& v) { return net.residual(v); }, y, 1e-6);
      const double rel = ((j - fd).cwiseAbs().array() / j.cwiseAbs().array().max(1.0)).maxCoeff();
      worst = std::max(worst, rel);
    }
  }
  o.require(worst < 1e-5, "max relative entry error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max relative entry error " + fmt("%.2g", worst) + " (6 cases x 20 states)";
  return o;
}

Outcome cross_solver_agreement() {
  Outcome o;
  double worst_dev = 0.0, worst_res = 0.0;
  for (const char* name : {"case14", "case118"}) {
    const PowerNetwork net(testsupport::load(name));
    const auto cmp = compare_methods(net, net.assemble_state(), kAllMethods, {});
    for (const auto& rep : cmp.reports) {
      o.require(rep.converged(), std::string(name) + " " + std::string(method_label(rep.method)) +
                                     " " + std::string(verdict_name(rep.verdict)));
      if (!rep.converged()) continue;
      worst_res = std::max(worst_res, inf_norm(net.residual(rep.final_state.values)));
      for (const auto& other : cmp.reports) {
        if (other.converged()) {
          worst_dev = std::max(worst_dev, inf_norm(rep.final_state.values - other.final_state.values));
        }
      }
    }
  }
  o.require(worst_dev < 1e-6, "pairwise deviation " + fmt("%.3g", worst_dev));
  o.require(worst_res < 1e-8, "residual " + fmt("%.3g", worst_res));
  if (o.pass) {
    o.detail = "7/7 converge; max pairwise gap " + fmt("%.2g", worst_dev) + ", max residual " +
               fmt("%.2g", worst_res);
  }
  return o;
}

Outcome robustness_ordering() {
  Outcome o;
  const PowerNetwork net(testsupport::load("case118"));
  SweepConfig cfg;
  cfg.samples = 100;
  cfg.seed = 1;
  cfg.jobs = 1;
  const auto res = run_sweep(net, cfg);
  auto pct = [&](Method m) { return res.summary(m).converged_pct; };
  o.require(pct(Method::BEM_J) >= pct(Method::BEM_J1), "BEM-J < BEM-J1");
  o.require(pct(Method::BEM_J1) >= pct(Method::FEM), "BEM-J1 < FEM");
  for (Method ref : {Method::FEM, Method::FDPF, Method::RK4}) {
    o.require(pct(Method::BEM_J_QSS) >= pct(ref),
              "BEM-J-QSS < " + std::string(method_label(ref)));
  }
  std::string table;
  for (const auto& s : res.summaries) {
    if (!table.empty()) table += ' ';
    table += std::string(method_label(s.method)) + "=" + fmt("%.0f", s.converged_pct) + "%";
  }
  o.detail = o.pass ? table : o.detail + " [" + table + "]";
  return o;
}

Outcome qss_step_growth() {
  Outcome o;
  const PowerNetwork net(testsupport::load("case118"));
  const auto rep = solve(net, net.assemble_state(), SolverConfig::defaults_for(Method::BEM_J_QSS));
  o.require(rep.converged(), "BEM-J-QSS did not converge");
  const auto& it = rep.iterations;
  o.require(!it.empty() && it.front().h == 1.0, "initial h != 1");
  if (!it.empty()) {
    o.require(it.back().h > it.front().h, "final h not above initial h");
    const std::size_t n = it.size();
    for (std::size_t k = n >= 3 ? n - 2 : 1; k < n; ++k) {
      o.require(it[k].h >= it[k - 1].h, "h decreases near the end");
    }
    std::string hs;
    for (const auto& r : it) hs += (hs.empty() ? "" : ",") + fmt("%g", r.h);
    if (o.pass) o.detail = "h_k = " + hs;
  }
  return o;
}

Outcome iteration_reduction() {
  Outcome o;
  const PowerNetwork net(testsupport::load("case118"));
  const StateVector y0 = net.assemble_state();
  auto fixed = SolverConfig::defaults_for(Method::BEM_J);
  fixed.fixed_step = true;
  const auto bem_j = solve(net, y0, fixed);
  const auto bem_j_qss = solve(net, y0, SolverConfig::defaults_for(Method::BEM_J_QSS));
  const auto bem_j1 = solve(net, y0, SolverConfig::defaults_for(Method::BEM_J1));
  const auto bem_j1_qss = solve(net, y0, SolverConfig::defaults_for(Method::BEM_J1_QSS));
  for (const auto* r : {&bem_j, &bem_j_qss, &bem_j1, &bem_j1_qss}) {
    o.require(r->converged(), std::string(method_label(r->method)) + " did not converge");
  }
  o.require(bem_j_qss.outer_iterations < bem_j.outer_iterations, "BEM-J-QSS not fewer than BEM-J");
  o.require(bem_j1_qss.outer_iterations < bem_j1.outer_iterations,
            "BEM-J1-QSS not fewer than BEM-J1");
  const std::string counts = "BEM-J(h=1) " + std::to_string(bem_j.outer_iterations) +
                             " vs QSS " + std::to_string(bem_j_qss.outer_iterations) +
                             "; BEM-J1 " + std::to_string(bem_j1.outer_iterations) + " vs QSS " +
                             std::to_string(bem_j1_qss.outer_iterations);
  o.detail = o.pass ? counts : o.detail + " [" + counts + "]";
  return o;
}

Outcome z_to_s_round_trip() {
  Outcome o;
  double worst = 0.0;
  int points = 0;
  const auto grid = parse_grid("0.05:0.05:3");
  for (const PencilSpec& spec : {PencilSpec{Scheme::FEM, std::nullopt},
                                 PencilSpec{Scheme::BEM, std::nullopt},
                                 PencilSpec{Scheme::FEM, Distortion{2.33, -0.7}}}) {
    for (const auto& p : region_scan(spec, grid).points) {
      if (p.dead_beat()) continue;
      worst = std::max(worst, std::abs(std::exp(p.s * p.h) - p.z));
      ++points;
    }
  }
  o.require(worst < 1e-12, "max |exp(sh) - z| " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max |exp(sh) - z| = " + fmt("%.2g", worst) + " over " +
                         std::to_string(points) + " points";
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"FEM stability bound", 1.0, fem_stability_bound},
      {"BEM unconditional local stability", 1.0, bem_unconditional_stability},
      {"Distorted-pencil bound", 1.0, distorted_bound},
      {"FEM(h=1) equals Newton-Raphson", 5.0, fem_is_newton},
      {"BEM-J1 damping identity", 5.0, bem_j1_damping_identity},
      {"QSS step rule", 1.0, qss_step_rule},
      {"Jacobian correctness", 30.0, jacobian_correctness},
      {"Cross-solver solution agreement", 30.0, cross_solver_agreement},
      {"Robustness ordering", 600.0, robustness_ordering},
      {"QSS step growth near steady state", 5.0, qss_step_growth},
      {"Iteration-count reduction", 30.0, iteration_reduction},
      {"z-to-s mapping round trip", 1.0, z_to_s_round_trip},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += " (took " + fmt("%.2f", secs) + " s, budget " + fmt("%g", c.budget_seconds) + " s)";
    }
    failures += !o.pass;
    std::printf("%s %2zu %-36s %7.3fs  %s\n", o.pass ? "PASS" : "FAIL", i + 1, c.name, secs,
                o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
