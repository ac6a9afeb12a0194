#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qsspf/network.hpp"
#include "qsspf/solvers.hpp"
#include "scalar_flow.hpp"
#include "support.hpp"

using namespace qsspf;

namespace {

SolverConfig config(Method m) { return SolverConfig::defaults_for(m); }

Vector reference_solution(const PowerNetwork& net) {
  const auto rep = solve(net, net.assemble_state(), config(Method::FEM));
  EXPECT_TRUE(rep.converged());
  return rep.final_state.values;
}

Vector random_state(const PowerNetwork& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-0.4, 0.4);
  std::uniform_real_distribution<double> mag(0.9, 1.1);
  const auto& idx = *net.state_index();
  Vector y(idx.n());
  for (std::size_t k = 0; k < idx.angle_vars.size(); ++k) y[k] = ang(rng);
  for (std::size_t k = idx.angle_vars.size(); k < idx.n(); ++k) y[k] = mag(rng);
  return y;
}

void expect_report_invariants(const SolverReport& rep, const SolverConfig& cfg) {
  EXPECT_EQ(static_cast<int>(rep.iterations.size()), rep.outer_iterations);
  const int inner = std::accumulate(rep.iterations.begin(), rep.iterations.end(), 0,
                                    [](int acc, const IterationRecord& r) { return acc + r.inner_iters; });
  EXPECT_EQ(inner, rep.inner_iterations);
  for (const auto& r : rep.iterations) {
    EXPECT_GT(r.h, 0.0);
    EXPECT_LE(r.h, cfg.h_max);
    EXPECT_GE(r.inner_iters, 0);
  }
  if (rep.converged()) {
    ASSERT_FALSE(rep.iterations.empty());
    EXPECT_LT(rep.iterations.back().residual_norm, cfg.residual_tol);
    EXPECT_LT(rep.iterations.back().state_delta_norm, cfg.outer_tol);
  }
  if (rep.verdict == Verdict::Diverged || rep.verdict == Verdict::SingularJacobian) {
    EXPECT_TRUE(rep.failed_iteration.has_value());
  }
}

}  // namespace

TEST(Methods, NamesRoundTrip) {
  for (const Method m : kAllMethods) {
    EXPECT_EQ(parse_method(method_name(m)), m);
    EXPECT_EQ(parse_method(method_label(m)), m);
  }
  EXPECT_FALSE(parse_method("newton").has_value());
  EXPECT_EQ(method_name(Method::BEM_J1_QSS), "bem-j1-qss");
}

TEST(SolverConfig, DefaultsPerMethod) {
  EXPECT_EQ(config(Method::BEM_J).max_inner, 20);
  EXPECT_EQ(config(Method::BEM_J_QSS).max_inner, 20);
  EXPECT_EQ(config(Method::BEM_J1).max_inner, 1);
  EXPECT_EQ(config(Method::BEM_J1_QSS).max_inner, 1);
  const auto c = config(Method::BEM_J_QSS);
  EXPECT_EQ(c.h0, 1.0);
  EXPECT_EQ(c.quantum, 20.0);
  EXPECT_EQ(c.h_max, 8000.0);
  EXPECT_EQ(c.outer_tol, 1e-8);
  EXPECT_EQ(c.residual_tol, 1e-8);
  EXPECT_EQ(c.max_outer, 200);
  EXPECT_EQ(c.divergence_threshold, 1e6);
}

TEST(SolverConfig, ValidateRejectsBadValues) {
  auto c = config(Method::FEM);
  c.h0 = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config(Method::FEM);
  c.h_max = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config(Method::FEM);
  c.quantum = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config(Method::BEM_J);
  c.max_inner = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config(Method::FEM);
  c.outer_tol = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Fem, TwoBusMatchesNewtonOracleStepForStep) {
  const NetworkCase c = testsupport::load("case2");
  const PowerNetwork net(c);
  const oracle::DenseFlow ref(c);
  auto cfg = config(Method::FEM);
  cfg.record_states = true;
  const auto rep = solve(net, net.flat_start(), cfg);
  ASSERT_TRUE(rep.converged());
  const auto nr = ref.newton(net.flat_start().values, 1e-8, 50);
  ASSERT_EQ(rep.states.size(), nr.size());
  for (std::size_t k = 0; k < nr.size(); ++k) {
    EXPECT_LT((rep.states[k] - nr[k]).lpNorm<Eigen::Infinity>(), 1e-12) << "iterate " << k;
  }
}

TEST(Fem, ScalarModelDivergesBeyondTwo) {
  const testsupport::ScalarFlow flow(1.0);
  auto cfg = config(Method::FEM);
  cfg.h0 = 2.5;
  cfg.record_states = true;
  const auto rep = solve_fem(flow, Vector::Constant(1, 1.0 + 1e-3), cfg);
  EXPECT_EQ(rep.verdict, Verdict::Diverged);
  for (std::size_t k = 1; k < rep.states.size(); ++k) {
    const double ratio = (rep.states[k][0] - 1.0) / (rep.states[k - 1][0] - 1.0);
    EXPECT_NEAR(ratio, -1.5, 1e-9);
  }
}

TEST(Fem, ExactStartConvergesImmediately) {
  const PowerNetwork net(testsupport::load("case14"));
  const Vector sol = reference_solution(net);
  const auto rep = solve_fem(net, sol, config(Method::FEM));
  ASSERT_TRUE(rep.converged());
  EXPECT_LE(rep.outer_iterations, 1);
  EXPECT_LT(rep.iterations.back().state_delta_norm, 1e-10);
}

TEST(Fem, SingularJacobianReported) {
  const testsupport::ScalarFlow flow(1.0, /*singular=*/true);
  const auto rep = solve_fem(flow, Vector::Constant(1, 2.0), config(Method::FEM));
  EXPECT_EQ(rep.verdict, Verdict::SingularJacobian);
  EXPECT_EQ(rep.failed_iteration, 1);
}

TEST(Fdpf, Case14AgreesWithNewton) {
  const PowerNetwork net(testsupport::load("case14"));
  const auto rep = solve(net, net.flat_start(), config(Method::FDPF));
  ASSERT_TRUE(rep.converged());
  EXPECT_LT((rep.final_state.values - reference_solution(net)).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Fdpf, HighResistanceFailsCleanly) {
  NetworkCase c = testsupport::load("case14");
  for (auto& br : c.branches) br.r = 10.0 * br.x;
  const PowerNetwork net(c);
  SolverReport rep;
  ASSERT_NO_THROW(rep = solve(net, net.flat_start(), config(Method::FDPF)));
  // Observed: the decoupled iteration blows up rather than stalling.
  EXPECT_EQ(rep.verdict, Verdict::Diverged);
  EXPECT_TRUE(rep.failed_iteration.has_value());
}

TEST(Rk4, LinearStepIsTaylorPolynomial) {
  const testsupport::ScalarFlow flow(0.0);
  const Vector y = rk4_step(flow, Vector::Constant(1, 1.0), 0.1);
  const double h = 0.1;
  EXPECT_NEAR(y[0], 1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24, 1e-15);
  EXPECT_NEAR(y[0], 0.9048375, 1e-7);
}

TEST(Rk4, StepDoublingEstimateTracksTrueError) {
  const testsupport::ScalarFlow flow(0.0);
  const auto sd = rk4_step_doubling(flow, Vector::Constant(1, 1.0), 0.5);
  const double true_err = std::abs(sd.halves[0] - std::exp(-0.5));
  EXPECT_GT(sd.error, true_err / 2.0);
  EXPECT_LT(sd.error, true_err * 2.0);
  EXPECT_NEAR(sd.error, std::abs(sd.full[0] - sd.halves[0]) / 15.0, 1e-18);
}

TEST(Rk4, Case14AgreesWithNewton) {
  const PowerNetwork net(testsupport::load("case14"));
  const auto rep = solve(net, net.flat_start(), config(Method::RK4));
  ASSERT_TRUE(rep.converged());
  EXPECT_LT((rep.final_state.values - reference_solution(net)).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Bem, SingleInnerStepIsDampedNewton) {
  const PowerNetwork net(testsupport::load("case14"));
  std::mt19937_64 rng(1);
  for (double h : {0.5, 1.0, 4.0, 100.0}) {
    for (int t = 0; t < 5; ++t) {
      const Vector y = random_state(net, rng);
      const Vector bem = bem_single_inner_step(net, y, h);
      const Vector fem = fem_step(net, y, h / (1.0 + h));
      EXPECT_LT((bem - fem).lpNorm<Eigen::Infinity>(), 1e-12);
    }
  }
}

TEST(Bem, ScalarModelContractsByOneOverOnePlusH) {
  for (double h : {0.1, 1.0, 10.0, 1000.0}) {
    const testsupport::ScalarFlow flow(0.0);
    auto cfg = config(Method::BEM_J1);
    cfg.h0 = h;
    cfg.h_max = std::max(h, cfg.h_max);
    cfg.record_states = true;
    const auto rep = solve_bem(flow, Vector::Constant(1, 0.5), cfg);
    ASSERT_TRUE(rep.converged()) << h;
    for (std::size_t k = 1; k < rep.states.size(); ++k) {
      const double prev = rep.states[k - 1][0];
      const double cur = rep.states[k][0];
      EXPECT_NEAR(cur / prev, 1.0 / (1.0 + h), 2e-15) << "h=" << h;
      EXPECT_GE(cur / prev, 0.0);  // no oscillation
    }
  }
}

TEST(Bem, BemJCase14AgreesWithNewton) {
  const PowerNetwork net(testsupport::load("case14"));
  const auto rep = solve(net, net.assemble_state(), config(Method::BEM_J));
  ASSERT_TRUE(rep.converged());
  EXPECT_LT((rep.final_state.values - reference_solution(net)).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Bem, J1VariantsUseOneInnerIterationPerStep) {
  const PowerNetwork net(testsupport::load("case30"));
  for (Method m : {Method::BEM_J1, Method::BEM_J1_QSS}) {
    const auto rep = solve(net, net.assemble_state(), config(m));
    ASSERT_TRUE(rep.converged());
    for (const auto& r : rep.iterations) EXPECT_EQ(r.inner_iters, 1);
  }
}

TEST(Bem, FixedStepKeepsH) {
  const PowerNetwork net(testsupport::load("case14"));
  auto cfg = config(Method::BEM_J);
  cfg.fixed_step = true;
  const auto rep = solve(net, net.assemble_state(), cfg);
  ASSERT_TRUE(rep.converged());
  for (const auto& r : rep.iterations) EXPECT_EQ(r.h, 1.0);
}

TEST(Bem, InnerFailureHalvesStep) {
  const PowerNetwork net(testsupport::load("case14"));
  auto cfg = config(Method::BEM_J);
  cfg.max_inner = 4;
  cfg.fixed_step = true;
  const auto rep = solve(net, net.assemble_state(2.0), cfg);
  ASSERT_TRUE(rep.converged());
  double h = cfg.h0;
  int rejections = 0;
  for (const auto& r : rep.iterations) {
    for (int i = 0; i < r.rejections; ++i) h /= 2.0;
    EXPECT_EQ(r.h, h);
    rejections += r.rejections;
  }
  EXPECT_GT(rejections, 0);
  expect_report_invariants(rep, cfg);
}

TEST(Bem, ExhaustedRejectionsDiverge) {
  const PowerNetwork net(testsupport::load("case118"));
  auto cfg = config(Method::BEM_J);
  cfg.max_inner = 2;
  cfg.inner_tol = 1e-300;
  const auto rep = solve(net, net.assemble_state(1.5), cfg);
  EXPECT_EQ(rep.verdict, Verdict::Diverged);
  EXPECT_EQ(rep.failed_iteration, 1);
  EXPECT_NE(rep.message.find("inner"), std::string::npos);
}

TEST(Qss, StepRuleExamples) {
  const double f[] = {2.0, -4.0, 1.0};
  EXPECT_EQ(qss_step(f, 20.0, 8000.0), 5.0);
  const double zero[] = {0.0, 0.0, 0.0};
  EXPECT_EQ(qss_step(zero, 20.0, 8000.0), 8000.0);
  const double tiny[] = {1e-4};
  EXPECT_EQ(qss_step(tiny, 20.0, 8000.0), 8000.0);
}

TEST(QssProperty, ScalingReciprocity) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> scale(1.0, 10.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> f(8);
    for (auto& v : f) v = u(rng);
    const double c = scale(rng);
    std::vector<double> g = f;
    for (auto& v : g) v *= c;
    const double h = qss_step(f, 20.0, 1e300);
    EXPECT_NEAR(qss_step(g, 20.0, 1e300), h / c, 1e-12 * h);
  }
}

TEST(Qss, BemJQssStepGrowsNearConvergence) {
  const PowerNetwork net(testsupport::load("case14"));
  const auto rep = solve(net, net.assemble_state(), config(Method::BEM_J_QSS));
  ASSERT_TRUE(rep.converged());
  EXPECT_EQ(rep.iterations.front().h, 1.0);
  for (std::size_t k = 1; k < rep.iterations.size(); ++k) {
    EXPECT_GE(rep.iterations[k].h, rep.iterations[k - 1].h);
  }
  EXPECT_GT(rep.iterations.back().h, 1.0);
}

TEST(Heuristic, Examples) {
  EXPECT_EQ(heuristic_step(1.0, 2, 20, 8000.0), 2.0);
  EXPECT_EQ(heuristic_step(4096.0, 1, 20, 8000.0), 8000.0);
  EXPECT_EQ(heuristic_step(1.0, 15, 20, 8000.0), 0.5);
  EXPECT_EQ(heuristic_step(1.0, 10, 20, 8000.0), 1.0);
  EXPECT_EQ(heuristic_step(1.0, 14, 20, 8000.0), 1.0);
}

TEST(Quantizer, Examples) {
  const double y[] = {1.0, 2.0};
  auto same = quantizer_update(y, y, 20.0);
  EXPECT_TRUE(same.events.empty());

  const double q0[] = {0.0, 0.0};
  const double at[] = {20.0, 5.0};
  auto boundary = quantizer_update(at, q0, 20.0);
  ASSERT_EQ(boundary.events.size(), 1u);
  EXPECT_EQ(boundary.events[0], 0u);
  EXPECT_EQ(boundary.q[0], 20.0);
  EXPECT_EQ(boundary.q[1], 0.0);

  const double yy[] = {19.9, 20.1};
  auto split = quantizer_update(yy, q0, 20.0);
  ASSERT_EQ(split.events.size(), 1u);
  EXPECT_EQ(split.events[0], 1u);
}

TEST(SolverProperty, ReportInvariantsAcrossMethodsAndStarts) {
  const PowerNetwork net(testsupport::load("case57"));
  for (const Method m : kAllMethods) {
    for (double alpha : {1.0, 1.5, 3.0}) {
      SCOPED_TRACE(std::string(method_name(m)) + " alpha=" + std::to_string(alpha));
      const auto cfg = config(m);
      expect_report_invariants(solve(net, net.assemble_state(alpha), cfg), cfg);
    }
  }
}

TEST(SolverProperty, DivergedReportPinpointsFirstBadIteration) {
  const testsupport::ScalarFlow flow(1.0);
  auto cfg = config(Method::FEM);
  cfg.h0 = 3.0;
  const auto rep = solve_fem(flow, Vector::Constant(1, 2.0), cfg);
  ASSERT_EQ(rep.verdict, Verdict::Diverged);
  ASSERT_TRUE(rep.failed_iteration.has_value());
  // |error| = 2^k exceeds 1e6 first at k = 20.
  EXPECT_EQ(*rep.failed_iteration, 20);
  EXPECT_GT(rep.iterations.back().residual_norm, cfg.divergence_threshold);
  EXPECT_LE(rep.iterations[rep.iterations.size() - 2].residual_norm, cfg.divergence_threshold);
}

TEST(SolverProperty, CrossSolverAgreement) {
  for (const char* name : {"case9", "case30", "case57"}) {
    SCOPED_TRACE(name);
    const PowerNetwork net(testsupport::load(name));
    const Vector ref = reference_solution(net);
    for (const Method m : kAllMethods) {
      const auto rep = solve(net, net.assemble_state(), config(m));
      if (!rep.converged()) continue;
      EXPECT_LT((rep.final_state.values - ref).lpNorm<Eigen::Infinity>(), 1e-6) << method_name(m);
    }
  }
}

TEST(Trace, CsvHeaderAndRows) {
  const PowerNetwork net(testsupport::load("case14"));
  auto cfg = config(Method::BEM_J_QSS);
  cfg.estimate_condition = true;
  const auto rep = solve(net, net.assemble_state(), cfg);
  std::ostringstream os;
  write_trace_csv(rep, os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,h_k,inner_iters,residual_norm,state_delta_norm,cond_est");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    EXPECT_NE(line.back(), ',');  // condition estimate present
  }
  EXPECT_EQ(rows, rep.outer_iterations);
}

TEST(Trace, StateCsvColumns) {
  const PowerNetwork net(testsupport::load("case2"));
  auto cfg = config(Method::FEM);
  cfg.record_states = true;
  const auto rep = solve(net, net.flat_start(), cfg);
  std::ostringstream os;
  write_state_trace_csv(rep, *net.state_index(), os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,theta_2,vm_2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, rep.outer_iterations + 1);
}
