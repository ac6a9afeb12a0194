#include <benchmark/benchmark.h>

#include "qsspf/casefile.hpp"
#include "qsspf/network.hpp"
#include "qsspf/solvers.hpp"

using namespace qsspf;

namespace {

const PowerNetwork& case118() {
  static const PowerNetwork net(read_case_file(QSSPF_DATA_DIR "/cases/case118.m"));
  return net;
}

void BM_Residual(benchmark::State& state) {
  const auto& net = case118();
  const Vector y = net.assemble_state().values;
  for (auto _ : state) benchmark::DoNotOptimize(net.residual(y));
}
BENCHMARK(BM_Residual);

void BM_Jacobian(benchmark::State& state) {
  const auto& net = case118();
  const Vector y = net.assemble_state().values;
  SparseMatrix jac;
  for (auto _ : state) {
    net.jacobian(y, jac);
    benchmark::DoNotOptimize(jac.valuePtr());
  }
}
BENCHMARK(BM_Jacobian);

void BM_Factorize(benchmark::State& state) {
  const auto& net = case118();
  const SparseMatrix jac = net.jacobian(net.assemble_state().values);
  for (auto _ : state) benchmark::DoNotOptimize(factorize(jac));
}
BENCHMARK(BM_Factorize);

void BM_ConditionEstimate(benchmark::State& state) {
  const auto& net = case118();
  const SparseMatrix jac = net.jacobian(net.assemble_state().values);
  const Factorization f = factorize(jac);
  for (auto _ : state) benchmark::DoNotOptimize(condition_estimate(f, jac));
}
BENCHMARK(BM_ConditionEstimate);

void BM_Solve(benchmark::State& state) {
  const auto method = kAllMethods[state.range(0)];
  const auto& net = case118();
  const StateVector y0 = net.assemble_state();
  const SolverConfig cfg = SolverConfig::defaults_for(method);
  for (auto _ : state) benchmark::DoNotOptimize(solve(net, y0, cfg));
  state.SetLabel(std::string(method_label(method)));
}
BENCHMARK(BM_Solve)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
