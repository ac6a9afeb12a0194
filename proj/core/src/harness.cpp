#include "qsspf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace qsspf {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double max_deviation(const Vector& a, const Vector& b) {
  return a.size() == 0 ? 0.0 : (a - b).lpNorm<Eigen::Infinity>();
}

}  // namespace

SolverConfig SolverOverrides::apply(Method m) const {
  SolverConfig cfg = SolverConfig::defaults_for(m);
  if (h0) cfg.h0 = *h0;
  if (quantum) cfg.quantum = *quantum;
  if (h_max) cfg.h_max = *h_max;
  if (tol) {
    cfg.outer_tol = *tol;
    cfg.residual_tol = *tol;
  }
  // The single-inner-iteration variants keep i_max = 1.
  if (max_inner && m != Method::BEM_J1 && m != Method::BEM_J1_QSS) cfg.max_inner = *max_inner;
  if (max_outer) cfg.max_outer = *max_outer;
  cfg.fixed_step = fixed_step;
  cfg.estimate_condition = estimate_condition;
  cfg.record_states = record_states;
  return cfg;
}

int exit_code(Verdict v) { return v == Verdict::Converged ? 0 : 1; }

Comparison compare_methods(const PowerNetwork& network, const StateVector& y0,
                           std::span<const Method> methods, const SolverOverrides& overrides) {
  if (methods.empty()) throw std::invalid_argument("compare: no methods given");
  Comparison out;
  const Vector* reference = nullptr;
  for (const Method m : methods) {
    out.reports.push_back(solve(network, y0, overrides.apply(m)));
  }
  out.all_converged = true;
  out.states_agree = true;
  for (const auto& rep : out.reports) {
    CompareRow row;
    row.method = rep.method;
    row.verdict = rep.verdict;
    row.outer = rep.outer_iterations;
    row.inner = rep.inner_iterations;
    row.wall_seconds = rep.wall_seconds;
    if (rep.converged()) {
      if (!reference) reference = &rep.final_state.values;
      row.deviation = max_deviation(rep.final_state.values, *reference);
      if (*row.deviation > kAgreementTol) out.states_agree = false;
    } else {
      out.all_converged = false;
    }
    out.rows.push_back(row);
  }
  if (!reference) out.states_agree = false;
  return out;
}

void write_comparison_table(const Comparison& cmp, std::ostream& sink) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %11s %13s  %-16s %s\n", "Method", "Main loop",
                "Inner loop", "CPU time [s]", "Verdict", "Deviation");
  sink << line;
  for (const auto& r : cmp.rows) {
    const std::string inner = is_bem(r.method) ? std::to_string(r.inner) : "--";
    char dev[32] = "--";
    if (r.deviation) std::snprintf(dev, sizeof dev, "%.3g", *r.deviation);
    std::snprintf(line, sizeof line, "%-12s %10d %11s %13.4f  %-16s %s\n",
                  std::string(method_label(r.method)).c_str(), r.outer, inner.c_str(),
                  r.wall_seconds, std::string(verdict_name(r.verdict)).c_str(), dev);
    sink << line;
  }
}

void SweepConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("sweep: no methods given");
  if (samples < 1) throw std::invalid_argument("sweep: sample count must be at least 1");
  if (!(alpha_hi >= alpha_lo)) throw std::invalid_argument("sweep: alpha_hi below alpha_lo");
  if (!(alpha_lo > 0.0)) throw std::invalid_argument("sweep: alpha must be positive");
  if (alpha_lo < 1.0 && !allow_alpha_below_one) {
    throw std::invalid_argument("sweep: alpha_lo below 1 requires an explicit override");
  }
  if (jobs < 1) throw std::invalid_argument("sweep: jobs must be at least 1");
}

std::vector<double> sample_alphas(double lo, double hi, int n, std::uint64_t seed,
                                  bool even_grid) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  if (even_grid) {
    for (int i = 0; i < n; ++i) out.push_back(lo + (i + 1) * (hi - lo) / n);
    return out;
  }
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    out.push_back(hi - u * (hi - lo));
  }
  return out;
}

const MethodSummary& SweepResult::summary(Method m) const {
  for (const auto& s : summaries) {
    if (s.method == m) return s;
  }
  throw std::out_of_range("method not part of the sweep");
}

SweepResult run_sweep(const PowerNetwork& network, const SweepConfig& cfg) {
  cfg.validate();
  SweepResult result;
  result.seed = cfg.seed;
  result.alphas = sample_alphas(cfg.alpha_lo, cfg.alpha_hi, cfg.samples, cfg.seed, cfg.even_grid);

  const std::size_t n_methods = cfg.methods.size();
  const std::size_t total = result.alphas.size() * n_methods;
  std::vector<SolverReport> reports(total);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
      const double alpha = result.alphas[i / n_methods];
      const Method m = cfg.methods[i % n_methods];
      try {
        reports[i] = solve(network, network.assemble_state(alpha), cfg.overrides.apply(m));
      } catch (const std::exception& e) {
        reports[i].method = m;
        reports[i].verdict = Verdict::Diverged;
        reports[i].message = e.what();
      }
    }
  };
  {
    const int threads = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(total, 1)));
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  result.runs.reserve(total);
  for (std::size_t s = 0; s < result.alphas.size(); ++s) {
    const Vector* reference = nullptr;
    for (std::size_t j = 0; j < n_methods; ++j) {
      const SolverReport& rep = reports[s * n_methods + j];
      SweepRun run;
      run.sample = static_cast<int>(s);
      run.alpha = result.alphas[s];
      run.method = cfg.methods[j];
      run.verdict = rep.verdict;
      run.outer = rep.outer_iterations;
      run.inner = rep.inner_iterations;
      run.wall_seconds = rep.wall_seconds;
      if (rep.converged()) {
        if (!reference) reference = &rep.final_state.values;
        run.agrees = max_deviation(rep.final_state.values, *reference) <= kAgreementTol;
      }
      result.runs.push_back(run);
    }
  }

  for (const Method m : cfg.methods) {
    MethodSummary sum;
    sum.method = m;
    for (const auto& run : result.runs) {
      if (run.method != m) continue;
      ++sum.total_runs;
      if (run.verdict == Verdict::Converged) {
        ++sum.converged;
        if (!sum.max_alpha || run.alpha > *sum.max_alpha) sum.max_alpha = run.alpha;
      }
    }
    if (sum.max_alpha) {
      for (const auto& run : result.runs) {
        if (run.method == m && run.verdict != Verdict::Converged && run.alpha < *sum.max_alpha) {
          sum.stragglers.push_back(run.alpha);
        }
      }
      std::sort(sum.stragglers.begin(), sum.stragglers.end());
    }
    sum.converged_pct = sum.total_runs == 0 ? 0.0 : 100.0 * sum.converged / sum.total_runs;
    result.summaries.push_back(std::move(sum));
  }
  return result;
}

void write_sweep_runs_csv(const SweepResult& result, std::ostream& sink) {
  sink << "seed,sample,alpha,method,verdict,outer,inner,agrees\n";
  for (const auto& r : result.runs) {
    sink << result.seed << ',' << r.sample << ',' << num(r.alpha) << ',' << method_name(r.method)
         << ',' << verdict_name(r.verdict) << ',' << r.outer << ',' << r.inner << ','
         << (r.agrees ? 1 : 0) << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write sweep runs");
}

void write_sweep_summary_csv(const SweepResult& result, std::ostream& sink) {
  sink << "method,converged_pct,max_alpha,total_runs\n";
  for (const auto& s : result.summaries) {
    sink << method_name(s.method) << ',' << num(s.converged_pct) << ',';
    if (s.max_alpha) sink << num(*s.max_alpha);
    sink << ',' << s.total_runs << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write sweep summary");
}

void write_sweep_timing_csv(const SweepResult& result, std::ostream& sink) {
  sink << "sample,alpha,method,wall_seconds\n";
  for (const auto& r : result.runs) {
    sink << r.sample << ',' << num(r.alpha) << ',' << method_name(r.method) << ','
         << num(r.wall_seconds) << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write sweep timing");
}

void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    return f;
  };
  {
    auto f = open("sweep_runs.csv");
    write_sweep_runs_csv(result, f);
  }
  {
    auto f = open("sweep_summary.csv");
    write_sweep_summary_csv(result, f);
  }
  {
    auto f = open("sweep_timing.csv");
    write_sweep_timing_csv(result, f);
  }
}

}  // namespace qsspf
