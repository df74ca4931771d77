// Serial vs OpenMP tree sweeps. The parallel loops run over the nodes of one
// depth, so the gain grows with the number of epochs.

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "mfgcn/linearized.hpp"
#include "mfgcn/mfg_core.hpp"

using namespace mfgcn;

namespace {

CouplingSpec standard(const Grid& g) {
  ValueField a(g);
  for (int j = 0; j < g.n(); ++j) a[j] = 0.2 * std::cos(2 * std::numbers::pi * g.x(j));
  return CouplingSpec::make(a, {0.0, 1.0}, ValueField(g), {0.0});
}

// steps per epoch, shrinking with h^2 to respect the CFL bound
int fine_steps(const Grid& g) { return 25 * (g.n() / 32) * (g.n() / 32); }

SolveParams params(bool parallel) {
  SolveParams p;
  p.damping = Damping::fixed;
  p.tol = 1e-10;
  p.parallel = parallel;
  return p;
}

// args: epochs, grid size, parallel flag
void BM_solve(benchmark::State& st) {
  const int K = static_cast<int>(st.range(0));
  Grid g(static_cast<int>(st.range(1)));
  auto c = standard(g);
  auto tree = build_tree(0.5, 0.25 * K, K, fine_steps(g));
  auto m0 = bump_density(g, 0.3, 0.1);
  auto p = params(st.range(2) != 0);
  int iters = 0;
  for (auto _ : st) {
    auto s = solve_mfg_tree(c, tree, m0, Terminal::coupling(), p);
    iters = s.iterations;
    benchmark::DoNotOptimize(s.u.raw().data());
  }
  st.counters["leaves"] = static_cast<double>(tree.leaf_count());
  st.counters["picard_iters"] = iters;
  st.SetLabel(st.range(2) ? "omp" : "serial");
}

void BM_linearized(benchmark::State& st) {
  const int K = static_cast<int>(st.range(0));
  Grid g(static_cast<int>(st.range(1)));
  auto c = standard(g);
  auto tree = build_tree(0.5, 0.25 * K, K, fine_steps(g));
  auto p = params(st.range(2) != 0);
  auto base = solve_mfg_tree(c, tree, uniform_density(g), Terminal::coupling(), p);
  auto rho = random_direction(g, 1);
  for (auto _ : st) {
    auto lin = solve_linearized(base, c, rho, 0.0, p);
    benchmark::DoNotOptimize(lin.z.raw().data());
  }
  st.counters["leaves"] = static_cast<double>(tree.leaf_count());
  st.SetLabel(st.range(2) ? "omp" : "serial");
}

void grid_args(benchmark::internal::Benchmark* b) {
  for (int K : {4, 7, 10})
    for (int par : {0, 1}) b->Args({K, 32, par});
  for (int par : {0, 1}) b->Args({8, 64, par});
}

}  // namespace

BENCHMARK(BM_solve)->Apply(grid_args)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_linearized)->Apply(grid_args)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
