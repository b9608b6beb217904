// Serial reference kernels against their OpenMP counterparts.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "astor/flows.hpp"
#include "astor/homological.hpp"
#include "astor/norms.hpp"
#include "astor/spectral.hpp"

using namespace astor;

namespace {

VectorFieldSpec field2() {
  TrigTimeFunction w1(2), w2(2);
  w1.add({0, 0}, Phase::Cos, 1.0, 0.0).add({0, 1}, Phase::Sin, 0.2, 0.0);
  w2.add({0, 0}, Phase::Cos, 0.7, 0.0).add({1, 1}, Phase::Sin, 0.15, 0.0);
  return VectorFieldSpec::make({w1, w2});
}

TrigField rhs2() {
  TrigTimeFunction a(2), b(2);
  a.add({1, 0}, Phase::Cos, 1.0, 2.0).add({1, 1}, Phase::Sin, 0.2, 2.0);
  b.add({0, 1}, Phase::Sin, 0.5, 2.0);
  return {a, b};
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::Parallel : Exec::Serial; }

void set_label(benchmark::State& st) { st.SetLabel(st.range(0) ? "parallel" : "serial"); }

void BM_Homological(benchmark::State& st) {
  const TorusGrid g{2, 16};
  const TimeAxis axis{0.0, 0.05, 60};
  HomologicalSolver solver(field2(), g, axis.dt, axis.M);
  const GridFunction z = GridFunction::sample(rhs2(), g, axis);
  solver.table(-1, false);
  for (auto _ : st) {
    GridFunction k = st.range(0) ? solver.solve(z, -1) : solver.solve_reference(z, -1);
    benchmark::DoNotOptimize(k.max_abs());
  }
  st.SetLabel(st.range(0) ? "parallel (tabulated)" : "serial reference");
}

void BM_FlowTable(benchmark::State& st) {
  const TorusGrid g{2, 24};
  const auto W = field2();
  for (auto _ : st) {
    FlowTable t = build_flow_table(W, g, 2.0, 21, 1e-3, 1e-8, exec_of(st));
    benchmark::DoNotOptimize(t.offsets.size());
  }
  set_label(st);
}

void BM_Derivative(benchmark::State& st) {
  const TorusGrid g{2, 32};
  const GridFunction f = GridFunction::sample(rhs2(), g, TimeAxis{0.0, 0.05, 100});
  for (auto _ : st) {
    GridFunction d = partial_derivative(f, 0, 1, exec_of(st));
    benchmark::DoNotOptimize(d.max_abs());
  }
  set_label(st);
}

void BM_WeightedNorm(benchmark::State& st) {
  const TorusGrid g{2, 32};
  const GridFunction f = GridFunction::sample(rhs2(), g, TimeAxis{0.0, 0.05, 100});
  for (auto _ : st) benchmark::DoNotOptimize(weighted_norm(f, 1.0, 2.0, exec_of(st)).value);
  set_label(st);
}

}  // namespace

BENCHMARK(BM_Homological)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Derivative)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeightedNorm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
