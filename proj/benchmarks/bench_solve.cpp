#include <benchmark/benchmark.h>

#include "greenlab/assembly.hpp"
#include "greenlab/coefficients.hpp"
#include "greenlab/random_fields.hpp"
#include "greenlab/solver.hpp"

using namespace greenlab;

static void BM_SolveRandomRhs(benchmark::State& state) {
  const Index cells = state.range(0);
  auto mask = std::make_shared<const DomainMask>(build_domain(build_grid(3, cells, 1.0), MaskSpec{}));
  CoefficientSpec spec;
  spec.kind = CoefficientKind::smooth;
  spec.amplitude = 0.1;
  auto field = std::make_shared<const CoefficientField>(generate_coefficients(mask->grid(), spec));
  const SaddleSystem sys = assemble_system(field, mask, false);
  const RhsData rhs = random_rhs(*mask, 5);
  for (auto _ : state) {
    auto [f, stats] = solve_stokes(sys, rhs, 1e-10);
    benchmark::DoNotOptimize(f.p.data());
    state.counters["iterations"] = stats.iterations;
  }
}
BENCHMARK(BM_SolveRandomRhs)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_DenseOracle(benchmark::State& state) {
  auto mask = std::make_shared<const DomainMask>(build_domain(build_grid(3, state.range(0), 1.0), MaskSpec{}));
  const SaddleSystem sys = identity_system(mask);
  const RhsData rhs = random_rhs(*mask, 5);
  for (auto _ : state) benchmark::DoNotOptimize(solve_dense_oracle(sys, rhs).p.data());
}
BENCHMARK(BM_DenseOracle)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
