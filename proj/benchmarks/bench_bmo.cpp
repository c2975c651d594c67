#include <benchmark/benchmark.h>

#include <vector>

#include "greenlab/coefficients.hpp"

using namespace greenlab;

static void BM_BmoModulus(benchmark::State& state) {
  const Index cells = state.range(0);
  const DomainMask mask = build_domain(build_grid(3, cells, 1.0), MaskSpec{});
  CoefficientSpec spec;
  spec.kind = CoefficientKind::checkerboard;
  spec.contrast = 2.0;
  spec.block_cells = 2;
  const CoefficientField field = generate_coefficients(mask.grid(), spec);
  const double h = mask.grid().h();
  const std::vector<double> rho{2 * h, 4 * h, 8 * h};
  for (auto _ : state) benchmark::DoNotOptimize(bmo_modulus(field, mask, rho));
}
BENCHMARK(BM_BmoModulus)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
