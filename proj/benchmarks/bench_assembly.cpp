#include <benchmark/benchmark.h>

#include "greenlab/assembly.hpp"
#include "greenlab/coefficients.hpp"

using namespace greenlab;

static void BM_AssembleSmooth(benchmark::State& state) {
  const Index cells = state.range(0);
  auto mask = std::make_shared<const DomainMask>(build_domain(build_grid(3, cells, 1.0), MaskSpec{}));
  CoefficientSpec spec;
  spec.kind = CoefficientKind::smooth;
  spec.amplitude = 0.1;
  auto field = std::make_shared<const CoefficientField>(generate_coefficients(mask->grid(), spec));
  for (auto _ : state) {
    SaddleSystem sys = assemble_system(field, mask, false);
    benchmark::DoNotOptimize(sys.L.nonZeros());
  }
  state.SetComplexityN(cells * cells * cells);
}
BENCHMARK(BM_AssembleSmooth)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond)->Complexity();

BENCHMARK_MAIN();
