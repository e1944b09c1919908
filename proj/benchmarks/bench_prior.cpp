#include <benchmark/benchmark.h>

#include "pif/recipe.hpp"

namespace {

pif::Recipe demo_recipe() {
  const double h = 3600.0;
  return pif::Recipe("demo", {20.0, -40.0, -10.0, 25.0},
                     {0.0, 2 * h, 6 * h, 8 * h, 20 * h, 22 * h, 30 * h});
}

void BM_EvaluatePrior(benchmark::State& state) {
  const auto r = demo_recipe();
  double t = r.start_time();
  const double span = r.end_time() - r.start_time();
  for (auto _ : state) {
    benchmark::DoNotOptimize(pif::evaluate_prior(r, t));
    t += 17.0;
    if (t > r.end_time()) t -= span;
  }
}
BENCHMARK(BM_EvaluatePrior);

void BM_SamplePrior(benchmark::State& state) {
  const auto r = demo_recipe();
  const int n = static_cast<int>(state.range(0));
  std::vector<double> times(n);
  for (int i = 0; i < n; ++i) {
    times[i] = r.start_time() +
               (r.end_time() - r.start_time()) * i / (n - 1);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pif::sample_prior(r, times));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SamplePrior)->Arg(256)->Arg(4096);

}  // namespace
