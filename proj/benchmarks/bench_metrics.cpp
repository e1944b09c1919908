#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pif/metrics.hpp"

namespace {

void BM_Evaluate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::vector<double> pred(n), truth(n);
  for (int i = 0; i < n; ++i) {
    pred[i] = u(gen);
    truth[i] = u(gen);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pif::evaluate("m", pred, truth, 0.0));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Evaluate)->Arg(1024)->Arg(16384);

}  // namespace
