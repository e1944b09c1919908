#include <benchmark/benchmark.h>

#include <random>

#include "pif/tape.hpp"

namespace {

pif::Tensor random_tensor(int r, int c, std::mt19937_64& gen) {
  pif::Tensor t(r, c);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.a) v = u(gen);
  return t;
}

// Forward + backward through a dense layer stack, the hot loop of training.
void BM_TapeDenseForwardBackward(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  std::mt19937_64 gen(1);
  const auto W1 = random_tensor(w, 50, gen);
  const auto b1 = random_tensor(w, 1, gen);
  const auto W2 = random_tensor(1, w, gen);
  const auto X = random_tensor(50, 64, gen);
  pif::Tape tape;
  for (auto _ : state) {
    tape.reset();
    auto vW1 = tape.leaf(W1);
    auto vb1 = tape.leaf(b1);
    auto vW2 = tape.leaf(W2);
    auto vX = tape.constant(X);
    auto h = pif::tanh_v(pif::colwise_add(pif::matmul(vW1, vX), vb1));
    auto out = pif::matmul(vW2, h);
    auto loss = pif::mean(pif::mul(out, out));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(vW1).a.data());
  }
}
BENCHMARK(BM_TapeDenseForwardBackward)->Arg(16)->Arg(64);

void BM_SplineBasis(benchmark::State& state) {
  const int g = static_cast<int>(state.range(0));
  auto grid = std::make_shared<const pif::BSplineGrid>(g);
  std::mt19937_64 gen(2);
  const auto x = random_tensor(64, 1, gen);
  pif::Tape tape;
  for (auto _ : state) {
    tape.reset();
    auto vx = tape.leaf(x);
    benchmark::DoNotOptimize(pif::bspline_basis(vx, grid));
  }
}
BENCHMARK(BM_SplineBasis)->Arg(3)->Arg(8);

}  // namespace
