#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "pif/metrics.hpp"

namespace {

std::vector<double> random_vec(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

// Loop oracles, written independently of the library implementations.
double oracle_rmse(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(s / p.size());
}

std::vector<double> oracle_grad(const std::vector<double>& y) {
  std::vector<double> g(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (j == 0) {
      g[j] = y[1] - y[0];
    } else if (j + 1 == y.size()) {
      g[j] = y[j] - y[j - 1];
    } else {
      g[j] = (y[j + 1] - y[j - 1]) / 2.0;
    }
  }
  return g;
}

}  // namespace

TEST_CASE("rmse examples") {
  std::vector<double> same{1.0, 2.0, 3.0};
  CHECK(pif::rmse(same, same) == 0.0);
  std::vector<double> p{0.0, 0.0}, t{3.0, 4.0};
  CHECK(pif::rmse(p, t) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("linf examples") {
  std::vector<double> same{1.0, 2.0, 3.0};
  CHECK(pif::linf_rmse(same, same) == 0.0);
  std::vector<double> p{0.1, 5.0, 0.1}, t{0.0, 0.0, 0.0};
  CHECK(pif::linf_rmse(p, t) == 5.0);
}

TEST_CASE("gradient metrics shift invariance is exact") {
  std::mt19937_64 gen(5);
  const auto truth = random_vec(60, gen);
  auto pred = random_vec(60, gen);
  const double ge = pif::gradient_error(pred, truth);
  const double le = pif::linf_grad_error(pred, truth);
  for (auto& x : pred) x += 12.75;  // exactly representable shift
  CHECK(pif::gradient_error(pred, truth) == ge);
  CHECK(pif::linf_grad_error(pred, truth) == le);

  // Offset-only prediction has zero gradient error.
  auto shifted = truth;
  for (auto& x : shifted) x += 4.0;
  CHECK(pif::gradient_error(shifted, truth) == 0.0);
  CHECK(pif::linf_grad_error(shifted, truth) == 0.0);
}

TEST_CASE("doubling a linear series errs by the slope at every point") {
  const double s = 0.7;
  std::vector<double> truth, pred;
  for (int i = 0; i < 40; ++i) {
    truth.push_back(s * i);
    pred.push_back(2 * s * i);
  }
  CHECK(pif::gradient_error(pred, truth) == doctest::Approx(s).epsilon(1e-12));
  CHECK(pif::linf_grad_error(pred, truth) ==
        doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("a single kink localizes the worst gradient error") {
  std::vector<double> truth(50, 0.0);
  auto pred = truth;
  pred[20] += 3.0;  // kink: affects stencils at 19, 20, 21
  const auto gp = oracle_grad(pred);
  double worst = 0.0;
  int arg = -1;
  for (int j = 0; j < 50; ++j) {
    if (std::abs(gp[j]) > worst) {
      worst = std::abs(gp[j]);
      arg = j;
    }
  }
  CHECK(pif::linf_grad_error(pred, truth) == worst);
  CHECK((arg >= 19 && arg <= 21));
}

TEST_CASE("metrics match loop oracles on random pairs") {
  std::mt19937_64 gen(777);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + static_cast<int>(gen() % 98);
    const auto p = random_vec(n, gen);
    const auto t = random_vec(n, gen);
    CHECK(std::abs(pif::rmse(p, t) - oracle_rmse(p, t)) < 1e-12);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(p[i] - t[i]));
    CHECK(pif::linf_rmse(p, t) == worst);

    const auto gp = oracle_grad(p);
    const auto gt = oracle_grad(t);
    double acc = 0.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += std::abs(gp[i] - gt[i]);
      mx = std::max(mx, std::abs(gp[i] - gt[i]));
    }
    CHECK(std::abs(pif::gradient_error(p, t) - acc / n) < 1e-12);
    CHECK(std::abs(pif::linf_grad_error(p, t) - mx) < 1e-12);

    // Ordering invariants.
    CHECK(pif::rmse(p, t) <= pif::linf_rmse(p, t) + 1e-15);
    CHECK(pif::gradient_error(p, t) <= pif::linf_grad_error(p, t) + 1e-15);
  }
}

TEST_CASE("pointwise metrics are permutation invariant, gradient ones not") {
  std::mt19937_64 gen(9);
  auto p = random_vec(30, gen);
  auto t = random_vec(30, gen);
  const double r0 = pif::rmse(p, t);
  const double l0 = pif::linf_rmse(p, t);
  const double g0 = pif::gradient_error(p, t);

  std::vector<int> idx(30);
  for (int i = 0; i < 30; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), gen);
  std::vector<double> ps(30), ts(30);
  for (int i = 0; i < 30; ++i) {
    ps[i] = p[idx[i]];
    ts[i] = t[idx[i]];
  }
  CHECK(pif::rmse(ps, ts) == doctest::Approx(r0).epsilon(1e-12));
  CHECK(pif::linf_rmse(ps, ts) == l0);
  CHECK(pif::gradient_error(ps, ts) != g0);
}

TEST_CASE("metric preconditions") {
  std::vector<double> a{1.0, 2.0};
  std::vector<double> b{1.0};
  CHECK_THROWS_AS(pif::rmse(a, b), std::invalid_argument);
  CHECK_THROWS_AS(pif::rmse(std::vector<double>{}, std::vector<double>{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(pif::gradient_error(a, a), std::invalid_argument);
}

TEST_CASE("evaluate fills a report") {
  std::vector<double> t{1.0, 2.0, 3.0, 4.0};
  std::vector<double> p{1.1, 2.1, 3.1, 4.1};
  const auto r = pif::evaluate("demo", p, t, 2.5);
  CHECK(r.model == "demo");
  CHECK(r.n_points == 4);
  CHECK(r.training_seconds == 2.5);
  CHECK(r.rmse == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(r.gradient_error == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}