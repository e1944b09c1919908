#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "pif/errors.hpp"
#include "pif/tape.hpp"

namespace {

using BuildFn =
    std::function<pif::Value(pif::Tape&, const std::vector<pif::Value>&)>;

// Max relative error between analytic gradients and central finite
// differences over every entry of every input.
double fd_check(const std::vector<pif::Tensor>& inputs, const BuildFn& build,
                double h = 1e-5) {
  pif::Tape tape;
  std::vector<pif::Value> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const pif::Value root = build(tape, leaves);
  tape.backward(root);

  auto eval = [&](const std::vector<pif::Tensor>& in) {
    pif::Tape t2;
    std::vector<pif::Value> lv;
    lv.reserve(in.size());
    for (const auto& t : in) lv.push_back(t2.leaf(t));
    return build(t2, lv).scalar();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (int e = 0; e < inputs[i].size(); ++e) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].a[e] += h;
      minus[i].a[e] -= h;
      const double fd = (eval(plus) - eval(minus)) / (2 * h);
      const double an = tape.grad(leaves[i]).a[e];
      const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

pif::Tensor random_tensor(int r, int c, std::mt19937_64& gen, double lo,
                          double hi) {
  pif::Tensor t(r, c);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.a) v = u(gen);
  return t;
}

}  // namespace

TEST_CASE("forward op examples") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::scalar(2.0));
  auto y = tape.leaf(pif::Tensor::scalar(3.0));
  CHECK(pif::mul(x, y).scalar() == 6.0);
  CHECK(pif::tanh_v(tape.leaf(pif::Tensor::scalar(0.0))).scalar() == 0.0);

  auto v = tape.leaf(pif::Tensor::column({1.7, 1.7, 1.7}));
  auto s = pif::softmax(v);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.val().a[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
}

TEST_CASE("basic gradient examples") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::scalar(2.0));
  auto y = tape.leaf(pif::Tensor::scalar(3.0));
  auto p = pif::mul(x, y);
  tape.backward(p);
  CHECK(tape.grad(x).a[0] == 3.0);
  CHECK(tape.grad(y).a[0] == 2.0);

  pif::Tape t2;
  auto z = t2.leaf(pif::Tensor::scalar(0.0));
  auto th = pif::tanh_v(z);
  t2.backward(th);
  CHECK(t2.grad(z).a[0] == 1.0);
}

TEST_CASE("three layer composition matches finite differences") {
  std::mt19937_64 gen(3);
  std::vector<pif::Tensor> inputs = {
      random_tensor(4, 3, gen, -0.8, 0.8),  // W1
      random_tensor(4, 1, gen, -0.5, 0.5),  // b1
      random_tensor(2, 4, gen, -0.8, 0.8),  // W2
      random_tensor(2, 1, gen, -0.5, 0.5),  // b2
      random_tensor(1, 2, gen, -0.8, 0.8),  // W3
      random_tensor(3, 1, gen, -0.9, 0.9),  // x
  };
  const double err = fd_check(inputs, [](pif::Tape& t,
                                         const std::vector<pif::Value>& v) {
    auto h1 = pif::tanh_v(pif::add(pif::matmul(v[0], v[5]), v[1]));
    auto h2 = pif::sigmoid(pif::add(pif::matmul(v[2], h1), v[3]));
    return pif::sum(pif::matmul(v[4], h2));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("every primitive passes a finite difference check") {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 10; ++rep) {
    auto a = random_tensor(3, 2, gen, 0.3, 1.4);
    auto b = random_tensor(3, 2, gen, 0.3, 1.4);
    auto m1 = random_tensor(2, 3, gen, -1.0, 1.0);
    auto m2 = random_tensor(3, 2, gen, -1.0, 1.0);
    auto col = random_tensor(3, 1, gen, 0.3, 1.0);
    auto row = random_tensor(1, 2, gen, 0.3, 1.0);
    auto sc = random_tensor(1, 1, gen, 0.5, 1.5);
    auto signed_a = random_tensor(3, 2, gen, -1.4, 1.4);
    for (auto& v : signed_a.a) {
      if (std::abs(v) < 0.1) v = 0.3;  // keep clear of the relu kink
    }

    struct Case {
      const char* name;
      std::vector<pif::Tensor> inputs;
      BuildFn fn;
    };
    const Case cases[] = {
        {"add", {a, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::add(v[0], v[1]), v[1]));
         }},
        {"add scalar", {sc, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::add(v[0], v[1]), v[1]));
         }},
        {"sub", {a, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::sub(v[0], v[1]), v[0]));
         }},
        {"sub scalar", {a, sc}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::sub(v[0], v[1]), v[0]));
         }},
        {"mul", {a, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(v[0], v[1]));
         }},
        {"mul scalar", {sc, a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(v[0], v[1]));
         }},
        {"div", {a, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::divide(v[0], v[1]));
         }},
        {"div by scalar", {a, sc}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::divide(v[0], v[1]));
         }},
        {"scalar div", {sc, a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::divide(v[0], v[1]));
         }},
        {"matmul", {m1, m2}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::matmul(v[0], v[1])));
         }},
        {"tanh", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(v[0]));
         }},
        {"sigmoid", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::sigmoid(v[0]));
         }},
        {"relu", {signed_a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::relu(v[0]));
         }},
        {"exp", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::exp_v(v[0]));
         }},
        {"log", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::log_v(v[0]));
         }},
        {"pow", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::pow_c(v[0], -0.5));
         }},
        {"mean", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::mean(pif::mul(v[0], v[0]));
         }},
        {"concat", {a, b}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::concat(v[0], v[1])));
         }},
        {"slice", {a}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::slice_flat(v[0], 2, 2, 2)));
         }},
        {"softmax column", {col}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::softmax(v[0]), v[0]));
         }},
        {"softmax rows", {m2}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::mul(pif::softmax(v[0]), v[0]));
         }},
        {"transpose", {m1}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::transpose(v[0])));
         }},
        {"colwise_add", {a, col}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::colwise_add(v[0], v[1])));
         }},
        {"colwise_mul", {a, col}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::colwise_mul(v[0], v[1])));
         }},
        {"rowwise_add", {a, row}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::rowwise_add(v[0], v[1])));
         }},
        {"rowwise_mul", {a, row}, [](pif::Tape&, const std::vector<pif::Value>& v) {
           return pif::sum(pif::tanh_v(pif::rowwise_mul(v[0], v[1])));
         }},
    };
    for (const auto& c : cases) {
      INFO("primitive: " << c.name << " rep " << rep);
      CHECK(fd_check(c.inputs, c.fn) < 1e-6);
    }
  }
}

TEST_CASE("spline basis gradient matches finite differences") {
  std::mt19937_64 gen(23);
  auto grid = std::make_shared<const pif::BSplineGrid>(5);
  auto coeff = random_tensor(grid->basis_count, 1, gen, -1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    auto x = random_tensor(4, 1, gen, -0.9, 0.9);
    const double err =
        fd_check({x, coeff}, [&](pif::Tape&, const std::vector<pif::Value>& v) {
          return pif::sum(pif::matmul(pif::bspline_basis(v[0], grid), v[1]));
        });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("spline basis partitions unity and reproduces identity") {
  for (int g : {3, 5, 8}) {
    pif::BSplineGrid grid(g);
    std::vector<double> row(grid.basis_count);
    for (int i = 0; i <= 50; ++i) {
      const double x = -1.0 + 2.0 * i / 50;
      grid.basis_row(x, row.data());
      double unity = 0.0;
      double ident = 0.0;
      for (int j = 0; j < grid.basis_count; ++j) {
        unity += row[j];
        ident += row[j] * grid.greville(j);
      }
      CHECK(std::abs(unity - 1.0) < 1e-12);
      CHECK(std::abs(ident - x) < 1e-12);
    }
  }
}

TEST_CASE("spline basis clamps out of range inputs") {
  pif::BSplineGrid grid(4);
  std::vector<double> at_edge(grid.basis_count);
  std::vector<double> beyond(grid.basis_count);
  grid.basis_row(1.0, at_edge.data());
  grid.basis_row(3.7, beyond.data());
  CHECK(at_edge == beyond);
  grid.basis_deriv_row(3.7, beyond.data());
  for (double d : beyond) CHECK(d == 0.0);
}

TEST_CASE("backward is linear in the root") {
  std::mt19937_64 gen(31);
  auto x = random_tensor(4, 1, gen, 0.2, 1.0);
  const double ca = 1.7, cb = -0.4;

  auto grad_of = [&](double wa, double wb) {
    pif::Tape tape;
    auto leaf = tape.leaf(x);
    auto f = pif::sum(pif::tanh_v(leaf));
    auto g = pif::sum(pif::mul(leaf, leaf));
    auto combo = pif::add(pif::mul(tape.constant_scalar(wa), f),
                          pif::mul(tape.constant_scalar(wb), g));
    tape.backward(combo);
    return tape.grad(leaf);
  };

  const auto gf = grad_of(1.0, 0.0);
  const auto gg = grad_of(0.0, 1.0);
  const auto gc = grad_of(ca, cb);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(gc.a[i] - (ca * gf.a[i] + cb * gg.a[i])) < 1e-10);
  }
}

TEST_CASE("identical graphs give bit-identical gradients") {
  auto run = []() {
    pif::Tape tape;
    auto x = tape.leaf(pif::Tensor::column({0.3, -0.7, 1.1}));
    auto y = pif::sum(pif::tanh_v(pif::mul(x, x)));
    tape.backward(y);
    return tape.grad(x).a;
  };
  CHECK(run() == run());
}

TEST_CASE("relu subgradient at zero is zero") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::column({0.0, -1.0, 2.0}));
  auto y = pif::sum(pif::relu(x));
  tape.backward(y);
  CHECK(tape.grad(x).a[0] == 0.0);
  CHECK(tape.grad(x).a[1] == 0.0);
  CHECK(tape.grad(x).a[2] == 1.0);
}

TEST_CASE("constants are excluded from gradients") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::scalar(2.0));
  auto c = tape.constant(pif::Tensor::scalar(5.0));
  auto y = pif::mul(pif::mul(x, c), c);
  tape.backward(y);
  CHECK(tape.grad(x).a[0] == 25.0);
  CHECK(tape.grad(c).a[0] == 0.0);
}

TEST_CASE("tape error handling") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::column({1.0, 2.0}));
  auto m = tape.leaf(pif::Tensor(2, 3));

  SUBCASE("non-scalar backward root rejected") {
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(pif::add(x, tape.leaf(pif::Tensor::column({1., 2., 3.}))),
                    std::invalid_argument);
    CHECK_THROWS_AS(pif::matmul(x, m), std::invalid_argument);
  }
  SUBCASE("log of non-positive rejected") {
    CHECK_THROWS_AS(pif::log_v(tape.leaf(pif::Tensor::column({1.0, 0.0}))),
                    std::domain_error);
  }
  SUBCASE("non-finite forward value trapped") {
    auto zero = tape.leaf(pif::Tensor::scalar(0.0));
    auto one = tape.leaf(pif::Tensor::scalar(1.0));
    CHECK_THROWS_AS(pif::divide(one, zero), pif::NonFiniteError);
    CHECK_THROWS_AS(pif::pow_c(zero, -1.0), pif::NonFiniteError);
  }
  SUBCASE("grad before backward rejected") {
    CHECK_THROWS_AS(tape.grad(x), std::logic_error);
  }
}

TEST_CASE("reset clears the tape for reuse") {
  pif::Tape tape;
  auto x = tape.leaf(pif::Tensor::scalar(1.0));
  pif::mul(x, x);
  CHECK(tape.node_count() == 2);
  tape.reset();
  CHECK(tape.node_count() == 0);
  auto y = tape.leaf(pif::Tensor::scalar(4.0));
  auto z = pif::mul(y, y);
  tape.backward(z);
  CHECK(tape.grad(y).a[0] == 8.0);
}
