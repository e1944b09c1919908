#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "pif/errors.hpp"
#include "pif/recipe.hpp"

namespace {

const double kH = 3600.0;

pif::Recipe demo_recipe() {
  return pif::Recipe("demo", {20.0, -40.0, -10.0, 25.0},
                     {0.0, 2 * kH, 6 * kH, 8 * kH, 20 * kH, 22 * kH, 30 * kH});
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("prior hits the documented setpoint examples") {
  const auto r = demo_recipe();
  CHECK(pif::evaluate_prior(r, 3 * kH) == -40.0);
  CHECK(pif::evaluate_prior(r, 0.0) == 20.0);
  CHECK(pif::evaluate_prior(r, 7 * kH) == -25.0);
  CHECK(pif::evaluate_prior(r, 6.5 * kH) == -32.5);
}

TEST_CASE("prior endpoint convention") {
  const auto r = demo_recipe();
  CHECK(pif::evaluate_prior(r, 30 * kH) == 25.0);
  CHECK_THROWS_AS(pif::evaluate_prior(r, -1.0), std::domain_error);
  CHECK_THROWS_AS(pif::evaluate_prior(r, 30 * kH + 1.0), std::domain_error);
}

// The jump at a boundary is measured by extrapolating linearly from each
// side; extrapolation is exact on affine pieces, so the difference is the
// discontinuity itself, not slope-induced drift.
static double boundary_jump(const pif::Recipe& r, int k, double eps) {
  const double t = r.boundaries()[k];
  const double left =
      2 * pif::evaluate_prior(r, t - eps) - pif::evaluate_prior(r, t - 2 * eps);
  const double right =
      2 * pif::evaluate_prior(r, t + eps) - pif::evaluate_prior(r, t + 2 * eps);
  return std::abs(right - left);
}

TEST_CASE("prior is continuous at interior boundaries") {
  const auto r = demo_recipe();
  const double eps = 1e-6 * (r.end_time() - r.start_time());
  for (int k = 1; k <= 5; ++k) {
    CHECK(boundary_jump(r, k, eps) < 1e-9);
  }
}

TEST_CASE("prior is affine within each segment") {
  const auto r = demo_recipe();
  std::mt19937_64 gen(7);
  for (int seg = 0; seg < 6; ++seg) {
    const double a = r.boundaries()[seg];
    const double b = r.boundaries()[seg + 1];
    std::uniform_real_distribution<double> u(a, b);
    for (int rep = 0; rep < 20; ++rep) {
      double x = u(gen), y = u(gen);
      const double mid = pif::evaluate_prior(r, (x + y) / 2);
      const double avg =
          (pif::evaluate_prior(r, x) + pif::evaluate_prior(r, y)) / 2;
      CHECK(std::abs(mid - avg) < 1e-12);
    }
  }
}

TEST_CASE("prior stays inside the setpoint hull") {
  const auto r = demo_recipe();
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(r.start_time(), r.end_time());
  for (int rep = 0; rep < 500; ++rep) {
    const double v = pif::evaluate_prior(r, u(gen));
    CHECK(v >= r.min_setpoint());
    CHECK(v <= r.max_setpoint());
  }
}

TEST_CASE("sample_prior endpoint and hold examples") {
  const auto r = demo_recipe();
  const auto ends = pif::sample_prior(r, {r.start_time(), r.end_time()});
  CHECK(ends.values[0] == 20.0);
  CHECK(ends.values[1] == 25.0);
  CHECK(ends.recipe_name == "demo");

  const auto hold = pif::sample_prior(r, {2 * kH, 6 * kH});
  CHECK(hold.values[0] == -40.0);
  CHECK(hold.values[1] == -40.0);
}

TEST_CASE("sample_prior rejects bad inputs") {
  const auto r = demo_recipe();
  CHECK_THROWS_AS(pif::sample_prior(r, {}), std::domain_error);
  CHECK_THROWS_AS(pif::sample_prior(r, {kH, 0.5 * kH}), std::domain_error);
  CHECK_THROWS_AS(pif::sample_prior(r, {0.0, 31 * kH}), std::domain_error);
}

TEST_CASE("sampled trajectory has exactly six affine pieces") {
  const auto r = demo_recipe();
  std::vector<double> times;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    times.push_back(r.start_time() +
                    (r.end_time() - r.start_time()) * i / (n - 1));
  }
  const auto traj = pif::sample_prior(r, times);
  // Second differences vanish except where the stencil straddles a boundary.
  for (int i = 1; i + 1 < n; ++i) {
    const double dd =
        traj.values[i + 1] - 2 * traj.values[i] + traj.values[i - 1];
    if (std::abs(dd) > 1e-9) {
      bool straddles = false;
      for (int k = 1; k <= 5; ++k) {
        const double tb = r.boundaries()[k];
        if (times[i - 1] < tb && tb < times[i + 1]) straddles = true;
      }
      CHECK(straddles);
    }
  }
}

TEST_CASE("recipe constructor enforces monotone boundaries") {
  CHECK_THROWS_AS(pif::Recipe("bad", {0, 0, 0, 0}, {0, 2, 2, 3, 4, 5, 6}),
                  pif::ConfigError);
}

TEST_CASE("recipe file round trip is exact") {
  const auto r = demo_recipe();
  const auto path = temp_file("pif_test_recipe.json");
  pif::save_recipe(r, path.string());
  const auto back = pif::load_recipe(path.string());
  CHECK(back.name() == r.name());
  for (int i = 0; i < 4; ++i) CHECK(back.setpoints()[i] == r.setpoints()[i]);
  for (int i = 0; i < 7; ++i) CHECK(back.boundaries()[i] == r.boundaries()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("recipe files declared in hours convert to seconds") {
  const auto path = temp_file("pif_test_recipe_hours.json");
  {
    std::ofstream out(path);
    out << R"({"name":"demo","time_unit":"hours",)"
        << R"("setpoints":[20,-40,-10,25],)"
        << R"("boundaries":[0,2,6,8,20,22,30]})";
  }
  const auto r = pif::load_recipe(path.string());
  CHECK(r.boundaries()[1] == 2 * kH);
  CHECK(r.boundaries()[6] == 30 * kH);
  std::filesystem::remove(path);
}

TEST_CASE("recipe parser rejects malformed files") {
  const auto path = temp_file("pif_test_recipe_bad.json");
  auto write = [&](const char* text) {
    std::ofstream out(path);
    out << text;
  };

  write(R"({"name":"x","time_unit":"hours","setpoints":[1,2,3],)"
        R"("boundaries":[0,1,2,3,4,5,6]})");
  CHECK_THROWS_AS(pif::load_recipe(path.string()), pif::ConfigError);

  write(R"({"name":"x","time_unit":"hours","setpoints":[1,2,3,4],)"
        R"("boundaries":[0,2,2,3,4,5,6]})");
  CHECK_THROWS_AS(pif::load_recipe(path.string()), pif::ConfigError);

  write(R"({"name":"x","time_unit":"hours","setpoints":[1,2,3,4],)"
        R"("boundaries":[0,1,2,3,4,5,6],"extra":1})");
  CHECK_THROWS_AS(pif::load_recipe(path.string()), pif::ConfigError);

  write(R"({"time_unit":"hours","setpoints":[1,2,3,4],)"
        R"("boundaries":[0,1,2,3,4,5,6]})");
  CHECK_THROWS_AS(pif::load_recipe(path.string()), pif::ConfigError);

  write(R"({"name":"x","time_unit":"days","setpoints":[1,2,3,4],)"
        R"("boundaries":[0,1,2,3,4,5,6]})");
  CHECK_THROWS_AS(pif::load_recipe(path.string()), pif::ConfigError);

  std::filesystem::remove(path);
}

TEST_CASE("randomized recipes keep continuity and affinity") {
  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> temp(-80.0, 80.0);
  std::uniform_real_distribution<double> gap(0.1, 12.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::array<double, 4> y{temp(gen), temp(gen), temp(gen), temp(gen)};
    std::array<double, 7> tb;
    tb[0] = 0.0;
    for (int i = 1; i < 7; ++i) tb[i] = tb[i - 1] + gap(gen) * kH;
    pif::Recipe r("fuzz", y, tb);
    const double eps = 1e-6 * (r.end_time() - r.start_time());
    for (int k = 1; k <= 5; ++k) {
      CHECK(boundary_jump(r, k, eps) < 1e-9);
    }
  }
}
