#pragma once

#include <array>
#include <string>
#include <vector>

namespace pif {

/// A staged thermal recipe: four temperature setpoints joined by alternating
/// ramp and hold segments, bounded by seven strictly increasing phase times.
/// Immutable after construction; all member functions are pure.
class Recipe {
 public:
  /// Throws ConfigError unless boundaries are strictly increasing.
  /// Boundaries are in seconds.
  Recipe(std::string name, std::array<double, 4> setpoints,
         std::array<double, 7> boundaries);

  const std::string& name() const { return name_; }
  const std::array<double, 4>& setpoints() const { return setpoints_; }
  const std::array<double, 7>& boundaries() const { return boundaries_; }

  double start_time() const { return boundaries_.front(); }
  double end_time() const { return boundaries_.back(); }
  double min_setpoint() const;
  double max_setpoint() const;

 private:
  std::string name_;
  std::array<double, 4> setpoints_;
  std::array<double, 7> boundaries_;
};

/// The idealized trajectory sampled at explicit times.
struct PriorTrajectory {
  std::vector<double> times;
  std::vector<double> values;
  std::string recipe_name;
};

/// Piecewise-linear setpoint trajectory at time t (seconds).
/// Segments are half-open [t_k, t_{k+1}); t == t6 returns the final setpoint.
/// Throws std::domain_error when t is outside [t0, t6].
double evaluate_prior(const Recipe& recipe, double t);

/// Element-wise evaluate_prior. Times must be nondecreasing, nonempty, and
/// within [t0, t6]; violations throw std::domain_error naming the index.
PriorTrajectory sample_prior(const Recipe& recipe,
                             const std::vector<double>& times);

/// Recipe file I/O. The file is a JSON object with exactly the keys "name",
/// "time_unit" ("seconds" or "hours"), "setpoints" (4 numbers), and
/// "boundaries" (7 numbers). Unknown keys are rejected. Hours are converted
/// to seconds on load; save always writes seconds.
Recipe load_recipe(const std::string& path);
void save_recipe(const Recipe& recipe, const std::string& path);

}  // namespace pif
