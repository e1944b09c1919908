#include "pif/recipe.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "pif/errors.hpp"

namespace pif {

Recipe::Recipe(std::string name, std::array<double, 4> setpoints,
               std::array<double, 7> boundaries)
    : name_(std::move(name)), setpoints_(setpoints), boundaries_(boundaries) {
  for (int k = 0; k + 1 < 7; ++k) {
    if (!(boundaries_[k] < boundaries_[k + 1])) {
      std::ostringstream msg;
      msg << "recipe \"" << name_ << "\": boundaries must be strictly "
          << "increasing, but t" << k << "=" << boundaries_[k]
          << " >= t" << k + 1 << "=" << boundaries_[k + 1];
      throw ConfigError(msg.str());
    }
  }
}

double Recipe::min_setpoint() const {
  return *std::min_element(setpoints_.begin(), setpoints_.end());
}

double Recipe::max_setpoint() const {
  return *std::max_element(setpoints_.begin(), setpoints_.end());
}

double evaluate_prior(const Recipe& recipe, double t) {
  const auto& tb = recipe.boundaries();
  const auto& y = recipe.setpoints();
  if (t < tb[0] || t > tb[6]) {
    std::ostringstream msg;
    msg << "prior evaluation time " << t << " outside [" << tb[0] << ", "
        << tb[6] << "] for recipe \"" << recipe.name() << "\"";
    throw std::domain_error(msg.str());
  }
  if (t == tb[6]) return y[3];
  // Segment k covers [t_k, t_{k+1}); even k ramps y[k/2] -> y[k/2+1],
  // odd k holds y[(k+1)/2].
  int seg = 0;
  while (t >= tb[seg + 1]) ++seg;
  if (seg % 2 == 1) return y[(seg + 1) / 2];
  const int p = seg / 2;
  const double frac = (t - tb[seg]) / (tb[seg + 1] - tb[seg]);
  return y[p] + (y[p + 1] - y[p]) * frac;
}

PriorTrajectory sample_prior(const Recipe& recipe,
                             const std::vector<double>& times) {
  if (times.empty()) {
    throw std::domain_error("sample_prior: empty time vector");
  }
  PriorTrajectory out;
  out.times = times;
  out.values.reserve(times.size());
  out.recipe_name = recipe.name();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && times[i] < times[i - 1]) {
      std::ostringstream msg;
      msg << "sample_prior: times not nondecreasing at index " << i;
      throw std::domain_error(msg.str());
    }
    if (times[i] < recipe.start_time() || times[i] > recipe.end_time()) {
      std::ostringstream msg;
      msg << "sample_prior: time " << times[i] << " at index " << i
          << " outside [" << recipe.start_time() << ", " << recipe.end_time()
          << "]";
      throw std::domain_error(msg.str());
    }
    out.values.push_back(evaluate_prior(recipe, times[i]));
  }
  return out;
}

namespace {

nlohmann::json parse_json_file(const std::string& path,
                               const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(std::string(what) + ": cannot open " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

Recipe load_recipe(const std::string& path) {
  const nlohmann::json j = parse_json_file(path, "load_recipe");
  if (!j.is_object()) {
    throw ConfigError("load_recipe: " + path + ": top level must be an object");
  }
  static const char* kKeys[] = {"name", "time_unit", "setpoints", "boundaries"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw ConfigError("load_recipe: " + path + ": unknown key \"" + key +
                        "\"");
    }
  }
  for (const char* k : kKeys) {
    if (!j.contains(k)) {
      throw ConfigError("load_recipe: " + path + ": missing key \"" +
                        std::string(k) + "\"");
    }
  }
  if (!j["name"].is_string()) {
    throw ConfigError("load_recipe: " + path + ": \"name\" must be a string");
  }
  const std::string unit = j["time_unit"].is_string()
                               ? j["time_unit"].get<std::string>()
                               : std::string();
  if (unit != "seconds" && unit != "hours") {
    throw ConfigError("load_recipe: " + path +
                      ": \"time_unit\" must be \"seconds\" or \"hours\"");
  }
  const auto& sp = j["setpoints"];
  if (!sp.is_array() || sp.size() != 4) {
    throw ConfigError("load_recipe: " + path +
                      ": \"setpoints\" must be an array of 4 numbers");
  }
  const auto& tb = j["boundaries"];
  if (!tb.is_array() || tb.size() != 7) {
    throw ConfigError("load_recipe: " + path +
                      ": \"boundaries\" must be an array of 7 numbers");
  }
  std::array<double, 4> setpoints;
  for (int i = 0; i < 4; ++i) {
    if (!sp[i].is_number()) {
      throw ConfigError("load_recipe: " + path + ": setpoints[" +
                        std::to_string(i) + "] is not a number");
    }
    setpoints[i] = sp[i].get<double>();
  }
  const double to_seconds = unit == "hours" ? 3600.0 : 1.0;
  std::array<double, 7> boundaries;
  for (int i = 0; i < 7; ++i) {
    if (!tb[i].is_number()) {
      throw ConfigError("load_recipe: " + path + ": boundaries[" +
                        std::to_string(i) + "] is not a number");
    }
    boundaries[i] = tb[i].get<double>() * to_seconds;
  }
  return Recipe(j["name"].get<std::string>(), setpoints, boundaries);
}

void save_recipe(const Recipe& recipe, const std::string& path) {
  nlohmann::json j;
  j["name"] = recipe.name();
  j["time_unit"] = "seconds";
  j["setpoints"] = recipe.setpoints();
  j["boundaries"] = recipe.boundaries();
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("save_recipe: cannot open " + path + " for writing");
  }
  out << j.dump(2) << "\n";
}

}  // namespace pif
