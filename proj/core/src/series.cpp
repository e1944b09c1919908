#include "pif/series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pif/errors.hpp"
#include "pif/rng.hpp"

namespace pif {

namespace {

void validate_uniform(const RawSeries& s, const std::string& origin) {
  if (s.times.size() != s.temps.size() || s.times.size() < 2) {
    throw ConfigError(origin + ": need at least 2 rows with matching lengths");
  }
  const double step = s.times[1] - s.times[0];
  if (!(step > 0.0)) {
    throw ConfigError(origin + ": time not strictly increasing at row 2");
  }
  const double span = s.times.back() - s.times.front();
  const double tol = 1e-9 * std::max(std::abs(span), 1.0);
  for (std::size_t i = 1; i < s.times.size(); ++i) {
    const double d = s.times[i] - s.times[i - 1];
    if (!(d > 0.0)) {
      throw ConfigError(origin + ": time not strictly increasing at row " +
                        std::to_string(i + 1));
    }
    if (std::abs(d - step) > tol) {
      throw ConfigError(origin + ": non-uniform time step at row " +
                        std::to_string(i + 1) + " (expected " +
                        std::to_string(step) + ", got " + std::to_string(d) +
                        ")");
    }
  }
}

}  // namespace

RawSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("load_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("load_csv: " + path + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_s,temperature_c") {
    throw ConfigError("load_csv: " + path +
                      ": expected header \"time_s,temperature_c\", got \"" +
                      line + "\"");
  }
  RawSeries out;
  out.source = "csv";
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("load_csv: " + path + ": line " +
                        std::to_string(line_no) + ": missing comma");
    }
    try {
      std::size_t used = 0;
      const std::string t_str = line.substr(0, comma);
      const std::string v_str = line.substr(comma + 1);
      const double t = std::stod(t_str, &used);
      if (used != t_str.size()) throw std::invalid_argument(t_str);
      const double v = std::stod(v_str, &used);
      if (used != v_str.size()) throw std::invalid_argument(v_str);
      out.times.push_back(t);
      out.temps.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("load_csv: " + path + ": line " +
                        std::to_string(line_no) + ": malformed row \"" + line +
                        "\"");
    }
  }
  validate_uniform(out, "load_csv: " + path);
  return out;
}

void save_csv(const RawSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("save_csv: cannot open " + path + " for writing");
  }
  out << "time_s,temperature_c\n";
  out.precision(17);
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    out << series.times[i] << "," << series.temps[i] << "\n";
  }
}

RawSeries synthesize(const SyntheticConfig& config) {
  if (!(config.step > 0.0)) {
    throw ConfigError("synthesize: step must be positive");
  }
  if (config.lag_tau < 0.0 || config.noise_sigma < 0.0) {
    throw ConfigError("synthesize: lag_tau and noise_sigma must be >= 0");
  }
  const double t0 = config.recipe.start_time();
  const double t6 = config.recipe.end_time();
  if (config.step >= t6 - t0) {
    throw ConfigError("synthesize: step must be smaller than the recipe span");
  }
  RawSeries out;
  out.source = "synthetic";
  const int n = static_cast<int>(std::floor((t6 - t0) / config.step)) + 1;
  out.times.reserve(n);
  out.temps.reserve(n);
  for (int k = 0; k < n; ++k) {
    out.times.push_back(t0 + k * config.step);
  }
  // First-order lag: T[k+1] = T[k] + (step/tau) * (prior(t[k]) - T[k]).
  std::vector<double> lagged(n);
  if (config.lag_tau == 0.0) {
    for (int k = 0; k < n; ++k) {
      lagged[k] = evaluate_prior(config.recipe, out.times[k]);
    }
  } else {
    lagged[0] = evaluate_prior(config.recipe, t0);
    const double gain = config.step / config.lag_tau;
    for (int k = 0; k + 1 < n; ++k) {
      const double target = evaluate_prior(config.recipe, out.times[k]);
      lagged[k + 1] = lagged[k] + gain * (target - lagged[k]);
    }
  }
  GaussianSampler gauss(config.seed);
  for (int k = 0; k < n; ++k) {
    const double noise =
        config.noise_sigma > 0.0 ? config.noise_sigma * gauss() : 0.0;
    out.temps.push_back(lagged[k] + noise);
  }
  return out;
}

SeriesDataset prepare(const RawSeries& raw, int lookback) {
  validate_uniform(raw, "prepare");
  if (lookback < 1) {
    throw ConfigError("prepare: lookback must be >= 1");
  }
  const int n = static_cast<int>(raw.times.size());
  if (n <= lookback + 5) {
    throw ConfigError("prepare: series length " + std::to_string(n) +
                      " too short for lookback " + std::to_string(lookback) +
                      " (need > lookback + 5)");
  }
  SeriesDataset ds;
  ds.raw = raw;
  ds.lookback = lookback;
  const int n_windows = n - lookback;
  ds.train_end = (n_windows * 6) / 10;
  ds.val_end = ds.train_end + (n_windows * 2) / 10;
  if (ds.train_end < 1 || ds.val_end <= ds.train_end ||
      ds.val_end >= n_windows) {
    throw ConfigError("prepare: series too short for a 60/20/20 window split");
  }
  // Normalization from the raw samples the training windows can see:
  // inputs and targets of windows [0, train_end), i.e. raw indices
  // [0, lookback + train_end).
  const int train_raw_end = lookback + ds.train_end;
  double lo = raw.temps[0];
  double hi = raw.temps[0];
  for (int i = 1; i < train_raw_end; ++i) {
    lo = std::min(lo, raw.temps[i]);
    hi = std::max(hi, raw.temps[i]);
  }
  if (hi > lo) {
    ds.norm.shift = (lo + hi) / 2.0;
    ds.norm.scale = (hi - lo) / 2.0;
  } else {
    // Constant training portion: keep the map invertible.
    ds.norm.shift = lo;
    ds.norm.scale = 1.0;
  }
  ds.windows.reserve(n_windows);
  for (int w = 0; w < n_windows; ++w) {
    Window win;
    win.input.reserve(lookback);
    for (int i = 0; i < lookback; ++i) {
      win.input.push_back(ds.norm.normalize(raw.temps[w + i]));
    }
    win.target = ds.norm.normalize(raw.temps[w + lookback]);
    win.target_time = raw.times[w + lookback];
    ds.windows.push_back(std::move(win));
  }
  return ds;
}

SeriesDataset inject_noise(const SeriesDataset& dataset, double sigma,
                           NoiseMode mode, std::uint64_t seed) {
  if (sigma < 0.0) {
    throw ConfigError("inject_noise: sigma must be >= 0");
  }
  SeriesDataset out = dataset;
  if (sigma == 0.0) return out;
  GaussianSampler gauss(seed);
  for (std::size_t w = out.val_end; w < out.windows.size(); ++w) {
    Window& win = out.windows[w];
    for (double& x : win.input) {
      x += sigma * gauss();
    }
    if (mode == NoiseMode::system_wide) {
      win.target += sigma * gauss();
    }
  }
  return out;
}

SyntheticConfig load_synthetic_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("load_synthetic_config: cannot open " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("load_synthetic_config: " + path + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("load_synthetic_config: " + path +
                      ": top level must be an object");
  }
  static const char* kKeys[] = {"recipe", "step_s", "lag_tau_s", "noise_sigma",
                                "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw ConfigError("load_synthetic_config: " + path +
                        ": unknown key \"" + key + "\"");
    }
  }
  for (const char* k : kKeys) {
    if (!j.contains(k)) {
      throw ConfigError("load_synthetic_config: " + path +
                        ": missing key \"" + std::string(k) + "\"");
    }
  }
  Recipe recipe = [&]() {
    if (j["recipe"].is_string()) {
      return load_recipe(j["recipe"].get<std::string>());
    }
    // Inline recipe object: route through the same validation by writing
    // nothing; reparse the subobject directly.
    const auto& r = j["recipe"];
    if (!r.is_object()) {
      throw ConfigError("load_synthetic_config: " + path +
                        ": \"recipe\" must be an object or a file path");
    }
    static const char* kRecipeKeys[] = {"name", "time_unit", "setpoints",
                                        "boundaries"};
    for (const auto& [key, _] : r.items()) {
      if (std::find_if(std::begin(kRecipeKeys), std::end(kRecipeKeys),
                       [&](const char* k) { return key == k; }) ==
          std::end(kRecipeKeys)) {
        throw ConfigError("load_synthetic_config: " + path +
                          ": unknown recipe key \"" + key + "\"");
      }
    }
    for (const char* k : kRecipeKeys) {
      if (!r.contains(k)) {
        throw ConfigError("load_synthetic_config: " + path +
                          ": missing recipe key \"" + std::string(k) + "\"");
      }
    }
    const std::string unit = r["time_unit"].get<std::string>();
    if (unit != "seconds" && unit != "hours") {
      throw ConfigError("load_synthetic_config: " + path +
                        ": recipe time_unit must be \"seconds\" or \"hours\"");
    }
    if (!r["setpoints"].is_array() || r["setpoints"].size() != 4 ||
        !r["boundaries"].is_array() || r["boundaries"].size() != 7) {
      throw ConfigError("load_synthetic_config: " + path +
                        ": recipe needs 4 setpoints and 7 boundaries");
    }
    std::array<double, 4> sp;
    for (int i = 0; i < 4; ++i) sp[i] = r["setpoints"][i].get<double>();
    const double to_s = unit == "hours" ? 3600.0 : 1.0;
    std::array<double, 7> tb;
    for (int i = 0; i < 7; ++i) tb[i] = r["boundaries"][i].get<double>() * to_s;
    return Recipe(r["name"].get<std::string>(), sp, tb);
  }();
  SyntheticConfig cfg{std::move(recipe)};
  if (!j["step_s"].is_number() || !j["lag_tau_s"].is_number() ||
      !j["noise_sigma"].is_number()) {
    throw ConfigError("load_synthetic_config: " + path +
                      ": step_s, lag_tau_s, noise_sigma must be numbers");
  }
  cfg.step = j["step_s"].get<double>();
  cfg.lag_tau = j["lag_tau_s"].get<double>();
  cfg.noise_sigma = j["noise_sigma"].get<double>();
  if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
    throw ConfigError("load_synthetic_config: " + path +
                      ": seed must be an integer");
  }
  cfg.seed = j["seed"].get<std::uint64_t>();
  return cfg;
}

}  // namespace pif
