#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pif/recipe.hpp"

namespace pif {

/// A uniformly sampled temperature series in physical units.
struct RawSeries {
  std::vector<double> times;  // seconds, strictly increasing, uniform step
  std::vector<double> temps;  // degrees Celsius
  std::string source;         // "csv" or "synthetic"

  double step() const { return times[1] - times[0]; }
};

struct SyntheticConfig {
  Recipe recipe;
  double step = 60.0;        // seconds
  double lag_tau = 0.0;      // seconds; 0 means no thermal lag
  double noise_sigma = 0.0;  // degrees Celsius
  std::uint64_t seed = 0;
};

/// One supervised sample: lookback inputs ending just before target_time.
struct Window {
  std::vector<double> input;  // normalized, length == lookback
  double target = 0.0;        // normalized
  double target_time = 0.0;   // seconds
};

/// Affine map between physical and normalized units:
/// normalized = (physical - shift) / scale.
struct Normalization {
  double shift = 0.0;
  double scale = 1.0;

  double normalize(double x) const { return (x - shift) / scale; }
  double denormalize(double z) const { return z * scale + shift; }
};

/// Windowed, chronologically split, normalized view of a RawSeries.
/// Immutable after prepare/inject_noise.
struct SeriesDataset {
  RawSeries raw;
  int lookback = 0;
  Normalization norm;
  std::vector<Window> windows;
  // Window index ranges: [0,train_end) train, [train_end,val_end) validation,
  // [val_end,windows.size()) test.
  int train_end = 0;
  int val_end = 0;

  int test_count() const { return static_cast<int>(windows.size()) - val_end; }
};

enum class NoiseMode { input_only, system_wide };

/// Parses "time_s,temperature_c" CSV. Throws ConfigError on malformed rows
/// (naming the line), non-monotone time, or non-uniform step.
RawSeries load_csv(const std::string& path);

void save_csv(const RawSeries& series, const std::string& path);

/// First-order lag response to the recipe prior plus additive Gaussian
/// noise. lag_tau = 0 bypasses the lag, leaving prior + noise. Deterministic
/// per seed.
RawSeries synthesize(const SyntheticConfig& config);

/// Builds stride-1 windows, splits them 60/20/20 chronologically (train and
/// validation rounded down), and normalizes to [-1,1] using the training
/// portion only. A constant training portion degrades to shift=mean, scale=1.
SeriesDataset prepare(const RawSeries& raw, int lookback);

/// Perturbs the test-split windows with N(0, sigma^2) in normalized units.
/// input_only leaves targets clean; system_wide perturbs both. sigma = 0
/// returns the dataset bit-identically. Train/validation windows untouched.
SeriesDataset inject_noise(const SeriesDataset& dataset, double sigma,
                           NoiseMode mode, std::uint64_t seed);

/// Reads a synthetic config JSON (keys: recipe [inline object or file path],
/// step_s, lag_tau_s, noise_sigma, seed). Unknown keys rejected.
SyntheticConfig load_synthetic_config(const std::string& path);

}  // namespace pif
