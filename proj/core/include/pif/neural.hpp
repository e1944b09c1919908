#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pif/series.hpp"
#include "pif/tape.hpp"

namespace pif {

enum class Family { MLP, RNN, LSTM, Transformer, KAN, CKAN, LEM };

constexpr std::array<Family, 7> kAllFamilies = {
    Family::MLP,  Family::RNN,  Family::LSTM, Family::Transformer,
    Family::KAN,  Family::CKAN, Family::LEM};

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Target parameter budget for a build. tolerance is the accepted fraction
/// of deviation from target, at most 0.05.
struct SizeTier {
  int target = 0;
  double tolerance = 0.05;
};

/// Desk-scale budgets. The largest one is the headline tier used by the
/// robustness and transfer studies.
constexpr std::array<SizeTier, 3> kDeskTiers = {
    SizeTier{2000, 0.05}, SizeTier{8000, 0.05}, SizeTier{30000, 0.05}};

/// Fully resolved architecture. width is the hidden size in every family
/// (model dimension for Transformer); the family-specific knobs are blocks
/// and heads (Transformer), grid (KAN spline intervals per edge), and
/// degree (cKAN Chebyshev degree per edge).
struct NeuralConfig {
  Family family = Family::MLP;
  int lookback = 50;
  int width = 8;
  int blocks = 1;
  int heads = 2;
  int grid = 5;
  int degree = 5;
  std::uint64_t seed = 0;
};

/// One named parameter block; offset indexes the flat parameter vector.
struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  int offset = 0;
  bool head = false;

  int size() const { return rows * cols; }
};

/// Per-pass tape leaves, one per parameter block in block order. Frozen
/// body blocks are bound as constants, so their gradients are exactly zero.
struct BoundParams {
  std::vector<Value> leaves;
};

/// Parameter count a config would produce, without building it.
int parameter_count(const NeuralConfig& cfg);

/// Deterministic search for the architecture whose count lands nearest the
/// tier target (ties toward smaller width, then smaller family knob).
/// Throws ConfigError when nothing lands within tolerance.
NeuralConfig resolve_tier(Family family, int lookback, SizeTier tier,
                          std::uint64_t seed);

class NeuralModel {
 public:
  static NeuralModel from_config(const NeuralConfig& cfg);
  static NeuralModel build(Family family, int lookback, SizeTier tier,
                           std::uint64_t seed);

  const NeuralConfig& config() const { return cfg_; }
  Family family() const { return cfg_.family; }
  int lookback() const { return cfg_.lookback; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  int parameter_count() const { return static_cast<int>(params_.size()); }
  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> p);

  /// Hidden size feeding the affine head.
  int head_width() const { return cfg_.width; }
  void set_head(std::span<const double> weights, double bias);
  /// Fresh affine head init, same rule as construction.
  void reset_head(std::uint64_t seed);
  void freeze_body() { frozen_ = true; }
  bool body_frozen() const { return frozen_; }

  /// FNV-1a over the flat parameter bytes.
  std::uint64_t checksum() const;
  /// Same, head blocks excluded.
  std::uint64_t body_checksum() const;

  BoundParams bind(Tape& tape) const;

  /// X holds one normalized window per column: (lookback, B). Returns the
  /// (1, B) batch of one-step forecasts.
  Value forward_batch(Tape& tape, const BoundParams& bp, Value X) const;

  /// Single-window convenience wrapper.
  Value forward(Tape& tape, const BoundParams& bp,
                std::span<const double> window) const;

  /// Flat gradient aligned with parameters(), read back after
  /// Tape::backward. Frozen blocks report zeros.
  std::vector<double> gradient(const Tape& tape, const BoundParams& bp) const;

  const std::shared_ptr<const BSplineGrid>& spline_grid() const {
    return grid_;
  }

 private:
  NeuralModel() = default;

  NeuralConfig cfg_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  bool frozen_ = false;
  std::shared_ptr<const BSplineGrid> grid_;
};

/// Copy with the given head and the body frozen; body bytes unchanged.
NeuralModel replace_head(const NeuralModel& model,
                         std::span<const double> head_weights, double head_bias);

/// (lookback, |ids|) matrix with windows[ids[k]] in column k.
Tensor window_matrix(const SeriesDataset& ds, std::span<const int> ids);

/// Normalized one-step forecasts over window indices [begin, end).
std::vector<double> predict_norm(const NeuralModel& model,
                                 const SeriesDataset& ds, int begin, int end);

/// Same forecasts denormalized to physical units.
std::vector<double> predict_series(const NeuralModel& model,
                                   const SeriesDataset& ds, int begin, int end);

/// Diagnostic forecast a Transformer would emit reading out token `pos`
/// instead of the last one; exercises the causal mask.
Value transformer_readout(Tape& tape, const NeuralModel& model,
                          const BoundParams& bp, std::span<const double> window,
                          int pos);

/// Binary checkpoint: magic, JSON architecture header, raw little-endian
/// 64-bit float parameters. Round trip is bit-exact.
void save_checkpoint(const NeuralModel& model, const std::string& path);
NeuralModel load_checkpoint(const std::string& path);

}  // namespace pif
