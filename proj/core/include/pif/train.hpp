#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pif/neural.hpp"
#include "pif/recipe.hpp"
#include "pif/series.hpp"

namespace pif {

enum class LossStrategy { data_only, fixed, uncertainty, rba };

std::string strategy_name(LossStrategy s);
LossStrategy strategy_from_name(const std::string& name);

struct LossConfig {
  LossStrategy strategy = LossStrategy::data_only;
  double lambda = 0.5;  // fixed strategy
  double eta = 0.01;    // rba strategy
};

struct TrainConfig {
  int max_epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int patience = 10;
  std::uint64_t seed = 0;
  LossConfig loss;
};

/// Family defaults; the attention stack trains at a halved rate.
TrainConfig default_train_config(Family family);

struct TrainReport {
  int epochs_run = 0;
  /// Index into the curves; the validation minimum. Meaningful only when
  /// at least one epoch completed.
  int best_epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> val_rmse;  // normalized units
  double wall_seconds = 0.0;
  std::uint64_t param_checksum = 0;
  bool diverged = false;
  std::string message;
  /// Learned noise scales, meaningful for the uncertainty strategy.
  double log_sigma_data = 0.0;
  double log_sigma_pi = 0.0;

  double best_val_rmse() const { return val_rmse.at(best_epoch); }
};

/// Normalized prior values at each window's target time, aligned with
/// dataset.windows; the y_PI column of every process-informed loss.
std::vector<double> prior_targets(const Recipe& recipe,
                                  const SeriesDataset& ds);

/// Validation RMSE in normalized units over the validation split.
double validation_rmse(const NeuralModel& model, const SeriesDataset& ds);

/// Mini-batch Adam (0.9, 0.999, 1e-8) with per-epoch seeded shuffling and
/// early stopping on validation RMSE; the best-epoch weights are restored
/// on exit. pi_targets may be empty for the data_only strategy and must
/// cover every window otherwise. A non-finite loss or gradient aborts the
/// run after restoring the best weights seen.
TrainReport train(NeuralModel& model, const SeriesDataset& ds,
                  std::span<const double> pi_targets, const TrainConfig& cfg);

struct LambdaSearchResult {
  double best_lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> val_rmse;  // best validation RMSE per grid entry
};

/// Trains one fixed-weight model per grid value, every run starting from
/// the factory's identical initialization and the shared seed. Returns the
/// validation argmin; ties go to the earliest grid entry.
LambdaSearchResult search_lambda(const std::function<NeuralModel()>& factory,
                                 const SeriesDataset& ds,
                                 std::span<const double> pi_targets,
                                 const TrainConfig& base,
                                 std::span<const double> grid);

/// 0.0 through 0.9 in steps of 0.1.
std::vector<double> default_lambda_grid();

void save_train_report(const TrainReport& report, const std::string& path);
/// CSV rows: epoch, train_loss, val_rmse.
void save_train_curves(const TrainReport& report, const std::string& path);

}  // namespace pif
