#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "pif/neural.hpp"
#include "pif/recipe.hpp"
#include "pif/series.hpp"
#include "pif/train.hpp"

namespace pif {

/// Everything needed to materialize one synthetic dataset. noise_sigma is
/// synthesis noise in degrees Celsius over the whole series;
/// train_noise_sigma is normalized-unit noise applied only to the samples
/// the train/validation windows touch, so test targets stay clean.
/// cycles > 1 concatenates that many back-to-back runs of the recipe (each
/// with independent noise and a fresh lag state) on one continuous time
/// axis, so a chronological split sees every process phase during training.
struct DatasetSpec {
  Recipe recipe;
  int lookback = 50;
  double step = 60.0;
  double lag_tau = 0.0;
  double noise_sigma = 0.0;
  double train_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int cycles = 1;
  std::string recipe_path;  // provenance for manifests; may be empty
};

SeriesDataset make_dataset(const DatasetSpec& spec);
/// Same spec with its stochastic parts reseeded for an independent run.
SeriesDataset make_dataset(const DatasetSpec& spec, std::uint64_t run_seed);

/// Normalized prior values aligned with the dataset windows; target times
/// past the first cycle wrap back to their recipe phase.
std::vector<double> prior_targets(const DatasetSpec& spec,
                                  const SeriesDataset& ds);

/// The benchmark matrix: families x strategies x tiers, repeated per seed.
/// Classical forecasters ride along unless include_classical is off. When
/// wall_timing is false every reported duration is written as zero, which
/// keeps rerun outputs byte-identical.
struct BenchmarkPlan {
  DatasetSpec dataset;
  std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
  std::vector<LossConfig> strategies = {LossConfig{}};
  std::vector<SizeTier> tiers = {kDeskTiers[0]};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<double> sigma_grid;  // defaulted by default_sigma_grid()
  std::vector<NoiseMode> noise_modes = {NoiseMode::input_only,
                                        NoiseMode::system_wide};
  bool include_classical = true;
  TrainConfig train;
  bool explicit_lr = false;  // false: per-family default learning rate
  bool wall_timing = true;
};

/// 0.0 through 1.0 in steps of 0.1.
std::vector<double> default_sigma_grid();

/// One table line. kind is "seed" for a single run, "mean"/"std" for the
/// aggregates over the plan's seed list. Metrics come in normalized units
/// (the table-comparable ones) and in degrees Celsius (_c).
struct ResultRow {
  std::string model;
  int tier = 0;  // parameter budget; 0 for classical rows
  std::string kind = "seed";
  std::uint64_t seed = 0;
  int params = 0;
  double rmse = 0.0;
  double linf_rmse = 0.0;
  double gradient_error = 0.0;
  double linf_grad_error = 0.0;
  double rmse_c = 0.0;
  double linf_rmse_c = 0.0;
  double gradient_error_c = 0.0;
  double linf_grad_error_c = 0.0;
  int n_points = 0;
  double train_seconds = 0.0;
};

/// One point of a robustness curve, evaluated on a noise-injected test set.
struct NoiseRow {
  std::string model;
  int tier = 0;
  std::uint64_t seed = 0;
  std::string mode;
  double sigma = 0.0;
  double rmse = 0.0;
  double linf_rmse = 0.0;
  double gradient_error = 0.0;
  double linf_grad_error = 0.0;
  double rmse_c = 0.0;
  double linf_rmse_c = 0.0;
  double gradient_error_c = 0.0;
  double linf_grad_error_c = 0.0;
};

struct CellFailure {
  std::string model;
  int tier = 0;
  std::uint64_t seed = 0;
  std::string error;
};

struct BenchmarkResult {
  std::vector<ResultRow> rows;
  std::vector<NoiseRow> curves;
  std::vector<CellFailure> failures;
  bool interrupted = false;
};

/// Runs every plan cell on a bounded worker pool. A failing cell lands in
/// failures and the run continues; a set cancel flag stops scheduling new
/// cells and returns whatever finished. Row order is fixed by the plan, not
/// by scheduling, so equal plans give byte-equal tables.
BenchmarkResult run_benchmark(const BenchmarkPlan& plan, int jobs,
                              bool with_noise_sweep,
                              const std::atomic<bool>* cancel = nullptr);

/// Reuse of a pretrained checkpoint on a new dataset. baseline_eval only
/// loads and predicts; linear_probe retrains a fresh head on the frozen
/// body; full_finetune trains everything at the scaled-down rate.
struct TransferPlan {
  std::string checkpoint;
  DatasetSpec target;
  std::vector<std::string> strategies = {"baseline_eval", "linear_probe",
                                         "full_finetune"};
  TrainConfig train;
  bool explicit_lr = false;
  double finetune_lr_scale = 0.1;
  std::uint64_t seed = 0;
  bool wall_timing = true;
};

struct TransferRow {
  std::string strategy;
  int params_trained = 0;
  std::uint64_t body_checksum = 0;
  double rmse = 0.0;
  double linf_rmse = 0.0;
  double gradient_error = 0.0;
  double linf_grad_error = 0.0;
  double rmse_c = 0.0;
  double linf_rmse_c = 0.0;
  double gradient_error_c = 0.0;
  double linf_grad_error_c = 0.0;
  int n_points = 0;
  double train_seconds = 0.0;
};

std::vector<TransferRow> run_transfer(const TransferPlan& plan);

/// One supervised training run from a config file. The model block names a
/// family plus either a parameter tier or explicit dimensions; tiered
/// models resolve against the dataset lookback. seed feeds the shuffle
/// stream; the model block carries its own init seed.
struct TrainJob {
  DatasetSpec dataset;
  NeuralConfig model;
  TrainConfig train;
  bool explicit_lr = false;
  bool wall_timing = true;
  std::uint64_t seed = 0;
};

/// Strict JSON plan files; unknown keys and out-of-range values throw
/// ConfigError naming the key.
BenchmarkPlan load_benchmark_plan(const std::string& path);
TransferPlan load_transfer_plan(const std::string& path);
TrainJob load_train_job(const std::string& path);

void write_benchmark_csv(const std::vector<ResultRow>& rows,
                         const std::string& path);
void write_noise_csv(const std::vector<NoiseRow>& curves,
                     const std::string& path);
void write_transfer_csv(const std::vector<TransferRow>& rows,
                        const std::string& path);
void write_failures_csv(const std::vector<CellFailure>& failures,
                        const std::string& path);
/// Plot-ready long format: model, sigma, mode, metric, value. Benchmark
/// aggregates enter as mode "clean"; curve points are averaged over seeds.
void write_long_csv(const std::vector<ResultRow>& rows,
                    const std::vector<NoiseRow>& curves,
                    const std::string& path);
/// Machine-readable bundle of every table the run produced.
void write_results_json(const BenchmarkResult& result,
                        const std::vector<TransferRow>& transfer,
                        const std::string& path);

/// Tables recovered from a results.json, for rendering reports without
/// rerunning the experiments.
struct ResultsBundle {
  BenchmarkResult benchmark;
  std::vector<TransferRow> transfer;
};

ResultsBundle read_results_json(const std::string& path);

/// FNV-1a over the file bytes, for run manifests.
std::uint64_t hash_file(const std::string& path);

}  // namespace pif
