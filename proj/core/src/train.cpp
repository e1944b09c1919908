#include "pif/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pif/errors.hpp"
#include "pif/losses.hpp"
#include "pif/metrics.hpp"
#include "pif/rng.hpp"

namespace pif {

namespace {

// Bias-corrected Adam over one flat parameter vector.
struct Adam {
  explicit Adam(std::size_t n, double lr_in) : lr(lr_in), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grads) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[i];
      v[i] = 0.999 * v[i] + 0.001 * grads[i] * grads[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }

  double lr;
  std::vector<double> m, v;
  long t = 0;
};

std::vector<double> gather_targets(const SeriesDataset& ds,
                                   std::span<const int> ids) {
  std::vector<double> out(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out[k] = ds.windows[static_cast<std::size_t>(ids[k])].target;
  }
  return out;
}

std::vector<double> gather(std::span<const double> values,
                           std::span<const int> ids) {
  std::vector<double> out(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out[k] = values[static_cast<std::size_t>(ids[k])];
  }
  return out;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::string strategy_name(LossStrategy s) {
  switch (s) {
    case LossStrategy::data_only:
      return "data_only";
    case LossStrategy::fixed:
      return "fixed";
    case LossStrategy::uncertainty:
      return "uncertainty";
    case LossStrategy::rba:
      return "rba";
  }
  throw std::invalid_argument("strategy_name: unknown strategy");
}

LossStrategy strategy_from_name(const std::string& name) {
  if (name == "data_only") return LossStrategy::data_only;
  if (name == "fixed") return LossStrategy::fixed;
  if (name == "uncertainty") return LossStrategy::uncertainty;
  if (name == "rba") return LossStrategy::rba;
  throw ConfigError("unknown loss strategy \"" + name +
                    "\" (expected data_only, fixed, uncertainty, or rba)");
}

TrainConfig default_train_config(Family family) {
  TrainConfig cfg;
  if (family == Family::Transformer) cfg.learning_rate = 5e-4;
  return cfg;
}

std::vector<double> prior_targets(const Recipe& recipe,
                                  const SeriesDataset& ds) {
  std::vector<double> out(ds.windows.size());
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    out[i] = ds.norm.normalize(evaluate_prior(recipe, ds.windows[i].target_time));
  }
  return out;
}

double validation_rmse(const NeuralModel& model, const SeriesDataset& ds) {
  if (ds.val_end <= ds.train_end) {
    throw std::invalid_argument("validation_rmse: empty validation split");
  }
  const std::vector<double> pred =
      predict_norm(model, ds, ds.train_end, ds.val_end);
  std::vector<double> truth(pred.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    truth[k] = ds.windows[static_cast<std::size_t>(ds.train_end) + k].target;
  }
  return rmse(pred, truth);
}

TrainReport train(NeuralModel& model, const SeriesDataset& ds,
                  std::span<const double> pi_targets, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();

  require(cfg.max_epochs >= 1, "train: max_epochs must be >= 1");
  require(cfg.patience >= 1 && cfg.patience < cfg.max_epochs,
          "train: patience must be in [1, max_epochs)");
  require(cfg.learning_rate > 0.0, "train: learning_rate must be positive");
  require(cfg.batch_size >= 1, "train: batch_size must be >= 1");
  if (model.lookback() != ds.lookback) {
    throw std::invalid_argument("train: model lookback " +
                                std::to_string(model.lookback()) +
                                " does not match dataset lookback " +
                                std::to_string(ds.lookback));
  }
  if (ds.train_end < 1 || ds.val_end <= ds.train_end) {
    throw std::invalid_argument(
        "train: dataset needs non-empty train and validation splits");
  }
  const bool uses_pi = cfg.loss.strategy != LossStrategy::data_only;
  if (uses_pi && pi_targets.size() != ds.windows.size()) {
    throw std::invalid_argument(
        "train: pi_targets must cover every window for the " +
        strategy_name(cfg.loss.strategy) + " strategy");
  }
  if (cfg.loss.strategy == LossStrategy::fixed) {
    require(cfg.loss.lambda >= 0.0 && cfg.loss.lambda <= 1.0,
            "train: lambda must be in [0, 1]");
  }
  if (cfg.loss.strategy == LossStrategy::rba) {
    require(cfg.loss.eta > 0.0 && cfg.loss.eta <= 1.0,
            "train: eta must be in (0, 1]");
  }

  const int n_train = ds.train_end;
  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);

  UncertaintyParams up;
  RbaState rba(static_cast<int>(ds.windows.size()),
               cfg.loss.strategy == LossStrategy::rba ? cfg.loss.eta : 1.0);
  const bool track_sigmas = cfg.loss.strategy == LossStrategy::uncertainty;

  Adam adam(model.parameters().size() + (track_sigmas ? 2 : 0),
            cfg.learning_rate);

  TrainReport report;
  std::vector<double> best_params(model.parameters().begin(),
                                  model.parameters().end());
  double best_lsd = up.log_sigma_data;
  double best_lsp = up.log_sigma_pi;
  double best_rmse = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  Tape tape;
  try {
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      std::mt19937_64 shuffler(
          derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffler);

      double loss_sum = 0.0;
      for (int start = 0; start < n_train; start += cfg.batch_size) {
        const int stop = std::min(n_train, start + cfg.batch_size);
        const std::span<const int> ids(order.data() + start,
                                       static_cast<std::size_t>(stop - start));

        tape.reset();
        BoundParams bp = model.bind(tape);
        Value X = tape.constant(window_matrix(ds, ids));
        Value pred = model.forward_batch(tape, bp, X);

        const std::vector<double> y_true = gather_targets(ds, ids);
        std::vector<double> y_pi;
        if (uses_pi) y_pi = gather(pi_targets, ids);

        Value loss;
        Value lsd_leaf, lsp_leaf;
        switch (cfg.loss.strategy) {
          case LossStrategy::data_only:
            loss = mse_loss(tape, pred, y_true);
            break;
          case LossStrategy::fixed:
            loss = fixed_loss(tape, pred, y_true, y_pi,
                              FixedWeight{cfg.loss.lambda});
            break;
          case LossStrategy::uncertainty:
            lsd_leaf = tape.leaf(Tensor::scalar(up.log_sigma_data));
            lsp_leaf = tape.leaf(Tensor::scalar(up.log_sigma_pi));
            loss = uncertainty_loss(tape, pred, y_true, y_pi, lsd_leaf,
                                    lsp_leaf);
            break;
          case LossStrategy::rba:
            rba_update(rba, ids, pred.val().a, y_true, y_pi);
            loss = rba_loss(tape, rba, ids, pred, y_true, y_pi);
            break;
        }

        tape.backward(loss);
        std::vector<double> grads = model.gradient(tape, bp);
        if (track_sigmas) {
          grads.push_back(tape.grad(lsd_leaf).a[0]);
          grads.push_back(tape.grad(lsp_leaf).a[0]);
        }
        for (double g : grads) {
          if (!std::isfinite(g)) {
            throw NonFiniteError("train: non-finite gradient");
          }
        }

        std::vector<double> theta(model.parameters().begin(),
                                  model.parameters().end());
        if (track_sigmas) {
          theta.push_back(up.log_sigma_data);
          theta.push_back(up.log_sigma_pi);
        }
        adam.step(theta, grads);
        if (track_sigmas) {
          up.log_sigma_pi = theta.back();
          theta.pop_back();
          up.log_sigma_data = theta.back();
          theta.pop_back();
        }
        model.set_parameters(theta);
        loss_sum += loss.scalar() * (stop - start);
      }
      tape.reset();

      report.train_loss.push_back(loss_sum / n_train);
      const double vr = validation_rmse(model, ds);
      if (!std::isfinite(vr)) {
        throw NonFiniteError("train: non-finite validation RMSE");
      }
      report.val_rmse.push_back(vr);
      report.epochs_run = epoch + 1;

      if (vr < best_rmse) {
        best_rmse = vr;
        best_epoch = epoch;
        best_params.assign(model.parameters().begin(),
                           model.parameters().end());
        best_lsd = up.log_sigma_data;
        best_lsp = up.log_sigma_pi;
      } else if (epoch - best_epoch >= cfg.patience) {
        break;
      }
    }
  } catch (const NonFiniteError& e) {
    report.diverged = true;
    report.message = std::string(e.what()) + "; completed epochs: " +
                     std::to_string(report.epochs_run);
  }

  model.set_parameters(best_params);
  report.best_epoch = std::max(best_epoch, 0);
  report.log_sigma_data = best_lsd;
  report.log_sigma_pi = best_lsp;
  report.param_checksum = model.checksum();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

LambdaSearchResult search_lambda(const std::function<NeuralModel()>& factory,
                                 const SeriesDataset& ds,
                                 std::span<const double> pi_targets,
                                 const TrainConfig& base,
                                 std::span<const double> grid) {
  if (grid.empty()) {
    throw std::invalid_argument("search_lambda: empty grid");
  }
  LambdaSearchResult result;
  result.grid.assign(grid.begin(), grid.end());
  result.val_rmse.resize(grid.size());

  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    NeuralModel model = factory();
    TrainConfig cfg = base;
    cfg.loss.strategy = LossStrategy::fixed;
    cfg.loss.lambda = grid[i];
    const TrainReport rep = train(model, ds, pi_targets, cfg);
    result.val_rmse[i] = rep.val_rmse.empty()
                             ? std::numeric_limits<double>::infinity()
                             : rep.best_val_rmse();
    const double score = result.val_rmse[i];
    const double best = result.val_rmse[best_i];
    if (score < best || (score == best && grid[i] < result.grid[best_i])) {
      best_i = i;
    }
  }
  result.best_lambda = result.grid[best_i];
  return result;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[static_cast<std::size_t>(i)] = i / 10.0;
  return grid;
}

void save_train_report(const TrainReport& report, const std::string& path) {
  nlohmann::json j;
  j["epochs_run"] = report.epochs_run;
  j["best_epoch"] = report.best_epoch;
  j["train_loss"] = report.train_loss;
  j["val_rmse"] = report.val_rmse;
  j["wall_seconds"] = report.wall_seconds;
  j["param_checksum"] = report.param_checksum;
  j["diverged"] = report.diverged;
  j["message"] = report.message;
  j["log_sigma_data"] = report.log_sigma_data;
  j["log_sigma_pi"] = report.log_sigma_pi;
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("save_train_report: cannot open " + path +
                      " for writing");
  }
  out << j.dump(2) << "\n";
}

void save_train_curves(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("save_train_curves: cannot open " + path +
                      " for writing");
  }
  out << "epoch,train_loss,val_rmse\n";
  out.precision(17);
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out << (e + 1) << "," << report.train_loss[e] << "," << report.val_rmse[e]
        << "\n";
  }
}

}  // namespace pif
