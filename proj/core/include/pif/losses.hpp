#pragma once

#include <span>
#include <vector>

#include "pif/tape.hpp"

namespace pif {

/// Static data/prior trade-off. lambda = 0 is pure data fit, 1 pure prior.
struct FixedWeight {
  double lambda = 0.0;
};

/// Log-parameterized per-task noise scales. sigma = exp(log_sigma) is
/// positive by construction, so no constraint handling is needed. Neutral
/// start is log sigma = 0 for both tasks.
struct UncertaintyParams {
  double log_sigma_data = 0.0;
  double log_sigma_pi = 0.0;
};

/// Per-sample residual EMAs, indexed by global sample id. Both trackers
/// start at zero; the loss falls back to equal weights until the first
/// update seeds them.
struct RbaState {
  RbaState(int n_samples, double eta);

  std::vector<double> lambda_data;
  std::vector<double> lambda_pi;
  double eta;
};

/// (1/N) * sum (pred_i - target_i)^2. pred may be any shape; target length
/// must equal its element count.
Value mse_loss(Tape& tape, Value pred, std::span<const double> target);

/// (1 - lambda) * mse(pred, y_true) + lambda * mse(pred, y_pi).
/// At lambda 0 or 1 the surviving MSE node is returned directly, so the
/// endpoint losses are bit-identical to plain mse_loss.
Value fixed_loss(Tape& tape, Value pred, std::span<const double> y_true,
                 std::span<const double> y_pi, FixedWeight fw);

/// 0.5 exp(-2 lsd) L_data + 0.5 exp(-2 lsp) L_pi + lsd + lsp, where lsd and
/// lsp are scalar tape leaves so the noise scales train with the model.
Value uncertainty_loss(Tape& tape, Value pred, std::span<const double> y_true,
                       std::span<const double> y_pi, Value log_sigma_data,
                       Value log_sigma_pi);

/// EMA step: lambda <- (1 - eta) * lambda + eta * |residual|, one tracker
/// per target kind. Predictions enter as plain numbers (detached).
void rba_update(RbaState& state, std::span<const int> ids,
                std::span<const double> pred, std::span<const double> y_true,
                std::span<const double> y_pi);

/// (1/B) * sum_i [w_d(i) (pred_i - y_true_i)^2 + w_pi(i) (pred_i - y_pi_i)^2]
/// with w_d = lambda_d / (lambda_d + lambda_pi) and w_pi its complement,
/// (0.5, 0.5) where both trackers are zero. Weights enter the graph as
/// constants: no gradient flows through them.
Value rba_loss(Tape& tape, const RbaState& state, std::span<const int> ids,
               Value pred, std::span<const double> y_true,
               std::span<const double> y_pi);

}  // namespace pif
