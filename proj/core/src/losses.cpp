#include "pif/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pif {

namespace {

Tensor like(Value pred, std::span<const double> v) {
  Tensor t(pred.rows(), pred.cols());
  for (int i = 0; i < t.size(); ++i) t.a[i] = v[i];
  return t;
}

void check_batch(Value pred, std::span<const double> target, const char* op) {
  const int n = pred.rows() * pred.cols();
  if (n < 1) throw std::invalid_argument(std::string(op) + ": empty batch");
  if (static_cast<int>(target.size()) != n)
    throw std::invalid_argument(std::string(op) + ": length mismatch");
}

}  // namespace

RbaState::RbaState(int n_samples, double e)
    : lambda_data(n_samples, 0.0), lambda_pi(n_samples, 0.0), eta(e) {
  if (n_samples < 1) throw std::invalid_argument("RbaState: empty sample set");
  if (!(eta > 0.0) || eta > 1.0)
    throw std::invalid_argument("RbaState: eta must be in (0, 1]");
}

Value mse_loss(Tape& tape, Value pred, std::span<const double> target) {
  check_batch(pred, target, "mse_loss");
  Value d = sub(pred, tape.constant(like(pred, target)));
  return mean(mul(d, d));
}

Value fixed_loss(Tape& tape, Value pred, std::span<const double> y_true,
                 std::span<const double> y_pi, FixedWeight fw) {
  if (!(fw.lambda >= 0.0) || fw.lambda > 1.0)
    throw std::invalid_argument("fixed_loss: lambda must be in [0, 1]");
  check_batch(pred, y_true, "fixed_loss");
  check_batch(pred, y_pi, "fixed_loss");
  if (fw.lambda == 0.0) return mse_loss(tape, pred, y_true);
  if (fw.lambda == 1.0) return mse_loss(tape, pred, y_pi);
  Value ld = mse_loss(tape, pred, y_true);
  Value lp = mse_loss(tape, pred, y_pi);
  return add(mul(tape.constant_scalar(1.0 - fw.lambda), ld),
             mul(tape.constant_scalar(fw.lambda), lp));
}

Value uncertainty_loss(Tape& tape, Value pred, std::span<const double> y_true,
                       std::span<const double> y_pi, Value log_sigma_data,
                       Value log_sigma_pi) {
  if (!log_sigma_data.val().is_scalar() || !log_sigma_pi.val().is_scalar())
    throw std::invalid_argument("uncertainty_loss: log sigmas must be scalar");
  Value ld = mse_loss(tape, pred, y_true);
  Value lp = mse_loss(tape, pred, y_pi);
  Value half = tape.constant_scalar(0.5);
  Value neg2 = tape.constant_scalar(-2.0);
  Value td = mul(half, mul(exp_v(mul(neg2, log_sigma_data)), ld));
  Value tp = mul(half, mul(exp_v(mul(neg2, log_sigma_pi)), lp));
  return add(add(td, tp), add(log_sigma_data, log_sigma_pi));
}

void rba_update(RbaState& state, std::span<const int> ids,
                std::span<const double> pred, std::span<const double> y_true,
                std::span<const double> y_pi) {
  if (ids.size() != pred.size() || ids.size() != y_true.size() ||
      ids.size() != y_pi.size())
    throw std::invalid_argument("rba_update: length mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= static_cast<int>(state.lambda_data.size()))
      throw std::out_of_range("rba_update: sample id " + std::to_string(id));
    const double keep = 1.0 - state.eta;
    state.lambda_data[id] =
        keep * state.lambda_data[id] + state.eta * std::abs(pred[i] - y_true[i]);
    state.lambda_pi[id] =
        keep * state.lambda_pi[id] + state.eta * std::abs(pred[i] - y_pi[i]);
  }
}

Value rba_loss(Tape& tape, const RbaState& state, std::span<const int> ids,
               Value pred, std::span<const double> y_true,
               std::span<const double> y_pi) {
  check_batch(pred, y_true, "rba_loss");
  check_batch(pred, y_pi, "rba_loss");
  if (ids.size() != y_true.size())
    throw std::invalid_argument("rba_loss: length mismatch");
  Tensor wd(pred.rows(), pred.cols());
  Tensor wp(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= static_cast<int>(state.lambda_data.size()))
      throw std::out_of_range("rba_loss: sample id " + std::to_string(id));
    const double a = state.lambda_data[id];
    const double b = state.lambda_pi[id];
    const double s = a + b;
    wd.a[i] = s > 0.0 ? a / s : 0.5;
    wp.a[i] = s > 0.0 ? b / s : 0.5;
  }
  Value dd = sub(pred, tape.constant(like(pred, y_true)));
  Value dp = sub(pred, tape.constant(like(pred, y_pi)));
  Value term = add(mul(tape.constant(std::move(wd)), mul(dd, dd)),
                   mul(tape.constant(std::move(wp)), mul(dp, dp)));
  return mean(term);
}

}  // namespace pif
