#include "pif/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pif {

namespace {

void require_pair(std::span<const double> pred, std::span<const double> truth,
                  std::size_t min_len, const char* op) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument(std::string(op) + ": length mismatch");
  }
  if (pred.size() < min_len) {
    throw std::invalid_argument(std::string(op) + ": need at least " +
                                std::to_string(min_len) + " points");
  }
}

// One-sided first differences at the ends, central elsewhere.
std::vector<double> numerical_gradient(std::span<const double> y) {
  const std::size_t m = y.size();
  std::vector<double> g(m);
  g[0] = y[1] - y[0];
  for (std::size_t j = 1; j + 1 < m; ++j) {
    g[j] = (y[j + 1] - y[j - 1]) / 2.0;
  }
  g[m - 1] = y[m - 1] - y[m - 2];
  return g;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, 1, "rmse");
  double acc = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const double e = pred[j] - truth[j];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double linf_rmse(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, 1, "linf_rmse");
  double worst = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    worst = std::max(worst, std::abs(pred[j] - truth[j]));
  }
  return worst;
}

double gradient_error(std::span<const double> pred,
                      std::span<const double> truth) {
  require_pair(pred, truth, 3, "gradient_error");
  const auto gp = numerical_gradient(pred);
  const auto gt = numerical_gradient(truth);
  double acc = 0.0;
  for (std::size_t j = 0; j < gp.size(); ++j) {
    acc += std::abs(gp[j] - gt[j]);
  }
  return acc / static_cast<double>(gp.size());
}

double linf_grad_error(std::span<const double> pred,
                       std::span<const double> truth) {
  require_pair(pred, truth, 3, "linf_grad_error");
  const auto gp = numerical_gradient(pred);
  const auto gt = numerical_gradient(truth);
  double worst = 0.0;
  for (std::size_t j = 0; j < gp.size(); ++j) {
    worst = std::max(worst, std::abs(gp[j] - gt[j]));
  }
  return worst;
}

EvalReport evaluate(const std::string& model, std::span<const double> pred,
                    std::span<const double> truth, double training_seconds) {
  EvalReport r;
  r.model = model;
  r.rmse = rmse(pred, truth);
  r.linf_rmse = linf_rmse(pred, truth);
  if (pred.size() >= 3) {
    r.gradient_error = gradient_error(pred, truth);
    r.linf_grad_error = linf_grad_error(pred, truth);
  }
  r.n_points = static_cast<int>(pred.size());
  r.training_seconds = training_seconds;
  return r;
}

}  // namespace pif
