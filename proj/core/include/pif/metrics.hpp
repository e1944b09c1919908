#pragma once

#include <span>
#include <string>

namespace pif {

/// One evaluated model. Metric fields are in the unit of the series they
/// were computed on; gradient metrics are per sample step.
struct EvalReport {
  std::string model;
  double rmse = 0.0;
  double linf_rmse = 0.0;
  double gradient_error = 0.0;
  double linf_grad_error = 0.0;
  int n_points = 0;
  double training_seconds = 0.0;
};

/// sqrt(mean squared error). Lengths must match and be >= 1.
double rmse(std::span<const double> pred, std::span<const double> truth);

/// Largest absolute pointwise error.
double linf_rmse(std::span<const double> pred, std::span<const double> truth);

/// Mean absolute difference of numerical gradients, central differences at
/// interior points and one-sided first differences at the two endpoints,
/// per sample index. Length must be >= 3.
double gradient_error(std::span<const double> pred,
                      std::span<const double> truth);

/// Worst-case gradient difference under the same stencil.
double linf_grad_error(std::span<const double> pred,
                       std::span<const double> truth);

EvalReport evaluate(const std::string& model, std::span<const double> pred,
                    std::span<const double> truth, double training_seconds);

}  // namespace pif
