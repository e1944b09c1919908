#pragma once

#include <span>
#include <string>
#include <vector>

namespace pif {

enum class ClassicalKind { AR, ETS, Kalman, LinReg };

std::string classical_kind_name(ClassicalKind kind);

/// Convex blend weights for mixing a forecast with the recipe prior.
struct BlendWeights {
  double alpha = 1.0;  // weight on the model forecast
  double beta = 0.0;   // weight on the prior
};

/// A fitted classical forecaster. Forecasts depend only on the time index
/// and the fitted state, never on post-training sensor values; that is what
/// makes these models immune to input noise. Immutable after fit.
struct ClassicalModel {
  ClassicalKind kind = ClassicalKind::LinReg;
  double fit_seconds = 0.0;
  int n_train = 0;

  // AR(p) on the d-times differenced series; coeffs = [intercept, lag 1..p].
  int p = 0;
  int d = 0;
  bool ridge_fallback = false;
  std::vector<double> ar_coeffs;
  std::vector<double> ar_tail;         // last p differenced values, oldest first
  std::vector<double> integrate_tail;  // last value at differencing levels 0..d-1

  // Holt linear trend.
  double ets_alpha = 0.0, ets_beta = 0.0;
  double ets_level = 0.0, ets_trend = 0.0;

  // Local linear trend Kalman filter.
  double kal_q = 0.0, kal_r = 0.0;
  double kal_level = 0.0, kal_slope = 0.0;

  // Least squares on the sample index.
  double lr_slope = 0.0, lr_intercept = 0.0;

  /// Values for the n steps immediately after the training range
  /// (horizons 1..n).
  std::vector<double> forecast(int n) const;
};

/// AR(p) on the d-times differenced series, least squares with intercept.
/// Singular normal equations fall back to a ridge solve (1e-8) and set
/// ridge_fallback. Requires train length > p + d + 2.
ClassicalModel fit_ar(std::span<const double> train, int p = 5, int d = 1);

/// Holt linear trend with fixed smoothing parameters.
ClassicalModel fit_ets(std::span<const double> train, double alpha_s,
                       double beta_s);
/// Holt with (alpha_s, beta_s) picked from the 10x10 grid {0.1..1.0}^2 by
/// one-step training SSE. Requires length >= 10.
ClassicalModel fit_ets(std::span<const double> train);

/// Local linear trend filter with fixed variances q (process, both state
/// components) and r (observation). Start state (y[0], 0), covariance 10*I;
/// one-step likelihood accumulates from the third observation.
ClassicalModel fit_kalman(std::span<const double> train, double q, double r);
/// Variances picked on a log grid {1e-6..1} by one-step likelihood.
ClassicalModel fit_kalman(std::span<const double> train);

/// Ordinary least squares of the series on its sample index.
ClassicalModel fit_linreg(std::span<const double> train);

/// Element-wise (alpha*pred + beta*prior) / (alpha + beta).
/// Requires nonnegative weights with a positive sum and equal lengths.
std::vector<double> blend(std::span<const double> pred,
                          std::span<const double> prior,
                          const BlendWeights& w);

/// Picks alpha from {0.0, 0.1, ..., 1.0} (beta = 1 - alpha) minimizing
/// blend RMSE against the validation targets; ties go to larger alpha.
BlendWeights search_blend_weights(std::span<const double> pred,
                                  std::span<const double> prior,
                                  std::span<const double> truth);

/// JSON round trip for fitted models.
void save_classical(const ClassicalModel& model, const std::string& path);
ClassicalModel load_classical(const std::string& path);

}  // namespace pif
