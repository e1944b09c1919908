#include "pif/classical.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "pif/errors.hpp"
#include "pif/metrics.hpp"

namespace pif {

std::string classical_kind_name(ClassicalKind kind) {
  switch (kind) {
    case ClassicalKind::AR: return "AR";
    case ClassicalKind::ETS: return "ETS";
    case ClassicalKind::Kalman: return "KalmanFilter";
    case ClassicalKind::LinReg: return "LinearRegression";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Gaussian elimination with partial pivoting; returns false on a pivot too
// small to trust.
bool solve_dense(std::vector<std::vector<double>> a, std::vector<double> b,
                 std::vector<double>& x) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-12) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<double> difference(std::span<const double> y) {
  std::vector<double> z(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) z[i] = y[i + 1] - y[i];
  return z;
}

struct HoltRun {
  double level, trend, sse;
};

HoltRun run_holt(std::span<const double> y, double a, double b) {
  double l = y[0];
  double t = y[1] - y[0];
  double sse = 0.0;
  for (std::size_t k = 1; k < y.size(); ++k) {
    const double f = l + t;
    const double e = y[k] - f;
    sse += e * e;
    const double l_new = a * y[k] + (1.0 - a) * f;
    t = b * (l_new - l) + (1.0 - b) * t;
    l = l_new;
  }
  return {l, t, sse};
}

struct KalmanRun {
  double level, slope, loglik;
};

// Local linear trend: state (level, slope), F=[[1,1],[0,1]], H=[1,0],
// Q=diag(q,q), R=r. Starts at (y0, 0) with covariance 10*I (vague but
// well-conditioned); the likelihood skips the first two updates so the
// start-up transient does not drive the variance grid.
KalmanRun run_kalman(std::span<const double> y, double q, double r) {
  double x0 = y[0], x1 = 0.0;
  double p00 = 10.0, p01 = 0.0, p11 = 10.0;
  double loglik = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (t > 0) {
      // Predict: x <- F x, P <- F P F^T + Q.
      x0 = x0 + x1;
      const double n00 = p00 + p01 + p01 + p11 + q;
      const double n01 = p01 + p11;
      const double n11 = p11 + q;
      p00 = n00;
      p01 = n01;
      p11 = n11;
    }
    const double v = y[t] - x0;
    const double s = p00 + r;
    if (t >= 2) {
      loglik += -0.5 * (std::log(2.0 * 3.14159265358979323846 * s) +
                        v * v / s);
    }
    const double k0 = p00 / s;
    const double k1 = p01 / s;
    x0 += k0 * v;
    x1 += k1 * v;
    const double q00 = (1.0 - k0) * p00;
    const double q01 = (1.0 - k0) * p01;
    const double q11 = p11 - k1 * p01;
    p00 = q00;
    p01 = q01;
    p11 = q11;
  }
  return {x0, x1, loglik};
}

}  // namespace

ClassicalModel fit_ar(std::span<const double> train, int p, int d) {
  const auto start = Clock::now();
  if (p < 1 || d < 0) {
    throw ConfigError("fit_ar: need order p >= 1 and differencing d >= 0");
  }
  if (static_cast<int>(train.size()) <= p + d + 2) {
    throw ConfigError("fit_ar: series too short for p=" + std::to_string(p) +
                      ", d=" + std::to_string(d));
  }
  ClassicalModel m;
  m.kind = ClassicalKind::AR;
  m.n_train = static_cast<int>(train.size());
  m.p = p;
  m.d = d;

  std::vector<double> z(train.begin(), train.end());
  m.integrate_tail.clear();
  for (int level = 0; level < d; ++level) {
    m.integrate_tail.push_back(z.back());
    z = difference(z);
  }

  // Least squares for z[t] = c + sum_j coeffs[j] z[t-j].
  const int n = static_cast<int>(z.size());
  const int dim = p + 1;
  std::vector<std::vector<double>> xtx(dim, std::vector<double>(dim, 0.0));
  std::vector<double> xty(dim, 0.0);
  for (int t = p; t < n; ++t) {
    std::vector<double> row(dim);
    row[0] = 1.0;
    for (int j = 1; j <= p; ++j) row[j] = z[t - j];
    for (int i = 0; i < dim; ++i) {
      xty[i] += row[i] * z[t];
      for (int j = 0; j < dim; ++j) xtx[i][j] += row[i] * row[j];
    }
  }
  if (!solve_dense(xtx, xty, m.ar_coeffs)) {
    auto ridge = xtx;
    for (int i = 0; i < dim; ++i) ridge[i][i] += 1e-8;
    if (!solve_dense(ridge, xty, m.ar_coeffs)) {
      throw ConfigError("fit_ar: normal equations unsolvable even with ridge");
    }
    m.ridge_fallback = true;
  }
  m.ar_tail.assign(z.end() - p, z.end());
  m.fit_seconds = elapsed(start);
  return m;
}

ClassicalModel fit_ets(std::span<const double> train, double alpha_s,
                       double beta_s) {
  const auto start = Clock::now();
  if (train.size() < 2) {
    throw ConfigError("fit_ets: series too short");
  }
  const auto run = run_holt(train, alpha_s, beta_s);
  ClassicalModel m;
  m.kind = ClassicalKind::ETS;
  m.n_train = static_cast<int>(train.size());
  m.ets_alpha = alpha_s;
  m.ets_beta = beta_s;
  m.ets_level = run.level;
  m.ets_trend = run.trend;
  m.fit_seconds = elapsed(start);
  return m;
}

ClassicalModel fit_ets(std::span<const double> train) {
  const auto start = Clock::now();
  if (train.size() < 10) {
    throw ConfigError("fit_ets: need at least 10 samples for the grid search");
  }
  double best_a = 0.1, best_b = 0.1;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int ia = 1; ia <= 10; ++ia) {
    for (int ib = 1; ib <= 10; ++ib) {
      const double a = ia / 10.0;
      const double b = ib / 10.0;
      const double sse = run_holt(train, a, b).sse;
      if (sse < best_sse) {
        best_sse = sse;
        best_a = a;
        best_b = b;
      }
    }
  }
  auto m = fit_ets(train, best_a, best_b);
  m.fit_seconds = elapsed(start);
  return m;
}

ClassicalModel fit_kalman(std::span<const double> train, double q, double r) {
  const auto start = Clock::now();
  if (train.size() < 3) {
    throw ConfigError("fit_kalman: series too short");
  }
  const auto run = run_kalman(train, q, r);
  ClassicalModel m;
  m.kind = ClassicalKind::Kalman;
  m.n_train = static_cast<int>(train.size());
  m.kal_q = q;
  m.kal_r = r;
  m.kal_level = run.level;
  m.kal_slope = run.slope;
  m.fit_seconds = elapsed(start);
  return m;
}

ClassicalModel fit_kalman(std::span<const double> train) {
  const auto start = Clock::now();
  if (train.size() < 10) {
    throw ConfigError("fit_kalman: need at least 10 samples for the grid");
  }
  double best_q = 1e-4, best_r = 1e-4;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int iq = -6; iq <= 0; ++iq) {
    for (int ir = -6; ir <= 0; ++ir) {
      const double q = std::pow(10.0, iq);
      const double r = std::pow(10.0, ir);
      const double ll = run_kalman(train, q, r).loglik;
      if (ll > best_ll) {
        best_ll = ll;
        best_q = q;
        best_r = r;
      }
    }
  }
  auto m = fit_kalman(train, best_q, best_r);
  m.fit_seconds = elapsed(start);
  return m;
}

ClassicalModel fit_linreg(std::span<const double> train) {
  const auto start = Clock::now();
  const int n = static_cast<int>(train.size());
  if (n < 2) {
    throw ConfigError("fit_linreg: need at least 2 samples");
  }
  double mean_i = (n - 1) / 2.0;
  double mean_y = 0.0;
  for (double v : train) mean_y += v;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (i - mean_i) * (train[i] - mean_y);
    sxx += (i - mean_i) * (i - mean_i);
  }
  ClassicalModel m;
  m.kind = ClassicalKind::LinReg;
  m.n_train = n;
  m.lr_slope = sxy / sxx;
  m.lr_intercept = mean_y - m.lr_slope * mean_i;
  m.fit_seconds = elapsed(start);
  return m;
}

std::vector<double> ClassicalModel::forecast(int n) const {
  if (n < 0) {
    throw std::invalid_argument("forecast: negative horizon");
  }
  std::vector<double> out;
  out.reserve(n);
  switch (kind) {
    case ClassicalKind::AR: {
      std::vector<double> window = ar_tail;  // oldest first
      std::vector<double> levels = integrate_tail;
      for (int h = 1; h <= n; ++h) {
        double z = ar_coeffs[0];
        for (int j = 1; j <= p; ++j) {
          z += ar_coeffs[j] * window[window.size() - j];
        }
        window.erase(window.begin());
        window.push_back(z);
        // Integrate back up from differencing level d to the raw series.
        double v = z;
        for (int level = d - 1; level >= 0; --level) {
          v = levels[level] + v;
          levels[level] = v;
        }
        out.push_back(v);
      }
      break;
    }
    case ClassicalKind::ETS:
      for (int h = 1; h <= n; ++h) {
        out.push_back(ets_level + h * ets_trend);
      }
      break;
    case ClassicalKind::Kalman:
      for (int h = 1; h <= n; ++h) {
        out.push_back(kal_level + h * kal_slope);
      }
      break;
    case ClassicalKind::LinReg:
      for (int h = 1; h <= n; ++h) {
        out.push_back(lr_intercept + lr_slope * (n_train - 1 + h));
      }
      break;
  }
  return out;
}

std::vector<double> blend(std::span<const double> pred,
                          std::span<const double> prior,
                          const BlendWeights& w) {
  if (pred.size() != prior.size()) {
    throw std::invalid_argument("blend: length mismatch");
  }
  if (w.alpha < 0.0 || w.beta < 0.0 || w.alpha + w.beta <= 0.0) {
    throw std::invalid_argument(
        "blend: weights must be nonnegative with a positive sum");
  }
  const double denom = w.alpha + w.beta;
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out[i] = (w.alpha * pred[i] + w.beta * prior[i]) / denom;
  }
  return out;
}

BlendWeights search_blend_weights(std::span<const double> pred,
                                  std::span<const double> prior,
                                  std::span<const double> truth) {
  if (pred.empty() || pred.size() != prior.size() ||
      pred.size() != truth.size()) {
    throw std::invalid_argument(
        "search_blend_weights: need equal nonempty spans");
  }
  BlendWeights best;
  double best_rmse = std::numeric_limits<double>::infinity();
  // Descending alpha with strict improvement: ties keep the larger alpha.
  for (int k = 10; k >= 0; --k) {
    const BlendWeights w{k / 10.0, 1.0 - k / 10.0};
    const double r = rmse(blend(pred, prior, w), truth);
    if (r < best_rmse) {
      best_rmse = r;
      best = w;
    }
  }
  return best;
}

void save_classical(const ClassicalModel& m, const std::string& path) {
  nlohmann::json j;
  j["kind"] = classical_kind_name(m.kind);
  j["n_train"] = m.n_train;
  j["fit_seconds"] = m.fit_seconds;
  switch (m.kind) {
    case ClassicalKind::AR:
      j["p"] = m.p;
      j["d"] = m.d;
      j["ridge_fallback"] = m.ridge_fallback;
      j["coeffs"] = m.ar_coeffs;
      j["tail"] = m.ar_tail;
      j["integrate_tail"] = m.integrate_tail;
      break;
    case ClassicalKind::ETS:
      j["alpha_s"] = m.ets_alpha;
      j["beta_s"] = m.ets_beta;
      j["level"] = m.ets_level;
      j["trend"] = m.ets_trend;
      break;
    case ClassicalKind::Kalman:
      j["q"] = m.kal_q;
      j["r"] = m.kal_r;
      j["level"] = m.kal_level;
      j["slope"] = m.kal_slope;
      break;
    case ClassicalKind::LinReg:
      j["slope"] = m.lr_slope;
      j["intercept"] = m.lr_intercept;
      break;
  }
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("save_classical: cannot open " + path);
  }
  out << j.dump(2) << "\n";
}

ClassicalModel load_classical(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("load_classical: cannot open " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("load_classical: " + path + ": " + e.what());
  }
  ClassicalModel m;
  const std::string kind = j.at("kind").get<std::string>();
  m.n_train = j.at("n_train").get<int>();
  m.fit_seconds = j.at("fit_seconds").get<double>();
  if (kind == "AR") {
    m.kind = ClassicalKind::AR;
    m.p = j.at("p").get<int>();
    m.d = j.at("d").get<int>();
    m.ridge_fallback = j.at("ridge_fallback").get<bool>();
    m.ar_coeffs = j.at("coeffs").get<std::vector<double>>();
    m.ar_tail = j.at("tail").get<std::vector<double>>();
    m.integrate_tail = j.at("integrate_tail").get<std::vector<double>>();
  } else if (kind == "ETS") {
    m.kind = ClassicalKind::ETS;
    m.ets_alpha = j.at("alpha_s").get<double>();
    m.ets_beta = j.at("beta_s").get<double>();
    m.ets_level = j.at("level").get<double>();
    m.ets_trend = j.at("trend").get<double>();
  } else if (kind == "KalmanFilter") {
    m.kind = ClassicalKind::Kalman;
    m.kal_q = j.at("q").get<double>();
    m.kal_r = j.at("r").get<double>();
    m.kal_level = j.at("level").get<double>();
    m.kal_slope = j.at("slope").get<double>();
  } else if (kind == "LinearRegression") {
    m.kind = ClassicalKind::LinReg;
    m.lr_slope = j.at("slope").get<double>();
    m.lr_intercept = j.at("intercept").get<double>();
  } else {
    throw ConfigError("load_classical: " + path + ": unknown kind \"" + kind +
                      "\"");
  }
  return m;
}

}  // namespace pif
