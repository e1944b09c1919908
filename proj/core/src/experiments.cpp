#include "pif/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

#include "pif/classical.hpp"
#include "pif/errors.hpp"
#include "pif/metrics.hpp"
#include "pif/rng.hpp"

namespace pif {
namespace {

using Clock = std::chrono::steady_clock;

// Seed streams: one run seed feeds several independent generators.
constexpr std::uint64_t kTrainNoiseStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kModelStream = 3;
constexpr std::uint64_t kEvalNoiseStream = 4;
constexpr std::uint64_t kHeadStream = 5;
constexpr std::uint64_t kCycleStream = 6;

constexpr std::array<ClassicalKind, 4> kClassicalKinds = {
    ClassicalKind::AR, ClassicalKind::ETS, ClassicalKind::Kalman,
    ClassicalKind::LinReg};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_secs(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string mode_name(NoiseMode m) {
  return m == NoiseMode::input_only ? "input_only" : "system_wide";
}

NoiseMode mode_from_name(const std::string& name, const std::string& origin) {
  if (name == "input_only") return NoiseMode::input_only;
  if (name == "system_wide") return NoiseMode::system_wide;
  throw ConfigError(origin + ": unknown noise mode \"" + name + "\"");
}

std::string strategy_suffix(const LossConfig& loss) {
  switch (loss.strategy) {
    case LossStrategy::data_only: return "";
    case LossStrategy::fixed: return "_fixed";
    case LossStrategy::uncertainty: return "_uncertainty";
    case LossStrategy::rba: return "_rba";
  }
  return "";
}

struct Metric8 {
  double rmse = 0.0, linf = 0.0, grad = 0.0, linf_grad = 0.0;
  double rmse_c = 0.0, linf_c = 0.0, grad_c = 0.0, linf_grad_c = 0.0;
};

// Test-split metrics in both unit modes, shared by every model kind and by
// the clean and noise-injected paths so equal inputs give equal rows.
Metric8 test_metrics(const SeriesDataset& ds, std::span<const double> pred) {
  const int n = static_cast<int>(pred.size());
  std::vector<double> truth(n), pred_c(n), truth_c(n);
  for (int k = 0; k < n; ++k) {
    truth[k] = ds.windows[ds.val_end + k].target;
    pred_c[k] = ds.norm.denormalize(pred[k]);
    truth_c[k] = ds.norm.denormalize(truth[k]);
  }
  Metric8 m;
  m.rmse = rmse(pred, truth);
  m.linf = linf_rmse(pred, truth);
  m.grad = gradient_error(pred, truth);
  m.linf_grad = linf_grad_error(pred, truth);
  m.rmse_c = rmse(pred_c, truth_c);
  m.linf_c = linf_rmse(pred_c, truth_c);
  m.grad_c = gradient_error(pred_c, truth_c);
  m.linf_grad_c = linf_grad_error(pred_c, truth_c);
  return m;
}

void put_metrics(ResultRow& r, const Metric8& m) {
  r.rmse = m.rmse;
  r.linf_rmse = m.linf;
  r.gradient_error = m.grad;
  r.linf_grad_error = m.linf_grad;
  r.rmse_c = m.rmse_c;
  r.linf_rmse_c = m.linf_c;
  r.gradient_error_c = m.grad_c;
  r.linf_grad_error_c = m.linf_grad_c;
}

void put_metrics(NoiseRow& r, const Metric8& m) {
  r.rmse = m.rmse;
  r.linf_rmse = m.linf;
  r.gradient_error = m.grad;
  r.linf_grad_error = m.linf_grad;
  r.rmse_c = m.rmse_c;
  r.linf_rmse_c = m.linf_c;
  r.gradient_error_c = m.grad_c;
  r.linf_grad_error_c = m.linf_grad_c;
}

// Index-claiming pool. Cells write only their own slot, so the schedule
// cannot change any output byte.
void run_pool(int n, int jobs, const std::atomic<bool>* cancel,
              const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      if (cancel && cancel->load(std::memory_order_relaxed)) return;
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      fn(i);
    }
  };
  const int w = std::max(1, std::min(jobs, std::max(n, 1)));
  if (w == 1) {
    worker();
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (int k = 0; k < w; ++k) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

ClassicalModel fit_classical(ClassicalKind kind,
                             std::span<const double> train) {
  switch (kind) {
    case ClassicalKind::AR: return fit_ar(train);
    case ClassicalKind::ETS: return fit_ets(train);
    case ClassicalKind::Kalman: return fit_kalman(train);
    case ClassicalKind::LinReg: return fit_linreg(train);
  }
  throw std::invalid_argument("fit_classical: bad kind");
}

std::uint64_t eval_noise_seed(std::uint64_t run_seed, int sigma_index,
                              int mode_index) {
  return derive_seed(derive_seed(run_seed, kEvalNoiseStream),
                     static_cast<std::uint64_t>(sigma_index * 2 + mode_index));
}

void validate_plan(const BenchmarkPlan& plan,
                   const std::vector<double>& sigma_grid) {
  if (plan.seeds.empty()) throw ConfigError("benchmark plan: empty seeds");
  if (plan.families.empty())
    throw ConfigError("benchmark plan: empty families");
  if (plan.tiers.empty()) throw ConfigError("benchmark plan: empty tiers");
  if (plan.strategies.empty())
    throw ConfigError("benchmark plan: empty strategies");
  for (size_t i = 0; i < plan.strategies.size(); ++i)
    for (size_t j = i + 1; j < plan.strategies.size(); ++j)
      if (plan.strategies[i].strategy == plan.strategies[j].strategy)
        throw ConfigError("benchmark plan: duplicate strategy \"" +
                          strategy_name(plan.strategies[i].strategy) + "\"");
  if (sigma_grid.empty()) throw ConfigError("benchmark plan: empty sigma_grid");
  for (double s : sigma_grid)
    if (!(s >= 0.0 && s <= 1.0))
      throw ConfigError("benchmark plan: sigma_grid value " + fmt(s) +
                        " outside [0, 1]");
  if (plan.noise_modes.empty())
    throw ConfigError("benchmark plan: empty noise_modes");
}

struct Stats {
  ResultRow mean, sd;
};

// Mean and sample standard deviation over the metric and timing fields;
// identity-ish columns (params, n_points) are carried through unchanged.
Stats aggregate(const std::vector<ResultRow>& rows) {
  Stats st;
  st.mean = rows.front();
  st.mean.kind = "mean";
  st.mean.seed = 0;
  const int n = static_cast<int>(rows.size());
  auto combine = [&](auto field) {
    double sum = 0.0;
    for (const ResultRow& r : rows) sum += r.*field;
    const double mean = sum / n;
    double acc = 0.0;
    for (const ResultRow& r : rows) {
      const double d = r.*field - mean;
      acc += d * d;
    }
    st.mean.*field = mean;
    st.sd.*field = n > 1 ? std::sqrt(acc / (n - 1)) : 0.0;
  };
  st.sd = st.mean;
  st.sd.kind = "std";
  combine(&ResultRow::rmse);
  combine(&ResultRow::linf_rmse);
  combine(&ResultRow::gradient_error);
  combine(&ResultRow::linf_grad_error);
  combine(&ResultRow::rmse_c);
  combine(&ResultRow::linf_rmse_c);
  combine(&ResultRow::gradient_error_c);
  combine(&ResultRow::linf_grad_error_c);
  combine(&ResultRow::train_seconds);
  return st;
}

}  // namespace

std::vector<double> default_sigma_grid() {
  std::vector<double> g(11);
  for (int i = 0; i <= 10; ++i) g[i] = i / 10.0;
  return g;
}

namespace {

// Concatenated back-to-back recipe runs: the endpoint sample of each cycle
// is dropped so the step stays uniform across the joins.
RawSeries synthesize_cycles(const DatasetSpec& spec) {
  SyntheticConfig sc{spec.recipe};
  sc.step = spec.step;
  sc.lag_tau = spec.lag_tau;
  sc.noise_sigma = spec.noise_sigma;
  if (spec.cycles == 1) {
    sc.seed = spec.seed;
    return synthesize(sc);
  }
  const double span = spec.recipe.end_time() - spec.recipe.start_time();
  const double ratio = span / spec.step;
  const long per_cycle = std::lround(ratio);
  if (per_cycle < 1 || std::abs(ratio - double(per_cycle)) > 1e-9)
    throw ConfigError("dataset: recipe span must be a multiple of step");
  RawSeries out;
  out.source = "synthetic";
  const std::uint64_t base = derive_seed(spec.seed, kCycleStream);
  for (int c = 0; c < spec.cycles; ++c) {
    sc.seed = derive_seed(base, static_cast<std::uint64_t>(c));
    RawSeries cycle = synthesize(sc);
    for (long i = 0; i < per_cycle; ++i) {
      out.times.push_back(cycle.times[i] + c * span);
      out.temps.push_back(cycle.temps[i]);
    }
  }
  return out;
}

// Recipe phase of a concatenated-run timestamp.
double cycle_phase(const DatasetSpec& spec, double t) {
  if (spec.cycles == 1) return t;
  const double t0 = spec.recipe.start_time();
  const double span = spec.recipe.end_time() - t0;
  double k = std::floor((t - t0) / span + 1e-12);
  k = std::clamp(k, 0.0, double(spec.cycles - 1));
  return t - k * span;
}

}  // namespace

std::vector<double> prior_targets(const DatasetSpec& spec,
                                  const SeriesDataset& ds) {
  if (spec.cycles == 1) return prior_targets(spec.recipe, ds);
  std::vector<double> out(ds.windows.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = ds.norm.normalize(evaluate_prior(
        spec.recipe, cycle_phase(spec, ds.windows[i].target_time)));
  return out;
}

SeriesDataset make_dataset(const DatasetSpec& spec) {
  if (spec.train_noise_sigma < 0.0)
    throw ConfigError("dataset: train_noise_sigma must be >= 0");
  if (spec.cycles < 1) throw ConfigError("dataset: cycles must be >= 1");
  RawSeries raw = synthesize_cycles(spec);
  SeriesDataset ds = prepare(raw, spec.lookback);
  if (spec.train_noise_sigma > 0.0) {
    // Perturb the samples the train/validation windows touch, scaled by the
    // clean normalization so sigma reads in normalized units, then rebuild.
    // Test targets stay clean; only the earliest test inputs overlap noise.
    const double s = spec.train_noise_sigma * ds.norm.scale;
    const int cut = std::min(ds.val_end + spec.lookback,
                             static_cast<int>(raw.temps.size()));
    GaussianSampler g(derive_seed(spec.seed, kTrainNoiseStream));
    for (int i = 0; i < cut; ++i) raw.temps[i] += s * g();
    ds = prepare(raw, spec.lookback);
  }
  return ds;
}

SeriesDataset make_dataset(const DatasetSpec& spec, std::uint64_t run_seed) {
  DatasetSpec reseeded = spec;
  reseeded.seed = derive_seed(spec.seed, run_seed);
  return make_dataset(reseeded);
}

BenchmarkResult run_benchmark(const BenchmarkPlan& plan, int jobs,
                              bool with_noise_sweep,
                              const std::atomic<bool>* cancel) {
  const std::vector<double> sigma_grid =
      plan.sigma_grid.empty() ? default_sigma_grid() : plan.sigma_grid;
  validate_plan(plan, sigma_grid);

  const int S = static_cast<int>(plan.seeds.size());
  const int K = static_cast<int>(sigma_grid.size());
  const int M = static_cast<int>(plan.noise_modes.size());
  const int curves_per_model = with_noise_sweep ? M * K : 0;

  std::vector<SeriesDataset> ds;
  ds.reserve(S);
  std::vector<std::vector<double>> pi(S);
  bool need_pi = false;
  for (const LossConfig& l : plan.strategies)
    if (l.strategy != LossStrategy::data_only) need_pi = true;
  for (int s = 0; s < S; ++s) {
    ds.push_back(make_dataset(plan.dataset, plan.seeds[s]));
    if (ds[s].test_count() < 3)
      throw ConfigError(
          "benchmark plan: dataset leaves fewer than 3 test windows");
    if (need_pi) pi[s] = prior_targets(plan.dataset, ds[s]);
  }

  struct ClassicalOut {
    bool done = false;
    std::string error;
    ResultRow raw, blend;
    std::vector<NoiseRow> curves_raw, curves_blend;  // [mode * K + k]
  };
  struct NeuralOut {
    bool done = false;
    std::string error;
    ResultRow row;
    std::vector<NoiseRow> curves;  // [mode * K + k]
  };

  const int F = static_cast<int>(plan.families.size());
  const int T = static_cast<int>(plan.tiers.size());
  const int C = static_cast<int>(plan.strategies.size());
  const int n_cls = plan.include_classical ? 4 * S : 0;
  std::vector<ClassicalOut> cls(n_cls);
  std::vector<NeuralOut> neu(static_cast<size_t>(T) * F * C * S);

  auto sweep_rows = [&](const std::string& name, int tier, int s,
                        const std::function<std::vector<double>(
                            const SeriesDataset&)>& predict,
                        std::vector<NoiseRow>& out) {
    out.resize(static_cast<size_t>(M) * K);
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) {
        const SeriesDataset noisy =
            inject_noise(ds[s], sigma_grid[k], plan.noise_modes[m],
                         eval_noise_seed(plan.seeds[s], k, m));
        NoiseRow& r = out[static_cast<size_t>(m) * K + k];
        r.model = name;
        r.tier = tier;
        r.seed = plan.seeds[s];
        r.mode = mode_name(plan.noise_modes[m]);
        r.sigma = sigma_grid[k];
        put_metrics(r, test_metrics(noisy, predict(noisy)));
      }
    }
  };

  auto classical_job = [&](int idx) {
    const int kind_i = idx / S;
    const int s = idx % S;
    const ClassicalKind kind = kClassicalKinds[kind_i];
    ClassicalOut& out = cls[idx];
    try {
      const SeriesDataset& d = ds[s];
      const auto& temps = d.raw.temps;
      const int n_train_pts = d.train_end + d.lookback;
      const int horizon = static_cast<int>(temps.size()) - n_train_pts;
      const int val_n = d.val_end - d.train_end;

      const auto t0 = Clock::now();
      const ClassicalModel model = fit_classical(
          kind, std::span<const double>(temps).first(n_train_pts));
      const std::vector<double> fc = model.forecast(horizon);
      const double fit_secs = seconds_since(t0);

      // Fixed-blend variant: weights picked once on the validation slice
      // against the recipe prior, then applied unchanged on test.
      const auto t1 = Clock::now();
      std::vector<double> prior_vals(horizon);
      for (int h = 0; h < horizon; ++h)
        prior_vals[h] = evaluate_prior(
            plan.dataset.recipe,
            cycle_phase(plan.dataset, d.raw.times[n_train_pts + h]));
      std::span<const double> fc_all(fc), prior_all(prior_vals);
      std::span<const double> truth_val(temps.data() + n_train_pts, val_n);
      const BlendWeights w = search_blend_weights(
          fc_all.first(val_n), prior_all.first(val_n), truth_val);
      const std::vector<double> blended = blend(
          fc_all.subspan(val_n), prior_all.subspan(val_n), w);
      const double blend_secs = fit_secs + seconds_since(t1);

      auto normalized = [&](std::span<const double> phys) {
        std::vector<double> z(phys.size());
        for (size_t i = 0; i < phys.size(); ++i)
          z[i] = d.norm.normalize(phys[i]);
        return z;
      };
      const std::vector<double> pred_raw = normalized(fc_all.subspan(val_n));
      const std::vector<double> pred_blend = normalized(blended);

      const std::string name = classical_kind_name(kind);
      auto fill = [&](ResultRow& r, const std::string& model_name,
                      const std::vector<double>& pred, double secs) {
        r.model = model_name;
        r.tier = 0;
        r.kind = "seed";
        r.seed = plan.seeds[s];
        r.params = 0;
        r.n_points = d.test_count();
        r.train_seconds = plan.wall_timing ? secs : 0.0;
        put_metrics(r, test_metrics(d, pred));
      };
      fill(out.raw, name, pred_raw, fit_secs);
      fill(out.blend, name + "_fixed", pred_blend, blend_secs);

      if (with_noise_sweep) {
        // Forecasts depend only on the time index; reusing them across the
        // noisy datasets is exactly the input-noise immunity under test.
        sweep_rows(name, 0, s,
                   [&](const SeriesDataset&) { return pred_raw; },
                   out.curves_raw);
        sweep_rows(name + "_fixed", 0, s,
                   [&](const SeriesDataset&) { return pred_blend; },
                   out.curves_blend);
      }
      out.done = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  auto neural_job = [&](int idx) {
    const int s = idx % S;
    const int ci = (idx / S) % C;
    const int fi = (idx / (S * C)) % F;
    const int ti = idx / (S * C * F);
    NeuralOut& out = neu[idx];
    const Family fam = plan.families[fi];
    const std::string name =
        family_name(fam) + strategy_suffix(plan.strategies[ci]);
    try {
      // Shared init per (seed, family, tier) so strategies differ only in
      // their loss; the shuffle stream is shared for the same reason.
      const std::uint64_t mseed = derive_seed(
          derive_seed(derive_seed(plan.seeds[s], kModelStream),
                      static_cast<std::uint64_t>(fi)),
          static_cast<std::uint64_t>(ti));
      const NeuralConfig cfg =
          resolve_tier(fam, plan.dataset.lookback, plan.tiers[ti], mseed);
      NeuralModel model = NeuralModel::from_config(cfg);

      TrainConfig tc = plan.train;
      if (!plan.explicit_lr)
        tc.learning_rate = default_train_config(fam).learning_rate;
      tc.seed = derive_seed(plan.seeds[s], kShuffleStream);
      tc.loss = plan.strategies[ci];
      const bool uses_pi = tc.loss.strategy != LossStrategy::data_only;
      const TrainReport rep =
          train(model, ds[s], uses_pi ? std::span<const double>(pi[s])
                                      : std::span<const double>(),
                tc);
      if (rep.diverged) {
        out.error = rep.message;
        return;
      }

      const std::vector<double> pred = predict_norm(
          model, ds[s], ds[s].val_end, static_cast<int>(ds[s].windows.size()));
      ResultRow& r = out.row;
      r.model = name;
      r.tier = plan.tiers[ti].target;
      r.kind = "seed";
      r.seed = plan.seeds[s];
      r.params = model.parameter_count();
      r.n_points = ds[s].test_count();
      r.train_seconds = plan.wall_timing ? rep.wall_seconds : 0.0;
      put_metrics(r, test_metrics(ds[s], pred));

      if (with_noise_sweep) {
        sweep_rows(name, plan.tiers[ti].target, s,
                   [&](const SeriesDataset& noisy) {
                     return predict_norm(model, noisy, noisy.val_end,
                                         static_cast<int>(
                                             noisy.windows.size()));
                   },
                   out.curves);
      }
      out.done = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  const int total = n_cls + static_cast<int>(neu.size());
  run_pool(total, jobs, cancel, [&](int i) {
    if (i < n_cls) classical_job(i);
    else neural_job(i - n_cls);
  });

  BenchmarkResult result;
  result.interrupted = cancel && cancel->load(std::memory_order_relaxed);

  auto push_group = [&](const std::vector<const ResultRow*>& seed_rows) {
    std::vector<ResultRow> present;
    for (const ResultRow* r : seed_rows)
      if (r) present.push_back(*r);
    if (present.empty()) return;
    for (const ResultRow& r : present) result.rows.push_back(r);
    const Stats st = aggregate(present);
    result.rows.push_back(st.mean);
    result.rows.push_back(st.sd);
  };

  if (plan.include_classical) {
    for (int kind_i = 0; kind_i < 4; ++kind_i) {
      std::vector<const ResultRow*> raw_rows, blend_rows;
      for (int s = 0; s < S; ++s) {
        const ClassicalOut& c = cls[kind_i * S + s];
        raw_rows.push_back(c.done ? &c.raw : nullptr);
        blend_rows.push_back(c.done ? &c.blend : nullptr);
        if (!c.done && !c.error.empty())
          result.failures.push_back(
              {classical_kind_name(kClassicalKinds[kind_i]), 0, plan.seeds[s],
               c.error});
      }
      push_group(raw_rows);
      push_group(blend_rows);
    }
  }
  for (int ti = 0; ti < T; ++ti) {
    for (int fi = 0; fi < F; ++fi) {
      for (int ci = 0; ci < C; ++ci) {
        std::vector<const ResultRow*> rows;
        for (int s = 0; s < S; ++s) {
          const NeuralOut& c =
              neu[static_cast<size_t>(ti) * F * C * S + fi * C * S + ci * S +
                  s];
          rows.push_back(c.done ? &c.row : nullptr);
          if (!c.done && !c.error.empty())
            result.failures.push_back(
                {family_name(plan.families[fi]) +
                     strategy_suffix(plan.strategies[ci]),
                 plan.tiers[ti].target, plan.seeds[s], c.error});
        }
        push_group(rows);
      }
    }
  }

  if (with_noise_sweep) {
    // mode -> model group (table order) -> sigma -> seed
    auto append_curves = [&](const std::function<const std::vector<NoiseRow>*(
                                 int)>& per_seed,
                             int m, int k) {
      for (int s = 0; s < S; ++s) {
        const std::vector<NoiseRow>* rows = per_seed(s);
        if (rows && !rows->empty())
          result.curves.push_back((*rows)[static_cast<size_t>(m) * K + k]);
      }
    };
    for (int m = 0; m < M; ++m) {
      if (plan.include_classical) {
        for (int kind_i = 0; kind_i < 4; ++kind_i) {
          for (bool blend_variant : {false, true}) {
            for (int k = 0; k < K; ++k) {
              append_curves(
                  [&](int s) -> const std::vector<NoiseRow>* {
                    const ClassicalOut& c = cls[kind_i * S + s];
                    if (!c.done) return nullptr;
                    return blend_variant ? &c.curves_blend : &c.curves_raw;
                  },
                  m, k);
            }
          }
        }
      }
      for (int ti = 0; ti < T; ++ti) {
        for (int fi = 0; fi < F; ++fi) {
          for (int ci = 0; ci < C; ++ci) {
            for (int k = 0; k < K; ++k) {
              append_curves(
                  [&](int s) -> const std::vector<NoiseRow>* {
                    const NeuralOut& c =
                        neu[static_cast<size_t>(ti) * F * C * S + fi * C * S +
                            ci * S + s];
                    return c.done ? &c.curves : nullptr;
                  },
                  m, k);
            }
          }
        }
      }
    }
  }
  return result;
}

std::vector<TransferRow> run_transfer(const TransferPlan& plan) {
  if (plan.strategies.empty())
    throw ConfigError("transfer plan: empty strategies");
  for (const std::string& s : plan.strategies)
    if (s != "baseline_eval" && s != "linear_probe" && s != "full_finetune")
      throw ConfigError("transfer plan: unknown strategy \"" + s + "\"");
  if (!(plan.finetune_lr_scale > 0.0 && plan.finetune_lr_scale <= 1.0))
    throw ConfigError("transfer plan: finetune_lr_scale must be in (0, 1]");

  const SeriesDataset ds = make_dataset(plan.target);
  if (ds.test_count() < 3)
    throw ConfigError("transfer plan: dataset leaves fewer than 3 test windows");
  {
    const NeuralModel probe = load_checkpoint(plan.checkpoint);
    if (probe.lookback() != ds.lookback)
      throw ConfigError("transfer plan: checkpoint lookback " +
                        std::to_string(probe.lookback()) +
                        " does not match dataset lookback " +
                        std::to_string(ds.lookback));
  }

  auto evaluate_model = [&](const NeuralModel& m, TransferRow& r) {
    const std::vector<double> pred =
        predict_norm(m, ds, ds.val_end, static_cast<int>(ds.windows.size()));
    const Metric8 mm = test_metrics(ds, pred);
    r.rmse = mm.rmse;
    r.linf_rmse = mm.linf;
    r.gradient_error = mm.grad;
    r.linf_grad_error = mm.linf_grad;
    r.rmse_c = mm.rmse_c;
    r.linf_rmse_c = mm.linf_c;
    r.gradient_error_c = mm.grad_c;
    r.linf_grad_error_c = mm.linf_grad_c;
    r.n_points = ds.test_count();
    r.body_checksum = m.body_checksum();
  };

  std::vector<TransferRow> rows;
  for (const std::string& strat : plan.strategies) {
    TransferRow r;
    r.strategy = strat;
    if (strat == "baseline_eval") {
      const auto t0 = Clock::now();
      const NeuralModel m = load_checkpoint(plan.checkpoint);
      r.train_seconds = plan.wall_timing ? seconds_since(t0) : 0.0;
      r.params_trained = 0;
      evaluate_model(m, r);
    } else {
      NeuralModel m = load_checkpoint(plan.checkpoint);
      TrainConfig tc = plan.train;
      if (!plan.explicit_lr)
        tc.learning_rate = default_train_config(m.family()).learning_rate;
      tc.seed = derive_seed(plan.seed, kShuffleStream);
      tc.loss = LossConfig{};  // plain data loss on the target series
      if (strat == "linear_probe") {
        m.reset_head(derive_seed(plan.seed, kHeadStream));
        m.freeze_body();
        int head = 0;
        for (const ParamBlock& b : m.blocks())
          if (b.head) head += b.size();
        r.params_trained = head;
      } else {
        tc.learning_rate *= plan.finetune_lr_scale;
        r.params_trained = m.parameter_count();
      }
      const TrainReport rep = train(m, ds, {}, tc);
      if (rep.diverged)
        throw std::runtime_error("transfer " + strat +
                                 " diverged: " + rep.message);
      r.train_seconds = plan.wall_timing ? rep.wall_seconds : 0.0;
      evaluate_model(m, r);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

nlohmann::json read_json_file(const std::string& path,
                              const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(what + ": cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw ConfigError(what + ": " + path + ": top level must be an object");
  return j;
}

void check_keys(const nlohmann::json& j,
                std::initializer_list<const char*> allowed,
                const std::string& origin) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (key == k) ok = true;
    if (!ok)
      throw ConfigError(origin + ": unknown key \"" + key + "\"");
  }
}

double num_field(const nlohmann::json& j, const char* key, double fallback,
                 const std::string& origin) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw ConfigError(origin + ": \"" + key + "\" must be a number");
  return j[key].get<double>();
}

std::int64_t int_field(const nlohmann::json& j, const char* key,
                       std::int64_t fallback, const std::string& origin) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() && !j[key].is_number_unsigned())
    throw ConfigError(origin + ": \"" + key + "\" must be an integer");
  return j[key].get<std::int64_t>();
}

std::string resolve_path(const std::string& raw,
                         const std::filesystem::path& base_dir) {
  std::filesystem::path p(raw);
  if (p.is_absolute()) return p.string();
  return (base_dir / p).string();
}

DatasetSpec parse_dataset(const nlohmann::json& j,
                          const std::filesystem::path& base_dir,
                          const std::string& origin) {
  if (!j.is_object())
    throw ConfigError(origin + ": \"dataset\" must be an object");
  check_keys(j,
             {"recipe", "lookback", "step_s", "lag_tau_s", "noise_sigma",
              "train_noise_sigma", "seed", "cycles"},
             origin);
  if (!j.contains("recipe") || !j["recipe"].is_string())
    throw ConfigError(origin + ": dataset needs a \"recipe\" file path");
  if (!j.contains("lookback"))
    throw ConfigError(origin + ": dataset needs \"lookback\"");
  const std::string recipe_path =
      resolve_path(j["recipe"].get<std::string>(), base_dir);
  DatasetSpec spec{load_recipe(recipe_path)};
  spec.recipe_path = recipe_path;
  spec.lookback =
      static_cast<int>(int_field(j, "lookback", 50, origin));
  if (spec.lookback < 1)
    throw ConfigError(origin + ": \"lookback\" must be >= 1");
  spec.step = num_field(j, "step_s", 60.0, origin);
  if (!(spec.step > 0.0))
    throw ConfigError(origin + ": \"step_s\" must be > 0");
  spec.lag_tau = num_field(j, "lag_tau_s", 0.0, origin);
  if (spec.lag_tau < 0.0)
    throw ConfigError(origin + ": \"lag_tau_s\" must be >= 0");
  spec.noise_sigma = num_field(j, "noise_sigma", 0.0, origin);
  if (spec.noise_sigma < 0.0)
    throw ConfigError(origin + ": \"noise_sigma\" must be >= 0");
  spec.train_noise_sigma = num_field(j, "train_noise_sigma", 0.0, origin);
  if (spec.train_noise_sigma < 0.0)
    throw ConfigError(origin + ": \"train_noise_sigma\" must be >= 0");
  const std::int64_t seed = int_field(j, "seed", 0, origin);
  if (seed < 0) throw ConfigError(origin + ": \"seed\" must be >= 0");
  spec.seed = static_cast<std::uint64_t>(seed);
  spec.cycles = static_cast<int>(int_field(j, "cycles", 1, origin));
  if (spec.cycles < 1)
    throw ConfigError(origin + ": \"cycles\" must be >= 1");
  return spec;
}

// Returns true when the block spelled out a learning rate.
bool parse_train_block(const nlohmann::json& j, TrainConfig& tc,
                       const std::string& origin) {
  if (!j.is_object())
    throw ConfigError(origin + ": \"train\" must be an object");
  check_keys(j, {"max_epochs", "batch_size", "learning_rate", "patience"},
             origin);
  tc.max_epochs =
      static_cast<int>(int_field(j, "max_epochs", tc.max_epochs, origin));
  tc.batch_size =
      static_cast<int>(int_field(j, "batch_size", tc.batch_size, origin));
  tc.patience =
      static_cast<int>(int_field(j, "patience", tc.patience, origin));
  if (j.contains("learning_rate")) {
    tc.learning_rate = num_field(j, "learning_rate", 0.0, origin);
    return true;
  }
  return false;
}

LossConfig parse_loss_block(const nlohmann::json& j,
                            const std::string& origin) {
  if (!j.is_object())
    throw ConfigError(origin + ": loss entry must be an object");
  check_keys(j, {"strategy", "lambda", "eta"}, origin);
  if (!j.contains("strategy") || !j["strategy"].is_string())
    throw ConfigError(origin + ": loss entry needs a \"strategy\" name");
  LossConfig loss;
  loss.strategy = strategy_from_name(j["strategy"].get<std::string>());
  loss.lambda = num_field(j, "lambda", loss.lambda, origin);
  loss.eta = num_field(j, "eta", loss.eta, origin);
  return loss;
}

bool parse_timing(const nlohmann::json& j, const std::string& origin) {
  if (!j.contains("timing")) return true;
  if (!j["timing"].is_string())
    throw ConfigError(origin + ": \"timing\" must be \"wall\" or \"none\"");
  const std::string t = j["timing"].get<std::string>();
  if (t == "wall") return true;
  if (t == "none") return false;
  throw ConfigError(origin + ": \"timing\" must be \"wall\" or \"none\", got \"" +
                    t + "\"");
}

}  // namespace

BenchmarkPlan load_benchmark_plan(const std::string& path) {
  const std::string origin = "benchmark plan " + path;
  const nlohmann::json j = read_json_file(path, "load_benchmark_plan");
  check_keys(j,
             {"dataset", "families", "strategies", "tiers", "seeds",
              "sigma_grid", "noise_modes", "include_classical", "train",
              "timing"},
             origin);
  const std::filesystem::path base_dir =
      std::filesystem::path(path).parent_path();
  if (!j.contains("dataset"))
    throw ConfigError(origin + ": missing key \"dataset\"");
  BenchmarkPlan plan{parse_dataset(j["dataset"], base_dir, origin)};

  for (const char* key : {"families", "strategies", "tiers", "seeds"})
    if (!j.contains(key))
      throw ConfigError(origin + ": missing key \"" + std::string(key) +
                        "\"");
  if (!j["families"].is_array() || j["families"].empty())
    throw ConfigError(origin + ": \"families\" must be a non-empty array");
  plan.families.clear();
  for (const auto& f : j["families"]) {
    if (!f.is_string())
      throw ConfigError(origin + ": \"families\" entries must be strings");
    plan.families.push_back(family_from_name(f.get<std::string>()));
  }
  if (!j["strategies"].is_array() || j["strategies"].empty())
    throw ConfigError(origin + ": \"strategies\" must be a non-empty array");
  plan.strategies.clear();
  for (const auto& s : j["strategies"])
    plan.strategies.push_back(parse_loss_block(s, origin));
  if (!j["tiers"].is_array() || j["tiers"].empty())
    throw ConfigError(origin + ": \"tiers\" must be a non-empty array");
  plan.tiers.clear();
  for (const auto& t : j["tiers"]) {
    if (!t.is_number_integer() && !t.is_number_unsigned())
      throw ConfigError(origin + ": \"tiers\" entries must be integers");
    const std::int64_t target = t.get<std::int64_t>();
    if (target < 1)
      throw ConfigError(origin + ": \"tiers\" entries must be >= 1");
    plan.tiers.push_back(SizeTier{static_cast<int>(target), 0.05});
  }
  if (!j["seeds"].is_array() || j["seeds"].empty())
    throw ConfigError(origin + ": \"seeds\" must be a non-empty array");
  plan.seeds.clear();
  for (const auto& s : j["seeds"]) {
    if (!s.is_number_integer() && !s.is_number_unsigned())
      throw ConfigError(origin + ": \"seeds\" entries must be integers");
    const std::int64_t v = s.get<std::int64_t>();
    if (v < 0) throw ConfigError(origin + ": \"seeds\" entries must be >= 0");
    plan.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (j.contains("sigma_grid")) {
    if (!j["sigma_grid"].is_array())
      throw ConfigError(origin + ": \"sigma_grid\" must be an array");
    plan.sigma_grid.clear();
    for (const auto& s : j["sigma_grid"]) {
      if (!s.is_number())
        throw ConfigError(origin + ": \"sigma_grid\" entries must be numbers");
      plan.sigma_grid.push_back(s.get<double>());
    }
  }
  if (j.contains("noise_modes")) {
    if (!j["noise_modes"].is_array() || j["noise_modes"].empty())
      throw ConfigError(origin +
                        ": \"noise_modes\" must be a non-empty array");
    plan.noise_modes.clear();
    for (const auto& m : j["noise_modes"]) {
      if (!m.is_string())
        throw ConfigError(origin + ": \"noise_modes\" entries must be strings");
      plan.noise_modes.push_back(
          mode_from_name(m.get<std::string>(), origin));
    }
    for (size_t a = 0; a < plan.noise_modes.size(); ++a)
      for (size_t b = a + 1; b < plan.noise_modes.size(); ++b)
        if (plan.noise_modes[a] == plan.noise_modes[b])
          throw ConfigError(origin + ": duplicate noise mode");
  }
  if (j.contains("include_classical")) {
    if (!j["include_classical"].is_boolean())
      throw ConfigError(origin + ": \"include_classical\" must be a boolean");
    plan.include_classical = j["include_classical"].get<bool>();
  }
  if (j.contains("train"))
    plan.explicit_lr = parse_train_block(j["train"], plan.train, origin);
  plan.wall_timing = parse_timing(j, origin);
  validate_plan(plan, plan.sigma_grid.empty() ? default_sigma_grid()
                                              : plan.sigma_grid);
  return plan;
}

TransferPlan load_transfer_plan(const std::string& path) {
  const std::string origin = "transfer plan " + path;
  const nlohmann::json j = read_json_file(path, "load_transfer_plan");
  check_keys(j,
             {"checkpoint", "target", "strategies", "train",
              "finetune_lr_scale", "seed", "timing"},
             origin);
  const std::filesystem::path base_dir =
      std::filesystem::path(path).parent_path();
  if (!j.contains("checkpoint") || !j["checkpoint"].is_string())
    throw ConfigError(origin + ": missing key \"checkpoint\"");
  if (!j.contains("target"))
    throw ConfigError(origin + ": missing key \"target\"");
  TransferPlan plan{resolve_path(j["checkpoint"].get<std::string>(), base_dir),
                    parse_dataset(j["target"], base_dir, origin)};
  if (j.contains("strategies")) {
    if (!j["strategies"].is_array() || j["strategies"].empty())
      throw ConfigError(origin + ": \"strategies\" must be a non-empty array");
    plan.strategies.clear();
    for (const auto& s : j["strategies"]) {
      if (!s.is_string())
        throw ConfigError(origin + ": \"strategies\" entries must be strings");
      plan.strategies.push_back(s.get<std::string>());
    }
  }
  for (const std::string& s : plan.strategies)
    if (s != "baseline_eval" && s != "linear_probe" && s != "full_finetune")
      throw ConfigError(origin + ": unknown strategy \"" + s + "\"");
  if (j.contains("train"))
    plan.explicit_lr = parse_train_block(j["train"], plan.train, origin);
  plan.finetune_lr_scale =
      num_field(j, "finetune_lr_scale", plan.finetune_lr_scale, origin);
  if (!(plan.finetune_lr_scale > 0.0 && plan.finetune_lr_scale <= 1.0))
    throw ConfigError(origin + ": \"finetune_lr_scale\" must be in (0, 1]");
  const std::int64_t seed = int_field(j, "seed", 0, origin);
  if (seed < 0) throw ConfigError(origin + ": \"seed\" must be >= 0");
  plan.seed = static_cast<std::uint64_t>(seed);
  plan.wall_timing = parse_timing(j, origin);
  return plan;
}

TrainJob load_train_job(const std::string& path) {
  const std::string origin = "train job " + path;
  const nlohmann::json j = read_json_file(path, "load_train_job");
  check_keys(j, {"dataset", "model", "train", "loss", "seed", "timing"},
             origin);
  const std::filesystem::path base_dir =
      std::filesystem::path(path).parent_path();
  if (!j.contains("dataset"))
    throw ConfigError(origin + ": missing key \"dataset\"");
  if (!j.contains("model") || !j["model"].is_object())
    throw ConfigError(origin + ": missing key \"model\"");
  TrainJob job{parse_dataset(j["dataset"], base_dir, origin)};

  const nlohmann::json& m = j["model"];
  check_keys(m, {"family", "tier", "seed", "width", "degree", "grid", "heads",
                 "blocks"},
             origin);
  if (!m.contains("family") || !m["family"].is_string())
    throw ConfigError(origin + ": model needs a \"family\" name");
  const Family fam = family_from_name(m["family"].get<std::string>());
  const std::int64_t mseed = int_field(m, "seed", 0, origin);
  if (mseed < 0) throw ConfigError(origin + ": model \"seed\" must be >= 0");
  const bool has_sizes = m.contains("width") || m.contains("degree") ||
                         m.contains("grid") || m.contains("heads") ||
                         m.contains("blocks");
  // A tier resolves every dimension itself; mixing the two is ambiguous.
  if (m.contains("tier") == has_sizes)
    throw ConfigError(origin +
                      ": model takes either \"tier\" or explicit dimensions "
                      "(\"width\", ...), not both");
  if (m.contains("tier")) {
    const std::int64_t target = int_field(m, "tier", 0, origin);
    if (target < 1) throw ConfigError(origin + ": \"tier\" must be >= 1");
    job.model = resolve_tier(fam, job.dataset.lookback,
                             SizeTier{static_cast<int>(target), 0.05},
                             static_cast<std::uint64_t>(mseed));
  } else {
    if (!m.contains("width"))
      throw ConfigError(origin + ": model needs \"width\"");
    job.model.family = fam;
    job.model.lookback = job.dataset.lookback;
    job.model.seed = static_cast<std::uint64_t>(mseed);
    job.model.width = static_cast<int>(int_field(m, "width", 0, origin));
    job.model.degree =
        static_cast<int>(int_field(m, "degree", job.model.degree, origin));
    job.model.grid =
        static_cast<int>(int_field(m, "grid", job.model.grid, origin));
    job.model.heads =
        static_cast<int>(int_field(m, "heads", job.model.heads, origin));
    job.model.blocks =
        static_cast<int>(int_field(m, "blocks", job.model.blocks, origin));
    const std::pair<const char*, int> dims[] = {{"width", job.model.width},
                                                {"degree", job.model.degree},
                                                {"grid", job.model.grid},
                                                {"heads", job.model.heads},
                                                {"blocks", job.model.blocks}};
    for (const auto& [name, value] : dims)
      if (value < 1)
        throw ConfigError(origin + ": \"" + std::string(name) +
                          "\" must be >= 1");
  }

  if (j.contains("train"))
    job.explicit_lr = parse_train_block(j["train"], job.train, origin);
  if (j.contains("loss")) job.train.loss = parse_loss_block(j["loss"], origin);
  const std::int64_t seed = int_field(j, "seed", 0, origin);
  if (seed < 0) throw ConfigError(origin + ": \"seed\" must be >= 0");
  job.seed = static_cast<std::uint64_t>(seed);
  job.wall_timing = parse_timing(j, origin);
  return job;
}

namespace {

std::ofstream open_out(const std::string& path, const char* what) {
  std::ofstream out(path, std::ios::binary);  // no platform newline games
  if (!out) throw ConfigError(std::string(what) + ": cannot write " + path);
  return out;
}

}  // namespace

void write_benchmark_csv(const std::vector<ResultRow>& rows,
                         const std::string& path) {
  std::ofstream out = open_out(path, "write_benchmark_csv");
  out << "model,tier,kind,seed,params,rmse,linf_rmse,gradient_error,"
         "linf_grad_error,rmse_c,linf_rmse_c,gradient_error_c,"
         "linf_grad_error_c,n_points,train_seconds\n";
  for (const ResultRow& r : rows) {
    out << r.model << ',' << r.tier << ',' << r.kind << ',';
    if (r.kind == "seed") out << r.seed;
    out << ',' << r.params << ',' << fmt(r.rmse) << ',' << fmt(r.linf_rmse)
        << ',' << fmt(r.gradient_error) << ',' << fmt(r.linf_grad_error)
        << ',' << fmt(r.rmse_c) << ',' << fmt(r.linf_rmse_c) << ','
        << fmt(r.gradient_error_c) << ',' << fmt(r.linf_grad_error_c) << ','
        << r.n_points << ',' << fmt_secs(r.train_seconds) << '\n';
  }
}

void write_noise_csv(const std::vector<NoiseRow>& curves,
                     const std::string& path) {
  std::ofstream out = open_out(path, "write_noise_csv");
  out << "model,tier,seed,mode,sigma,rmse,linf_rmse,gradient_error,"
         "linf_grad_error,rmse_c,linf_rmse_c,gradient_error_c,"
         "linf_grad_error_c\n";
  for (const NoiseRow& r : curves) {
    out << r.model << ',' << r.tier << ',' << r.seed << ',' << r.mode << ','
        << fmt(r.sigma) << ',' << fmt(r.rmse) << ',' << fmt(r.linf_rmse)
        << ',' << fmt(r.gradient_error) << ',' << fmt(r.linf_grad_error)
        << ',' << fmt(r.rmse_c) << ',' << fmt(r.linf_rmse_c) << ','
        << fmt(r.gradient_error_c) << ',' << fmt(r.linf_grad_error_c) << '\n';
  }
}

void write_transfer_csv(const std::vector<TransferRow>& rows,
                        const std::string& path) {
  std::ofstream out = open_out(path, "write_transfer_csv");
  out << "strategy,params_trained,body_checksum,rmse,linf_rmse,"
         "gradient_error,linf_grad_error,rmse_c,linf_rmse_c,"
         "gradient_error_c,linf_grad_error_c,n_points,train_seconds\n";
  for (const TransferRow& r : rows) {
    char sum[24];
    std::snprintf(sum, sizeof sum, "%016llx",
                  static_cast<unsigned long long>(r.body_checksum));
    out << r.strategy << ',' << r.params_trained << ',' << sum << ','
        << fmt(r.rmse) << ',' << fmt(r.linf_rmse) << ','
        << fmt(r.gradient_error) << ',' << fmt(r.linf_grad_error) << ','
        << fmt(r.rmse_c) << ',' << fmt(r.linf_rmse_c) << ','
        << fmt(r.gradient_error_c) << ',' << fmt(r.linf_grad_error_c) << ','
        << r.n_points << ',' << fmt_secs(r.train_seconds) << '\n';
  }
}

void write_failures_csv(const std::vector<CellFailure>& failures,
                        const std::string& path) {
  std::ofstream out = open_out(path, "write_failures_csv");
  out << "model,tier,seed,error\n";
  for (const CellFailure& f : failures)
    out << f.model << ',' << f.tier << ',' << f.seed << ','
        << csv_quote(f.error) << '\n';
}

void write_long_csv(const std::vector<ResultRow>& rows,
                    const std::vector<NoiseRow>& curves,
                    const std::string& path) {
  std::ofstream out = open_out(path, "write_long_csv");
  out << "model,sigma,mode,metric,value\n";
  auto model_id = [](const std::string& model, int tier) {
    return tier > 0 ? model + "@" + std::to_string(tier) : model;
  };
  static constexpr const char* kMetricNames[8] = {
      "rmse",   "linf_rmse",   "gradient_error",   "linf_grad_error",
      "rmse_c", "linf_rmse_c", "gradient_error_c", "linf_grad_error_c"};
  auto emit = [&](const std::string& id, double sigma, const std::string& mode,
                  const double* vals) {
    for (int i = 0; i < 8; ++i)
      out << id << ',' << fmt(sigma) << ',' << mode << ',' << kMetricNames[i]
          << ',' << fmt(vals[i]) << '\n';
  };
  for (const ResultRow& r : rows) {
    if (r.kind != "mean") continue;
    const double vals[8] = {r.rmse,   r.linf_rmse,   r.gradient_error,
                            r.linf_grad_error, r.rmse_c, r.linf_rmse_c,
                            r.gradient_error_c, r.linf_grad_error_c};
    emit(model_id(r.model, r.tier), 0.0, "clean", vals);
  }
  // Curve points averaged over seeds, first-appearance order preserved.
  struct Acc {
    double sum[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int n = 0;
    std::string id, mode;
    double sigma = 0.0;
  };
  std::vector<Acc> accs;
  std::map<std::string, size_t> index;
  for (const NoiseRow& r : curves) {
    const std::string id = model_id(r.model, r.tier);
    const std::string key = id + '\x1f' + r.mode + '\x1f' + fmt(r.sigma);
    auto [it, inserted] = index.try_emplace(key, accs.size());
    if (inserted) {
      Acc a;
      a.id = id;
      a.mode = r.mode;
      a.sigma = r.sigma;
      accs.push_back(a);
    }
    Acc& a = accs[it->second];
    const double vals[8] = {r.rmse,   r.linf_rmse,   r.gradient_error,
                            r.linf_grad_error, r.rmse_c, r.linf_rmse_c,
                            r.gradient_error_c, r.linf_grad_error_c};
    for (int i = 0; i < 8; ++i) a.sum[i] += vals[i];
    ++a.n;
  }
  for (const Acc& a : accs) {
    double vals[8];
    for (int i = 0; i < 8; ++i) vals[i] = a.sum[i] / a.n;
    emit(a.id, a.sigma, a.mode, vals);
  }
}

void write_results_json(const BenchmarkResult& result,
                        const std::vector<TransferRow>& transfer,
                        const std::string& path) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const ResultRow& r : result.rows) {
    nlohmann::json o{{"model", r.model},
                     {"tier", r.tier},
                     {"kind", r.kind},
                     {"params", r.params},
                     {"rmse", r.rmse},
                     {"linf_rmse", r.linf_rmse},
                     {"gradient_error", r.gradient_error},
                     {"linf_grad_error", r.linf_grad_error},
                     {"rmse_c", r.rmse_c},
                     {"linf_rmse_c", r.linf_rmse_c},
                     {"gradient_error_c", r.gradient_error_c},
                     {"linf_grad_error_c", r.linf_grad_error_c},
                     {"n_points", r.n_points},
                     {"train_seconds", r.train_seconds}};
    if (r.kind == "seed") o["seed"] = r.seed;
    j["rows"].push_back(std::move(o));
  }
  j["curves"] = nlohmann::json::array();
  for (const NoiseRow& r : result.curves)
    j["curves"].push_back({{"model", r.model},
                           {"tier", r.tier},
                           {"seed", r.seed},
                           {"mode", r.mode},
                           {"sigma", r.sigma},
                           {"rmse", r.rmse},
                           {"linf_rmse", r.linf_rmse},
                           {"gradient_error", r.gradient_error},
                           {"linf_grad_error", r.linf_grad_error},
                           {"rmse_c", r.rmse_c},
                           {"linf_rmse_c", r.linf_rmse_c},
                           {"gradient_error_c", r.gradient_error_c},
                           {"linf_grad_error_c", r.linf_grad_error_c}});
  j["failures"] = nlohmann::json::array();
  for (const CellFailure& f : result.failures)
    j["failures"].push_back({{"model", f.model},
                             {"tier", f.tier},
                             {"seed", f.seed},
                             {"error", f.error}});
  j["interrupted"] = result.interrupted;
  if (!transfer.empty()) {
    j["transfer"] = nlohmann::json::array();
    for (const TransferRow& r : transfer) {
      char sum[24];
      std::snprintf(sum, sizeof sum, "%016llx",
                    static_cast<unsigned long long>(r.body_checksum));
      j["transfer"].push_back({{"strategy", r.strategy},
                               {"params_trained", r.params_trained},
                               {"body_checksum", sum},
                               {"rmse", r.rmse},
                               {"linf_rmse", r.linf_rmse},
                               {"gradient_error", r.gradient_error},
                               {"linf_grad_error", r.linf_grad_error},
                               {"rmse_c", r.rmse_c},
                               {"linf_rmse_c", r.linf_rmse_c},
                               {"gradient_error_c", r.gradient_error_c},
                               {"linf_grad_error_c", r.linf_grad_error_c},
                               {"n_points", r.n_points},
                               {"train_seconds", r.train_seconds}});
    }
  }
  std::ofstream out = open_out(path, "write_results_json");
  out << j.dump(2) << '\n';
}

namespace {

const nlohmann::json& result_field(const nlohmann::json& o, const char* key,
                                   const std::string& origin) {
  if (!o.contains(key))
    throw ConfigError(origin + ": missing key \"" + std::string(key) + "\"");
  return o[key];
}

double result_num(const nlohmann::json& o, const char* key,
                  const std::string& origin) {
  const nlohmann::json& v = result_field(o, key, origin);
  if (!v.is_number())
    throw ConfigError(origin + ": \"" + std::string(key) +
                      "\" must be a number");
  return v.get<double>();
}

std::string result_str(const nlohmann::json& o, const char* key,
                       const std::string& origin) {
  const nlohmann::json& v = result_field(o, key, origin);
  if (!v.is_string())
    throw ConfigError(origin + ": \"" + std::string(key) +
                      "\" must be a string");
  return v.get<std::string>();
}

std::uint64_t result_uint(const nlohmann::json& o, const char* key,
                          const std::string& origin) {
  const nlohmann::json& v = result_field(o, key, origin);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError(origin + ": \"" + std::string(key) +
                      "\" must be an integer");
  return v.get<std::uint64_t>();
}

}  // namespace

ResultsBundle read_results_json(const std::string& path) {
  const std::string origin = "results " + path;
  const nlohmann::json j = read_json_file(path, "read_results_json");
  ResultsBundle out;
  // Identical metric block across row kinds.
  auto metrics = [&origin](const nlohmann::json& o, auto& r) {
    r.rmse = result_num(o, "rmse", origin);
    r.linf_rmse = result_num(o, "linf_rmse", origin);
    r.gradient_error = result_num(o, "gradient_error", origin);
    r.linf_grad_error = result_num(o, "linf_grad_error", origin);
    r.rmse_c = result_num(o, "rmse_c", origin);
    r.linf_rmse_c = result_num(o, "linf_rmse_c", origin);
    r.gradient_error_c = result_num(o, "gradient_error_c", origin);
    r.linf_grad_error_c = result_num(o, "linf_grad_error_c", origin);
  };
  const nlohmann::json& rows = result_field(j, "rows", origin);
  if (!rows.is_array())
    throw ConfigError(origin + ": \"rows\" must be an array");
  for (const auto& o : rows) {
    ResultRow r;
    r.model = result_str(o, "model", origin);
    r.tier = static_cast<int>(result_uint(o, "tier", origin));
    r.kind = result_str(o, "kind", origin);
    if (o.contains("seed")) r.seed = result_uint(o, "seed", origin);
    r.params = static_cast<int>(result_uint(o, "params", origin));
    metrics(o, r);
    r.n_points = static_cast<int>(result_uint(o, "n_points", origin));
    r.train_seconds = result_num(o, "train_seconds", origin);
    out.benchmark.rows.push_back(std::move(r));
  }
  const nlohmann::json& curves = result_field(j, "curves", origin);
  if (!curves.is_array())
    throw ConfigError(origin + ": \"curves\" must be an array");
  for (const auto& o : curves) {
    NoiseRow r;
    r.model = result_str(o, "model", origin);
    r.tier = static_cast<int>(result_uint(o, "tier", origin));
    r.seed = result_uint(o, "seed", origin);
    r.mode = result_str(o, "mode", origin);
    r.sigma = result_num(o, "sigma", origin);
    metrics(o, r);
    out.benchmark.curves.push_back(std::move(r));
  }
  const nlohmann::json& failures = result_field(j, "failures", origin);
  if (!failures.is_array())
    throw ConfigError(origin + ": \"failures\" must be an array");
  for (const auto& o : failures) {
    CellFailure f;
    f.model = result_str(o, "model", origin);
    f.tier = static_cast<int>(result_uint(o, "tier", origin));
    f.seed = result_uint(o, "seed", origin);
    f.error = result_str(o, "error", origin);
    out.benchmark.failures.push_back(std::move(f));
  }
  const nlohmann::json& interrupted = result_field(j, "interrupted", origin);
  if (!interrupted.is_boolean())
    throw ConfigError(origin + ": \"interrupted\" must be a boolean");
  out.benchmark.interrupted = interrupted.get<bool>();
  if (j.contains("transfer")) {
    if (!j["transfer"].is_array())
      throw ConfigError(origin + ": \"transfer\" must be an array");
    for (const auto& o : j["transfer"]) {
      TransferRow r;
      r.strategy = result_str(o, "strategy", origin);
      r.params_trained =
          static_cast<int>(result_uint(o, "params_trained", origin));
      const std::string sum = result_str(o, "body_checksum", origin);
      try {
        r.body_checksum = std::stoull(sum, nullptr, 16);
      } catch (const std::exception&) {
        throw ConfigError(origin + ": \"body_checksum\" must be hex");
      }
      metrics(o, r);
      r.n_points = static_cast<int>(result_uint(o, "n_points", origin));
      r.train_seconds = result_num(o, "train_seconds", origin);
      out.transfer.push_back(std::move(r));
    }
  }
  return out;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("hash_file: cannot open " + path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  for (;;) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    if (got <= 0) break;
    for (std::streamsize i = 0; i < got; ++i)
      h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ULL;
  }
  return h;
}

}  // namespace pif
