#include "pif/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "pif/errors.hpp"
#include "pif/rng.hpp"

namespace pif {

namespace {

enum class Init { zeros, ones, uniform_fan, spline_ramp };

struct BlockDef {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool head = false;
  Init init = Init::zeros;
  double fan = 1.0;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

std::vector<BlockDef> layout(const NeuralConfig& cfg) {
  const int L = cfg.lookback;
  const int w = cfg.width;
  require(L >= 1, "neural config: lookback must be >= 1");
  require(w >= 1, "neural config: width must be >= 1");
  std::vector<BlockDef> defs;
  auto push = [&](std::string name, int r, int c, Init init, double fan) {
    defs.push_back({std::move(name), r, c, false, init, fan});
  };
  switch (cfg.family) {
    case Family::MLP:
      push("w1", w, L, Init::uniform_fan, L);
      push("b1", w, 1, Init::zeros, 1);
      push("w2", w, w, Init::uniform_fan, w);
      push("b2", w, 1, Init::zeros, 1);
      break;
    case Family::RNN:
      push("wx", w, 1, Init::uniform_fan, w);
      push("wh", w, w, Init::uniform_fan, w);
      push("b", w, 1, Init::zeros, 1);
      break;
    case Family::LSTM:
      // Gate rows packed [input; forget; candidate; output].
      push("wx", 4 * w, 1, Init::uniform_fan, w);
      push("wh", 4 * w, w, Init::uniform_fan, w);
      push("b", 4 * w, 1, Init::zeros, 1);
      break;
    case Family::Transformer: {
      require(cfg.heads >= 1 && w % cfg.heads == 0,
              "neural config: width must be a multiple of heads");
      require(cfg.blocks >= 1 && cfg.blocks <= 2,
              "neural config: blocks must be 1 or 2");
      push("embed_w", w, 1, Init::uniform_fan, 1);
      push("embed_b", w, 1, Init::zeros, 1);
      push("pos", w, L, Init::uniform_fan, w);
      for (int k = 0; k < cfg.blocks; ++k) {
        const std::string p = "blk" + std::to_string(k) + ".";
        push(p + "wq", w, w, Init::uniform_fan, w);
        push(p + "bq", w, 1, Init::zeros, 1);
        push(p + "wk", w, w, Init::uniform_fan, w);
        push(p + "bk", w, 1, Init::zeros, 1);
        push(p + "wv", w, w, Init::uniform_fan, w);
        push(p + "bv", w, 1, Init::zeros, 1);
        push(p + "wo", w, w, Init::uniform_fan, w);
        push(p + "bo", w, 1, Init::zeros, 1);
        push(p + "ln1_g", w, 1, Init::ones, 1);
        push(p + "ln1_b", w, 1, Init::zeros, 1);
        push(p + "ff_w1", 2 * w, w, Init::uniform_fan, w);
        push(p + "ff_b1", 2 * w, 1, Init::zeros, 1);
        push(p + "ff_w2", w, 2 * w, Init::uniform_fan, 2 * w);
        push(p + "ff_b2", w, 1, Init::zeros, 1);
        push(p + "ln2_g", w, 1, Init::ones, 1);
        push(p + "ln2_b", w, 1, Init::zeros, 1);
      }
      break;
    }
    case Family::KAN: {
      require(cfg.grid >= 1, "neural config: grid must be >= 1");
      const int nb = cfg.grid + 3;
      for (int i = 0; i < L; ++i)
        push("edge" + std::to_string(i), w, nb, Init::spline_ramp, L);
      break;
    }
    case Family::CKAN:
      require(cfg.degree >= 1, "neural config: degree must be >= 1");
      for (int k = 0; k <= cfg.degree; ++k)
        push("cheb" + std::to_string(k), w, L,
             k == 1 ? Init::uniform_fan : Init::zeros, L);
      break;
    case Family::LEM:
      for (const char* base : {"g1", "g2", "z", "h"}) {
        push(std::string(base) + "_w", w, w, Init::uniform_fan, w);
        push(std::string(base) + "_v", w, 1, Init::uniform_fan, w);
        push(std::string(base) + "_b", w, 1, Init::zeros, 1);
      }
      break;
  }
  defs.push_back({"head_w", 1, w, true, Init::uniform_fan, double(w)});
  defs.push_back({"head_b", 1, 1, true, Init::zeros, 1});
  return defs;
}

void init_block(const BlockDef& def, const BSplineGrid* grid,
                GaussianSampler& rng, double* out) {
  const int n = def.rows * def.cols;
  auto u11 = [&] { return 2.0 * rng.uniform01() - 1.0; };
  switch (def.init) {
    case Init::zeros:
      std::fill(out, out + n, 0.0);
      break;
    case Init::ones:
      std::fill(out, out + n, 1.0);
      break;
    case Init::uniform_fan: {
      const double s = 1.0 / std::sqrt(def.fan);
      for (int i = 0; i < n; ++i) out[i] = s * u11();
      break;
    }
    case Init::spline_ramp: {
      // Noisy identity ramp on the Greville points, scaled so a sum over
      // fan_in edges starts at unit magnitude.
      const double s = 1.0 / std::sqrt(def.fan);
      for (int r = 0; r < def.rows; ++r)
        for (int c = 0; c < def.cols; ++c)
          out[r * def.cols + c] = s * (grid->greville(c) + 0.1 * u11());
      break;
    }
  }
}

int family_knob(const NeuralConfig& cfg) {
  switch (cfg.family) {
    case Family::Transformer:
      return cfg.blocks;
    case Family::KAN:
      return cfg.grid;
    case Family::CKAN:
      return cfg.degree;
    default:
      return 0;
  }
}

std::uint64_t fnv1a(std::span<const double> data, std::uint64_t h) {
  for (double d : data) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr char kMagic[8] = {'P', 'I', 'F', 'C', 'K', 'P', 'T', '1'};

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::MLP:
      return "MLP";
    case Family::RNN:
      return "RNN";
    case Family::LSTM:
      return "LSTM";
    case Family::Transformer:
      return "Transformer";
    case Family::KAN:
      return "KAN";
    case Family::CKAN:
      return "cKAN";
    case Family::LEM:
      return "LEM";
  }
  throw std::invalid_argument("family_name: bad enum value");
}

Family family_from_name(const std::string& name) {
  for (Family f : kAllFamilies)
    if (family_name(f) == name) return f;
  throw ConfigError("unknown model family: " + name);
}

int parameter_count(const NeuralConfig& cfg) {
  int n = 0;
  for (const auto& d : layout(cfg)) n += d.rows * d.cols;
  return n;
}

NeuralConfig resolve_tier(Family family, int lookback, SizeTier tier,
                          std::uint64_t seed) {
  require(tier.target >= 1, "size tier: target must be positive");
  require(tier.tolerance > 0.0 && tier.tolerance <= 0.05,
          "size tier: tolerance must be in (0, 0.05]");

  NeuralConfig best;
  long best_diff = std::numeric_limits<long>::max();
  bool found = false;
  auto consider = [&](const NeuralConfig& c) {
    const long n = parameter_count(c);
    const long diff = std::labs(n - static_cast<long>(tier.target));
    const bool better =
        diff < best_diff ||
        (diff == best_diff &&
         (c.width < best.width ||
          (c.width == best.width && family_knob(c) < family_knob(best))));
    if (!found || better) {
      best = c;
      best_diff = diff;
      found = true;
    }
    return n;
  };
  const long stop = 2L * tier.target;

  NeuralConfig c;
  c.family = family;
  c.lookback = lookback;
  c.seed = seed;
  switch (family) {
    case Family::MLP:
    case Family::RNN:
    case Family::LSTM:
    case Family::LEM:
      for (int w = 1;; ++w) {
        c.width = w;
        if (consider(c) > stop) break;
      }
      break;
    case Family::Transformer:
      for (int nb = 1; nb <= 2; ++nb) {
        c.blocks = nb;
        for (int w = c.heads;; w += c.heads) {
          c.width = w;
          if (consider(c) > stop) break;
        }
      }
      break;
    case Family::KAN:
      for (int g = 3; g <= 8; ++g) {
        c.grid = g;
        for (int w = 1;; ++w) {
          c.width = w;
          if (consider(c) > stop) break;
        }
      }
      break;
    case Family::CKAN:
      for (int d = 3; d <= 8; ++d) {
        c.degree = d;
        for (int w = 1;; ++w) {
          c.width = w;
          if (consider(c) > stop) break;
        }
      }
      break;
  }
  if (!found ||
      static_cast<double>(best_diff) > tier.tolerance * tier.target)
    throw ConfigError("size tier " + std::to_string(tier.target) +
                      " infeasible for " + family_name(family));
  return best;
}

NeuralModel NeuralModel::from_config(const NeuralConfig& cfg) {
  const auto defs = layout(cfg);
  NeuralModel m;
  m.cfg_ = cfg;
  if (cfg.family == Family::KAN)
    m.grid_ = std::make_shared<BSplineGrid>(cfg.grid);
  int offset = 0;
  for (const auto& d : defs) {
    m.blocks_.push_back({d.name, d.rows, d.cols, offset, d.head});
    offset += d.rows * d.cols;
  }
  m.params_.resize(offset);
  GaussianSampler rng(cfg.seed);
  for (std::size_t i = 0; i < defs.size(); ++i)
    init_block(defs[i], m.grid_.get(), rng,
               m.params_.data() + m.blocks_[i].offset);
  return m;
}

NeuralModel NeuralModel::build(Family family, int lookback, SizeTier tier,
                               std::uint64_t seed) {
  return from_config(resolve_tier(family, lookback, tier, seed));
}

void NeuralModel::set_parameters(std::span<const double> p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("set_parameters: size mismatch");
  std::copy(p.begin(), p.end(), params_.begin());
}

void NeuralModel::set_head(std::span<const double> weights, double bias) {
  const ParamBlock& hw = blocks_[blocks_.size() - 2];
  const ParamBlock& hb = blocks_[blocks_.size() - 1];
  if (static_cast<int>(weights.size()) != hw.size())
    throw std::invalid_argument("set_head: weight size mismatch");
  std::copy(weights.begin(), weights.end(), params_.begin() + hw.offset);
  params_[hb.offset] = bias;
}

void NeuralModel::reset_head(std::uint64_t seed) {
  GaussianSampler rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
  std::vector<double> w(cfg_.width);
  for (double& x : w) x = s * (2.0 * rng.uniform01() - 1.0);
  set_head(w, 0.0);
}

std::uint64_t NeuralModel::checksum() const {
  return fnv1a(params_, kFnvOffset);
}

std::uint64_t NeuralModel::body_checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& b : blocks_) {
    if (b.head) continue;
    h = fnv1a(std::span<const double>(params_.data() + b.offset,
                                      static_cast<std::size_t>(b.size())),
              h);
  }
  return h;
}

BoundParams NeuralModel::bind(Tape& tape) const {
  BoundParams bp;
  bp.leaves.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    Tensor t(b.rows, b.cols);
    std::copy(params_.begin() + b.offset, params_.begin() + b.offset + b.size(),
              t.a.begin());
    bp.leaves.push_back(frozen_ && !b.head ? tape.constant(std::move(t))
                                           : tape.leaf(std::move(t)));
  }
  return bp;
}

std::vector<double> NeuralModel::gradient(const Tape& tape,
                                          const BoundParams& bp) const {
  if (bp.leaves.size() != blocks_.size())
    throw std::invalid_argument("gradient: bound params mismatch");
  std::vector<double> g(params_.size(), 0.0);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Tensor& gt = tape.grad(bp.leaves[i]);
    std::copy(gt.a.begin(), gt.a.end(), g.begin() + blocks_[i].offset);
  }
  return g;
}

NeuralModel replace_head(const NeuralModel& model,
                         std::span<const double> head_weights,
                         double head_bias) {
  NeuralModel out = model;
  out.set_head(head_weights, head_bias);
  out.freeze_body();
  return out;
}

Tensor window_matrix(const SeriesDataset& ds, std::span<const int> ids) {
  Tensor x(ds.lookback, static_cast<int>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const int id = ids[k];
    if (id < 0 || id >= static_cast<int>(ds.windows.size()))
      throw std::out_of_range("window_matrix: window id " + std::to_string(id));
    const Window& w = ds.windows[id];
    for (int t = 0; t < ds.lookback; ++t)
      x.at(t, static_cast<int>(k)) = w.input[t];
  }
  return x;
}

std::vector<double> predict_norm(const NeuralModel& model,
                                 const SeriesDataset& ds, int begin, int end) {
  if (model.lookback() != ds.lookback)
    throw std::invalid_argument("predict: lookback mismatch");
  if (begin < 0 || end < begin || end > static_cast<int>(ds.windows.size()))
    throw std::invalid_argument("predict: bad window range");
  constexpr int kChunk = 128;
  std::vector<double> out;
  out.reserve(end - begin);
  for (int s = begin; s < end; s += kChunk) {
    const int e = std::min(end, s + kChunk);
    std::vector<int> ids(e - s);
    for (int i = s; i < e; ++i) ids[i - s] = i;
    Tape tape;
    BoundParams bp = model.bind(tape);
    Value x = tape.constant(window_matrix(ds, ids));
    Value y = model.forward_batch(tape, bp, x);
    const Tensor& v = y.val();
    out.insert(out.end(), v.a.begin(), v.a.end());
  }
  return out;
}

std::vector<double> predict_series(const NeuralModel& model,
                                   const SeriesDataset& ds, int begin,
                                   int end) {
  std::vector<double> out = predict_norm(model, ds, begin, end);
  for (double& v : out) v = ds.norm.denormalize(v);
  return out;
}

void save_checkpoint(const NeuralModel& model, const std::string& path) {
  nlohmann::json j{{"family", family_name(model.family())},
                   {"lookback", model.config().lookback},
                   {"width", model.config().width},
                   {"blocks", model.config().blocks},
                   {"heads", model.config().heads},
                   {"grid", model.config().grid},
                   {"degree", model.config().degree},
                   {"seed", model.config().seed},
                   {"frozen", model.body_frozen()}};
  const std::string header = j.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  char lb[4];
  for (int k = 0; k < 4; ++k)
    lb[k] = static_cast<char>((len >> (8 * k)) & 0xffU);
  out.write(lb, 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double d : model.parameters()) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    char b[8];
    for (int k = 0; k < 8; ++k)
      b[k] = static_cast<char>((bits >> (8 * k)) & 0xffULL);
    out.write(b, 8);
  }
  out.flush();
  require(out.good(), "checkpoint: write failed for " + path);
}

NeuralModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: bad magic in " + path);
  char lb[4];
  in.read(lb, 4);
  require(in.gcount() == 4, "checkpoint: truncated header in " + path);
  std::uint32_t len = 0;
  for (int k = 0; k < 4; ++k)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(lb[k]))
           << (8 * k);
  std::string header(len, '\0');
  in.read(header.data(), len);
  require(in.gcount() == static_cast<std::streamsize>(len),
          "checkpoint: truncated header in " + path);

  NeuralConfig cfg;
  bool frozen = false;
  try {
    const auto j = nlohmann::json::parse(header);
    cfg.family = family_from_name(j.at("family").get<std::string>());
    cfg.lookback = j.at("lookback").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.blocks = j.at("blocks").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.grid = j.at("grid").get<int>();
    cfg.degree = j.at("degree").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    frozen = j.at("frozen").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint: bad header in " + path + ": " + e.what());
  }

  NeuralModel m = NeuralModel::from_config(cfg);
  std::vector<double> params(m.parameter_count());
  for (double& d : params) {
    char b[8];
    in.read(b, 8);
    require(in.gcount() == 8, "checkpoint: truncated parameters in " + path);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k]))
              << (8 * k);
    std::memcpy(&d, &bits, sizeof d);
  }
  in.peek();
  require(in.eof(), "checkpoint: trailing bytes in " + path);
  m.set_parameters(params);
  if (frozen) m.freeze_body();
  return m;
}

}  // namespace pif
