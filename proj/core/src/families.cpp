#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pif/neural.hpp"

namespace pif {

namespace {

struct Cursor {
  const std::vector<Value>* v;
  std::size_t i = 0;
  Value take() { return (*v)[i++]; }
};

Value zeros_const(Tape& tape, int r, int c) { return tape.constant(Tensor(r, c)); }

Value affine_head(Cursor& cur, Value hidden) {
  Value w = cur.take();
  Value b = cur.take();
  return add(matmul(w, hidden), b);
}

Value forward_mlp(Cursor& cur, Value x) {
  // Cursor reads are hoisted into declarations throughout this file: inside
  // a larger expression their evaluation order would be unspecified.
  Value w1 = cur.take(), b1 = cur.take(), w2 = cur.take(), b2 = cur.take();
  Value h = tanh_v(colwise_add(matmul(w1, x), b1));
  h = tanh_v(colwise_add(matmul(w2, h), b2));
  return affine_head(cur, h);
}

Value forward_rnn(const NeuralConfig& cfg, Tape& tape, Cursor& cur, Value x) {
  const int B = x.cols();
  Value wx = cur.take(), wh = cur.take(), b = cur.take();
  Value h = zeros_const(tape, cfg.width, B);
  for (int t = 0; t < cfg.lookback; ++t) {
    Value xt = slice_flat(x, t * B, 1, B);
    h = tanh_v(colwise_add(add(matmul(wx, xt), matmul(wh, h)), b));
  }
  return affine_head(cur, h);
}

Value forward_lstm(const NeuralConfig& cfg, Tape& tape, Cursor& cur, Value x) {
  const int B = x.cols();
  const int n = cfg.width;
  Value wx = cur.take(), wh = cur.take(), b = cur.take();
  Value c = zeros_const(tape, n, B);
  Value h = zeros_const(tape, n, B);
  for (int t = 0; t < cfg.lookback; ++t) {
    Value xt = slice_flat(x, t * B, 1, B);
    Value gates = colwise_add(add(matmul(wx, xt), matmul(wh, h)), b);
    Value gi = sigmoid(slice_flat(gates, 0, n, B));
    Value gf = sigmoid(slice_flat(gates, n * B, n, B));
    Value gc = tanh_v(slice_flat(gates, 2 * n * B, n, B));
    Value go = sigmoid(slice_flat(gates, 3 * n * B, n, B));
    c = add(mul(gf, c), mul(gi, gc));
    h = mul(go, tanh_v(c));
  }
  return affine_head(cur, h);
}

// Two coupled cells with per-unit sigmoid time-step gates (unit base step);
// the fast cell updates first and feeds the slow cell within the same step.
Value forward_lem(const NeuralConfig& cfg, Tape& tape, Cursor& cur, Value x) {
  const int B = x.cols();
  Value g1w = cur.take(), g1v = cur.take(), g1b = cur.take();
  Value g2w = cur.take(), g2v = cur.take(), g2b = cur.take();
  Value zw = cur.take(), zv = cur.take(), zb = cur.take();
  Value hw = cur.take(), hv = cur.take(), hb = cur.take();
  Value one = tape.constant_scalar(1.0);
  Value y = zeros_const(tape, cfg.width, B);
  Value z = zeros_const(tape, cfg.width, B);
  for (int t = 0; t < cfg.lookback; ++t) {
    Value xt = slice_flat(x, t * B, 1, B);
    auto pre = [&](Value w, Value v, Value bb, Value s) {
      return colwise_add(add(matmul(w, s), matmul(v, xt)), bb);
    };
    Value dt1 = sigmoid(pre(g1w, g1v, g1b, y));
    Value dt2 = sigmoid(pre(g2w, g2v, g2b, y));
    z = add(mul(sub(one, dt1), z), mul(dt1, tanh_v(pre(zw, zv, zb, y))));
    y = add(mul(sub(one, dt2), y), mul(dt2, tanh_v(pre(hw, hv, hb, z))));
  }
  return affine_head(cur, y);
}

Value forward_kan(const NeuralModel& model, Tape& tape, Cursor& cur, Value x) {
  const int B = x.cols();
  Value acc;
  for (int i = 0; i < model.config().lookback; ++i) {
    Value xi = transpose(slice_flat(x, i * B, 1, B));
    Value basis = bspline_basis(xi, model.spline_grid());
    Value contrib = matmul(cur.take(), transpose(basis));
    acc = i == 0 ? contrib : add(acc, contrib);
  }
  return affine_head(cur, acc);
}

Value forward_ckan(const NeuralConfig& cfg, Tape& tape, Cursor& cur, Value x) {
  Value z = tanh_v(x);
  Tensor one(x.rows(), x.cols());
  std::fill(one.a.begin(), one.a.end(), 1.0);
  Value tprev = tape.constant(std::move(one));
  Value acc = matmul(cur.take(), tprev);
  Value tk = z;
  acc = add(acc, matmul(cur.take(), tk));
  Value two = tape.constant_scalar(2.0);
  for (int k = 2; k <= cfg.degree; ++k) {
    Value tn = sub(mul(two, mul(z, tk)), tprev);
    acc = add(acc, matmul(cur.take(), tn));
    tprev = tk;
    tk = tn;
  }
  return affine_head(cur, acc);
}

// Per-token standardization over the model dimension, then learned scale
// and shift.
Value layer_norm(Tape& tape, Value t, Value g, Value b) {
  const int d = t.rows();
  Tensor ones(1, d);
  std::fill(ones.a.begin(), ones.a.end(), 1.0);
  Value ones_row = tape.constant(std::move(ones));
  Value inv_d = tape.constant_scalar(1.0 / d);
  Value mu = mul(inv_d, matmul(ones_row, t));
  Value centered = rowwise_add(t, mul(tape.constant_scalar(-1.0), mu));
  Value var = mul(inv_d, matmul(ones_row, mul(centered, centered)));
  Value inv_std = pow_c(add(var, tape.constant_scalar(1e-5)), -0.5);
  Value normed = rowwise_mul(centered, inv_std);
  return colwise_add(colwise_mul(normed, g), b);
}

Value causal_mask(Tape& tape, int L) {
  Tensor m(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) m.at(i, j) = j > i ? -1e9 : 0.0;
  return tape.constant(std::move(m));
}

// One sample's embedding and attention stack: (1, L) raw window row to the
// final (width, L) token matrix.
Value transformer_tokens(const NeuralConfig& cfg, Tape& tape, Cursor& cur,
                         Value xs, Value mask) {
  const int L = cfg.lookback;
  const int hd = cfg.width / cfg.heads;
  Value we = cur.take(), be = cur.take(), pos_emb = cur.take();
  Value t = add(colwise_add(matmul(we, xs), be), pos_emb);
  Value scale = tape.constant_scalar(1.0 / std::sqrt(static_cast<double>(hd)));
  for (int k = 0; k < cfg.blocks; ++k) {
    Value wq = cur.take(), bq = cur.take();
    Value wk = cur.take(), bk = cur.take();
    Value wv = cur.take(), bv = cur.take();
    Value wo = cur.take(), bo = cur.take();
    Value ln1g = cur.take(), ln1b = cur.take();
    Value fw1 = cur.take(), fb1 = cur.take();
    Value fw2 = cur.take(), fb2 = cur.take();
    Value ln2g = cur.take(), ln2b = cur.take();
    Value q = colwise_add(matmul(wq, t), bq);
    Value kk = colwise_add(matmul(wk, t), bk);
    Value v = colwise_add(matmul(wv, t), bv);
    Value headcat;
    for (int hh = 0; hh < cfg.heads; ++hh) {
      Value qh = slice_flat(q, hh * hd * L, hd, L);
      Value kh = slice_flat(kk, hh * hd * L, hd, L);
      Value vh = slice_flat(v, hh * hd * L, hd, L);
      Value scores = add(mul(scale, matmul(transpose(qh), kh)), mask);
      Value attn = softmax(scores);
      Value oh = matmul(vh, transpose(attn));
      headcat = hh == 0 ? oh : concat(headcat, oh);
    }
    Value a = colwise_add(matmul(wo, headcat), bo);
    Value t1 = layer_norm(tape, add(t, a), ln1g, ln1b);
    Value f = colwise_add(
        matmul(fw2, relu(colwise_add(matmul(fw1, t1), fb1))), fb2);
    t = layer_norm(tape, add(t1, f), ln2g, ln2b);
  }
  return t;
}

Value forward_transformer(const NeuralConfig& cfg, Tape& tape, Cursor& cur,
                          Value x) {
  const int B = x.cols();
  const int L = cfg.lookback;
  Value mask = causal_mask(tape, L);
  Value xt_all = transpose(x);
  Value rows;
  std::size_t after = cur.i;
  for (int s = 0; s < B; ++s) {
    Cursor c2 = cur;
    Value xs = slice_flat(xt_all, s * L, 1, L);
    Value t = transformer_tokens(cfg, tape, c2, xs, mask);
    Value last = slice_flat(transpose(t), (L - 1) * cfg.width, 1, cfg.width);
    rows = s == 0 ? last : concat(rows, last);
    after = c2.i;
  }
  cur.i = after;
  return affine_head(cur, transpose(rows));
}

}  // namespace

Value NeuralModel::forward_batch(Tape& tape, const BoundParams& bp,
                                 Value x) const {
  if (x.rows() != cfg_.lookback)
    throw std::invalid_argument("forward: window length mismatch");
  if (x.cols() < 1) throw std::invalid_argument("forward: empty batch");
  if (bp.leaves.size() != blocks_.size())
    throw std::invalid_argument("forward: bound params mismatch");
  Cursor cur{&bp.leaves, 0};
  switch (cfg_.family) {
    case Family::MLP:
      return forward_mlp(cur, x);
    case Family::RNN:
      return forward_rnn(cfg_, tape, cur, x);
    case Family::LSTM:
      return forward_lstm(cfg_, tape, cur, x);
    case Family::Transformer:
      return forward_transformer(cfg_, tape, cur, x);
    case Family::KAN:
      return forward_kan(*this, tape, cur, x);
    case Family::CKAN:
      return forward_ckan(cfg_, tape, cur, x);
    case Family::LEM:
      return forward_lem(cfg_, tape, cur, x);
  }
  throw std::invalid_argument("forward: bad family enum");
}

Value NeuralModel::forward(Tape& tape, const BoundParams& bp,
                           std::span<const double> window) const {
  if (static_cast<int>(window.size()) != cfg_.lookback)
    throw std::invalid_argument("forward: window length mismatch");
  Tensor x(cfg_.lookback, 1);
  std::copy(window.begin(), window.end(), x.a.begin());
  return forward_batch(tape, bp, tape.constant(std::move(x)));
}

Value transformer_readout(Tape& tape, const NeuralModel& model,
                          const BoundParams& bp, std::span<const double> window,
                          int pos) {
  const NeuralConfig& cfg = model.config();
  if (cfg.family != Family::Transformer)
    throw std::invalid_argument("transformer_readout: wrong family");
  if (static_cast<int>(window.size()) != cfg.lookback)
    throw std::invalid_argument("transformer_readout: window length mismatch");
  if (pos < 0 || pos >= cfg.lookback)
    throw std::invalid_argument("transformer_readout: position out of range");
  if (bp.leaves.size() != model.blocks().size())
    throw std::invalid_argument("transformer_readout: bound params mismatch");
  Tensor xs(1, cfg.lookback);
  std::copy(window.begin(), window.end(), xs.a.begin());
  Cursor cur{&bp.leaves, 0};
  Value mask = causal_mask(tape, cfg.lookback);
  Value t = transformer_tokens(cfg, tape, cur, tape.constant(std::move(xs)),
                               mask);
  Value sel = slice_flat(transpose(t), pos * cfg.width, 1, cfg.width);
  Value w = bp.leaves[bp.leaves.size() - 2];
  Value b = bp.leaves[bp.leaves.size() - 1];
  return add(matmul(w, transpose(sel)), b);
}

}  // namespace pif
