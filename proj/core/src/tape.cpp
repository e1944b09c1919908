#include "pif/tape.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pif/errors.hpp"

namespace pif {

// ---------------------------------------------------------------------------
// Uniform cubic B-spline basis.

BSplineGrid::BSplineGrid(int n_intervals)
    : intervals(n_intervals), basis_count(n_intervals + 3) {
  if (n_intervals < 1) {
    throw std::invalid_argument("BSplineGrid: need at least 1 interval");
  }
  const double h = 2.0 / intervals;
  knots.resize(intervals + 7);
  for (int i = 0; i < static_cast<int>(knots.size()); ++i) {
    knots[i] = -1.0 + (i - 3) * h;
  }
}

double BSplineGrid::greville(int j) const {
  return (knots[j + 1] + knots[j + 2] + knots[j + 3]) / 3.0;
}

namespace {

// Knot span index k with knots[k] <= x < knots[k+1], clamped to the valid
// cubic range [3, intervals+2].
int find_span(const BSplineGrid& g, double x) {
  const double h = 2.0 / g.intervals;
  int k = 3 + static_cast<int>(std::floor((x + 1.0) / h));
  if (k < 3) k = 3;
  if (k > g.intervals + 2) k = g.intervals + 2;
  return k;
}

// Nonzero basis functions N_{k-deg..k,deg} at x via the de Boor triangle.
void nonzero_basis(const BSplineGrid& g, int k, double x, int deg,
                   double* n_out) {
  double left[4], right[4];
  n_out[0] = 1.0;
  for (int d = 1; d <= deg; ++d) {
    left[d] = x - g.knots[k + 1 - d];
    right[d] = g.knots[k + d] - x;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double temp = n_out[r] / (right[r + 1] + left[d - r]);
      n_out[r] = saved + right[r + 1] * temp;
      saved = left[d - r] * temp;
    }
    n_out[d] = saved;
  }
}

}  // namespace

void BSplineGrid::basis_row(double x, double* out) const {
  for (int j = 0; j < basis_count; ++j) out[j] = 0.0;
  const double xc = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
  const int k = find_span(*this, xc);
  double n[4];
  nonzero_basis(*this, k, xc, 3, n);
  for (int r = 0; r < 4; ++r) out[k - 3 + r] = n[r];
}

void BSplineGrid::basis_deriv_row(double x, double* out) const {
  for (int j = 0; j < basis_count; ++j) out[j] = 0.0;
  if (x < -1.0 || x > 1.0) return;  // clamped region: constant extension
  const int k = find_span(*this, x);
  double n2[3];
  nonzero_basis(*this, k, x, 2, n2);
  // N'_{j,3} = 3 (N_{j,2}/(t_{j+3}-t_j) - N_{j+1,2}/(t_{j+4}-t_{j+1}));
  // uniform knots make both denominators 3h.
  const double h = 2.0 / intervals;
  auto deg2 = [&](int j) {
    const int r = j - (k - 2);
    return (r >= 0 && r < 3) ? n2[r] : 0.0;
  };
  for (int j = k - 3; j <= k; ++j) {
    out[j] = (deg2(j) - deg2(j + 1)) / h;
  }
}

// ---------------------------------------------------------------------------
// Tape.

const Tensor& Value::val() const { return tape->node(id).val; }

namespace {

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.a) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << op << " produced a non-finite value";
      throw NonFiniteError(msg.str());
    }
  }
}

[[noreturn]] void shape_error(const char* op, const Tensor& x,
                              const Tensor& y) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes (" << x.rows << "," << x.cols
      << ") and (" << y.rows << "," << y.cols << ")";
  throw std::invalid_argument(msg.str());
}

void require_same_tape(Value x, Value y, const char* op) {
  if (x.tape != y.tape) {
    throw std::invalid_argument(std::string(op) +
                                ": operands from different tapes");
  }
}

}  // namespace

Value Tape::emplace(Node n) {
  check_finite(n.val, "tape op");
  grads_valid_ = false;
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(t);
  return emplace(std::move(n));
}

Value Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(t);
  n.no_grad = true;
  return emplace(std::move(n));
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  grads_valid_ = false;
}

const Tensor& Tape::grad(Value v) const {
  if (!grads_valid_) {
    throw std::logic_error("Tape::grad called before backward");
  }
  return grads_[v.id];
}

namespace {

// Elementwise binary forward with (1,1) scalar broadcast.
enum class Bin { Add, Sub, Mul, Div };

double apply_bin(Bin op, double x, double y) {
  switch (op) {
    case Bin::Add: return x + y;
    case Bin::Sub: return x - y;
    case Bin::Mul: return x * y;
    case Bin::Div: return x / y;
  }
  return 0.0;
}

Tensor binary_forward(Bin op, const Tensor& x, const Tensor& y,
                      const char* name) {
  if (x.rows == y.rows && x.cols == y.cols) {
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.size(); ++i) {
      out.a[i] = apply_bin(op, x.a[i], y.a[i]);
    }
    return out;
  }
  if (x.is_scalar()) {
    Tensor out(y.rows, y.cols);
    for (int i = 0; i < y.size(); ++i) {
      out.a[i] = apply_bin(op, x.a[0], y.a[i]);
    }
    return out;
  }
  if (y.is_scalar()) {
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.size(); ++i) {
      out.a[i] = apply_bin(op, x.a[i], y.a[0]);
    }
    return out;
  }
  shape_error(name, x, y);
}

Value make_binary(Op op, Bin bin, Value x, Value y, const char* name) {
  require_same_tape(x, y, name);
  Tape::Node n;
  n.op = op;
  n.a = x.id;
  n.b = y.id;
  n.val = binary_forward(bin, x.val(), y.val(), name);
  return x.tape->emplace(std::move(n));
}

Tensor unary_map(const Tensor& x, double (*f)(double)) {
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) out.a[i] = f(x.a[i]);
  return out;
}

Value make_unary(Op op, Value x, Tensor val) {
  Tape::Node n;
  n.op = op;
  n.a = x.id;
  n.val = std::move(val);
  return x.tape->emplace(std::move(n));
}

Tensor matmul_raw(const Tensor& x, const Tensor& y) {
  Tensor out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xrow = &x.a[static_cast<std::size_t>(i) * x.cols];
    double* orow = &out.a[static_cast<std::size_t>(i) * out.cols];
    for (int k = 0; k < x.cols; ++k) {
      const double xv = xrow[k];
      if (xv == 0.0) continue;
      const double* yrow = &y.a[static_cast<std::size_t>(k) * y.cols];
      for (int j = 0; j < y.cols; ++j) orow[j] += xv * yrow[j];
    }
  }
  return out;
}

Tensor transpose_raw(const Tensor& x) {
  Tensor out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  }
  return out;
}

void softmax_span(const double* in, double* out, int n) {
  double mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    denom += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= denom;
}

}  // namespace

Value add(Value x, Value y) { return make_binary(Op::Add, Bin::Add, x, y, "add"); }
Value sub(Value x, Value y) { return make_binary(Op::Sub, Bin::Sub, x, y, "sub"); }
Value mul(Value x, Value y) { return make_binary(Op::Mul, Bin::Mul, x, y, "mul"); }
Value divide(Value x, Value y) {
  return make_binary(Op::Div, Bin::Div, x, y, "div");
}

Value matmul(Value x, Value y) {
  require_same_tape(x, y, "matmul");
  const Tensor& xv = x.val();
  const Tensor& yv = y.val();
  if (xv.cols != yv.rows) shape_error("matmul", xv, yv);
  Tape::Node n;
  n.op = Op::MatMul;
  n.a = x.id;
  n.b = y.id;
  n.val = matmul_raw(xv, yv);
  return x.tape->emplace(std::move(n));
}

Value tanh_v(Value x) {
  return make_unary(Op::Tanh, x, unary_map(x.val(), [](double v) {
    return std::tanh(v);
  }));
}

Value sigmoid(Value x) {
  return make_unary(Op::Sigmoid, x, unary_map(x.val(), [](double v) {
    return 1.0 / (1.0 + std::exp(-v));
  }));
}

Value relu(Value x) {
  return make_unary(Op::Relu, x, unary_map(x.val(), [](double v) {
    return v > 0.0 ? v : 0.0;
  }));
}

Value exp_v(Value x) {
  return make_unary(Op::Exp, x, unary_map(x.val(), [](double v) {
    return std::exp(v);
  }));
}

Value log_v(Value x) {
  const Tensor& xv = x.val();
  for (double v : xv.a) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: argument must be positive");
    }
  }
  return make_unary(Op::Log, x, unary_map(xv, [](double v) {
    return std::log(v);
  }));
}

Value pow_c(Value x, double c) {
  const Tensor& xv = x.val();
  Tensor out(xv.rows, xv.cols);
  for (int i = 0; i < xv.size(); ++i) out.a[i] = std::pow(xv.a[i], c);
  Tape::Node n;
  n.op = Op::PowC;
  n.a = x.id;
  n.c = c;
  n.val = std::move(out);
  return x.tape->emplace(std::move(n));
}

Value sum(Value x) {
  double s = 0.0;
  for (double v : x.val().a) s += v;
  return make_unary(Op::Sum, x, Tensor::scalar(s));
}

Value mean(Value x) {
  double s = 0.0;
  for (double v : x.val().a) s += v;
  return make_unary(Op::Mean, x, Tensor::scalar(s / x.val().size()));
}

Value concat(Value x, Value y) {
  require_same_tape(x, y, "concat");
  const Tensor& xv = x.val();
  const Tensor& yv = y.val();
  if (xv.cols != yv.cols) shape_error("concat", xv, yv);
  Tensor out(xv.rows + yv.rows, xv.cols);
  std::copy(xv.a.begin(), xv.a.end(), out.a.begin());
  std::copy(yv.a.begin(), yv.a.end(), out.a.begin() + xv.size());
  Tape::Node n;
  n.op = Op::Concat;
  n.a = x.id;
  n.b = y.id;
  n.val = std::move(out);
  return x.tape->emplace(std::move(n));
}

Value slice_flat(Value x, int offset, int rows, int cols) {
  const Tensor& xv = x.val();
  if (offset < 0 || rows < 1 || cols < 1 ||
      offset + rows * cols > xv.size()) {
    throw std::invalid_argument("slice: range outside source tensor");
  }
  Tensor out(rows, cols);
  std::copy(xv.a.begin() + offset, xv.a.begin() + offset + rows * cols,
            out.a.begin());
  Tape::Node n;
  n.op = Op::SliceFlat;
  n.a = x.id;
  n.p0 = offset;
  n.p1 = rows;
  n.p2 = cols;
  n.val = std::move(out);
  return x.tape->emplace(std::move(n));
}

Value softmax(Value x) {
  const Tensor& xv = x.val();
  Tensor out(xv.rows, xv.cols);
  if (xv.cols == 1) {
    softmax_span(xv.a.data(), out.a.data(), xv.rows);
  } else {
    for (int i = 0; i < xv.rows; ++i) {
      softmax_span(&xv.a[static_cast<std::size_t>(i) * xv.cols],
                   &out.a[static_cast<std::size_t>(i) * xv.cols], xv.cols);
    }
  }
  return make_unary(Op::Softmax, x, std::move(out));
}

Value transpose(Value x) {
  return make_unary(Op::Transpose, x, transpose_raw(x.val()));
}

namespace {

Value make_colrow(Op op, Value m, Value v, const char* name, bool colwise,
                  bool is_add) {
  require_same_tape(m, v, name);
  const Tensor& mv = m.val();
  const Tensor& vv = v.val();
  if (colwise ? (vv.rows != mv.rows || vv.cols != 1)
              : (vv.rows != 1 || vv.cols != mv.cols)) {
    shape_error(name, mv, vv);
  }
  Tensor out(mv.rows, mv.cols);
  for (int i = 0; i < mv.rows; ++i) {
    for (int j = 0; j < mv.cols; ++j) {
      const double b = colwise ? vv.a[i] : vv.a[j];
      out.at(i, j) = is_add ? mv.at(i, j) + b : mv.at(i, j) * b;
    }
  }
  Tape::Node n;
  n.op = op;
  n.a = m.id;
  n.b = v.id;
  n.val = std::move(out);
  return m.tape->emplace(std::move(n));
}

}  // namespace

Value colwise_add(Value m, Value v) {
  return make_colrow(Op::ColwiseAdd, m, v, "colwise_add", true, true);
}
Value colwise_mul(Value m, Value v) {
  return make_colrow(Op::ColwiseMul, m, v, "colwise_mul", true, false);
}
Value rowwise_add(Value m, Value v) {
  return make_colrow(Op::RowwiseAdd, m, v, "rowwise_add", false, true);
}
Value rowwise_mul(Value m, Value v) {
  return make_colrow(Op::RowwiseMul, m, v, "rowwise_mul", false, false);
}

Value bspline_basis(Value x, std::shared_ptr<const BSplineGrid> grid) {
  const Tensor& xv = x.val();
  if (xv.cols != 1) {
    throw std::invalid_argument("bspline_basis: input must be a column");
  }
  Tensor out(xv.rows, grid->basis_count);
  for (int i = 0; i < xv.rows; ++i) {
    grid->basis_row(xv.a[i], &out.a[static_cast<std::size_t>(i) * out.cols]);
  }
  Tape::Node n;
  n.op = Op::BSplineBasis;
  n.a = x.id;
  n.grid = std::move(grid);
  n.val = std::move(out);
  return x.tape->emplace(std::move(n));
}

// ---------------------------------------------------------------------------
// Reverse sweep.

void Tape::backward(Value root) {
  if (root.tape != this || root.id < 0 || root.id >= node_count()) {
    throw std::invalid_argument("backward: root not on this tape");
  }
  if (!nodes_[root.id].val.is_scalar()) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    grads_.emplace_back(n.val.rows, n.val.cols);
  }
  grads_[root.id].a[0] = 1.0;
  grads_valid_ = true;

  for (int k = root.id; k >= 0; --k) {
    const Node& n = nodes_[k];
    if (n.op == Op::Leaf) continue;
    const Tensor& g = grads_[k];
    const Tensor& out = n.val;
    const bool want_a = n.a >= 0 && !nodes_[n.a].no_grad;
    const bool want_b = n.b >= 0 && !nodes_[n.b].no_grad;
    if (!want_a && !want_b) continue;
    const Tensor& av = n.a >= 0 ? nodes_[n.a].val : out;
    const Tensor& bv = n.b >= 0 ? nodes_[n.b].val : out;
    Tensor* da = want_a ? &grads_[n.a] : nullptr;
    Tensor* db = want_b ? &grads_[n.b] : nullptr;

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
      case Op::Sub: {
        const double sign_b = n.op == Op::Add ? 1.0 : -1.0;
        if (da) {
          if (av.is_scalar() && !out.is_scalar()) {
            for (double gv : g.a) da->a[0] += gv;
          } else {
            for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i];
          }
        }
        if (db) {
          if (bv.is_scalar() && !out.is_scalar()) {
            for (double gv : g.a) db->a[0] += sign_b * gv;
          } else {
            for (int i = 0; i < g.size(); ++i) db->a[i] += sign_b * g.a[i];
          }
        }
        break;
      }
      case Op::Mul: {
        if (av.is_scalar() && !out.is_scalar()) {
          if (da) {
            for (int i = 0; i < g.size(); ++i) da->a[0] += g.a[i] * bv.a[i];
          }
          if (db) {
            for (int i = 0; i < g.size(); ++i) db->a[i] += g.a[i] * av.a[0];
          }
        } else if (bv.is_scalar() && !out.is_scalar()) {
          if (da) {
            for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i] * bv.a[0];
          }
          if (db) {
            for (int i = 0; i < g.size(); ++i) db->a[0] += g.a[i] * av.a[i];
          }
        } else {
          if (da) {
            for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i] * bv.a[i];
          }
          if (db) {
            for (int i = 0; i < g.size(); ++i) db->a[i] += g.a[i] * av.a[i];
          }
        }
        break;
      }
      case Op::Div: {
        if (av.is_scalar() && !out.is_scalar()) {
          for (int i = 0; i < g.size(); ++i) {
            if (da) da->a[0] += g.a[i] / bv.a[i];
            if (db) db->a[i] -= g.a[i] * av.a[0] / (bv.a[i] * bv.a[i]);
          }
        } else if (bv.is_scalar() && !out.is_scalar()) {
          for (int i = 0; i < g.size(); ++i) {
            if (da) da->a[i] += g.a[i] / bv.a[0];
            if (db) db->a[0] -= g.a[i] * av.a[i] / (bv.a[0] * bv.a[0]);
          }
        } else {
          for (int i = 0; i < g.size(); ++i) {
            if (da) da->a[i] += g.a[i] / bv.a[i];
            if (db) db->a[i] -= g.a[i] * av.a[i] / (bv.a[i] * bv.a[i]);
          }
        }
        break;
      }
      case Op::MatMul: {
        if (da) {
          // dA += g * B^T
          for (int i = 0; i < av.rows; ++i) {
            for (int kk = 0; kk < av.cols; ++kk) {
              double s = 0.0;
              for (int j = 0; j < out.cols; ++j) {
                s += g.at(i, j) * bv.at(kk, j);
              }
              da->at(i, kk) += s;
            }
          }
        }
        if (db) {
          // dB += A^T * g
          for (int kk = 0; kk < bv.rows; ++kk) {
            for (int j = 0; j < bv.cols; ++j) {
              double s = 0.0;
              for (int i = 0; i < av.rows; ++i) {
                s += av.at(i, kk) * g.at(i, j);
              }
              db->at(kk, j) += s;
            }
          }
        }
        break;
      }
      case Op::Tanh:
        for (int i = 0; i < g.size(); ++i) {
          da->a[i] += g.a[i] * (1.0 - out.a[i] * out.a[i]);
        }
        break;
      case Op::Sigmoid:
        for (int i = 0; i < g.size(); ++i) {
          da->a[i] += g.a[i] * out.a[i] * (1.0 - out.a[i]);
        }
        break;
      case Op::Relu:
        // Subgradient at exactly 0 is 0.
        for (int i = 0; i < g.size(); ++i) {
          if (av.a[i] > 0.0) da->a[i] += g.a[i];
        }
        break;
      case Op::Exp:
        for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i] * out.a[i];
        break;
      case Op::Log:
        for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i] / av.a[i];
        break;
      case Op::PowC:
        for (int i = 0; i < g.size(); ++i) {
          da->a[i] += g.a[i] * n.c * std::pow(av.a[i], n.c - 1.0);
        }
        break;
      case Op::Sum:
        for (int i = 0; i < da->size(); ++i) da->a[i] += g.a[0];
        break;
      case Op::Mean: {
        const double gv = g.a[0] / av.size();
        for (int i = 0; i < da->size(); ++i) da->a[i] += gv;
        break;
      }
      case Op::Concat: {
        const int na = av.size();
        if (da) {
          for (int i = 0; i < na; ++i) da->a[i] += g.a[i];
        }
        if (db) {
          for (int i = 0; i < bv.size(); ++i) db->a[i] += g.a[na + i];
        }
        break;
      }
      case Op::SliceFlat:
        for (int i = 0; i < g.size(); ++i) da->a[n.p0 + i] += g.a[i];
        break;
      case Op::Softmax: {
        auto back_span = [](const double* s, const double* gg, double* dd,
                            int len) {
          double dot = 0.0;
          for (int i = 0; i < len; ++i) dot += gg[i] * s[i];
          for (int i = 0; i < len; ++i) dd[i] += s[i] * (gg[i] - dot);
        };
        if (out.cols == 1) {
          back_span(out.a.data(), g.a.data(), da->a.data(), out.rows);
        } else {
          for (int i = 0; i < out.rows; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * out.cols;
            back_span(&out.a[off], &g.a[off], &da->a[off], out.cols);
          }
        }
        break;
      }
      case Op::Transpose:
        for (int i = 0; i < out.rows; ++i) {
          for (int j = 0; j < out.cols; ++j) {
            da->at(j, i) += g.at(i, j);
          }
        }
        break;
      case Op::ColwiseAdd:
        if (da) {
          for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i];
        }
        if (db) {
          for (int i = 0; i < out.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < out.cols; ++j) s += g.at(i, j);
            db->a[i] += s;
          }
        }
        break;
      case Op::ColwiseMul:
        for (int i = 0; i < out.rows; ++i) {
          for (int j = 0; j < out.cols; ++j) {
            if (da) da->at(i, j) += g.at(i, j) * bv.a[i];
            if (db) db->a[i] += g.at(i, j) * av.at(i, j);
          }
        }
        break;
      case Op::RowwiseAdd:
        if (da) {
          for (int i = 0; i < g.size(); ++i) da->a[i] += g.a[i];
        }
        if (db) {
          for (int j = 0; j < out.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < out.rows; ++i) s += g.at(i, j);
            db->a[j] += s;
          }
        }
        break;
      case Op::RowwiseMul:
        for (int i = 0; i < out.rows; ++i) {
          for (int j = 0; j < out.cols; ++j) {
            if (da) da->at(i, j) += g.at(i, j) * bv.a[j];
            if (db) db->a[j] += g.at(i, j) * av.at(i, j);
          }
        }
        break;
      case Op::BSplineBasis: {
        std::vector<double> drow(n.grid->basis_count);
        for (int i = 0; i < av.rows; ++i) {
          n.grid->basis_deriv_row(av.a[i], drow.data());
          double s = 0.0;
          for (int j = 0; j < out.cols; ++j) s += g.at(i, j) * drow[j];
          da->a[i] += s;
        }
        break;
      }
    }
  }
}

}  // namespace pif
