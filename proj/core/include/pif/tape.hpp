#pragma once

#include <memory>
#include <vector>

namespace pif {

/// Dense row-major 64-bit float tensor. A scalar is (1,1); a column vector
/// is (n,1).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.a[0] = v;
    return t;
  }
  static Tensor column(const std::vector<double>& v) {
    Tensor t(static_cast<int>(v.size()), 1);
    t.a = v;
    return t;
  }

  int size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const {
    return a[static_cast<std::size_t>(i) * cols + j];
  }
};

/// Uniform cubic B-spline basis on [-1, 1] with `intervals` knot spans.
/// There are intervals + 3 basis functions. Inputs outside [-1, 1] are
/// clamped (derivative zero there). Greville abscissae reproduce identity:
/// sum_j greville(j) * basis_j(x) == x on [-1, 1].
struct BSplineGrid {
  explicit BSplineGrid(int intervals);

  int intervals;
  int basis_count;            // intervals + 3
  std::vector<double> knots;  // extended uniform knot vector

  double greville(int j) const;
  /// Writes all basis_count values (at most 4 nonzero) for a single input.
  void basis_row(double x, double* out) const;
  void basis_deriv_row(double x, double* out) const;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Tanh,
  Sigmoid,
  Relu,
  Exp,
  Log,
  PowC,
  Sum,
  Mean,
  Concat,
  SliceFlat,
  Softmax,
  Transpose,
  ColwiseAdd,
  ColwiseMul,
  RowwiseAdd,
  RowwiseMul,
  BSplineBasis,
};

class Tape;

/// Handle to a tape node. Cheap to copy; valid until Tape::reset().
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& val() const;
  int rows() const { return val().rows; }
  int cols() const { return val().cols; }
  double scalar() const { return val().a[0]; }
};

/// Append-only reverse-mode tape. Single-threaded; one tape per training
/// step, cleared with reset(). Every op traps NaN/Inf in its forward value
/// and throws NonFiniteError.
class Tape {
 public:
  /// Trainable leaf: participates in backward.
  Value leaf(Tensor t);
  /// Constant leaf: backward skips it, so grad() stays exactly zero.
  Value constant(Tensor t);
  Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  /// Gradient of `root` (must be scalar) with respect to every non-constant
  /// node, accumulated additively across fan-out.
  void backward(Value root);

  /// Gradient tensor for `v` from the last backward() call. Zeros for
  /// constants and untouched nodes.
  const Tensor& grad(Value v) const;

  /// Drops all nodes and gradients; handles from before are invalidated.
  void reset();

  int node_count() const { return static_cast<int>(nodes_.size()); }

  // Internal access for op implementations.
  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    Tensor val;
    double c = 0.0;            // op constant (PowC exponent)
    int p0 = 0, p1 = 0, p2 = 0;  // slice offset/rows/cols
    std::shared_ptr<const BSplineGrid> grid;
    bool no_grad = false;
  };
  const Node& node(int id) const { return nodes_[id]; }
  Value emplace(Node n);

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool grads_valid_ = false;
};

// Elementwise ops. Add/Sub/Mul/Div broadcast a (1,1) scalar against any
// shape; otherwise shapes must match exactly.
Value add(Value x, Value y);
Value sub(Value x, Value y);
Value mul(Value x, Value y);
Value divide(Value x, Value y);
Value matmul(Value x, Value y);
Value tanh_v(Value x);
Value sigmoid(Value x);
Value relu(Value x);
Value exp_v(Value x);
Value log_v(Value x);
/// x^c elementwise with constant exponent c.
Value pow_c(Value x, double c);
Value sum(Value x);
Value mean(Value x);
/// Vertical stack: (r1,c) over (r2,c) -> (r1+r2,c).
Value concat(Value x, Value y);
/// Reinterprets x's flat row-major data [offset, offset+rows*cols) as a
/// (rows, cols) tensor. A full-row slice of a matrix is contiguous.
Value slice_flat(Value x, int offset, int rows, int cols);
/// Column vectors: softmax over the column. Matrices: softmax per row.
Value softmax(Value x);
Value transpose(Value x);
/// (r,c) matrix plus (r,1) column applied to every column.
Value colwise_add(Value m, Value v);
Value colwise_mul(Value m, Value v);
/// (r,c) matrix plus (1,c) row applied to every row.
Value rowwise_add(Value m, Value v);
Value rowwise_mul(Value m, Value v);
/// (n,1) input -> (n, basis_count) matrix of spline basis values.
Value bspline_basis(Value x, std::shared_ptr<const BSplineGrid> grid);

inline Value operator+(Value x, Value y) { return add(x, y); }
inline Value operator-(Value x, Value y) { return sub(x, y); }
inline Value operator*(Value x, Value y) { return mul(x, y); }
inline Value operator/(Value x, Value y) { return divide(x, y); }

}  // namespace pif
