#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every primitive applied to its Vars. Trainable values live
// in a ParameterSet outside the tape; Tape::param() binds one leaf per
// parameter, so each trainable leaf owns exactly one gradient accumulator.
// Recorded values are never mutated after the fact.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dypro::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseHandle = std::shared_ptr<const SparseMatrix>;
using ParamId = std::size_t;

/// Named trainable matrices, addressed by insertion index.
class ParameterSet {
 public:
  ParamId add(std::string name, Matrix init);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const noexcept;

  const Matrix& value(ParamId id) const { return values_.at(id); }
  Matrix& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(std::string_view name) const;

  const std::vector<Matrix>& values() const noexcept { return values_; }
  std::vector<Matrix>& values() noexcept { return values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// One gradient per parameter, aligned with ParameterSet indices.
using Gradients = std::vector<Matrix>;

enum class Op : std::uint8_t {
  Constant,
  Parameter,
  MatMul,
  SparseMatMul,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  ConcatCols,
  SliceCols,
  SliceRows,
  BroadcastRow,
  Sigmoid,
  Tanh,
  Relu,
  LeakyRelu,
  Exp,
  Log,
  Negate,
  Clamp,
  SumAll,
  MeanRows,
  MeanAll,
  SoftmaxRows,
};

const char* op_name(Op op) noexcept;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Per-op payload recorded alongside a tape node.
struct OpAux {
  double scalar = 0.0;
  double scalar2 = 0.0;
  Eigen::Index index = 0;
  Eigen::Index count = 0;
  SparseHandle sparse;
};

class Tape {
 public:
  using Aux = OpAux;

  explicit Tape(const ParameterSet& params);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a parameter. Repeated calls return the same leaf.
  Var param(ParamId id);

  /// Gradient of a 1x1 output with respect to every parameter. Parameters
  /// the output does not depend on get a zero matrix of their shape.
  Gradients backward(Var output) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const ParameterSet& parameters() const noexcept { return *params_; }

  // Used by the primitive functions below.
  Var record(Op op, std::initializer_list<Var> inputs, Matrix value, Aux aux = {});
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Op op = Op::Constant;
    std::uint8_t arity = 0;
    std::size_t in[2] = {0, 0};
    Matrix value;
    Aux aux;
    ParamId param = 0;
  };

  const ParameterSet* params_;
  std::deque<Node> nodes_;  // deque: references stay valid while recording
  std::vector<std::optional<std::size_t>> param_leaf_;
};

// Primitives. Elementwise binary ops accept equal shapes, or a 1 x c right
// operand broadcast over the rows of an n x c left operand.
Var matmul(Var a, Var b);
/// Constant sparse matrix times a Var; used for graph aggregation and pooling.
Var spmm(const SparseHandle& s, Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
/// Repeats a 1 x c row `rows` times.
Var broadcast_row(Var a, Eigen::Index rows);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
Var log(Var a);
Var negate(Var a);
/// Clamps into [lo, hi]; gradient is zero outside the interval.
Var clamp(Var a, double lo, double hi);
Var sum_all(Var a);
/// Mean over rows: n x c -> 1 x c.
Var mean_rows(Var a);
Var mean_all(Var a);
Var softmax_rows(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return negate(a); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }

struct GradCheckResult {
  double max_rel_error = 0.0;
  ParamId worst_param = 0;
  Eigen::Index worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares autodiff gradients against central differences for every
/// coordinate of every parameter. Error per coordinate is
/// |autodiff - fd| / max(1, |fd|). `params` is restored on return.
GradCheckResult grad_check(const std::function<Var(Tape&)>& f, ParameterSet& params,
                           double step);

}  // namespace dypro::ad
