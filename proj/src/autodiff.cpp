#include "dypro/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "dypro/error.hpp"

namespace dypro::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument("operands belong to different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("uninitialized Var");
  return *a.tape();
}

bool broadcasts(const Matrix& a, const Matrix& b) {
  return b.rows() == 1 && a.cols() == b.cols() && a.rows() != 1;
}

// Checks shapes for an elementwise binary op and returns whether the right
// operand is row-broadcast.
bool check_binary(Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (broadcasts(a, b)) return true;
  shape_error(op, a, b);
}

Matrix expand(const Matrix& b, Eigen::Index rows) { return b.replicate(rows, 1); }

void accumulate(Matrix& slot, const Matrix& g) {
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

// Reduces a gradient back to the right operand's shape.
Matrix reduce_like(const Matrix& g, const Matrix& b) {
  if (g.rows() == b.rows()) return g;
  return g.colwise().sum();
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::SparseMatMul: return "spmm";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "elementwise-mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::ConcatCols: return "concat-cols";
    case Op::SliceCols: return "slice-cols";
    case Op::SliceRows: return "slice-rows";
    case Op::BroadcastRow: return "broadcast-row";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky-relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Negate: return "negate";
    case Op::Clamp: return "clamp";
    case Op::SumAll: return "sum-all";
    case Op::MeanRows: return "mean-rows";
    case Op::MeanAll: return "mean-all";
    case Op::SoftmaxRows: return "softmax-rows";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ParameterSet

ParamId ParameterSet::add(std::string name, Matrix init) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const {
  if (!tape_) throw std::invalid_argument("uninitialized Var");
  return tape_->value_of(id_);
}

Tape::Tape(const ParameterSet& params) : params_(&params), param_leaf_(params.size()) {}

Var Tape::record(Op op, std::initializer_list<Var> inputs, Matrix value, Aux aux) {
  Node node;
  node.op = op;
  node.arity = static_cast<std::uint8_t>(inputs.size());
  std::size_t k = 0;
  for (const Var& v : inputs) node.in[k++] = v.id();
  node.value = std::move(value);
  node.aux = std::move(aux);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(Op::Constant, {}, std::move(value)); }

Var Tape::param(ParamId id) {
  if (id >= params_->size()) throw DomainError("parameter id out of range");
  if (param_leaf_.size() < params_->size()) param_leaf_.resize(params_->size());
  if (param_leaf_[id]) return Var(this, *param_leaf_[id]);
  Var v = record(Op::Parameter, {}, params_->value(id));
  nodes_.back().param = id;
  param_leaf_[id] = v.id();
  return v;
}

Gradients Tape::backward(Var output) const {
  if (output.tape() != this) throw std::invalid_argument("output not recorded on this tape");
  const Matrix& out = nodes_[output.id()].value;
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward: output must be 1x1, got " + shape_str(out));
  }

  std::vector<Matrix> grad(output.id() + 1);
  grad[output.id()] = Matrix::Ones(1, 1);

  for (std::size_t idx = output.id() + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (grad[idx].size() == 0) continue;
    const Matrix& g = grad[idx];
    const auto& in0 = n.arity > 0 ? nodes_[n.in[0]].value : n.value;
    const auto& in1 = n.arity > 1 ? nodes_[n.in[1]].value : n.value;
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
        break;
      case Op::MatMul:
        accumulate(grad[n.in[0]], g * in1.transpose());
        accumulate(grad[n.in[1]], in0.transpose() * g);
        break;
      case Op::SparseMatMul:
        accumulate(grad[n.in[0]], Matrix(n.aux.sparse->transpose() * g));
        break;
      case Op::Add:
        accumulate(grad[n.in[0]], g);
        accumulate(grad[n.in[1]], reduce_like(g, in1));
        break;
      case Op::Sub:
        accumulate(grad[n.in[0]], g);
        accumulate(grad[n.in[1]], -reduce_like(g, in1));
        break;
      case Op::Mul: {
        const bool bc = broadcasts(in0, in1) && g.rows() != in1.rows();
        const Matrix b = bc ? expand(in1, in0.rows()) : in1;
        accumulate(grad[n.in[0]], g.cwiseProduct(b));
        accumulate(grad[n.in[1]], reduce_like(g.cwiseProduct(in0), in1));
        break;
      }
      case Op::Div: {
        const bool bc = broadcasts(in0, in1) && g.rows() != in1.rows();
        const Matrix b = bc ? expand(in1, in0.rows()) : in1;
        accumulate(grad[n.in[0]], g.cwiseQuotient(b));
        const Matrix gb = -(g.cwiseProduct(in0)).cwiseQuotient(b.cwiseProduct(b));
        accumulate(grad[n.in[1]], reduce_like(gb, in1));
        break;
      }
      case Op::Scale:
        accumulate(grad[n.in[0]], n.aux.scalar * g);
        break;
      case Op::ConcatCols:
        accumulate(grad[n.in[0]], g.leftCols(in0.cols()));
        accumulate(grad[n.in[1]], g.rightCols(in1.cols()));
        break;
      case Op::SliceCols: {
        Matrix full = Matrix::Zero(in0.rows(), in0.cols());
        full.middleCols(n.aux.index, n.aux.count) = g;
        accumulate(grad[n.in[0]], full);
        break;
      }
      case Op::SliceRows: {
        Matrix full = Matrix::Zero(in0.rows(), in0.cols());
        full.middleRows(n.aux.index, n.aux.count) = g;
        accumulate(grad[n.in[0]], full);
        break;
      }
      case Op::BroadcastRow:
        accumulate(grad[n.in[0]], g.colwise().sum());
        break;
      case Op::Sigmoid:
        accumulate(grad[n.in[0]],
                   g.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix())));
        break;
      case Op::Tanh:
        accumulate(grad[n.in[0]], g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Relu:
        accumulate(grad[n.in[0]], (in0.array() > 0.0).select(g.array(), 0.0).matrix());
        break;
      case Op::LeakyRelu:
        accumulate(grad[n.in[0]], (in0.array() > 0.0).select(g.array(), n.aux.scalar * g.array()).matrix());
        break;
      case Op::Exp:
        accumulate(grad[n.in[0]], g.cwiseProduct(n.value));
        break;
      case Op::Log:
        accumulate(grad[n.in[0]], g.cwiseQuotient(in0));
        break;
      case Op::Negate:
        accumulate(grad[n.in[0]], -g);
        break;
      case Op::Clamp: {
        const auto inside = (in0.array() >= n.aux.scalar) && (in0.array() <= n.aux.scalar2);
        accumulate(grad[n.in[0]], inside.select(g.array(), 0.0).matrix());
        break;
      }
      case Op::SumAll:
        accumulate(grad[n.in[0]], Matrix::Constant(in0.rows(), in0.cols(), g(0, 0)));
        break;
      case Op::MeanRows:
        accumulate(grad[n.in[0]], (g / static_cast<double>(in0.rows())).replicate(in0.rows(), 1));
        break;
      case Op::MeanAll:
        accumulate(grad[n.in[0]], Matrix::Constant(in0.rows(), in0.cols(),
                                                   g(0, 0) / static_cast<double>(in0.size())));
        break;
      case Op::SoftmaxRows: {
        const Eigen::VectorXd dot = g.cwiseProduct(n.value).rowwise().sum();
        Matrix gi = g;
        gi.colwise() -= dot;
        accumulate(grad[n.in[0]], gi.cwiseProduct(n.value));
        break;
      }
    }
  }

  Gradients out_grads(params_->size());
  for (std::size_t p = 0; p < params_->size(); ++p) {
    const Matrix& v = params_->value(p);
    if (p < param_leaf_.size() && param_leaf_[p] && *param_leaf_[p] <= output.id() &&
        grad[*param_leaf_[p]].size() != 0) {
      out_grads[p] = grad[*param_leaf_[p]];
    } else {
      out_grads[p] = Matrix::Zero(v.rows(), v.cols());
    }
  }
  return out_grads;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) shape_error(Op::MatMul, a.value(), b.value());
  return t.record(Op::MatMul, {a, b}, a.value() * b.value());
}

Var spmm(const SparseHandle& s, Var x) {
  Tape& t = tape_of(x);
  if (!s || s->cols() != x.rows()) {
    throw ShapeError(std::string("spmm: shape mismatch ") +
                     (s ? std::to_string(s->rows()) + "x" + std::to_string(s->cols()) : "null") +
                     " vs " + shape_str(x.value()));
  }
  Tape::Aux aux;
  aux.sparse = s;
  return t.record(Op::SparseMatMul, {x}, Matrix(*s * x.value()), aux);
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (check_binary(Op::Add, a.value(), b.value())) {
    return t.record(Op::Add, {a, b}, a.value().rowwise() + b.value().row(0));
  }
  return t.record(Op::Add, {a, b}, a.value() + b.value());
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (check_binary(Op::Sub, a.value(), b.value())) {
    return t.record(Op::Sub, {a, b}, a.value().rowwise() - b.value().row(0));
  }
  return t.record(Op::Sub, {a, b}, a.value() - b.value());
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (check_binary(Op::Mul, a.value(), b.value())) {
    return t.record(Op::Mul, {a, b}, a.value().cwiseProduct(expand(b.value(), a.rows())));
  }
  return t.record(Op::Mul, {a, b}, a.value().cwiseProduct(b.value()));
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const bool bc = check_binary(Op::Div, a.value(), b.value());
  if ((b.value().array() == 0.0).any()) throw DomainError("div: division by zero");
  const Matrix denom = bc ? expand(b.value(), a.rows()) : b.value();
  return t.record(Op::Div, {a, b}, a.value().cwiseQuotient(denom));
}

Var scale(Var a, double factor) {
  Tape::Aux aux;
  aux.scalar = factor;
  return tape_of(a).record(Op::Scale, {a}, factor * a.value(), aux);
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows()) shape_error(Op::ConcatCols, a.value(), b.value());
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t.record(Op::ConcatCols, {a, b}, std::move(out));
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice-cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(a.value()));
  }
  Tape::Aux aux;
  aux.index = begin;
  aux.count = count;
  return tape_of(a).record(Op::SliceCols, {a}, a.value().middleCols(begin, count), aux);
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice-rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(a.value()));
  }
  Tape::Aux aux;
  aux.index = begin;
  aux.count = count;
  return tape_of(a).record(Op::SliceRows, {a}, a.value().middleRows(begin, count), aux);
}

Var broadcast_row(Var a, Eigen::Index rows) {
  if (a.rows() != 1 || rows < 0) {
    throw ShapeError("broadcast-row: expected a 1xc row, got " + shape_str(a.value()));
  }
  return tape_of(a).record(Op::BroadcastRow, {a}, a.value().replicate(rows, 1));
}

Var sigmoid(Var a) {
  return tape_of(a).record(Op::Sigmoid, {a}, a.value().unaryExpr(&sigmoid_scalar));
}

Var tanh(Var a) { return tape_of(a).record(Op::Tanh, {a}, a.value().array().tanh().matrix()); }

Var relu(Var a) { return tape_of(a).record(Op::Relu, {a}, a.value().cwiseMax(0.0)); }

Var leaky_relu(Var a, double slope) {
  Tape::Aux aux;
  aux.scalar = slope;
  const Matrix& x = a.value();
  return tape_of(a).record(Op::LeakyRelu, {a}, (x.array() > 0.0).select(x.array(), slope * x.array()).matrix(),
                           aux);
}

Var exp(Var a) { return tape_of(a).record(Op::Exp, {a}, a.value().array().exp().matrix()); }

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive input");
  return tape_of(a).record(Op::Log, {a}, a.value().array().log().matrix());
}

Var negate(Var a) { return tape_of(a).record(Op::Negate, {a}, -a.value()); }

Var clamp(Var a, double lo, double hi) {
  Tape::Aux aux;
  aux.scalar = lo;
  aux.scalar2 = hi;
  return tape_of(a).record(Op::Clamp, {a}, a.value().cwiseMax(lo).cwiseMin(hi), aux);
}

Var sum_all(Var a) {
  return tape_of(a).record(Op::SumAll, {a}, Matrix::Constant(1, 1, a.value().sum()));
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw ShapeError("mean-rows: empty input");
  return tape_of(a).record(Op::MeanRows, {a}, a.value().colwise().mean());
}

Var mean_all(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean-all: empty input");
  return tape_of(a).record(Op::MeanAll, {a}, Matrix::Constant(1, 1, a.value().mean()));
}

Var softmax_rows(Var a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    y.row(r).array() -= y.row(r).maxCoeff();
    y.row(r) = y.row(r).array().exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return tape_of(a).record(Op::SoftmaxRows, {a}, std::move(y));
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Tape&)>& f, ParameterSet& params,
                           double step) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");

  Gradients analytic;
  {
    Tape tape(params);
    Var out = f(tape);
    analytic = tape.backward(out);
  }

  auto evaluate = [&](ParamId p, Eigen::Index i) {
    Tape tape(params);
    const double v = f(tape).value()(0, 0);
    if (!std::isfinite(v)) {
      throw DomainError("grad_check: non-finite value at parameter '" + params.name(p) +
                        "' coordinate " + std::to_string(i));
    }
    return v;
  };

  GradCheckResult result;
  for (ParamId p = 0; p < params.size(); ++p) {
    Matrix& value = params.value(p);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      value.data()[i] = original + step;
      const double up = evaluate(p, i);
      value.data()[i] = original - step;
      const double down = evaluate(p, i);
      value.data()[i] = original;

      const double fd = (up - down) / (2.0 * step);
      const double ad = analytic[p].data()[i];
      if (!std::isfinite(ad)) {
        throw DomainError("grad_check: non-finite gradient at parameter '" + params.name(p) +
                          "' coordinate " + std::to_string(i));
      }
      const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      ++result.coordinates;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace dypro::ad
