#include <doctest.h>

#include <cmath>
#include <random>

#include "dypro/autodiff.hpp"
#include "dypro/error.hpp"

using namespace dypro;
using namespace dypro::ad;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -2.0,
                     double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Pushes values away from the kinks of relu / leaky_relu / clamp so central
// differences stay on one side.
Matrix away_from_zero(Matrix m, double margin = 0.05) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  }
  return m;
}

}  // namespace

TEST_CASE("forward values of basic primitives") {
  ParameterSet ps;
  Tape tape(ps);
  const Var a = tape.constant(mat({{1, 2}, {3, 4}}));
  const Var b = tape.constant(mat({{1}, {1}}));
  CHECK(matmul(a, b).value().isApprox(mat({{3}, {7}})));
  CHECK(sigmoid(tape.constant(mat({{0}}))).value()(0, 0) == 0.5);
  CHECK(mean_rows(tape.constant(mat({{1, 3}, {5, 7}}))).value() == mat({{3, 5}}));
  CHECK(relu(tape.constant(mat({{-1, 0, 2}}))).value() == mat({{0, 0, 2}}));
  CHECK(softmax_rows(tape.constant(mat({{0, 0}}))).value() == mat({{0.5, 0.5}}));
  CHECK(broadcast_row(tape.constant(mat({{1, 2}})), 3).value() == mat({{1, 2}, {1, 2}, {1, 2}}));
}

TEST_CASE("hand gradients") {
  SUBCASE("sum of squares") {
    ParameterSet ps;
    const ParamId x = ps.add("x", mat({{3}}));
    Tape tape(ps);
    const Var v = tape.param(x);
    const Gradients g = tape.backward(sum_all(mul(v, v)));
    CHECK(g[x](0, 0) == 6.0);
  }
  SUBCASE("sigmoid at zero") {
    ParameterSet ps;
    const ParamId x = ps.add("x", mat({{0}}));
    Tape tape(ps);
    const Gradients g = tape.backward(sum_all(sigmoid(tape.param(x))));
    CHECK(g[x](0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("matmul against a constant column") {
    ParameterSet ps;
    const ParamId w = ps.add("w", mat({{1, 1}, {1, 1}}));
    Tape tape(ps);
    const Var y = matmul(tape.param(w), tape.constant(mat({{1}, {2}})));
    const Gradients g = tape.backward(sum_all(y));
    CHECK(g[w] == mat({{1, 2}, {1, 2}}));
  }
  SUBCASE("relu subgradient at zero is zero") {
    ParameterSet ps;
    const ParamId x = ps.add("x", mat({{0, 1}}));
    Tape tape(ps);
    const Gradients g = tape.backward(sum_all(relu(tape.param(x))));
    CHECK(g[x] == mat({{0, 1}}));
  }
}

TEST_CASE("parameter leaves are cached per tape") {
  ParameterSet ps;
  const ParamId x = ps.add("x", mat({{2}}));
  Tape tape(ps);
  const Var a = tape.param(x);
  const Var b = tape.param(x);
  CHECK(a.id() == b.id());
  // x * x through two handles of one leaf: d/dx = 2x.
  CHECK(tape.backward(sum_all(mul(a, b)))[x](0, 0) == 4.0);
}

TEST_CASE("grad_check on a quadratic") {
  ParameterSet ps;
  const ParamId x = ps.add("x", mat({{0.3, -1.2}, {0.7, 1.9}}));
  const auto r = grad_check([&](Tape& t) { return sum_all(mul(t.param(x), t.param(x))); }, ps,
                            1e-5);
  CHECK(r.max_rel_error <= 1e-6);
  CHECK(r.coordinates == 4);
  CHECK(ps.value(x) == mat({{0.3, -1.2}, {0.7, 1.9}}));
}

TEST_CASE("grad_check reports zero for an unreachable parameter") {
  ParameterSet ps;
  const ParamId x = ps.add("x", mat({{1.5}}));
  ps.add("unused", mat({{2.0, 3.0}}));
  const auto r = grad_check([&](Tape& t) { return sum_all(scale(t.param(x), 2.0)); }, ps, 1e-5);
  CHECK(r.max_rel_error == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(11);
  const Matrix sq = random_matrix(rng, 3, 3);
  const Matrix col = random_matrix(rng, 3, 2);
  const Matrix row = random_matrix(rng, 1, 3);
  const Matrix pos = random_matrix(rng, 3, 3, 0.5, 2.0);

  using Build = std::function<Var(Tape&, Var, Var)>;
  struct Case {
    const char* name;
    Matrix a;
    Matrix b;
    Build f;
  };
  const Matrix weight = random_matrix(rng, 3, 3);
  const auto sparse = std::make_shared<SparseMatrix>(weight.sparseView());
  const std::vector<Case> cases = {
      {"matmul", sq, col, [](Tape&, Var a, Var b) { return matmul(a, b); }},
      {"spmm", col, row, [&](Tape&, Var a, Var) { return spmm(sparse, a); }},
      {"add", sq, random_matrix(rng, 3, 3), [](Tape&, Var a, Var b) { return add(a, b); }},
      {"add_row", sq, row, [](Tape&, Var a, Var b) { return add(a, b); }},
      {"sub", sq, random_matrix(rng, 3, 3), [](Tape&, Var a, Var b) { return sub(a, b); }},
      {"mul", sq, random_matrix(rng, 3, 3), [](Tape&, Var a, Var b) { return mul(a, b); }},
      {"mul_row", sq, row, [](Tape&, Var a, Var b) { return mul(a, b); }},
      {"div", sq, pos, [](Tape&, Var a, Var b) { return div(a, b); }},
      {"div_row", sq, pos.topRows(1), [](Tape&, Var a, Var b) { return div(a, b); }},
      {"scale", sq, row, [](Tape&, Var a, Var) { return scale(a, -1.7); }},
      {"concat_cols", sq, col, [](Tape&, Var a, Var b) { return concat_cols(a, b); }},
      {"slice_cols", sq, row, [](Tape&, Var a, Var) { return slice_cols(a, 1, 2); }},
      {"slice_rows", sq, row, [](Tape&, Var a, Var) { return slice_rows(a, 0, 2); }},
      {"broadcast_row", row, row, [](Tape&, Var a, Var) { return broadcast_row(a, 4); }},
      {"sigmoid", sq, row, [](Tape&, Var a, Var) { return sigmoid(a); }},
      {"tanh", sq, row, [](Tape&, Var a, Var) { return tanh(a); }},
      {"relu", away_from_zero(sq), row, [](Tape&, Var a, Var) { return relu(a); }},
      {"leaky_relu", away_from_zero(sq), row,
       [](Tape&, Var a, Var) { return leaky_relu(a, 0.2); }},
      {"exp", sq, row, [](Tape&, Var a, Var) { return exp(a); }},
      {"log", pos, row, [](Tape&, Var a, Var) { return log(a); }},
      {"negate", sq, row, [](Tape&, Var a, Var) { return negate(a); }},
      {"clamp", away_from_zero(sq, 0.1), row,
       [](Tape&, Var a, Var) { return clamp(a, -1.0, 1.0); }},
      {"mean_rows", sq, row, [](Tape&, Var a, Var) { return mean_rows(a); }},
      {"mean_all", sq, row, [](Tape&, Var a, Var) { return mean_all(a); }},
      {"softmax_rows", sq, row, [](Tape&, Var a, Var) { return softmax_rows(a); }},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    ParameterSet ps;
    const ParamId a = ps.add("a", c.a);
    const ParamId b = ps.add("b", c.b);
    // A fixed random projection turns the output into a scalar with
    // non-uniform upstream gradients.
    Tape probe(ps);
    const Matrix out = c.f(probe, probe.param(a), probe.param(b)).value();
    const Matrix w = random_matrix(rng, out.rows(), out.cols());
    const auto r = grad_check(
        [&](Tape& t) {
          return sum_all(mul(c.f(t, t.param(a), t.param(b)), t.constant(w)));
        },
        ps, 1e-5);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("backward is linear in the output") {
  std::mt19937_64 rng(5);
  ParameterSet ps;
  const ParamId x = ps.add("x", random_matrix(rng, 2, 3));
  auto f = [&](Tape& t) { return sum_all(tanh(t.param(x))); };
  auto g = [&](Tape& t) { return sum_all(mul(t.param(x), t.param(x))); };
  Tape t1(ps), t2(ps), t3(ps);
  const Matrix gf = t1.backward(f(t1))[x];
  const Matrix gg = t2.backward(g(t2))[x];
  const Matrix gs = t3.backward(add(f(t3), g(t3)))[x];
  CHECK((gs - (gf + gg)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("repeated tapes are bitwise identical") {
  std::mt19937_64 rng(8);
  ParameterSet ps;
  const ParamId w = ps.add("w", random_matrix(rng, 4, 3));
  const Matrix input = random_matrix(rng, 5, 4);
  auto run = [&](Matrix& value) {
    Tape t(ps);
    const Var y = mean_all(softmax_rows(matmul(t.constant(input), t.param(w))));
    value = y.value();
    return t.backward(y)[w];
  };
  Matrix v1, v2;
  const Matrix g1 = run(v1);
  const Matrix g2 = run(v2);
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("shape and domain errors") {
  ParameterSet ps;
  Tape tape(ps);
  const Var a = tape.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, tape.constant(Matrix::Ones(3, 2))), ShapeError);
  CHECK_THROWS_AS(slice_cols(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  CHECK_THROWS_AS(log(tape.constant(Matrix::Zero(1, 1))), DomainError);
  CHECK_THROWS(tape.param(7));
}
