#include <doctest.h>

#include <random>

#include "driftlab/expr.hpp"
#include "driftlab/field.hpp"

using namespace driftlab;

namespace {

Vec random_point(std::mt19937_64& rng, int n, double radius = 2.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Vec q(n);
  for (int i = 0; i < n; ++i) q[i] = u(rng);
  return q;
}

}  // namespace

TEST_CASE("parse constant components") {
  VectorField f = parse_field("0, 0, 1", 3);
  Vec q = Vec::Zero(3);
  Vec v = f(q);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.0);
  CHECK(v[2] == 1.0);
}

TEST_CASE("parse Heisenberg pair") {
  VectorField f1 = parse_field("1, 0, 0", 3);
  VectorField f2 = parse_field("0, 1, x1", 3);
  Vec q(3);
  q << 0.7, -0.3, 2.0;
  CHECK(f1(q)[0] == 1.0);
  CHECK(f2(q)[1] == 1.0);
  CHECK(f2(q)[2] == doctest::Approx(0.7));
}

TEST_CASE("syntax error carries position") {
  CHECK_THROWS_AS(parse_scalar("x1 +", 3), ParseError);
  try {
    parse_scalar("x1 +", 3);
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 5);
  }
}

TEST_CASE("unknown identifier and dimension mismatch") {
  CHECK_THROWS_AS(parse_scalar("y1 + 2", 3), ParseError);
  CHECK_THROWS_AS(parse_scalar("x5", 3), ParseError);
  CHECK_THROWS_AS(parse_components("1, 2", 3), ParseError);
}

TEST_CASE("grammar features") {
  ScalarExpr e = parse_scalar("sin(x1)^2 + cos(x1)^2", 1);
  Vec q(1);
  q << 0.37;
  CHECK(e(q) == doctest::Approx(1.0));

  ScalarExpr p = parse_scalar("2*x1^3 - x2/4 + exp(0)", 2);
  Vec r(2);
  r << 2.0, 8.0;
  CHECK(p(r) == doctest::Approx(2 * 8.0 - 2.0 + 1.0));
}

TEST_CASE("print then re-parse evaluates identically") {
  std::mt19937_64 rng(20240811);
  const char* sources[] = {
      "x1 + 2*x2 - x3^3",
      "sin(x1*x2) - cos(x3)/(1 + x1^2)",
      "exp(x1/5) * (x2 - 3) ^ 2",
      "0.5*x1 - 1e-3*x2*x3 + 7",
      "-x1 + (x2 - x3)^5 / 3",
  };
  for (const char* src : sources) {
    ScalarExpr a = parse_scalar(src, 3);
    ScalarExpr b = parse_scalar(a.str(), 3);
    for (int i = 0; i < 50; ++i) {
      Vec q = random_point(rng, 3);
      CHECK(a(q) == doctest::Approx(b(q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("derivative of a constant is the zero expression") {
  ScalarExpr c = ScalarExpr::constant(4.25);
  CHECK(c.derivative(0).is_zero());
}

TEST_CASE("derivative is linear over +") {
  std::mt19937_64 rng(7);
  ScalarExpr a = parse_scalar("sin(x1)*x2", 2);
  ScalarExpr b = parse_scalar("x1^3 - x2", 2);
  ScalarExpr lhs = (a + b).derivative(0);
  ScalarExpr rhs = a.derivative(0) + b.derivative(0);
  for (int i = 0; i < 30; ++i) {
    Vec q = random_point(rng, 2);
    CHECK(lhs(q) == doctest::Approx(rhs(q)).epsilon(1e-12));
  }
}

TEST_CASE("derivatives match finite differences") {
  std::mt19937_64 rng(99);
  ScalarExpr e = parse_scalar("exp(x1/2)*sin(x2) + x1^4/(1 + x2^2)", 2);
  ScalarExpr dx = e.derivative(0);
  const double h = 1e-6;
  for (int i = 0; i < 20; ++i) {
    Vec q = random_point(rng, 2, 1.5);
    Vec qp = q, qm = q;
    qp[0] += h;
    qm[0] -= h;
    double fd = (e(qp) - e(qm)) / (2 * h);
    CHECK(dx(q) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("division by zero is reported") {
  ScalarExpr e = parse_scalar("1/x1", 1);
  Vec q(1);
  q << 0.0;
  CHECK_THROWS_AS(e(q), EvalError);
}

TEST_CASE("constant folding keeps zero and one out of trees") {
  ScalarExpr x = ScalarExpr::variable(0);
  CHECK((x * ScalarExpr::constant(0.0)).is_zero());
  CHECK((x + ScalarExpr()).str() == "x1");
  CHECK((ScalarExpr::constant(1.0) * x).str() == "x1");
  CHECK(parse_scalar("2*3 + 4", 1).constant_value() == 10.0);
}

TEST_CASE("compiled tape agrees with tree evaluation") {
  std::mt19937_64 rng(5);
  ScalarExpr e = parse_scalar("sin(x1*x2)^3 - exp(x3)/(2 + cos(x1))", 3);
  CompiledExpr c(e);
  for (int i = 0; i < 40; ++i) {
    Vec q = random_point(rng, 3);
    CHECK(c.eval(q.data()) == doctest::Approx(e(q)).epsilon(1e-14));
  }
}

TEST_CASE("vector field basics") {
  VectorField z = VectorField::zero(4);
  CHECK(z.is_zero());
  std::mt19937_64 rng(3);
  Vec q = random_point(rng, 4);
  CHECK(z(q).norm() == 0.0);
  CHECK_THROWS_AS(VectorField(3, {ScalarExpr(), ScalarExpr()}), Error);
}
