#include <doctest.h>

#include <cmath>
#include <random>

#include "driftlab/flow.hpp"

using namespace driftlab;

namespace {

Vec random_point(std::mt19937_64& rng, int n, double radius = 1.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Vec q(n);
  for (int i = 0; i < n; ++i) q[i] = u(rng);
  return q;
}

VectorField heis_f1() { return parse_field("1, 0, 0", 3); }
VectorField heis_f2() { return parse_field("0, 1, x1", 3); }

}  // namespace

TEST_CASE("bracket of the Heisenberg pair is the vertical field") {
  VectorField b = lie_bracket(heis_f1(), heis_f2());
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    Vec v = b(random_point(rng, 3));
    CHECK(v[0] == doctest::Approx(0.0));
    CHECK(v[1] == doctest::Approx(0.0));
    CHECK(v[2] == doctest::Approx(1.0));
  }
}

TEST_CASE("bracket of a field with itself vanishes") {
  VectorField f = parse_field("x2*x3, sin(x1), x1^2", 3);
  VectorField b = lie_bracket(f, f);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i)
    CHECK(b(random_point(rng, 3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("[d/dx, x d/dx] = d/dx") {
  VectorField f = parse_field("1", 1);
  VectorField g = parse_field("x1", 1);
  VectorField b = lie_bracket(f, g);
  Vec q(1);
  q << 3.7;
  CHECK(b(q)[0] == doctest::Approx(1.0));
}

TEST_CASE("bracket dimension mismatch is an error") {
  CHECK_THROWS_AS(lie_bracket(parse_field("1", 1), parse_field("1, 0", 2)),
                  Error);
}

TEST_CASE("antisymmetry at random points") {
  VectorField f = parse_field("x2, x3^2, sin(x1)", 3);
  VectorField g = parse_field("cos(x2), x1*x3, 1", 3);
  VectorField sum = lie_bracket(f, g) + lie_bracket(g, f);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i)
    CHECK(sum(random_point(rng, 3)).norm() <= 1e-10);
}

TEST_CASE("Jacobi identity at random points") {
  VectorField f = parse_field("x2, x3, x1^2", 3);
  VectorField g = parse_field("1, x1*x2, cos(x3)", 3);
  VectorField h = parse_field("sin(x2), 0, x1", 3);
  VectorField cyclic = lie_bracket(f, lie_bracket(g, h)) +
                       lie_bracket(g, lie_bracket(h, f)) +
                       lie_bracket(h, lie_bracket(f, g));
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i)
    CHECK(cyclic(random_point(rng, 3)).norm() <= 1e-8);
}

TEST_CASE("flow of a constant field is a translation") {
  Vec q = Vec::Zero(3);
  Vec p = flow(heis_f1(), q, 1.0);
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(0.0));
  CHECK(p[2] == doctest::Approx(0.0));
}

TEST_CASE("flow of x d/dx is exponential growth") {
  VectorField f = parse_field("x1", 1);
  Vec q(1);
  q << 1.0;
  for (double t : {0.3, 1.0, 2.0, -1.0}) {
    Vec p = flow(f, q, t);
    CHECK(p[0] == doctest::Approx(std::exp(t)).epsilon(1e-8));
  }
}

TEST_CASE("flow at t = 0 is the identity") {
  VectorField f = parse_field("sin(x2), cos(x1), x1*x2", 3);
  std::mt19937_64 rng(4);
  Vec q = random_point(rng, 3);
  CHECK((flow(f, q, 0.0) - q).norm() == 0.0);
}

TEST_CASE("flow semigroup property") {
  VectorField f = parse_field("x2, sin(x1), x1 - x3", 3);
  std::mt19937_64 rng(5);
  OdeOptions opts;
  for (int i = 0; i < 10; ++i) {
    Vec q = random_point(rng, 3);
    double s = 0.4, t = 0.7;
    Vec direct = flow(f, q, s + t, opts);
    Vec staged = flow(f, flow(f, q, s, opts), t, opts);
    CHECK((direct - staged).norm() <= 10 * opts.rel_tol *
                                          std::max(1.0, direct.norm()));
  }
}

TEST_CASE("commutator of flows reproduces the bracket at rate O(t)") {
  // || (phi_g^-t o phi_f^-t o phi_g^t o phi_f^t (q) - q)/t^2 - [f,g](q) ||
  // should shrink linearly in t. The fields must not be nilpotent of low
  // order, otherwise the defect is exactly zero.
  VectorField f = parse_field("1, 0, sin(x2)", 3);
  VectorField g = parse_field("0, 1, 0", 3);
  VectorField b = lie_bracket(f, g);
  Vec q(3);
  q << 0.2, 0.7, 0.05;
  Vec bq = b(q);
  auto defect = [&](double t) {
    Vec p = flow(f, q, t);
    p = flow(g, p, t);
    p = flow(f, p, -t);
    p = flow(g, p, -t);
    return ((p - q) / (t * t) - bq).norm();
  };
  double d1 = defect(1e-2);
  double d2 = defect(5e-3);
  double d3 = defect(2.5e-3);
  double order12 = std::log2(d1 / d2);
  double order23 = std::log2(d2 / d3);
  CHECK(order12 >= 0.8);
  CHECK(order23 >= 0.8);
}

TEST_CASE("symbolic Jacobians match central differences") {
  VectorField f = parse_field("sin(x1*x2), x3^2 - x1, exp(x2/3)", 3);
  std::mt19937_64 rng(6);
  const double h = 1e-5;
  for (int rep = 0; rep < 5; ++rep) {
    Vec q = random_point(rng, 3);
    Mat J = f.jacobian_at(q);
    for (int j = 0; j < 3; ++j) {
      Vec qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      Vec col = (f(qp) - f(qm)) / (2 * h);
      CHECK((J.col(j) - col).norm() <= 1e-6);
    }
  }
}

TEST_CASE("pushforward along a commuting drift is unchanged") {
  VectorField f0 = parse_field("0, 0, 1", 3);
  Vec q(3);
  q << 0.3, 0.6, -0.2;
  Vec v = flow_pushforward(f0, heis_f1(), 0.8, q);
  CHECK((v - heis_f1()(q)).norm() <= 1e-8);
}

TEST_CASE("pushforward at t = 0 returns g(q)") {
  VectorField f0 = parse_field("x2, 0, 0", 3);
  VectorField g = parse_field("0, x1, x3", 3);
  std::mt19937_64 rng(8);
  Vec q = random_point(rng, 3);
  CHECK((flow_pushforward(f0, g, 0.0, q) - g(q)).norm() == 0.0);
}

TEST_CASE("pushforward of the second Heisenberg field along the vertical drift") {
  // [dz, f2] = 0, so the pushforward equals f2 at the flowed point, whose
  // x-coordinate is unchanged.
  VectorField f0 = parse_field("0, 0, 1", 3);
  VectorField f2 = heis_f2();
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5; ++i) {
    Vec q = random_point(rng, 3);
    Vec v = flow_pushforward(f0, f2, 1.0, q);
    Vec expected(3);
    expected << 0.0, 1.0, q[0];
    CHECK((v - expected).norm() <= 1e-8);
  }
}

TEST_CASE("pushforward respects the variation formula on a non-commuting pair") {
  // d/dt (e^{-t f0})_* g = (e^{-t f0})_* [f0, g]; check against a
  // finite-difference quotient in t.
  VectorField f0 = parse_field("0, x1", 2);
  VectorField g = parse_field("1, 0", 2);
  Vec q(2);
  q << 0.4, -0.7;
  double t = 0.5, h = 1e-5;
  Vec vp = flow_pushforward(f0, g, t + h, q);
  Vec vm = flow_pushforward(f0, g, t - h, q);
  Vec fd = (vp - vm) / (2 * h);
  Vec lie = flow_pushforward(f0, lie_bracket(f0, g), t, q);
  CHECK((fd - lie).norm() <= 1e-6);
}

TEST_CASE("flow_compose applies steps in order") {
  std::vector<std::pair<VectorField, double>> steps = {{heis_f1(), 1.0},
                                                       {heis_f2(), 1.0}};
  Vec p = flow_compose(steps, Vec::Zero(3));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("flow_compose of an empty list is the identity") {
  Vec q(3);
  q << 1, 2, 3;
  CHECK((flow_compose({}, q) - q).norm() == 0.0);
}

TEST_CASE("Heisenberg two-leg composition") {
  double a = 0.37, b = -0.58;
  std::vector<std::pair<VectorField, double>> steps = {{heis_f1(), a},
                                                       {heis_f2(), b}};
  Vec p = flow_compose(steps, Vec::Zero(3));
  CHECK(p[0] == doctest::Approx(a).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(b).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(a * b).epsilon(1e-9));
}

TEST_CASE("escaping trajectories report step underflow") {
  // x' = x^2 from x = 1 blows up at t = 1.
  VectorField f = parse_field("x1^2", 1);
  Vec q(1);
  q << 1.0;
  CHECK_THROWS_AS(flow(f, q, 2.0), FlowError);
}
