#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "driftlab/structure.hpp"

using namespace driftlab;

namespace {

ControlAffineSystem heisenberg() {
  return ControlAffineSystem(
      3, std::nullopt, {parse_field("1, 0, 0", 3), parse_field("0, 1, x1", 3)},
      "heisenberg");
}

ControlAffineSystem heisenberg_drift() {
  return ControlAffineSystem(
      3, parse_field("0, 0, 1", 3),
      {parse_field("1, 0, 0", 3), parse_field("0, 1, x1", 3)},
      "heisenberg_drift");
}

ControlAffineSystem engel() {
  return ControlAffineSystem(
      4, std::nullopt,
      {parse_field("1, 0, 0, 0", 4), parse_field("0, 1, x1, x1^2", 4)},
      "engel");
}

ControlAffineSystem martinet() {
  return ControlAffineSystem(
      3, std::nullopt,
      {parse_field("1, 0, 0", 3), parse_field("0, 1, x1^2", 3)}, "martinet");
}

std::vector<Vec> random_points(std::mt19937_64& rng, int count, int n,
                               double radius = 1.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<Vec> pts;
  for (int k = 0; k < count; ++k) {
    Vec q(n);
    for (int i = 0; i < n; ++i) q[i] = u(rng);
    pts.push_back(q);
  }
  return pts;
}

}  // namespace

TEST_CASE("closure of Heisenberg at length 2") {
  auto closure = bracket_closure(heisenberg(), 2);
  // f1, f2, [f1,f1], [f1,f2], [f2,f1], [f2,f2]
  CHECK(closure.size() == 6);
  CHECK(closure[0].word.letters == std::vector<int>{1});
  CHECK(closure[1].word.letters == std::vector<int>{2});
  Vec q = Vec::Zero(3);
  bool found_vertical = false;
  for (const auto& e : closure) {
    if (e.word.length() != 2) continue;
    Vec v = e.field(q);
    if (std::abs(v[2]) == doctest::Approx(1.0) && std::abs(v[0]) < 1e-12 &&
        std::abs(v[1]) < 1e-12)
      found_vertical = true;
  }
  CHECK(found_vertical);
}

TEST_CASE("closure at length 1 is the generator list") {
  auto closure = bracket_closure(engel(), 1);
  CHECK(closure.size() == 2);
  CHECK(closure[0].word.length() == 1);
  CHECK(closure[1].word.length() == 1);
}

TEST_CASE("Engel closure contains [f1,[f1,f2]] = 2 dw") {
  auto closure = bracket_closure(engel(), 3);
  Vec q = Vec::Zero(4);
  bool found = false;
  for (const auto& e : closure) {
    if (e.word.letters != std::vector<int>{1, 1, 2}) continue;
    Vec v = e.field(q);
    Vec expected(4);
    expected << 0, 0, 0, 2;
    found = (v - expected).norm() < 1e-12;
  }
  CHECK(found);
}

TEST_CASE("Heisenberg flag at the origin") {
  Flag f = flag_at(heisenberg(), Vec::Zero(3));
  CHECK(f.dims == std::vector<int>{2, 3});
  CHECK(f.weights == std::vector<int>{1, 1, 2});
  CHECK(f.step == 2);
}

TEST_CASE("Engel flag at the origin") {
  Flag f = flag_at(engel(), Vec::Zero(4));
  CHECK(f.dims == std::vector<int>{2, 3, 4});
  CHECK(f.weights == std::vector<int>{1, 1, 2, 3});
}

TEST_CASE("an involutive line field fails the Hormander check") {
  ControlAffineSystem line(2, std::nullopt, {parse_field("1, 0", 2)}, "line");
  CHECK_THROWS_AS(flag_at(line, Vec::Zero(2)), StructureError);
}

TEST_CASE("flag dims strictly increase and weights reconstruct dims") {
  std::mt19937_64 rng(21);
  for (const auto& system : {heisenberg(), engel()}) {
    for (const Vec& q : random_points(rng, 10, system.dim)) {
      Flag f = flag_at(system, q);
      for (std::size_t s = 1; s < f.dims.size(); ++s)
        CHECK(f.dims[s] > f.dims[s - 1]);
      CHECK(f.dims.back() == system.dim);
      for (std::size_t s = 0; s < f.dims.size(); ++s) {
        int count = 0;
        for (int w : f.weights)
          if (w <= static_cast<int>(s) + 1) ++count;
        CHECK(count == f.dims[s]);
      }
    }
  }
}

TEST_CASE("flag dims survive invertible recombination of the generators") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ControlAffineSystem h = heisenberg();
  double a, b, c, d;
  do {
    a = u(rng); b = u(rng); c = u(rng); d = u(rng);
  } while (std::abs(a * d - b * c) < 0.1);
  ControlAffineSystem mixed(
      3, std::nullopt,
      {a * h.controlled[0] + b * h.controlled[1],
       c * h.controlled[0] + d * h.controlled[1]},
      "heisenberg-mixed");
  for (const Vec& q : random_points(rng, 10, 3)) {
    CHECK(flag_at(mixed, q).dims == flag_at(h, q).dims);
  }
}

TEST_CASE("equiregular certificate passes on Heisenberg") {
  std::mt19937_64 rng(23);
  auto pts = random_points(rng, 50, 3);
  auto cert = equiregular_check(heisenberg(), pts);
  CHECK(cert.passed);
  CHECK(cert.dims == std::vector<int>{2, 3});
}

TEST_CASE("equiregular certificate fails for Martinet across x = 0") {
  std::vector<Vec> pts;
  Vec a(3), b(3);
  a << 0.5, 0.1, -0.3;
  b << 0.0, 0.2, 0.4;
  pts.push_back(a);
  pts.push_back(b);
  auto cert = equiregular_check(martinet(), pts);
  CHECK(!cert.passed);
  REQUIRE(cert.offending_point.has_value());
  CHECK((*cert.offending_point)[0] == 0.0);
}

TEST_CASE("empty sample is a precondition error") {
  CHECK_THROWS_AS(equiregular_check(heisenberg(), {}), StructureError);
}

TEST_CASE("adapted frame at the Heisenberg origin") {
  AdaptedFrame frame = adapted_frame_at(heisenberg(), Vec::Zero(3));
  REQUIRE(frame.entries.size() == 3);
  CHECK(frame.entries[0].word.letters == std::vector<int>{1});
  CHECK(frame.entries[1].word.letters == std::vector<int>{2});
  CHECK(frame.entries[2].word.length() == 2);
  CHECK(frame.weights() == std::vector<int>{1, 1, 2});
}

TEST_CASE("overly large rank_tol fails to complete the frame") {
  Vec q(3);
  q << 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(adapted_frame_at(heisenberg(), q, 0.5), StructureError);
}

TEST_CASE("adapted frame at the Engel origin") {
  AdaptedFrame frame = adapted_frame_at(engel(), Vec::Zero(4));
  REQUIRE(frame.entries.size() == 4);
  CHECK(frame.entries[2].word.length() == 2);
  CHECK(frame.entries[3].word.length() == 3);
  CHECK(frame.weights() == std::vector<int>{1, 1, 2, 3});
}

TEST_CASE("frame independence certificate") {
  std::mt19937_64 rng(24);
  for (const Vec& q : random_points(rng, 10, 3, 0.8)) {
    AdaptedFrame frame = adapted_frame_at(heisenberg(), q);
    Mat m = frame.matrix_at(q);
    Eigen::JacobiSVD<Mat> svd(m);
    CHECK(svd.singularValues()(2) >=
          kDefaultRankTol * svd.singularValues()(0));
  }
}

TEST_CASE("drift order of the vertical drift on Heisenberg is 2") {
  CHECK(drift_order(heisenberg_drift(), Vec::Zero(3)) == 2);
}

TEST_CASE("drift equal to a generator has order 1") {
  ControlAffineSystem sys(
      3, parse_field("1, 0, 0", 3),
      {parse_field("1, 0, 0", 3), parse_field("0, 1, x1", 3)}, "drift=f1");
  CHECK(drift_order(sys, Vec::Zero(3)) == 1);
}

TEST_CASE("vanishing drift reports the order-0 sentinel") {
  ControlAffineSystem sys(
      3, VectorField::zero(3),
      {parse_field("1, 0, 0", 3), parse_field("0, 1, x1", 3)}, "drift=0");
  CHECK(drift_order(sys, Vec::Zero(3)) == 0);
}

TEST_CASE("drift order is invariant under rescaling") {
  ControlAffineSystem base = heisenberg_drift();
  for (double c : {2.0, -1.0, 1e-3, 40.0}) {
    ControlAffineSystem scaled(3, c * (*base.drift), base.controlled,
                               "scaled");
    CHECK(drift_order(scaled, Vec::Zero(3)) == 2);
  }
}

TEST_CASE("drift-adapted frame places the drift in the weight-2 slot") {
  AdaptedFrame frame = drift_adapted_frame_at(heisenberg_drift(), Vec::Zero(3));
  REQUIRE(frame.drift_slot.has_value());
  CHECK(*frame.drift_slot == 2);
  CHECK(frame.entries[2].is_drift);
  CHECK(frame.entries[2].weight == 2);
}

TEST_CASE("tangency degree of coordinate paths on Heisenberg") {
  ControlAffineSystem h = heisenberg();
  PathFn horizontal = [](double t) {
    Vec p(3), v(3);
    p << t, 0, 0;
    v << 1, 0, 0;
    return PathPoint{p, v};
  };
  PathFn vertical = [](double t) {
    Vec p(3), v(3);
    p << 0, 0, t;
    v << 0, 0, 1;
    return PathPoint{p, v};
  };
  CHECK(tangency_degree(h, horizontal, 0.3) == 1);
  CHECK(tangency_degree(h, vertical, 0.1) == 2);
  CHECK(max_tangency_degree(h, horizontal, 0.0, 1.0) == 1);
}

TEST_CASE("cusp-example curve has tangency degree 2 at the vertex") {
  ControlAffineSystem h = heisenberg();
  PathFn cusp = [](double t) {
    Vec p(3), v(3);
    p << t * t, 0, t;
    v << 2 * t, 0, 1;
    return PathPoint{p, v};
  };
  CHECK(tangency_degree(h, cusp, 0.0) == 2);
  CHECK(max_tangency_degree(h, cusp, -0.2, 0.2, 65) == 2);
}

TEST_CASE("vanishing velocity is reported") {
  PathFn constant = [](double) {
    return PathPoint{Vec::Zero(3), Vec::Zero(3)};
  };
  CHECK_THROWS_AS(tangency_degree(heisenberg(), constant, 0.0),
                  StructureError);
}
