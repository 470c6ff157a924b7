#include <doctest.h>

#include <cmath>
#include <random>

#include "driftlab/chart.hpp"

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

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("chart is centered: to_coords(base) = 0 and from_coords(0) = base") {
  Vec q = vec3(0.2, -0.1, 0.3);
  PrivilegedChart chart = build_chart(heisenberg(), q);
  CHECK(chart.to_coords(q).norm() <= 1e-10);
  CHECK((chart.from_coords(Vec::Zero(3)) - q).norm() == 0.0);
}

TEST_CASE("single-leg composition recovers the leg parameter") {
  PrivilegedChart chart = build_chart(heisenberg(), Vec::Zero(3));
  double a = 0.35;
  Vec p = vec3(a, 0, 0);  // e^{a f1}(0)
  Vec z = chart.to_coords(p);
  CHECK(z[0] == doctest::Approx(a).epsilon(1e-9));
  CHECK(std::abs(z[1]) <= 1e-9);
  CHECK(std::abs(z[2]) <= 1e-9);
}

TEST_CASE("two-leg composition point inverts and round-trips") {
  PrivilegedChart chart = build_chart(heisenberg(), Vec::Zero(3));
  double a = 0.3, b = -0.2;
  Vec p = vec3(a, b, a * b);  // e^{b f2} e^{a f1} (0)
  Vec z = chart.to_coords(p);
  CHECK((chart.from_coords(z) - p).norm() <= 1e-8);
  CHECK(z[0] == doctest::Approx(a).epsilon(1e-8));
  CHECK(z[1] == doctest::Approx(b).epsilon(1e-8));
  CHECK(std::abs(z[2]) <= 1e-8);
}

TEST_CASE("chart round-trip inside the weighted box") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ControlAffineSystem h = heisenberg();
  PrivilegedChart chart = build_chart(h, vec3(0.1, 0.05, -0.08));
  const auto& w = chart.weights();
  for (int rep = 0; rep < 40; ++rep) {
    Vec z(3);
    for (int i = 0; i < 3; ++i) z[i] = u(rng) * std::pow(0.3, w[i]);
    Vec back = chart.to_coords(chart.from_coords(z));
    CHECK((back - z).norm() <= 1e-8);
  }
}

TEST_CASE("drift chart rectifies the drift axis") {
  ControlAffineSystem sys = heisenberg_drift();
  PrivilegedChart chart = build_drift_chart(sys, Vec::Zero(3));
  REQUIRE(chart.drift_slot().has_value());
  int l = *chart.drift_slot();
  CHECK(chart.weights()[l] == 2);

  for (double t : {0.05, 0.1, -0.15, 0.2}) {
    Vec z = Vec::Zero(3);
    z[l] = t;
    Vec p = chart.from_coords(z);
    CHECK((p - vec3(0, 0, t)).norm() <= 1e-9);
    Vec back = chart.to_coords(vec3(0, 0, t));
    Vec expected = Vec::Zero(3);
    expected[l] = t;
    CHECK((back - expected).norm() <= 1e-6);
  }
}

TEST_CASE("drift chart pushes f0 to the coordinate direction near 0") {
  // z_* f0 = d/dz_l: finite differences of to_coords along the drift flow.
  ControlAffineSystem sys = heisenberg_drift();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.15, 0.15);
  PrivilegedChart chart = build_drift_chart(sys, vec3(0.02, -0.05, 0.04));
  int l = *chart.drift_slot();
  const double h = 1e-4;
  for (int rep = 0; rep < 20; ++rep) {
    Vec z(3);
    for (int i = 0; i < 3; ++i) z[i] = u(rng);
    Vec p = chart.from_coords(z);
    Vec p2 = flow(*sys.drift, p, h);
    Vec dz = (chart.to_coords(p2) - chart.to_coords(p)) / h;
    Vec e = Vec::Zero(3);
    e[l] = 1.0;
    CHECK((dz - e).norm() <= 1e-6);
  }
}

TEST_CASE("drift chart requires a non-vanishing drift") {
  ControlAffineSystem sys(
      3, parse_field("x1, 0, 0", 3),
      {parse_field("1, 0, 0", 3), parse_field("0, 1, x1", 3)}, "xdrift");
  CHECK_THROWS_AS(build_drift_chart(sys, Vec::Zero(3)), StructureError);
}

TEST_CASE("continuous family centers one chart per grid time") {
  ControlAffineSystem h = heisenberg();
  PathFn gamma = [](double t) {
    return PathPoint{vec3(t, 0, 0), vec3(1, 0, 0)};
  };
  std::vector<double> grid;
  for (int i = 0; i < 16; ++i) grid.push_back(i / 15.0);
  auto family = continuous_family(h, gamma, grid);
  REQUIRE(family.size() == 16);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK((family[i].base() - vec3(grid[i], 0, 0)).norm() == 0.0);
    CHECK(family[i].to_coords(family[i].base()).norm() <= 1e-10);
  }
}

TEST_CASE("family coordinates grow linearly along the path") {
  // |z_j^t(gamma(t+xi))| <= C xi for xi <= 0.1.
  ControlAffineSystem h = heisenberg();
  PathFn gamma = [](double t) {
    return PathPoint{vec3(t, 0, 0), vec3(1, 0, 0)};
  };
  std::vector<double> grid;
  for (int i = 0; i < 8; ++i) grid.push_back(i * 0.1);
  auto family = continuous_family(h, gamma, grid);
  const double C = 4.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double xi : {0.01, 0.04, 0.1}) {
      Vec z = family[i].to_coords(gamma(grid[i] + xi).position);
      for (int j = 0; j < 3; ++j) CHECK(std::abs(z[j]) <= C * xi);
    }
  }
}

TEST_CASE("weight-graded growth on a vertically tangent path") {
  // gamma(t) = (0,0,t) has k = 2; coordinates of weight w <= k grow like
  // xi^{w/k} = xi^{1/2} at worst, weight-2 coordinates like xi.
  ControlAffineSystem h = heisenberg();
  PathFn gamma = [](double t) {
    return PathPoint{vec3(0, 0, t), vec3(0, 0, 1)};
  };
  std::vector<double> grid = {0.0, 0.05, 0.1, 0.15};
  auto family = continuous_family(h, gamma, grid);
  const auto& w = family[0].weights();
  const double C = 4.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double xi : {0.005, 0.02, 0.08}) {
      Vec z = family[i].to_coords(gamma(grid[i] + xi).position);
      for (int j = 0; j < 3; ++j) {
        double bound = w[j] >= 2 ? C * xi : C * std::sqrt(xi);
        CHECK(std::abs(z[j]) <= bound);
      }
    }
  }
}

TEST_CASE("rectifying family translates the alpha coordinate") {
  ControlAffineSystem h = heisenberg();
  PathFn gamma = [](double t) {
    return PathPoint{vec3(t, 0, 0), vec3(1, 0, 0)};
  };
  std::vector<double> grid = {0.0, 0.1, 0.2, 0.3};
  RectifyingFamily fam = rectifying_family(h, gamma, grid);
  REQUIRE(fam.alpha_slot >= 0);
  CHECK(fam.charts[0].weights()[fam.alpha_slot] == 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double xi : {0.02, 0.05, 0.1}) {
      Vec z = fam.charts[i].to_coords(gamma(grid[i] + xi).position);
      CHECK(z[fam.alpha_slot] == doctest::Approx(xi).epsilon(1e-7));
      for (int j = 0; j < 3; ++j)
        if (j != fam.alpha_slot) CHECK(std::abs(z[j]) <= 1e-7);
    }
  }
  // Translation property on grid pairs: z_alpha^t = z_alpha^{t-xi} + xi.
  Vec probe = gamma(0.25).position;
  double za_01 = fam.charts[1].to_coords(probe)[fam.alpha_slot];
  double za_00 = fam.charts[0].to_coords(probe)[fam.alpha_slot];
  CHECK(za_00 == doctest::Approx(za_01 + 0.1).epsilon(1e-7));
}

TEST_CASE("rectifying family along a drift orbit uses the drift slot") {
  ControlAffineSystem sys = heisenberg_drift();
  PathFn orbit = [](double t) {
    return PathPoint{vec3(0, 0, t), vec3(0, 0, 1)};
  };
  std::vector<double> grid = {0.0, 0.05, 0.1};
  RectifyingFamily fam = rectifying_family(sys, orbit, grid);
  REQUIRE(fam.drift_slot.has_value());
  CHECK(fam.alpha_slot == *fam.drift_slot);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Vec z = fam.charts[i].to_coords(orbit(grid[i] + 0.04).position);
    CHECK(z[fam.alpha_slot] == doctest::Approx(0.04).epsilon(1e-7));
    for (int j = 0; j < 3; ++j)
      if (j != fam.alpha_slot) CHECK(std::abs(z[j]) <= 1e-7);
  }
}

TEST_CASE("rectifying family of a single grid point") {
  ControlAffineSystem h = heisenberg();
  PathFn gamma = [](double t) {
    return PathPoint{vec3(t, 0, 0), vec3(1, 0, 0)};
  };
  std::vector<double> grid = {0.4};
  RectifyingFamily fam = rectifying_family(h, gamma, grid);
  CHECK(fam.charts.size() == 1);
}

TEST_CASE("box membership") {
  BoxSpec spec{0.1, {1, 1, 2}};
  CHECK(box_contains(spec, vec3(0.05, -0.1, 0.01)));
  CHECK(!box_contains(spec, vec3(0, 0, 0.011)));
  BoxSpec degenerate{0.0, {1, 1, 2}};
  CHECK(box_contains(degenerate, Vec::Zero(3)));
  CHECK(!box_contains(degenerate, vec3(1e-9, 0, 0)));
}

TEST_CASE("box membership is monotone in eta") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  BoxSpec small{0.1, {1, 1, 2}};
  BoxSpec large{0.2, {1, 1, 2}};
  for (int i = 0; i < 200; ++i) {
    Vec z = vec3(u(rng), u(rng), u(rng));
    if (box_contains(small, z)) CHECK(box_contains(large, z));
  }
}

TEST_CASE("the drift segment is the core of Xi") {
  DriftBoxSpec spec{0.05, 0.2, {1, 1, 2}, 2, 2};
  for (double t : {0.0, 0.07, 0.16, 0.2}) {
    Vec z = Vec::Zero(3);
    z[2] = t;
    CHECK(xi_contains(spec, z));
  }
  Vec beyond = Vec::Zero(3);
  beyond[2] = 0.2 + 2 * std::pow(0.05, 2);
  CHECK(!xi_contains(spec, beyond));
}

TEST_CASE("the box is the first branch of Pi") {
  DriftBoxSpec spec{0.1, 0.2, {1, 1, 2}, 2, 2};
  CHECK(pi_contains(spec, vec3(0.1, -0.1, 0.01)));
  CHECK(pi_contains(spec, vec3(0, 0, -0.009)));
  CHECK(!pi_contains(spec, vec3(0, 0, -0.02)));  // below the drift, outside
}

TEST_CASE("Pi admits the drift-smeared branch") {
  double eta = 0.1, T = 0.2;
  DriftBoxSpec spec{eta, T, {1, 1, 2}, 2, 2};
  double xi = 0.5 * T;
  Vec z = vec3((eta + eta * std::sqrt(xi)) * 0.99, 0.0, xi);
  CHECK(pi_contains(spec, z));
  Vec outside = vec3((eta + eta * std::sqrt(xi)) * 1.01, 0.0, xi);
  CHECK(!pi_contains(spec, outside));
}

TEST_CASE("Xi is contained in Pi on sampled coordinates") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double eta : {0.05, 0.1, 0.2}) {
    DriftBoxSpec spec{eta, 0.2, {1, 1, 2}, 2, 2};
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      Vec z = vec3(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
      if (!xi_contains(spec, z)) continue;
      ++hits;
      CHECK(pi_contains(spec, z));
    }
    CHECK(hits > 0);
  }
}

TEST_CASE("pseudo-norm values and homogeneity") {
  std::vector<int> w{1, 1, 2};
  CHECK(pseudo_norm(w, Vec::Zero(3)) == 0.0);
  CHECK(pseudo_norm(w, vec3(0, 0, 4)) == doctest::Approx(2.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    Vec z = vec3(u(rng), u(rng), u(rng));
    double lambda = std::abs(u(rng)) + 0.1;
    Vec dil = z;
    for (int j = 0; j < 3; ++j) dil[j] *= std::pow(lambda, w[j]);
    CHECK(pseudo_norm(w, dil) ==
          doctest::Approx(lambda * pseudo_norm(w, z)).epsilon(1e-10));
  }
}

TEST_CASE("to_coords reports divergence outside the chart domain") {
  PrivilegedChart chart = build_chart(heisenberg(), Vec::Zero(3));
  CHECK_THROWS_AS(chart.to_coords(vec3(1e9, 1e9, 1e9)), ChartError);
}
