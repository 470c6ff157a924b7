#include "driftlab/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "driftlab/parallel.hpp"

namespace driftlab {

const char* kind_name(ComplexityKind k) {
  switch (k) {
    case ComplexityKind::Cost: return "cost";
    case ComplexityKind::App: return "app";
    case ComplexityKind::Time: return "time";
    case ComplexityKind::Neig: return "neig";
    case ComplexityKind::LtlcTime: return "ltlc_time";
    case ComplexityKind::LtlcNeig: return "ltlc_neig";
  }
  return "?";
}

ComplexityKind kind_from_name(const std::string& name) {
  if (name == "cost") return ComplexityKind::Cost;
  if (name == "app") return ComplexityKind::App;
  if (name == "time") return ComplexityKind::Time;
  if (name == "neig") return ComplexityKind::Neig;
  if (name == "ltlc_time") return ComplexityKind::LtlcTime;
  if (name == "ltlc_neig") return ComplexityKind::LtlcNeig;
  throw ComplexityError("unknown complexity kind '" + name + "'");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_curve(const CurveSpec& curve) {
  if (!(curve.t1 > curve.t0))
    throw ComplexityError("curve parameter range is empty");
  if (curve.constant) return;
  const int probes = 16;
  std::vector<Vec> pts;
  for (int i = 0; i <= probes; ++i) {
    double t = curve.t0 + curve.span() * i / probes;
    PathPoint p = curve.map(t);
    if (p.velocity.norm() == 0.0)
      throw ComplexityError("curve velocity vanishes at t = " +
                            std::to_string(t));
    pts.push_back(p.position);
  }
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b)
      if ((pts[a] - pts[b]).norm() < 1e-12)
        throw ComplexityError("curve is not injective on the sampled grid");
}

Vec plan_endpoint(const ControlAffineSystem& system, const PlanResult& plan,
                  const Vec& from) {
  return integrate(system, *plan.control, from).endpoint();
}

// Pseudo-distance to the curve: nearest grid charts by Euclidean
// prefilter, then the chart gauge (linearized inside optimizer loops,
// Newton-accurate for the final membership checks).
class TubeGauge {
 public:
  TubeGauge(const PrivilegedChart& tmpl, const CurveSpec& curve, int grid) {
    charts_.reserve(grid);
    centers_.reserve(grid);
    for (int i = 0; i < grid; ++i) {
      double t = curve.t0 + curve.span() * i / (grid - 1);
      Vec c = curve.map(t).position;
      charts_.push_back(tmpl.rebased(c, 0.0));
      centers_.push_back(std::move(c));
    }
  }

  double linearized(const Vec& q) const {
    auto [a, b, c] = nearest3(q);
    double best = charts_[a].linearized_pseudo_distance(q);
    if (b >= 0) best = std::min(best, charts_[b].linearized_pseudo_distance(q));
    if (c >= 0) best = std::min(best, charts_[c].linearized_pseudo_distance(q));
    return best;
  }

  double exact(const Vec& q) const {
    auto [a, b, c] = nearest3(q);
    double best = charts_[a].pseudo_distance(q, 0.75);
    if (b >= 0) best = std::min(best, charts_[b].pseudo_distance(q, 0.75));
    if (c >= 0) best = std::min(best, charts_[c].pseudo_distance(q, 0.75));
    return best;
  }

 private:
  std::tuple<int, int, int> nearest3(const Vec& q) const {
    int best = 0;
    double d_best = kInf;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      double d = (q - centers_[i]).squaredNorm();
      if (d < d_best) {
        d_best = d;
        best = static_cast<int>(i);
      }
    }
    int prev = best > 0 ? best - 1 : -1;
    int next = best + 1 < static_cast<int>(centers_.size()) ? best + 1 : -1;
    return {best, prev, next};
  }

  std::vector<PrivilegedChart> charts_;
  std::vector<Vec> centers_;
};

struct MarchResult {
  double total_cost = 0.0;
  int pieces = 0;
  std::vector<double> leg_costs;
  bool converged = true;
  std::string note;
};

void fill_diag(SigmaDiagnostics* diag, const MarchResult& m,
               bool saturated = false) {
  if (!diag) return;
  diag->pieces = m.pieces;
  diag->leg_costs = m.leg_costs;
  diag->converged = m.converged;
  diag->saturated = saturated;
  diag->note = m.note;
}

// Cost-bounded march along a geometric curve; with a tube gauge the legs
// must also stay inside the sub-Riemannian eps-tube.
MarchResult march_by_cost(const ControlAffineSystem& system,
                          const CurveSpec& curve, double eps,
                          const SigmaOptions& opts, const TubeGauge* tube) {
  MarchResult m;
  PrivilegedChart tmpl =
      build_chart(system.small_system(), curve.map(curve.t0).position);
  const double span = curve.span();
  const double min_adv = opts.arc_resolution * span;

  double s_cur = curve.t0;
  Vec p_cur = curve.map(curve.t0).position;
  double ds = span / 8.0;
  std::optional<ControlSignal> warm;
  int leg = 0;

  auto exact_tube_ok = [&](const PlanResult& plan, const Vec& from) {
    if (!tube) return true;
    Trajectory traj = integrate(system, *plan.control, from, {}, 2);
    for (const Vec& q : traj.states)
      if (tube->exact(q) > eps + 1e-12) return false;
    return true;
  };

  auto attempt = [&](double s_target, int probe_idx, bool with_penalty,
                     bool* tube_failed) -> std::optional<PlanResult> {
    Vec target = curve.map(s_target).position;
    PrivilegedChart tc = tmpl.rebased(target, 0.0);
    SteerOptions so;
    so.cost = opts.cost;
    so.tmax = opts.tmax;
    so.budget = opts.budget;
    so.seed = derive_seed(opts.seed,
                          static_cast<std::uint64_t>(leg) * 977 + probe_idx);
    so.segments = opts.leg_segments;
    so.acceptance_radius = std::max(1e-6, opts.acceptance_factor * eps);
    so.target_chart = &tc;
    if (warm) so.warm_starts.push_back(*warm);
    if (tube && with_penalty)
      so.state_penalty = [&](double, const Vec& q) {
        return std::max(0.0, tube->linearized(q) - 0.95 * eps);
      };
    PlanResult plan = steer(system, p_cur, target, so);
    if (!plan.converged || plan.cost(opts.cost) > eps) return std::nullopt;
    if (!exact_tube_ok(plan, p_cur)) {
      if (tube_failed) *tube_failed = true;
      return std::nullopt;
    }
    return plan;
  };
  // Legs violating the tube are rejected and re-planned with the penalty.
  auto probe = [&](double s_target, int probe_idx) -> std::optional<PlanResult> {
    bool tube_failed = false;
    auto plan = attempt(s_target, probe_idx, false, &tube_failed);
    if (plan || !tube || !tube_failed) return plan;
    return attempt(s_target, probe_idx + 7000, true, nullptr);
  };

  while (s_cur < curve.t1 - 1e-9 * span) {
    ++leg;
    double remaining = curve.t1 - s_cur;
    ds = std::min(ds, remaining);
    int probe_idx = 0;

    double lo = 0.0;  // feasible advance
    std::optional<PlanResult> lo_plan;
    double hi = 0.0;  // infeasible advance (0: unknown)

    auto plan0 = probe(s_cur + ds, probe_idx++);
    if (plan0) {
      lo = ds;
      lo_plan = std::move(plan0);
      while (lo < remaining - 1e-15) {
        double next = std::min(remaining, lo * 2.0);
        auto plan = probe(s_cur + next, probe_idx++);
        if (plan) {
          lo = next;
          lo_plan = std::move(plan);
        } else {
          hi = next;
          break;
        }
      }
    } else {
      hi = ds;
      double trial = ds;
      while (trial > min_adv) {
        trial *= 0.5;
        auto plan = probe(s_cur + trial, probe_idx++);
        if (plan) {
          lo = trial;
          lo_plan = std::move(plan);
          hi = trial * 2.0;
          break;
        }
        hi = trial;
      }
      if (!lo_plan) {
        m.converged = false;
        m.note = "leg stalled at parameter " + std::to_string(s_cur);
        return m;
      }
    }
    if (hi > 0.0) {
      for (int it = 0; it < 3; ++it) {
        double mid = 0.5 * (lo + hi);
        auto plan = probe(s_cur + mid, probe_idx++);
        if (plan) {
          lo = mid;
          lo_plan = std::move(plan);
        } else {
          hi = mid;
        }
      }
    }

    double cost = lo_plan->cost(opts.cost);
    m.total_cost += cost;
    m.leg_costs.push_back(cost);
    ++m.pieces;
    p_cur = plan_endpoint(system, *lo_plan, p_cur);
    warm = lo_plan->control;
    s_cur += lo;
    ds = lo;  // next leg starts from the advance that worked
  }
  return m;
}

int chart_step(const PrivilegedChart& chart) {
  return chart.weights().empty() ? 1 : chart.weights().back();
}

// Fixed-schedule interpolation legs for the time-based complexities.
MarchResult march_by_schedule(const ControlAffineSystem& system,
                              const CurveSpec& path, int legs,
                              const SigmaOptions& opts) {
  MarchResult m;
  PrivilegedChart tmpl =
      build_chart(system.small_system(), path.map(path.t0).position);
  const double h = path.span() / legs;
  const int r = chart_step(tmpl);
  Vec p_cur = path.map(path.t0).position;
  std::optional<ControlSignal> warm;
  for (int i = 1; i <= legs; ++i) {
    double t_i = path.t0 + i * h;
    Vec target = path.map(t_i).position;
    PrivilegedChart tc = tmpl.rebased(target, 0.0);
    double d_leg = tc.pseudo_distance(p_cur, 0.75);
    SteerOptions so;
    so.cost = opts.cost;
    so.tmax = h;
    so.fixed_horizon = h;
    so.budget = opts.budget;
    so.seed = derive_seed(opts.seed, 5000 + static_cast<std::uint64_t>(i));
    so.segments = opts.leg_segments;
    so.acceptance_radius = std::max(
        1e-6, opts.acceptance_factor *
                  std::max(d_leg, std::pow(h, 1.0 / r)));
    so.target_chart = &tc;
    if (warm) so.warm_starts.push_back(*warm);
    PlanResult plan = steer(system, p_cur, target, so);
    if (!plan.converged) {
      m.converged = false;
      m.note = "fixed-time leg infeasible at t = " + std::to_string(t_i);
      m.total_cost = kInf;
      return m;
    }
    double cost = plan.cost(opts.cost);
    m.total_cost += cost;
    m.leg_costs.push_back(cost);
    ++m.pieces;
    p_cur = plan_endpoint(system, plan, p_cur);
    warm = plan.control;
  }
  return m;
}

}  // namespace

CurveSpec constant_path(const Vec& q0, double T) {
  CurveSpec spec;
  Vec zero = Vec::Zero(q0.size());
  spec.map = [q0, zero](double) { return PathPoint{q0, zero}; };
  spec.t0 = 0.0;
  spec.t1 = T;
  spec.timed = true;
  spec.constant = true;
  spec.name = "constant";
  return spec;
}

double sigma_cost(const ControlAffineSystem& system, const CurveSpec& curve,
                  double eps, const SigmaOptions& opts,
                  SigmaDiagnostics* diag) {
  if (!(eps > 0)) throw ComplexityError("sigma_cost: eps must be positive");
  check_curve(curve);
  MarchResult m = march_by_cost(system, curve, eps, opts, nullptr);
  fill_diag(diag, m);
  return m.total_cost / eps;
}

double sigma_app(const ControlAffineSystem& system, const CurveSpec& curve,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag) {
  if (!(eps > 0)) throw ComplexityError("sigma_app: eps must be positive");
  check_curve(curve);
  PrivilegedChart tmpl =
      build_chart(system.small_system(), curve.map(curve.t0).position);
  TubeGauge tube(tmpl, curve, std::max(8, opts.tube_grid));
  MarchResult m = march_by_cost(system, curve, eps, opts, &tube);
  fill_diag(diag, m);
  return m.total_cost / eps;
}

double sigma_time_aux(const ControlAffineSystem& system, const CurveSpec& path,
                      double delta, const SigmaOptions& opts,
                      SigmaDiagnostics* diag) {
  if (!path.timed)
    throw ComplexityError("sigma_time_aux needs a timed path");
  if (!(delta > 0) || delta > path.span() + 1e-12)
    throw ComplexityError("sigma_time_aux: delta outside (0, horizon]");
  check_curve(path);
  int legs = static_cast<int>(std::ceil(path.span() / delta - 1e-12));
  legs = std::max(1, legs);
  MarchResult m = march_by_schedule(system, path, legs, opts);
  fill_diag(diag, m);
  return delta * m.total_cost;
}

double sigma_time(const ControlAffineSystem& system, const CurveSpec& path,
                  double eps, double delta_max, const SigmaOptions& opts,
                  SigmaDiagnostics* diag) {
  if (!(eps > 0)) throw ComplexityError("sigma_time: eps must be positive");
  if (!(delta_max > 0) || delta_max > path.span() + 1e-12)
    throw ComplexityError("sigma_time: delta_max outside (0, horizon]");
  const double span = path.span();
  const double floor = std::max(opts.delta_resolution * span, 1e-12);

  SigmaDiagnostics local;
  SigmaDiagnostics accepted;
  auto aux = [&](double delta) {
    double v = sigma_time_aux(system, path, delta, opts, &local);
    if (v <= eps) accepted = local;
    return v;
  };

  if (aux(delta_max) <= eps) {
    if (diag) {
      *diag = accepted;
      diag->saturated = true;
      diag->note = "saturated at delta_max";
    }
    return span / delta_max;
  }

  double hi = delta_max;  // infeasible
  double lo = 0.0;        // feasible
  double delta = delta_max;
  while (lo == 0.0) {
    delta /= 2.5;
    if (delta < floor) {
      if (diag) {
        *diag = local;
        diag->converged = false;
        diag->note = "no feasible delta above the resolution floor";
      }
      return span / floor;
    }
    if (aux(delta) <= eps)
      lo = delta;
    else
      hi = delta;
  }
  for (int it = 0; it < 3; ++it) {
    double mid = std::sqrt(lo * hi);
    if (aux(mid) <= eps)
      lo = mid;
    else
      hi = mid;
  }
  if (diag) *diag = accepted;
  return span / lo;
}

double sigma_neig(const ControlAffineSystem& system, const CurveSpec& path,
                  double eps, const SigmaOptions& opts,
                  SigmaDiagnostics* diag) {
  if (!(eps > 0)) throw ComplexityError("sigma_neig: eps must be positive");
  if (!path.timed) throw ComplexityError("sigma_neig needs a timed path");
  check_curve(path);

  MarchResult m;
  PrivilegedChart tmpl =
      build_chart(system.small_system(), path.map(path.t0).position);
  const double span = path.span();
  const double min_adv = opts.arc_resolution * span;

  double t_cur = path.t0;
  Vec p_cur = path.map(path.t0).position;
  double h_try = span / 8.0;
  std::optional<ControlSignal> warm;
  int leg = 0;

  auto ball_exact_ok = [&](const PlanResult& plan, const Vec& from,
                           double t_start) {
    Trajectory traj = integrate(system, *plan.control, from, {}, 2);
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      double t = t_start + traj.times[i];
      PrivilegedChart cc = tmpl.rebased(path.map(t).position, 0.0);
      if (cc.pseudo_distance(traj.states[i], 0.75) > eps + 1e-12) return false;
    }
    return true;
  };

  auto probe = [&](double h, int probe_idx) -> std::optional<PlanResult> {
    double t_target = t_cur + h;
    Vec target = path.map(t_target).position;
    PrivilegedChart tc = tmpl.rebased(target, 0.0);
    SteerOptions so;
    so.cost = opts.cost;
    so.tmax = h;
    so.fixed_horizon = h;
    so.budget = opts.budget;
    so.seed = derive_seed(opts.seed,
                          static_cast<std::uint64_t>(leg) * 977 + probe_idx);
    so.segments = opts.leg_segments;
    so.acceptance_radius = std::max(1e-6, opts.acceptance_factor * eps);
    so.target_chart = &tc;
    double t_start = t_cur;
    so.state_penalty = [&, t_start](double t_local, const Vec& q) {
      PrivilegedChart cc =
          tmpl.rebased(path.map(t_start + t_local).position, 0.0);
      return std::max(0.0, cc.linearized_pseudo_distance(q) - 0.95 * eps);
    };
    if (warm) so.warm_starts.push_back(*warm);
    PlanResult plan = steer(system, p_cur, target, so);
    if (!plan.converged) return std::nullopt;
    if (!ball_exact_ok(plan, p_cur, t_cur)) return std::nullopt;
    return plan;
  };

  while (t_cur < path.t1 - 1e-9 * span) {
    ++leg;
    double remaining = path.t1 - t_cur;
    h_try = std::min(h_try, remaining);
    int probe_idx = 0;
    double lo = 0.0, hi = 0.0;
    std::optional<PlanResult> lo_plan;

    auto plan0 = probe(h_try, probe_idx++);
    if (plan0) {
      lo = h_try;
      lo_plan = std::move(plan0);
      while (lo < remaining - 1e-15) {
        double next = std::min(remaining, lo * 2.0);
        auto plan = probe(next, probe_idx++);
        if (plan) {
          lo = next;
          lo_plan = std::move(plan);
        } else {
          hi = next;
          break;
        }
      }
    } else {
      hi = h_try;
      double trial = h_try;
      while (trial > min_adv) {
        trial *= 0.5;
        auto plan = probe(trial, probe_idx++);
        if (plan) {
          lo = trial;
          lo_plan = std::move(plan);
          hi = trial * 2.0;
          break;
        }
        hi = trial;
      }
      if (!lo_plan) {
        m.converged = false;
        m.note = "leg stalled at time " + std::to_string(t_cur);
        fill_diag(diag, m);
        return m.total_cost / eps;
      }
    }
    if (hi > 0.0) {
      for (int it = 0; it < 3; ++it) {
        double mid = 0.5 * (lo + hi);
        auto plan = probe(mid, probe_idx++);
        if (plan) {
          lo = mid;
          lo_plan = std::move(plan);
        } else {
          hi = mid;
        }
      }
    }

    double cost = lo_plan->cost(opts.cost);
    m.total_cost += cost;
    m.leg_costs.push_back(cost);
    ++m.pieces;
    p_cur = plan_endpoint(system, *lo_plan, p_cur);
    warm = lo_plan->control;
    t_cur += lo;
    h_try = lo;
  }
  fill_diag(diag, m);
  return m.total_cost / eps;
}

namespace {

bool drift_vanishes(const ControlAffineSystem& system, const Vec& q0) {
  if (!system.has_drift())
    throw ComplexityError("the LTLC complexities require a drift");
  return (*system.drift)(q0).norm() < 1e-12;
}

}  // namespace

double ltlc_time(const ControlAffineSystem& system, const Vec& q0, double T,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag) {
  if (drift_vanishes(system, q0)) {
    if (diag) *diag = SigmaDiagnostics{0, {}, true, false, "drift vanishes"};
    return 0.0;
  }
  return sigma_time(system, constant_path(q0, T), eps, T / 8.0, opts, diag);
}

double ltlc_neig(const ControlAffineSystem& system, const Vec& q0, double T,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag) {
  if (drift_vanishes(system, q0)) {
    if (diag) *diag = SigmaDiagnostics{0, {}, true, false, "drift vanishes"};
    return 0.0;
  }
  return sigma_neig(system, constant_path(q0, T), eps, opts, diag);
}

CuspReport cusp_condition(const ControlAffineSystem& system,
                          const CurveSpec& curve, int grid_count,
                          double rank_tol) {
  if (!system.has_drift())
    throw ComplexityError("cusp_condition requires a drift");
  if (grid_count < 3) throw ComplexityError("cusp_condition: grid too small");
  check_curve(curve);

  CuspReport report;
  Vec mid = curve.map(0.5 * (curve.t0 + curve.t1)).position;
  int s = drift_order(system, mid, rank_tol);
  if (s < 2)
    throw ComplexityError("cusp_condition needs drift order s >= 2");

  int k = max_tangency_degree(system, curve.map, curve.t0, curve.t1,
                              grid_count, rank_tol);
  if (k != s) {
    // Prop-style dichotomy only bites when the curve and the drift live in
    // the same stratum; otherwise no cusp can form.
    report.no_cusp_certificate = true;
    report.branch = "tangency degree k = " + std::to_string(k) +
                    " differs from drift order s = " + std::to_string(s);
    return report;
  }

  std::vector<BracketEntry> closure =
      s >= 2 ? bracket_closure(system, s - 1) : std::vector<BracketEntry>{};
  const int n = system.dim;
  int hits = 0;
  for (int i = 0; i < grid_count; ++i) {
    double t = curve.t0 + curve.span() * i / (grid_count - 1);
    PathPoint p = curve.map(t);
    Vec f0 = (*system.drift)(p.position);
    Mat tangent(n, 1);
    tangent.col(0) = p.velocity;
    bool tangent_hit = in_span(tangent, f0, 1e-7);
    bool lower_hit = false;
    if (!closure.empty()) {
      Eigen::Index count = 0;
      for (const auto& e : closure)
        if (e.word.length() <= s - 1) ++count;
      Mat cols(n, count);
      Eigen::Index c = 0;
      for (const auto& e : closure)
        if (e.word.length() <= s - 1) cols.col(c++) = e.field(p.position);
      lower_hit = in_span(cols, f0, 1e-7);
    }
    bool hit = tangent_hit || lower_hit;
    report.grid.push_back(t);
    report.condition.push_back(hit);
    if (hit) ++hits;
  }
  if (hits == 0) {
    report.no_cusp_certificate = true;
    report.branch = "drift transverse to the curve everywhere";
  } else if (hits == grid_count) {
    report.no_cusp_certificate = true;
    report.branch = "drift tangent to the curve along the whole arc";
  } else {
    for (int i = 0; i < grid_count; ++i)
      if (report.condition[i]) report.suspects.push_back(report.grid[i]);
    report.branch = "isolated drift tangency";
  }
  return report;
}

int predicted_exponent(ComplexityKind kind, int kappa, int s,
                       bool drift_present) {
  if (kappa < 1) throw ComplexityError("predicted_exponent: kappa must be >= 1");
  if (drift_present && s < 2)
    throw ComplexityError("predicted_exponent: drift order must be >= 2");
  switch (kind) {
    case ComplexityKind::Cost:
    case ComplexityKind::App:
      return kappa;
    case ComplexityKind::Time:
    case ComplexityKind::Neig:
      return drift_present ? std::max(kappa, s) : kappa;
    case ComplexityKind::LtlcTime:
    case ComplexityKind::LtlcNeig:
      if (!drift_present)
        throw ComplexityError("LTLC exponents require a drift");
      return s;
  }
  throw ComplexityError("unknown complexity kind");
}

ExponentFit fit_exponent(const ComplexityCurve& curve) {
  const auto& samples = curve.samples;
  if (samples.size() < 5)
    throw ComplexityError("fit_exponent needs at least 5 samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].second > 0))
      throw ComplexityError("fit_exponent: values must be positive");
    if (i > 0 && !(samples[i].first < samples[i - 1].first))
      throw ComplexityError("fit_exponent: eps must strictly decrease");
  }
  double ratio = samples.front().first / samples.back().first;
  if (ratio < 2.0)
    throw ComplexityError("fit_exponent: eps range spans less than a factor 2");

  const int n = static_cast<int>(samples.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [eps, value] : samples) {
    double x = std::log(eps), y = std::log(value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double denom = n * sxx - sx * sx;
  double b = (n * sxy - sx * sy) / denom;
  double a = (sy - b * sx) / n;
  double ss_res = 0, ss_tot = 0;
  double ybar = sy / n;
  for (const auto& [eps, value] : samples) {
    double x = std::log(eps), y = std::log(value);
    double yhat = a + b * x;
    ss_res += (y - yhat) * (y - yhat);
    ss_tot += (y - ybar) * (y - ybar);
  }
  ExponentFit fit;
  fit.slope = -b;
  fit.intercept = a;
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  double se = n > 2 ? std::sqrt((ss_res / (n - 2)) / (sxx - sx * sx / n))
                    : 0.0;
  fit.slope_half_width = 2.0 * se;
  return fit;
}

}  // namespace driftlab
