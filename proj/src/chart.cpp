#include "driftlab/chart.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace driftlab {

struct PrivilegedChart::Shared {
  std::vector<FrameEntry> entries;
  std::vector<int> weights;
  std::vector<int> exec;          // slot indices in execution order
  std::optional<int> drift_slot;
  OdeOptions flow_opts;
};

PrivilegedChart::PrivilegedChart(AdaptedFrame frame,
                                 std::vector<int> exec_order)
    : base_(frame.base) {
  const int n = static_cast<int>(frame.entries.size());
  if (static_cast<int>(exec_order.size()) != n)
    throw ChartError("execution order must list every slot once");
  std::vector<bool> seen(exec_order.size(), false);
  for (int s : exec_order) {
    if (s < 0 || s >= n || seen[s])
      throw ChartError("execution order is not a permutation of the slots");
    seen[s] = true;
  }
  auto shared = std::make_shared<Shared>();
  shared->weights = frame.weights();
  shared->entries = std::move(frame.entries);
  shared->exec = std::move(exec_order);
  shared->drift_slot = frame.drift_slot;
  shared_ = std::move(shared);
}

PrivilegedChart::PrivilegedChart(std::shared_ptr<const Shared> shared,
                                 Vec base)
    : shared_(std::move(shared)), base_(std::move(base)) {}

const std::vector<int>& PrivilegedChart::weights() const {
  return shared_->weights;
}
const std::vector<int>& PrivilegedChart::exec_order() const {
  return shared_->exec;
}
std::optional<int> PrivilegedChart::drift_slot() const {
  return shared_->drift_slot;
}
const std::vector<FrameEntry>& PrivilegedChart::entries() const {
  return shared_->entries;
}

PrivilegedChart PrivilegedChart::rebased(const Vec& q,
                                         double rank_tol) const {
  const int n = dim();
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m.col(i) = shared_->entries[i].field(q);
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  if (sv[n - 1] < rank_tol * sv[0])
    throw ChartError("frame degenerates at the requested base point");
  return PrivilegedChart(shared_, q);
}

Vec PrivilegedChart::from_coords(const Vec& z) const {
  if (z.size() != base_.size()) throw ChartError("coordinate size mismatch");
  Vec q = base_;
  for (int slot : shared_->exec) {
    double t = z[slot];
    if (t != 0.0) q = flow(shared_->entries[slot].field, q, t,
                           shared_->flow_opts);
  }
  return q;
}

namespace {

struct ForwardPass {
  Vec endpoint;
  Mat jacobian;  // d from_coords / d z
};

ForwardPass forward_with_jacobian(const std::vector<FrameEntry>& entries,
                                  const std::vector<int>& exec,
                                  const Vec& base, const Vec& z,
                                  const OdeOptions& opts) {
  const int n = static_cast<int>(base.size());
  const int legs = static_cast<int>(exec.size());
  std::vector<Mat> leg_jac(legs);
  std::vector<Vec> tangents(legs);
  Vec q = base;
  for (int j = 0; j < legs; ++j) {
    int slot = exec[j];
    const VectorField& f = entries[slot].field;
    auto [p, J] = flow_with_jacobian(f, q, z[slot], opts);
    q = p;
    leg_jac[j] = std::move(J);
    tangents[j] = f(q);  // d/dt of the leg at its endpoint
  }
  ForwardPass out;
  out.endpoint = q;
  out.jacobian.resize(n, n);
  Mat suffix = Mat::Identity(n, n);
  for (int j = legs - 1; j >= 0; --j) {
    out.jacobian.col(exec[j]) = suffix * tangents[j];
    suffix = suffix * leg_jac[j];
  }
  return out;
}

}  // namespace

std::optional<Vec> PrivilegedChart::try_to_coords(
    const Vec& p, const NewtonOptions& opts) const {
  if (p.size() != base_.size()) throw ChartError("point size mismatch");
  const int n = dim();
  const double scale = 1.0 + (p - base_).norm();

  // Linearized initial guess from the frame matrix at the base point.
  Mat frame(n, n);
  for (int i = 0; i < n; ++i) frame.col(i) = shared_->entries[i].field(base_);
  Vec z = frame.partialPivLu().solve(p - base_);

  double residual;
  try {
    residual = (from_coords(z) - p).norm();
  } catch (const FlowError&) {
    z.setZero();
    residual = (base_ - p).norm();
  }
  for (int it = 0; it < opts.max_iter; ++it) {
    if (residual <= opts.tol * scale) return z;
    if (z.norm() > 1e3) return std::nullopt;
    ForwardPass fwd;
    try {
      fwd = forward_with_jacobian(shared_->entries, shared_->exec, base_, z,
                                  shared_->flow_opts);
    } catch (const FlowError&) {
      return std::nullopt;
    }
    Vec r = fwd.endpoint - p;
    Vec dz = fwd.jacobian.partialPivLu().solve(-r);
    if (!dz.allFinite()) return std::nullopt;
    double alpha = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 7; ++halving) {
      Vec trial = z + alpha * dz;
      double trial_res;
      try {
        trial_res = (from_coords(trial) - p).norm();
      } catch (const FlowError&) {
        alpha *= 0.5;
        continue;
      }
      if (trial_res < residual * (1.0 - 0.25 * alpha) ||
          trial_res <= opts.tol * scale) {
        z = trial;
        residual = trial_res;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) return std::nullopt;
  }
  if (residual <= opts.tol * scale) return z;
  return std::nullopt;
}

Vec PrivilegedChart::to_coords(const Vec& p) const {
  auto z = try_to_coords(p, NewtonOptions{});
  if (!z)
    throw ChartError(
        "chart inversion diverged; the point is outside the chart domain "
        "(Euclidean radius " + std::to_string((p - base_).norm()) + ")");
  return *z;
}

double PrivilegedChart::linearized_pseudo_distance(const Vec& p) const {
  const int n = dim();
  Mat frame(n, n);
  for (int i = 0; i < n; ++i) frame.col(i) = shared_->entries[i].field(base_);
  Vec z0 = frame.partialPivLu().solve(p - base_);
  return pseudo_norm(shared_->weights, z0);
}

double PrivilegedChart::pseudo_distance(const Vec& p, double far_field) const {
  if (far_field > 0.0) {
    const int n = dim();
    Mat frame(n, n);
    for (int i = 0; i < n; ++i) frame.col(i) = shared_->entries[i].field(base_);
    Vec z0 = frame.partialPivLu().solve(p - base_);
    double lin = pseudo_norm(shared_->weights, z0);
    if (lin > far_field) return lin;
  }
  NewtonOptions fast{1e-9, 25};
  if (auto z = try_to_coords(p, fast))
    return pseudo_norm(shared_->weights, *z);
  return std::max(1.0, far_field) + (p - base_).norm();
}

namespace {

std::vector<int> identity_order(int n) {
  std::vector<int> exec(n);
  for (int i = 0; i < n; ++i) exec[i] = i;
  return exec;
}

std::vector<int> drift_last_order(int n, int drift_slot) {
  std::vector<int> exec;
  exec.reserve(n);
  for (int i = 0; i < n; ++i)
    if (i != drift_slot) exec.push_back(i);
  exec.push_back(drift_slot);
  return exec;
}

}  // namespace

PrivilegedChart build_chart(const ControlAffineSystem& system, const Vec& q,
                            std::optional<std::vector<int>> ordering,
                            double rank_tol) {
  AdaptedFrame frame = adapted_frame_at(system, q, rank_tol);
  std::vector<int> exec = ordering ? std::move(*ordering)
                                   : identity_order(system.dim);
  return PrivilegedChart(std::move(frame), std::move(exec));
}

PrivilegedChart build_drift_chart(const ControlAffineSystem& system,
                                  const Vec& q, double rank_tol) {
  AdaptedFrame frame = drift_adapted_frame_at(system, q, rank_tol);
  int slot = *frame.drift_slot;
  return PrivilegedChart(std::move(frame),
                         drift_last_order(system.dim, slot));
}

std::vector<PrivilegedChart> continuous_family(
    const ControlAffineSystem& system, const PathFn& path,
    std::span<const double> grid, bool adapted_to_drift, double rank_tol) {
  if (grid.empty()) throw ChartError("continuous_family: empty grid");
  Vec q0 = path(grid[0]).position;
  PrivilegedChart first = adapted_to_drift
                              ? build_drift_chart(system, q0, rank_tol)
                              : build_chart(system, q0, {}, rank_tol);
  std::vector<PrivilegedChart> charts;
  charts.reserve(grid.size());
  charts.push_back(first);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    Vec q = path(grid[i]).position;
    try {
      charts.push_back(first.rebased(q, rank_tol));
    } catch (const ChartError&) {
      throw ChartError("frame degenerates along the path at t = " +
                       std::to_string(grid[i]));
    }
  }
  return charts;
}

RectifyingFamily rectifying_family(const ControlAffineSystem& system,
                                   const PathFn& path,
                                   std::span<const double> grid,
                                   double rank_tol) {
  if (grid.empty()) throw ChartError("rectifying_family: empty grid");
  const int n = system.dim;

  int k = tangency_degree(system, path, grid[0], rank_tol);
  for (double t : grid.subspan(1))
    if (tangency_degree(system, path, t, rank_tol) != k)
      throw ChartError("tangency degree varies along the path; no rectifying "
                       "family exists");

  int s = 0;
  bool drift_tangent = false;
  if (system.has_drift()) {
    s = drift_order(system, path(grid[0]).position, rank_tol);
    if (s == k && s > 0) {
      // f0 = gamma' exactly along the grid means the drift chart already
      // rectifies the path; otherwise the paper's non-tangency condition
      // f0 != gamma' mod Delta^{s-1} must hold.
      drift_tangent = true;
      for (double t : grid) {
        PathPoint p = path(t);
        if (((*system.drift)(p.position) - p.velocity).norm() > 1e-9)
          drift_tangent = false;
      }
      if (!drift_tangent) {
        std::vector<BracketEntry> closure = bracket_closure(system, s - 1 > 0 ? s - 1 : 1);
        for (double t : grid) {
          PathPoint p = path(t);
          Eigen::Index count = 0;
          for (const auto& e : closure)
            if (e.word.length() <= s - 1) ++count;
          Mat cols(n, count);
          Eigen::Index c = 0;
          for (const auto& e : closure)
            if (e.word.length() <= s - 1) cols.col(c++) = e.field(p.position);
          Vec diff = (*system.drift)(p.position) - p.velocity;
          if (in_span(cols, diff, 1e-6))
            throw ChartError(
                "drift is tangent to the path modulo the lower stratum at "
                "t = " + std::to_string(t) + "; rectification is ill-posed");
        }
      }
    }
  }

  if (drift_tangent) {
    auto charts = continuous_family(system, path, grid, true, rank_tol);
    int slot = *charts.front().drift_slot();
    RectifyingFamily out;
    out.charts = std::move(charts);
    out.alpha_slot = slot;
    out.drift_slot = slot;
    out.alpha_field = *system.drift;
    return out;
  }

  // Solve a constant-coefficient combination of closure fields of length
  // <= k matching gamma' at every grid point.
  std::vector<BracketEntry> closure = bracket_closure(system, k);
  const int W = static_cast<int>(closure.size());
  Mat A(static_cast<Eigen::Index>(grid.size()) * n, W);
  Vec b(static_cast<Eigen::Index>(grid.size()) * n);
  double vnorm_max = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    PathPoint p = path(grid[g]);
    vnorm_max = std::max(vnorm_max, p.velocity.norm());
    for (int w = 0; w < W; ++w)
      A.block(static_cast<Eigen::Index>(g) * n, w, n, 1) =
          closure[w].field(p.position);
    b.segment(static_cast<Eigen::Index>(g) * n, n) = p.velocity;
  }
  Vec coeff = A.completeOrthogonalDecomposition().solve(b);
  double residual = (A * coeff - b).lpNorm<Eigen::Infinity>();
  if (residual > 1e-8 * std::max(1.0, vnorm_max))
    throw ChartError(
        "no constant-coefficient bracket combination matches the path "
        "velocity along the grid (residual " + std::to_string(residual) +
        "); cannot rectify");

  std::vector<ScalarExpr> comps(n, ScalarExpr());
  for (int w = 0; w < W; ++w) {
    if (std::abs(coeff[w]) < 1e-12) continue;
    for (int i = 0; i < n; ++i)
      comps[i] = comps[i] +
                 ScalarExpr::constant(coeff[w]) * closure[w].field.component(i);
  }
  VectorField alpha(n, std::move(comps));

  std::vector<ForcedFrameEntry> forced;
  forced.push_back({alpha, k, false, true});
  if (system.has_drift() && s >= 1)
    forced.push_back({*system.drift, s, true, false});

  Vec q0 = path(grid[0]).position;
  std::vector<int> slots;
  AdaptedFrame frame = adapted_frame_with(system, q0, forced, rank_tol, &slots);
  int alpha_slot = slots[0];
  std::optional<int> drift_slot = frame.drift_slot;

  // alpha runs first, the drift (when placed) runs last.
  std::vector<int> exec;
  exec.reserve(n);
  exec.push_back(alpha_slot);
  for (int i = 0; i < n; ++i)
    if (i != alpha_slot && (!drift_slot || i != *drift_slot)) exec.push_back(i);
  if (drift_slot) exec.push_back(*drift_slot);

  PrivilegedChart first(std::move(frame), std::move(exec));
  RectifyingFamily out;
  out.alpha_slot = alpha_slot;
  out.drift_slot = drift_slot;
  out.alpha_field = alpha;
  out.charts.reserve(grid.size());
  out.charts.push_back(first);
  for (std::size_t i = 1; i < grid.size(); ++i)
    out.charts.push_back(first.rebased(path(grid[i]).position, rank_tol));
  return out;
}

bool box_contains(const BoxSpec& spec, const Vec& z) {
  if (static_cast<std::size_t>(z.size()) != spec.weights.size())
    throw ChartError("box_contains: weight/coordinate size mismatch");
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (std::abs(z[i]) > std::pow(spec.eta, spec.weights[i])) return false;
  return true;
}

bool xi_contains(const DriftBoxSpec& spec, const Vec& z) {
  const int l = spec.drift_slot;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i == l) continue;
    if (std::abs(z[i]) > std::pow(spec.eta, spec.weights[i])) return false;
  }
  double xi = std::clamp(z[l], 0.0, spec.horizon);
  return std::abs(z[l] - xi) <= std::pow(spec.eta, spec.weights[l]);
}

bool pi_contains(const DriftBoxSpec& spec, const Vec& z) {
  BoxSpec box{spec.eta, spec.weights};
  if (box_contains(box, z)) return true;
  const int l = spec.drift_slot;
  const int s = spec.drift_order;
  const double eta = spec.eta;
  double xi = std::min(spec.horizon, z[l]);
  if (!(xi > 0.0)) return false;
  if (z[l] - xi > std::pow(eta, s)) return false;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i == l) continue;
    int w = spec.weights[i];
    double bound = w <= s
                       ? std::pow(eta, w) + eta * std::pow(xi, double(w) / s)
                       : eta * std::pow(eta + std::pow(xi, 1.0 / s), w - 1);
    if (std::abs(z[i]) > bound) return false;
  }
  return true;
}

double pseudo_norm(std::span<const int> weights, const Vec& z) {
  if (static_cast<std::size_t>(z.size()) != weights.size())
    throw ChartError("pseudo_norm: weight/coordinate size mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    acc += std::pow(std::abs(z[i]), 1.0 / weights[i]);
  return acc;
}

}  // namespace driftlab
