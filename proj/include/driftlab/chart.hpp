#ifndef DRIFTLAB_CHART_HPP
#define DRIFTLAB_CHART_HPP

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "driftlab/flow.hpp"
#include "driftlab/structure.hpp"

namespace driftlab {

class ChartError : public Error {
 public:
  using Error::Error;
};

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

/// Privileged coordinates of the second kind: from_coords runs one flow leg
/// per frame slot, in a fixed execution order, and to_coords inverts the
/// composition by damped Newton with Jacobians from the variational
/// equation. Charts sharing a frame (continuous families) share state, so
/// rebasing along a path is cheap.
class PrivilegedChart {
 public:
  /// exec_order lists slot indices in execution sequence; the last executed
  /// leg is the rectified one (z_* f_last = d/dz_last).
  PrivilegedChart(AdaptedFrame frame, std::vector<int> exec_order);

  int dim() const { return static_cast<int>(base_.size()); }
  const Vec& base() const { return base_; }
  const std::vector<int>& weights() const;
  const std::vector<int>& exec_order() const;
  std::optional<int> drift_slot() const;
  const std::vector<FrameEntry>& entries() const;

  /// Verifies frame independence at q and recenters there (same frame
  /// fields, same execution order).
  PrivilegedChart rebased(const Vec& q, double rank_tol = kDefaultRankTol) const;

  Vec from_coords(const Vec& z) const;
  Vec to_coords(const Vec& p) const;  // throws ChartError on divergence
  std::optional<Vec> try_to_coords(const Vec& p, const NewtonOptions& opts) const;

  /// Pseudo-norm of to_coords(p); a chart-failure fallback keeps the value
  /// large and monotone in the Euclidean distance so optimizers can descend
  /// into the chart domain. When `far_field` > 0 and the linearized
  /// pseudo-norm already exceeds it, that surrogate is returned without
  /// running Newton.
  double pseudo_distance(const Vec& p, double far_field = 0.0) const;

  /// First-order pseudo-distance from the frame matrix alone; cheap enough
  /// for per-sample constraint gauging inside optimizer loops.
  double linearized_pseudo_distance(const Vec& p) const;

 private:
  struct Shared;
  PrivilegedChart(std::shared_ptr<const Shared> shared, Vec base);
  std::shared_ptr<const Shared> shared_;
  Vec base_;
};

/// Second-kind chart from the greedy adapted frame at q. `ordering`, when
/// given, permutes the execution sequence of the slots.
PrivilegedChart build_chart(const ControlAffineSystem& system, const Vec& q,
                            std::optional<std::vector<int>> ordering = {},
                            double rank_tol = kDefaultRankTol);

/// Chart adapted to the drift: f0 occupies a slot of weight drift_order(q)
/// and its leg runs last, so z_* f0 = d/dz_l exactly.
PrivilegedChart build_drift_chart(const ControlAffineSystem& system,
                                  const Vec& q,
                                  double rank_tol = kDefaultRankTol);

/// One chart per grid time, all sharing the frame selected at the first
/// grid point (re-selection along the path is forbidden). Throws when the
/// frame degenerates at some grid point.
std::vector<PrivilegedChart> continuous_family(
    const ControlAffineSystem& system, const PathFn& path,
    std::span<const double> grid, bool adapted_to_drift = false,
    double rank_tol = kDefaultRankTol);

struct RectifyingFamily {
  std::vector<PrivilegedChart> charts;
  int alpha_slot = -1;                  // slot with z_*^t gamma' = d/dz_alpha
  std::optional<int> drift_slot;        // set when f0 could also be rectified
  std::optional<VectorField> alpha_field;  // matches gamma' along the path
};

/// Charts rectifying the path: a constant-coefficient combination of
/// closure fields matching gamma' along the grid occupies a weight-k slot
/// executed first; the drift, when present and independent, runs last.
RectifyingFamily rectifying_family(const ControlAffineSystem& system,
                                   const PathFn& path,
                                   std::span<const double> grid,
                                   double rank_tol = kDefaultRankTol);

struct BoxSpec {
  double eta = 0.0;
  std::vector<int> weights;
};

/// |z_i| <= eta^{w_i} for all i.
bool box_contains(const BoxSpec& spec, const Vec& z);

/// Parameters of the drifted reachable-set sandwich Xi_T(eta) and Pi_T(eta).
struct DriftBoxSpec {
  double eta = 0.0;
  double horizon = 0.0;  // T
  std::vector<int> weights;
  int drift_slot = 0;
  int drift_order = 2;  // s
};

/// z in Xi_T(eta): some xi in [0, T] has z - xi e_l inside Box(eta).
bool xi_contains(const DriftBoxSpec& spec, const Vec& z);

/// z in Pi_T(eta): the box, or the drift-smeared branch with per-weight
/// bounds; the existential over xi is resolved at xi = min(T, z_l), every
/// bound being monotone non-decreasing in xi.
bool pi_contains(const DriftBoxSpec& spec, const Vec& z);

double pseudo_norm(std::span<const int> weights, const Vec& z);

}  // namespace driftlab

#endif  // DRIFTLAB_CHART_HPP
