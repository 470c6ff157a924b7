#ifndef DRIFTLAB_CONTROL_HPP
#define DRIFTLAB_CONTROL_HPP

#include <string>
#include <vector>

#include "driftlab/field.hpp"
#include "driftlab/ode.hpp"

namespace driftlab {

/// Piecewise-constant control: one row of values per segment. Signals built
/// by the planner have uniform segment length T/N; concatenation keeps the
/// original segment durations so costs and endpoints are preserved exactly.
class ControlSignal {
 public:
  ControlSignal(int control_dim, int segments, double horizon);
  static ControlSignal uniform(Mat values, double horizon);
  static ControlSignal with_durations(Mat values, Vec durations);

  int control_dim() const { return static_cast<int>(values_.cols()); }
  int segments() const { return static_cast<int>(values_.rows()); }
  double horizon() const { return horizon_; }
  const Mat& values() const { return values_; }
  const Vec& durations() const { return durations_; }

  double cost_J() const;
  double cost_I() const;

  Vec value_at(double t) const;

  /// Time reversal with negated values; maps an admissible driftless
  /// trajectory onto its reverse.
  ControlSignal reversed() const;

  /// Same path for driftless systems, new horizon; values scale by T/tau so
  /// the J cost is unchanged.
  ControlSignal rescaled(double new_horizon) const;

  static ControlSignal concatenate(const ControlSignal& a,
                                   const ControlSignal& b);

  /// L1-preserving resampling onto a uniform grid (segment averages of the
  /// original signal).
  ControlSignal resampled(int segments) const;

 private:
  ControlSignal(Mat values, Vec durations, double horizon);
  Mat values_;
  Vec durations_;
  double horizon_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::string system_label;
  double cost_J = 0.0;
  double cost_I = 0.0;

  const Vec& endpoint() const { return states.back(); }
};

/// Integrates q' = f0(q) + sum u_i f_i(q) (drift omitted when absent),
/// switching exactly at segment boundaries. `samples_per_segment` interior
/// states per segment are recorded in addition to the boundaries.
Trajectory integrate(const ControlAffineSystem& system,
                     const ControlSignal& control, const Vec& q0,
                     const OdeOptions& opts = {}, int samples_per_segment = 1);

}  // namespace driftlab

#endif  // DRIFTLAB_CONTROL_HPP
