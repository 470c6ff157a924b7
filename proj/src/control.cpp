#include "driftlab/control.hpp"

#include <cmath>

namespace driftlab {

ControlSignal::ControlSignal(Mat values, Vec durations, double horizon)
    : values_(std::move(values)), durations_(std::move(durations)),
      horizon_(horizon) {}

ControlSignal::ControlSignal(int control_dim, int segments, double horizon)
    : ControlSignal(Mat::Zero(segments, control_dim),
                    Vec::Constant(segments, horizon / segments), horizon) {
  if (segments <= 0 || control_dim <= 0 || !(horizon > 0))
    throw Error("control signal needs positive dimensions and horizon");
}

ControlSignal ControlSignal::uniform(Mat values, double horizon) {
  if (values.rows() == 0 || !(horizon > 0))
    throw Error("control signal needs segments and a positive horizon");
  Eigen::Index n = values.rows();
  return ControlSignal(std::move(values), Vec::Constant(n, horizon / n),
                       horizon);
}

ControlSignal ControlSignal::with_durations(Mat values, Vec durations) {
  if (values.rows() != durations.size())
    throw Error("one duration per segment required");
  if ((durations.array() <= 0).any())
    throw Error("segment durations must be positive");
  double horizon = durations.sum();
  return ControlSignal(std::move(values), std::move(durations), horizon);
}

double ControlSignal::cost_J() const {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < values_.rows(); ++k)
    acc += durations_[k] * values_.row(k).norm();
  return acc;
}

double ControlSignal::cost_I() const {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < values_.rows(); ++k)
    acc += durations_[k] * std::sqrt(1.0 + values_.row(k).squaredNorm());
  return acc;
}

Vec ControlSignal::value_at(double t) const {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < values_.rows(); ++k) {
    acc += durations_[k];
    if (t < acc || k == values_.rows() - 1) return values_.row(k);
  }
  return values_.row(values_.rows() - 1);
}

ControlSignal ControlSignal::reversed() const {
  Mat values(values_.rows(), values_.cols());
  Vec durations(durations_.size());
  Eigen::Index n = values_.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    values.row(k) = -values_.row(n - 1 - k);
    durations[k] = durations_[n - 1 - k];
  }
  return ControlSignal(std::move(values), std::move(durations), horizon_);
}

ControlSignal ControlSignal::rescaled(double new_horizon) const {
  if (!(new_horizon > 0)) throw Error("rescaled horizon must be positive");
  double factor = horizon_ / new_horizon;
  return ControlSignal(values_ * factor, durations_ / factor, new_horizon);
}

ControlSignal ControlSignal::concatenate(const ControlSignal& a,
                                         const ControlSignal& b) {
  if (a.control_dim() != b.control_dim())
    throw Error("concatenate: control dimension mismatch");
  Mat values(a.segments() + b.segments(), a.control_dim());
  values.topRows(a.segments()) = a.values();
  values.bottomRows(b.segments()) = b.values();
  Vec durations(a.segments() + b.segments());
  durations.head(a.segments()) = a.durations();
  durations.tail(b.segments()) = b.durations();
  return ControlSignal(std::move(values), std::move(durations),
                       a.horizon() + b.horizon());
}

ControlSignal ControlSignal::resampled(int segments) const {
  if (segments <= 0) throw Error("resampled: segment count must be positive");
  const double h = horizon_ / segments;
  Mat values = Mat::Zero(segments, control_dim());
  // Average the step function over each new segment.
  Eigen::Index src = 0;
  double src_end = durations_[0];
  double t = 0.0;
  for (int k = 0; k < segments; ++k) {
    double t_end = (k + 1 == segments) ? horizon_ : (k + 1) * h;
    double left = t;
    while (left < t_end - 1e-15) {
      double right = std::min(t_end, src_end);
      values.row(k) += (right - left) / h * values_.row(src);
      left = right;
      if (left >= src_end - 1e-15 && src + 1 < values_.rows()) {
        ++src;
        src_end += durations_[src];
      }
    }
    t = t_end;
  }
  return uniform(std::move(values), horizon_);
}

Trajectory integrate(const ControlAffineSystem& system,
                     const ControlSignal& control, const Vec& q0,
                     const OdeOptions& opts, int samples_per_segment) {
  if (control.control_dim() != system.control_dim())
    throw Error("integrate: control dimension mismatch");
  if (q0.size() != system.dim) throw Error("integrate: point dimension mismatch");
  if (samples_per_segment < 1) samples_per_segment = 1;

  Trajectory traj;
  traj.system_label = system.label;
  traj.cost_J = control.cost_J();
  traj.cost_I = control.cost_I();
  traj.times.push_back(0.0);
  traj.states.push_back(q0);

  Vec q = q0;
  double t = 0.0;
  const int n = system.dim;
  Vec scratch(n);
  for (int k = 0; k < control.segments(); ++k) {
    const double h = control.durations()[k];
    Eigen::RowVectorXd u = control.values().row(k);
    auto rhs = [&](const Vec& y, Vec& dy) {
      if (system.drift)
        system.drift->eval_into(y.data(), dy.data());
      else
        dy.setZero();
      for (int i = 0; i < system.control_dim(); ++i) {
        if (u[i] == 0.0) continue;
        system.controlled[i].eval_into(y.data(), scratch.data());
        dy += u[i] * scratch;
      }
    };
    for (int piece = 0; piece < samples_per_segment; ++piece) {
      integrate_ode(rhs, q, h / samples_per_segment, opts);
      t += h / samples_per_segment;
      traj.times.push_back(t);
      traj.states.push_back(q);
    }
  }
  return traj;
}

}  // namespace driftlab
