#ifndef DRIFTLAB_ODE_HPP
#define DRIFTLAB_ODE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "driftlab/expr.hpp"

namespace driftlab {

class FlowError : public Error {
 public:
  using Error::Error;
};

struct OdeOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double initial_step = 0.0;  // 0: span-sized first attempt
  std::int64_t max_steps = 200000;
};

/// Embedded Dormand-Prince 5(4) step with local error control. `rhs(y, dy)`
/// writes the autonomous right-hand side; integrates y over [0, t] in place.
template <typename Rhs>
void integrate_ode(Rhs&& rhs, Vec& y, double t, const OdeOptions& opts = {}) {
  if (t == 0.0) return;
  const Eigen::Index n = y.size();

  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600,
                          e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640,
                          e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  const double dir = t > 0 ? 1.0 : -1.0;
  const double t_abs = std::abs(t);
  double s = 0.0;  // arc position in [0, t_abs]
  double h = opts.initial_step > 0 ? std::min(opts.initial_step, t_abs) : t_abs;

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
  rhs(y, k1);
  bool k1_fresh = true;

  for (std::int64_t step = 0; step < opts.max_steps; ++step) {
    if (s >= t_abs) return;
    h = std::min(h, t_abs - s);
    if (!(h > t_abs * 1e-14) || !(h > 0))
      throw FlowError("step size underflow during flow integration");
    const double hd = h * dir;

    if (!k1_fresh) rhs(y, k1);
    ytmp = y + hd * (a21 * k1);
    rhs(ytmp, k2);
    ytmp = y + hd * (a31 * k1 + a32 * k2);
    rhs(ytmp, k3);
    ytmp = y + hd * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(ytmp, k4);
    ytmp = y + hd * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(ytmp, k5);
    ytmp = y + hd * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(ytmp, k6);
    ynew = y + hd * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(ynew, k7);

    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double ei = hd * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                        e6 * k6[i] + e7 * k7[i]);
      double scale =
          opts.abs_tol +
          opts.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(ei) / scale);
    }
    if (!std::isfinite(err))
      throw FlowError("non-finite state during flow integration");

    if (err <= 1.0) {
      s += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      k1_fresh = true;
      double grow = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
      h *= std::clamp(grow, 0.2, 5.0);
    } else {
      // Rejected: y is unchanged, so k1 is still valid.
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  throw FlowError("flow integration exceeded the step limit");
}

}  // namespace driftlab

#endif  // DRIFTLAB_ODE_HPP
