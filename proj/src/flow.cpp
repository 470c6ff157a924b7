#include "driftlab/flow.hpp"

#include <Eigen/Dense>

namespace driftlab {

Vec flow(const VectorField& f, const Vec& q0, double t,
         const OdeOptions& opts) {
  if (q0.size() != f.dim()) throw Error("flow: point dimension mismatch");
  Vec y = q0;
  integrate_ode([&f](const Vec& q, Vec& dq) { f.eval_into(q.data(), dq.data()); },
                y, t, opts);
  return y;
}

std::pair<Vec, Mat> flow_with_jacobian(const VectorField& f, const Vec& q0,
                                       double t, const OdeOptions& opts) {
  const int n = f.dim();
  if (q0.size() != n) throw Error("flow: point dimension mismatch");
  // State layout: [q, J columns], J(0) = I.
  Vec y(n + n * n);
  y.head(n) = q0;
  y.tail(n * n).setZero();
  for (int i = 0; i < n; ++i) y[n + i * n + i] = 1.0;

  std::vector<double> jac(static_cast<std::size_t>(n) * n);
  auto rhs = [&](const Vec& state, Vec& out) {
    f.eval_into(state.data(), out.data());
    f.jacobian_into(state.data(), jac.data());  // row-major Df
    for (int col = 0; col < n; ++col) {
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += jac[static_cast<std::size_t>(i) * n + j] *
                 state[n + col * n + j];
        out[n + col * n + i] = acc;
      }
    }
  };
  integrate_ode(rhs, y, t, opts);

  Mat J(n, n);
  for (int col = 0; col < n; ++col)
    for (int i = 0; i < n; ++i) J(i, col) = y[n + col * n + i];
  return {y.head(n), J};
}

Vec flow_pushforward(const VectorField& f0, const VectorField& g, double t,
                     const Vec& q, const OdeOptions& opts) {
  if (f0.dim() != g.dim()) throw Error("pushforward: dimension mismatch");
  if (t == 0.0) return g(q);
  auto [p, J] = flow_with_jacobian(f0, q, t, opts);
  // (e^{-t f0})_* g (q) = [D e^{t f0}(q)]^{-1} g(e^{t f0} q).
  return J.partialPivLu().solve(g(p));
}

Vec flow_compose(const std::vector<std::pair<VectorField, double>>& steps,
                 Vec q0, const OdeOptions& opts) {
  for (const auto& [field, duration] : steps) q0 = flow(field, q0, duration, opts);
  return q0;
}

}  // namespace driftlab
