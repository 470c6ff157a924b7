#ifndef DRIFTLAB_FLOW_HPP
#define DRIFTLAB_FLOW_HPP

#include <utility>
#include <vector>

#include "driftlab/field.hpp"
#include "driftlab/ode.hpp"

namespace driftlab {

/// e^{t f}(q0).
Vec flow(const VectorField& f, const Vec& q0, double t,
         const OdeOptions& opts = {});

/// Flow together with its Jacobian D e^{t f}(q0), via the variational
/// equation J' = Df(y) J integrated alongside the state.
std::pair<Vec, Mat> flow_with_jacobian(const VectorField& f, const Vec& q0,
                                       double t, const OdeOptions& opts = {});

/// (e^{-t f0})_* g evaluated at q, i.e. the field of the time-dependent
/// system obtained by factoring the drift flow out of the dynamics.
Vec flow_pushforward(const VectorField& f0, const VectorField& g, double t,
                     const Vec& q, const OdeOptions& opts = {});

/// Applies steps left to right: the result is
/// e^{t_k f_k} o ... o e^{t_1 f_1}(q0) with steps[0] = (f_1, t_1).
Vec flow_compose(const std::vector<std::pair<VectorField, double>>& steps,
                 Vec q0, const OdeOptions& opts = {});

}  // namespace driftlab

#endif  // DRIFTLAB_FLOW_HPP
