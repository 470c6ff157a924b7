#ifndef DRIFTLAB_PLANNER_HPP
#define DRIFTLAB_PLANNER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "driftlab/chart.hpp"
#include "driftlab/control.hpp"

namespace driftlab {

class PlanError : public Error {
 public:
  using Error::Error;
};

enum class CostKind { J, I, SR };

inline const char* cost_name(CostKind k) {
  switch (k) {
    case CostKind::J: return "J";
    case CostKind::I: return "I";
    case CostKind::SR: return "SR";
  }
  return "?";
}

/// State constraint violation: a non-negative amount by which the sample at
/// (time, state) exceeds the constraint; 0 means feasible.
using StatePenalty = std::function<double(double, const Vec&)>;

struct SteerOptions {
  CostKind cost = CostKind::SR;
  double tmax = 0.25;
  std::int64_t budget = 20000;
  std::uint64_t seed = 0;
  int segments = 16;
  double acceptance_radius = 1e-4;
  std::optional<double> fixed_horizon;  // fixed-time steering when set
  std::vector<ControlSignal> warm_starts;
  StatePenalty state_penalty;
  const PrivilegedChart* target_chart = nullptr;
  OdeOptions ode{};
  int samples_per_segment = 2;  // constraint sampling density
};

struct PlanResult {
  std::optional<ControlSignal> control;
  double endpoint_error = 0.0;  // chart pseudo-norm at the target
  double cost_J = 0.0;
  double cost_I = 0.0;
  double value = 0.0;  // cost under the requested kind
  bool converged = false;
  std::int64_t evaluations = 0;

  double cost(CostKind kind) const {
    return kind == CostKind::I ? cost_I : cost_J;
  }
};

/// Upper-bound steering by seeded population search (restart rounds of
/// cross-entropy sampling plus simplex refinement; penalty continuation
/// across rounds). Deterministic given the seed; the best candidate is
/// retained across the whole budget, so enlarging the budget never worsens
/// the reported value.
PlanResult steer(const ControlAffineSystem& system, const Vec& q0,
                 const Vec& q1, const SteerOptions& opts);

/// Carnot-Caratheodory distance upper bound: steering on the small system.
PlanResult sr_distance(const ControlAffineSystem& system, const Vec& q0,
                       const Vec& q1, std::int64_t budget,
                       std::uint64_t seed = 0,
                       std::vector<ControlSignal> warm_starts = {});

/// Value functions of the drifted system. Also derives feasible candidate
/// plans from the drift-then-burst bound V <= min_t dsr(e^{t f0} q, q') and
/// feeds them to the optimizer as warm starts.
PlanResult value_J(const ControlAffineSystem& system, const Vec& q0,
                   const Vec& q1, double tmax, std::int64_t budget,
                   std::uint64_t seed = 0);
PlanResult value_I(const ControlAffineSystem& system, const Vec& q0,
                   const Vec& q1, double tmax, std::int64_t budget,
                   std::uint64_t seed = 0);

/// Endpoints of randomized controls with cost_J <= eps and T <= tmax,
/// stratified over segment counts {1,2,4} and cost levels {eps/4, eps/2,
/// eps}.
std::vector<Vec> reachable_sample(const ControlAffineSystem& system,
                                  const Vec& q0, double eps, double tmax,
                                  int count, std::uint64_t seed = 0);

struct BallBoxEpsRecord {
  double eps = 0.0;
  double min_C = 0.0;      // smallest grid C passing both inclusions
  double outer_C = 0.0;    // smallest grid C passing the outer inclusion
  bool ok = false;
  std::string detail;
};

struct BallBoxResult {
  bool ok = false;
  double C = 0.0;  // single constant valid across the whole sweep
  std::vector<BallBoxEpsRecord> per_eps;
  std::string detail;
};

struct BallBoxOptions {
  double tmax = 0.2;
  std::int64_t probe_budget = 3000;
  int sample_count = 200;
  std::uint64_t seed = 0;
  double inner_slack = 1.05;
  double c_min = 1.0, c_max = 8.0, c_step = 0.25;
};

/// Fits the ball-box constant: smallest grid C with (a) every reachable
/// sample inside Box(C eps) (Pi_T(C eps) with drift) and (b) the 2n probe
/// corners of Box(eps/C) (Xi_T(eps/C) with drift) steered to within cost
/// eps * inner_slack.
BallBoxResult ballbox_constant(const ControlAffineSystem& system, const Vec& q,
                               const PrivilegedChart& chart,
                               std::span<const double> eps_grid,
                               const BallBoxOptions& opts);

}  // namespace driftlab

#endif  // DRIFTLAB_PLANNER_HPP
