#ifndef DRIFTLAB_COMPLEXITY_HPP
#define DRIFTLAB_COMPLEXITY_HPP

#include <string>
#include <vector>

#include "driftlab/planner.hpp"

namespace driftlab {

class ComplexityError : public Error {
 public:
  using Error::Error;
};

enum class ComplexityKind { Cost, App, Time, Neig, LtlcTime, LtlcNeig };

const char* kind_name(ComplexityKind k);
ComplexityKind kind_from_name(const std::string& name);

/// A curve (geometric, orientation only) or a path (timed) given by a
/// parametrization with velocity on [t0, t1].
struct CurveSpec {
  PathFn map;
  double t0 = 0.0;
  double t1 = 1.0;
  bool timed = false;
  bool constant = false;  // the hover path of the LTLC problem
  std::string name;

  double span() const { return t1 - t0; }
};

struct SigmaOptions {
  CostKind cost = CostKind::J;
  double tmax = 0.25;           // per-leg horizon cap
  std::int64_t budget = 1536;   // per-leg steering budget
  std::uint64_t seed = 0;
  int leg_segments = 6;
  double arc_resolution = 1e-4;       // smallest admissible arc advance
  double acceptance_factor = 0.02;    // leg endpoint radius = factor * eps
  int tube_grid = 64;                 // chart grid for tube membership
  double delta_resolution = 1e-4;     // smallest delta / horizon ratio
};

struct SigmaDiagnostics {
  int pieces = 0;
  std::vector<double> leg_costs;
  bool converged = true;
  bool saturated = false;
  std::string note;
};

/// Interpolation by cost: march along the curve, each leg ending on the
/// curve with steering cost <= eps; returns (total cost)/eps.
double sigma_cost(const ControlAffineSystem& system, const CurveSpec& curve,
                  double eps, const SigmaOptions& opts,
                  SigmaDiagnostics* diag = nullptr);

/// Tubular approximation: the same march constrained to the sub-Riemannian
/// tube of radius eps around the curve (small system metric).
double sigma_app(const ControlAffineSystem& system, const CurveSpec& curve,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag = nullptr);

/// Minimal average cost of a delta-time interpolation: plans every leg in
/// the prescribed time and returns delta * (total cost).
double sigma_time_aux(const ControlAffineSystem& system,
                      const CurveSpec& path, double delta,
                      const SigmaOptions& opts,
                      SigmaDiagnostics* diag = nullptr);

/// Interpolation by time: largest delta <= delta_max with
/// sigma_time_aux <= eps, returned as (horizon)/delta.
double sigma_time(const ControlAffineSystem& system, const CurveSpec& path,
                  double eps, double delta_max, const SigmaOptions& opts,
                  SigmaDiagnostics* diag = nullptr);

/// Neighboring approximation: marches in time with the moving-ball
/// constraint d(q_u(t), gamma(t)) <= eps; returns (total cost)/eps.
double sigma_neig(const ControlAffineSystem& system, const CurveSpec& path,
                  double eps, const SigmaOptions& opts,
                  SigmaDiagnostics* diag = nullptr);

/// LTLC complexities of the constant path at q0 over horizon T. Exactly 0
/// when the drift vanishes at q0.
double ltlc_time(const ControlAffineSystem& system, const Vec& q0, double T,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag = nullptr);
double ltlc_neig(const ControlAffineSystem& system, const Vec& q0, double T,
                 double eps, const SigmaOptions& opts,
                 SigmaDiagnostics* diag = nullptr);

/// The constant path used by the LTLC complexities.
CurveSpec constant_path(const Vec& q0, double T);

struct CuspReport {
  std::vector<double> grid;
  std::vector<bool> condition;   // drift tangency indicator per grid point
  std::vector<double> suspects;  // isolated tangency parameters
  bool no_cusp_certificate = false;
  std::string branch;
};

/// Classifies drift tangency along a curve per the no-cusp dichotomy: a
/// certificate when the condition holds nowhere or everywhere (or when the
/// tangency degree differs from the drift order), suspects at isolated
/// parameters otherwise.
CuspReport cusp_condition(const ControlAffineSystem& system,
                          const CurveSpec& curve, int grid_count = 129,
                          double rank_tol = kDefaultRankTol);

/// Predicted asymptotic exponent: curves scale with kappa; timed paths with
/// max(kappa, s) under a drift; the LTLC complexities with s.
int predicted_exponent(ComplexityKind kind, int kappa, int s,
                       bool drift_present);

struct ComplexityCurve {
  ComplexityKind kind = ComplexityKind::Cost;
  CostKind cost = CostKind::J;
  std::vector<std::pair<double, double>> samples;  // (eps, value), eps dec.
  std::vector<SigmaDiagnostics> diagnostics;
};

struct ExponentFit {
  double slope = 0.0;  // value ~ eps^{-slope}
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_half_width = 0.0;
};

/// Least squares on (log eps, log value). Needs at least 5 samples spanning
/// a factor >= 2 in eps.
ExponentFit fit_exponent(const ComplexityCurve& curve);

}  // namespace driftlab

#endif  // DRIFTLAB_COMPLEXITY_HPP
