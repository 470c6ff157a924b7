#include "driftlab/planner.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "driftlab/parallel.hpp"

namespace driftlab {

namespace {

constexpr std::int64_t kRoundChunk = 1024;
constexpr int kPopulation = 64;
constexpr int kEliteCount = 8;
constexpr int kGenerations = 10;  // 640 sampling evals, the rest simplex

struct EvalRecord {
  double cost_J = 0.0;
  double cost_I = 0.0;
  double err = std::numeric_limits<double>::infinity();
  double violation = 0.0;
  bool valid = false;

  double cost(CostKind kind) const {
    return kind == CostKind::I ? cost_I : cost_J;
  }
};

struct BestCandidate {
  bool has = false;
  EvalRecord rec;
  Mat values;
  Vec durations;
};

// Shared evaluation context for one steering problem.
class Steering {
 public:
  Steering(const ControlAffineSystem& system, const Vec& q0, const Vec& q1,
           const SteerOptions& opts)
      : system_(system), q0_(q0), q1_(q1), opts_(opts),
        owned_chart_(opts.target_chart
                         ? std::optional<PrivilegedChart>{}
                         : std::optional<PrivilegedChart>{build_chart(
                               system.small_system(), q1)}),
        chart_(opts.target_chart ? *opts.target_chart : *owned_chart_),
        scratch_(system.dim) {
    samples_per_segment_ = opts_.state_penalty
                               ? std::max(2, opts_.samples_per_segment)
                               : 1;
  }

  std::int64_t evaluations() const { return evals_; }
  bool exhausted() const { return evals_ >= opts_.budget; }

  bool feasible(const EvalRecord& r) const {
    return r.valid && r.err <= opts_.acceptance_radius &&
           r.violation <= 1e-9;
  }

  double objective(const EvalRecord& r, double lambda) const {
    if (!r.valid) return 1e30;
    double err_excess = std::max(0.0, r.err - 0.5 * opts_.acceptance_radius);
    return r.cost(opts_.cost) + lambda * (err_excess + r.violation);
  }

  void charge(std::int64_t amount) { evals_ += amount; }

  EvalRecord evaluate(const Mat& values, const Vec& durations) {
    ++evals_;
    EvalRecord rec;
    Vec q = q0_;
    double t = 0.0;
    double violation = 0.0;
    const int m = system_.control_dim();
    if (urow_.size() != m) urow_.resize(m);
    try {
      for (Eigen::Index k = 0; k < values.rows(); ++k) {
        urow_ = values.row(k);
        const double* u = urow_.data();
        auto rhs = [&](const Vec& y, Vec& dy) {
          if (system_.drift)
            system_.drift->eval_into(y.data(), dy.data());
          else
            dy.setZero();
          for (int i = 0; i < m; ++i) {
            if (u[i] == 0.0) continue;
            system_.controlled[i].eval_into(y.data(), scratch_.data());
            dy += u[i] * scratch_;
          }
        };
        double piece = durations[k] / samples_per_segment_;
        for (int sp = 0; sp < samples_per_segment_; ++sp) {
          integrate_ode(rhs, q, piece, opts_.ode);
          t += piece;
          if (opts_.state_penalty)
            violation = std::max(violation, opts_.state_penalty(t, q));
        }
      }
    } catch (const FlowError&) {
      return rec;  // invalid
    }
    rec.err = chart_.pseudo_distance(q, /*far_field=*/0.5);
    rec.violation = violation;
    double cj = 0.0, ci = 0.0;
    for (Eigen::Index k = 0; k < values.rows(); ++k) {
      cj += durations[k] * values.row(k).norm();
      ci += durations[k] * std::sqrt(1.0 + values.row(k).squaredNorm());
    }
    rec.cost_J = cj;
    rec.cost_I = ci;
    rec.valid = true;
    return rec;
  }

  void consider(const Mat& values, const Vec& durations, const EvalRecord& rec,
                CostKind kind) {
    if (!rec.valid) return;
    if (feasible(rec)) {
      if (!best_feasible_.has || rec.cost(kind) < best_feasible_.rec.cost(kind)) {
        best_feasible_ = {true, rec, values, durations};
      }
    }
    if (!best_any_.has || rec.err < best_any_.rec.err ||
        (rec.err == best_any_.rec.err &&
         rec.cost(kind) < best_any_.rec.cost(kind))) {
      best_any_ = {true, rec, values, durations};
    }
  }

  const BestCandidate& best_feasible() const { return best_feasible_; }
  const BestCandidate& best_any() const { return best_any_; }
  const BestCandidate& best() const {
    return best_feasible_.has ? best_feasible_ : best_any_;
  }

  const ControlAffineSystem& system_;
  Vec q0_, q1_;
  const SteerOptions& opts_;
  std::optional<PrivilegedChart> owned_chart_;
  const PrivilegedChart& chart_;
  Vec scratch_;
  Eigen::RowVectorXd urow_;
  int samples_per_segment_ = 1;
  std::int64_t evals_ = 0;
  BestCandidate best_feasible_;
  BestCandidate best_any_;
};

// Gauss-Newton correction of the endpoint defect. The endpoint Jacobian
// with respect to the per-segment controls is assembled from the segment
// flow Jacobians (variational equation) and the control fields at the
// segment ends; the minimum-norm step keeps the control perturbation, and
// with it the cost change, small. Purely deterministic.
class EndpointCorrector {
 public:
  EndpointCorrector(const ControlAffineSystem& system, const Vec& q0,
                    const Vec& q1, const OdeOptions& ode)
      : system_(system), q0_(q0), q1_(q1), ode_(ode), n_(system.dim),
        m_(system.control_dim()) {}

  // Returns corrected (values, horizon) and charges ~4 evaluations per
  // Jacobian pass plus one per backtracking probe.
  std::pair<Mat, double> correct(Mat values, double horizon, bool free_horizon,
                                 double tmax, Steering& ctx, int iterations) {
    const int N = static_cast<int>(values.rows());
    double defect = std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations; ++it) {
      if (ctx.exhausted()) break;
      Pass pass;
      double current = endpoint_defect(values, horizon, &pass, ctx);
      if (current <= 1e-13) break;
      const int cols = N * m_ + (free_horizon ? 1 : 0);
      Mat J(n_, cols);
      Mat suffix = Mat::Identity(n_, n_);
      for (int k = N - 1; k >= 0; --k) {
        for (int i = 0; i < m_; ++i)
          J.col(k * m_ + i) =
              suffix * pass.control_dirs[k].col(i) * (horizon / N);
        if (free_horizon)
          pass.rhs_dirs[k] = suffix * pass.rhs_dirs[k] * (horizon / N);
        suffix = suffix * pass.segment_jacobians[k];
      }
      if (free_horizon) {
        Vec tcol = Vec::Zero(n_);
        for (int k = 0; k < N; ++k) tcol += pass.rhs_dirs[k];
        J.col(cols - 1) = tcol;  // d endpoint / d log T (times T factored in)
      }
      Vec delta = q1_ - pass.endpoint;
      Vec step = J.completeOrthogonalDecomposition().solve(delta);
      bool accepted = false;
      for (double alpha : {1.0, 0.5, 0.25, 0.1}) {
        if (ctx.exhausted()) break;
        Mat trial_values = values;
        for (int k = 0; k < N; ++k)
          for (int i = 0; i < m_; ++i)
            trial_values(k, i) += alpha * step[k * m_ + i];
        double trial_T = horizon;
        if (free_horizon) {
          trial_T = std::clamp(horizon * std::exp(alpha * step[cols - 1]),
                               tmax * 1e-4, tmax);
        }
        double trial = endpoint_defect(trial_values, trial_T, nullptr, ctx);
        if (trial < current * 0.9) {
          values = std::move(trial_values);
          horizon = trial_T;
          defect = trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      if (defect <= 1e-13) break;
    }
    return {std::move(values), horizon};
  }

 private:
  struct Pass {
    Vec endpoint;
    std::vector<Mat> segment_jacobians;
    std::vector<Mat> control_dirs;  // f_i at segment end, one column per i
    std::vector<Vec> rhs_dirs;      // full dynamics at segment end
  };

  // defect only (pass == nullptr) charges 1 evaluation, a Jacobian pass 4.
  double endpoint_defect(const Mat& values, double horizon, Pass* pass,
                         Steering& ctx) {
    const int N = static_cast<int>(values.rows());
    const double h = horizon / N;
    ctx.charge(pass ? 4 : 1);
    Vec q = q0_;
    if (pass) {
      pass->segment_jacobians.resize(N);
      pass->control_dirs.resize(N);
      pass->rhs_dirs.resize(N);
    }
    Eigen::RowVectorXd u(m_);
    Vec scratch(n_), dyn(n_);
    std::vector<double> jac(static_cast<std::size_t>(n_) * n_);
    for (int k = 0; k < N; ++k) {
      u = values.row(k);
      auto rhs_state = [&](const Vec& y, Vec& dy) {
        if (system_.drift)
          system_.drift->eval_into(y.data(), dy.data());
        else
          dy.setZero();
        for (int i = 0; i < m_; ++i) {
          if (u[i] == 0.0) continue;
          system_.controlled[i].eval_into(y.data(), scratch.data());
          dy += u[i] * scratch;
        }
      };
      try {
        if (!pass) {
          integrate_ode(rhs_state, q, h, ode_);
        } else {
          Vec aug(n_ + n_ * n_);
          aug.head(n_) = q;
          aug.tail(n_ * n_).setZero();
          for (int i = 0; i < n_; ++i) aug[n_ + i * n_ + i] = 1.0;
          auto rhs_aug = [&](const Vec& y, Vec& dy) {
            Vec state = y.head(n_);
            rhs_state(state, dyn);
            dy.head(n_) = dyn;
            // Variational part: dJ = Df(y) J with Df of the closed loop.
            Mat df = Mat::Zero(n_, n_);
            std::vector<double>& jb = jac;
            if (system_.drift) {
              system_.drift->jacobian_into(state.data(), jb.data());
              for (int r = 0; r < n_; ++r)
                for (int c = 0; c < n_; ++c)
                  df(r, c) += jb[static_cast<std::size_t>(r) * n_ + c];
            }
            for (int i = 0; i < m_; ++i) {
              if (u[i] == 0.0) continue;
              system_.controlled[i].jacobian_into(state.data(), jb.data());
              for (int r = 0; r < n_; ++r)
                for (int c = 0; c < n_; ++c)
                  df(r, c) += u[i] * jb[static_cast<std::size_t>(r) * n_ + c];
            }
            for (int col = 0; col < n_; ++col)
              dy.segment(n_ + col * n_, n_) =
                  df * y.segment(n_ + col * n_, n_);
          };
          integrate_ode(rhs_aug, aug, h, ode_);
          q = aug.head(n_);
          Mat J(n_, n_);
          for (int col = 0; col < n_; ++col) J.col(col) = aug.segment(n_ + col * n_, n_);
          pass->segment_jacobians[k] = std::move(J);
          Mat dirs(n_, m_);
          for (int i = 0; i < m_; ++i) {
            system_.controlled[i].eval_into(q.data(), scratch.data());
            dirs.col(i) = scratch;
          }
          pass->control_dirs[k] = std::move(dirs);
          rhs_state(q, dyn);
          pass->rhs_dirs[k] = dyn;
        }
      } catch (const FlowError&) {
        return std::numeric_limits<double>::infinity();
      }
    }
    if (pass) pass->endpoint = q;
    return (q1_ - q).norm();
  }

  const ControlAffineSystem& system_;
  Vec q0_, q1_;
  OdeOptions ode_;
  int n_, m_;
};

// Maps the optimizer vector onto (values, horizon).
struct Decoder {
  int segments;
  int control_dim;
  bool free_horizon;
  double fixed_horizon;
  double tmax;

  int dim() const { return segments * control_dim + (free_horizon ? 1 : 0); }

  double horizon(const Vec& theta) const {
    if (!free_horizon) return fixed_horizon;
    double t = std::exp(theta[0]);
    return std::clamp(t, tmax * 1e-4, tmax);
  }

  Mat values(const Vec& theta) const {
    Mat v(segments, control_dim);
    int base = free_horizon ? 1 : 0;
    for (int k = 0; k < segments; ++k)
      for (int i = 0; i < control_dim; ++i)
        v(k, i) = theta[base + k * control_dim + i];
    return v;
  }

  Vec encode(const Mat& vals, double T) const {
    Vec theta(dim());
    if (free_horizon) theta[0] = std::log(std::clamp(T, tmax * 1e-4, tmax));
    int base = free_horizon ? 1 : 0;
    for (int k = 0; k < segments; ++k)
      for (int i = 0; i < control_dim; ++i)
        theta[base + k * control_dim + i] = vals(k, i);
    return theta;
  }
};

// Nelder-Mead refinement; counts its own evaluations through evalTheta.
void simplex_refine(const Vec& start, const Vec& scale,
                    const std::function<double(const Vec&)>& eval_theta,
                    const std::function<bool()>& out_of_budget,
                    std::int64_t max_evals) {
  const int d = static_cast<int>(start.size());
  std::int64_t used = 0;
  auto feval = [&](const Vec& x) {
    ++used;
    return eval_theta(x);
  };
  std::vector<std::pair<double, Vec>> simplex;
  simplex.reserve(d + 1);
  simplex.push_back({feval(start), start});
  for (int i = 0; i < d && used < max_evals && !out_of_budget(); ++i) {
    Vec v = start;
    v[i] += std::max(1e-4, 0.5 * scale[i]);
    simplex.push_back({feval(v), v});
  }
  if (static_cast<int>(simplex.size()) < d + 1) return;

  auto order = [&]() {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const auto& a, const auto& b) {
                       return a.first < b.first;
                     });
  };
  order();
  while (used < max_evals && !out_of_budget()) {
    Vec centroid = Vec::Zero(d);
    for (int i = 0; i < d; ++i) centroid += simplex[i].second;
    centroid /= d;
    const auto& worst = simplex[d];
    Vec reflected = centroid + (centroid - worst.second);
    double fr = feval(reflected);
    if (fr < simplex[0].first) {
      Vec expanded = centroid + 2.0 * (centroid - worst.second);
      double fe = feval(expanded);
      simplex[d] = fe < fr ? std::make_pair(fe, expanded)
                           : std::make_pair(fr, reflected);
    } else if (fr < simplex[d - 1].first) {
      simplex[d] = {fr, reflected};
    } else {
      Vec contracted = centroid + 0.5 * (worst.second - centroid);
      double fc = feval(contracted);
      if (fc < worst.first) {
        simplex[d] = {fc, contracted};
      } else {
        for (int i = 1; i <= d; ++i) {
          simplex[i].second =
              simplex[0].second + 0.5 * (simplex[i].second - simplex[0].second);
          if (used >= max_evals || out_of_budget()) return;
          simplex[i].first = feval(simplex[i].second);
        }
      }
    }
    order();
  }
}

}  // namespace

PlanResult steer(const ControlAffineSystem& system, const Vec& q0,
                 const Vec& q1, const SteerOptions& opts) {
  if (q0.size() != system.dim || q1.size() != system.dim)
    throw PlanError("steer: point dimension mismatch");
  if (!(opts.tmax > 0)) throw PlanError("steer: tmax must be positive");
  if (opts.budget <= 0) throw PlanError("steer: budget must be positive");
  if (opts.fixed_horizon &&
      (!(*opts.fixed_horizon > 0) || *opts.fixed_horizon > opts.tmax))
    throw PlanError("steer: fixed horizon outside (0, tmax]");

  Steering ctx(system, q0, q1, opts);
  const int m = system.control_dim();
  const int N = std::max(1, opts.segments);
  Decoder dec{N, m, !opts.fixed_horizon, opts.fixed_horizon.value_or(0.0),
              opts.tmax};

  auto eval_uniform = [&](const Mat& values, double T) {
    Vec durations = Vec::Constant(values.rows(), T / values.rows());
    EvalRecord rec = ctx.evaluate(values, durations);
    ctx.consider(values, durations, rec, opts.cost);
    return rec;
  };

  // Zero-control candidates. With drift these trace the orbit; a golden
  // section on the endpoint error then pins the best horizon.
  {
    auto zero_at = [&](double T) {
      if (ctx.exhausted()) return std::numeric_limits<double>::infinity();
      Mat z = Mat::Zero(1, m);
      EvalRecord rec = ctx.evaluate(z, Vec::Constant(1, T));
      ctx.consider(z, Vec::Constant(1, T), rec, opts.cost);
      return rec.valid ? rec.err : std::numeric_limits<double>::infinity();
    };
    if (opts.fixed_horizon) {
      zero_at(*opts.fixed_horizon);
    } else if (!system.has_drift()) {
      zero_at(opts.tmax * 0.5);
    } else {
      int coarse = 16;
      double best_T = opts.tmax, best_err = zero_at(opts.tmax);
      for (int k = 1; k < coarse; ++k) {
        double T = opts.tmax * k / coarse;
        double e = zero_at(T);
        if (e < best_err) {
          best_err = e;
          best_T = T;
        }
      }
      double lo = std::max(opts.tmax * 1e-4, best_T - opts.tmax / coarse);
      double hi = std::min(opts.tmax, best_T + opts.tmax / coarse);
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
      double fa = zero_at(a), fb = zero_at(b);
      for (int it = 0; it < 40 && !ctx.exhausted(); ++it) {
        if (fa < fb) {
          hi = b; b = a; fb = fa;
          a = hi - gr * (hi - lo);
          fa = zero_at(a);
        } else {
          lo = a; a = b; fa = fb;
          b = lo + gr * (hi - lo);
          fb = zero_at(b);
        }
      }
    }
  }

  // Opener horizons. Under a drift the useful horizons scale with the
  // square of the target size (cost bounds the time via the drift order),
  // so fractions of tmax alone start far off scale for small targets.
  const double target_scale =
      std::max(ctx.chart_.pseudo_distance(q0, 0.5), 1e-6);
  std::vector<double> opener_horizons;
  if (opts.fixed_horizon) {
    opener_horizons.push_back(*opts.fixed_horizon);
  } else {
    opener_horizons.push_back(opts.tmax * 0.75);
    if (system.has_drift()) {
      for (double c : {4.0, 1.0}) {
        double T = std::clamp(c * target_scale * target_scale,
                              opts.tmax * 1e-4, opts.tmax);
        opener_horizons.push_back(T);
      }
    }
  }

  // Exact warm starts, then a linearized aim as a generic opener.
  for (const ControlSignal& w : opts.warm_starts) {
    if (ctx.exhausted()) break;
    ControlSignal cand = w;
    if (cand.horizon() > opts.tmax) {
      if (system.has_drift()) continue;  // not representable within tmax
      cand = cand.rescaled(opts.tmax);
    }
    if (opts.fixed_horizon &&
        std::abs(cand.horizon() - *opts.fixed_horizon) > 1e-12) {
      if (system.has_drift()) continue;
      cand = cand.rescaled(*opts.fixed_horizon);
    }
    EvalRecord rec = ctx.evaluate(cand.values(), cand.durations());
    ctx.consider(cand.values(), cand.durations(), rec, opts.cost);
  }
  {
    Mat fields(system.dim, m);
    for (int i = 0; i < m; ++i) fields.col(i) = system.controlled[i](q0);
    for (double T : opener_horizons) {
      if (ctx.exhausted()) break;
      Vec rate = (q1 - q0) / T;
      if (system.drift) rate -= (*system.drift)(q0);
      Vec aim = fields.completeOrthogonalDecomposition().solve(rate);
      Mat values = aim.transpose().replicate(N, 1);
      eval_uniform(values, T);
    }
  }

  EndpointCorrector corrector(system, q0, q1, opts.ode);

  // Square-loop primitives excite the bracket directions, where the
  // endpoint Jacobian at u = 0 is singular; the corrector then projects
  // each loop onto the target. Amplitudes are sized so the enclosed
  // bracket displacement is on the order of the target scale.
  for (double T : opener_horizons) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i == j) continue;
        for (double area_factor : {0.25, 1.0, 4.0}) {
          if (ctx.exhausted()) break;
          double amp =
              4.0 * target_scale * std::sqrt(area_factor) / T;
          Mat loop = Mat::Zero(4, m);
          loop(0, i) = amp;
          loop(1, j) = amp;
          loop(2, i) = -amp;
          loop(3, j) = -amp;
          ControlSignal sig = ControlSignal::uniform(loop, T).resampled(N);
          auto [vals, T2] = corrector.correct(sig.values(), T,
                                              dec.free_horizon, opts.tmax,
                                              ctx, 5);
          eval_uniform(vals, T2);
        }
      }
    }
  }

  auto gn_polish = [&](int iterations) {
    if (!ctx.best().has || ctx.exhausted()) return;
    const BestCandidate& b = ctx.best();
    ControlSignal sig =
        ControlSignal::with_durations(b.values, b.durations).resampled(N);
    auto [vals, T] = corrector.correct(sig.values(), sig.horizon(),
                                       dec.free_horizon, opts.tmax, ctx,
                                       iterations);
    eval_uniform(vals, T);
  };
  gn_polish(6);

  // Restart rounds with a fixed schedule; the chunk layout never depends on
  // the remaining budget, so a larger budget replays the same evaluations
  // and can only improve the retained best.
  int infeasible_rounds = 0;
  int stall_rounds = 0;
  double previous_best = std::numeric_limits<double>::infinity();
  const double lambda0 = 50.0;
  for (int round = 0; !ctx.exhausted(); ++round) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(round)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double lambda =
        std::min(lambda0 * std::pow(10.0, infeasible_rounds), 1e9);

    Vec mean;
    Vec sigma = Vec::Constant(dec.dim(), 0.6);
    if (ctx.best().has) {
      const BestCandidate& b = ctx.best();
      ControlSignal sig = ControlSignal::with_durations(b.values, b.durations)
                              .resampled(N);
      mean = dec.encode(sig.values(), sig.horizon());
      for (int i = (dec.free_horizon ? 1 : 0); i < dec.dim(); ++i)
        sigma[i] = 0.35 * std::max(1.0, std::abs(mean[i]));
      if (dec.free_horizon) sigma[0] = 0.4;
    } else {
      mean = Vec::Zero(dec.dim());
      if (dec.free_horizon) mean[0] = std::log(opts.tmax * 0.75);
    }

    auto eval_theta_record = [&](const Vec& theta) {
      Mat values = dec.values(theta);
      double T = dec.horizon(theta);
      return eval_uniform(values, T);
    };
    auto eval_theta = [&](const Vec& theta) {
      return ctx.objective(eval_theta_record(theta), lambda);
    };

    std::int64_t sampling_budget = kGenerations * kPopulation;
    std::int64_t round_start = ctx.evaluations();
    std::vector<Vec> population(kPopulation, Vec(dec.dim()));
    std::vector<std::pair<double, int>> scored;
    for (int gen = 0; gen < kGenerations && !ctx.exhausted(); ++gen) {
      for (int p = 0; p < kPopulation; ++p) {
        Vec& theta = population[p];
        for (int i = 0; i < dec.dim(); ++i)
          theta[i] = mean[i] + sigma[i] * gauss(rng);
      }
      if (gen == 0 && ctx.best().has) {
        const BestCandidate& b = ctx.best();
        ControlSignal sig =
            ControlSignal::with_durations(b.values, b.durations).resampled(N);
        population[0] = dec.encode(sig.values(), sig.horizon());
      }
      scored.clear();
      for (int p = 0; p < kPopulation; ++p) {
        if (ctx.exhausted() ||
            ctx.evaluations() - round_start >= sampling_budget)
          break;
        scored.push_back({eval_theta(population[p]), p});
      }
      if (scored.size() < 2) break;
      int elite = std::min<int>(kEliteCount, static_cast<int>(scored.size()));
      std::partial_sort(scored.begin(), scored.begin() + elite, scored.end());
      Vec new_mean = Vec::Zero(dec.dim());
      for (int e = 0; e < elite; ++e) new_mean += population[scored[e].second];
      new_mean /= elite;
      Vec var = Vec::Zero(dec.dim());
      for (int e = 0; e < elite; ++e) {
        Vec d = population[scored[e].second] - new_mean;
        var += d.cwiseProduct(d);
      }
      mean = new_mean;
      sigma = (var / elite).cwiseSqrt() * 1.05 + Vec::Constant(dec.dim(), 1e-4);
    }
    gn_polish(4);

    std::int64_t phase_left = kRoundChunk - (ctx.evaluations() - round_start);
    if (ctx.best_feasible().has && phase_left > 0 && !ctx.exhausted()) {
      // Cost descent along the feasible manifold: random perturbation,
      // Gauss-Newton re-projection, accept on cost (1+1 scheme with a
      // one-fifth-style step rule).
      BestCandidate cur = ctx.best_feasible();
      ControlSignal cs =
          ControlSignal::with_durations(cur.values, cur.durations).resampled(N);
      Mat vals = cs.values();
      double T = cs.horizon();
      double cost_cur = cur.rec.cost(opts.cost);
      double step = 0.25;
      std::int64_t phase_start = ctx.evaluations();
      int trial_index = 0;
      while (ctx.evaluations() - phase_start < phase_left &&
             !ctx.exhausted()) {
        ++trial_index;
        Mat trial = vals;
        double trialT = T;
        if (system.has_drift() && dec.free_horizon && trial_index % 4 == 0) {
          // Time compression: the same control pattern run twice as fast
          // halves the drift exposure at equal J cost.
          trial *= 2.0;
          trialT = std::max(T * 0.5, opts.tmax * 1e-4);
        } else {
          for (int r = 0; r < trial.rows(); ++r)
            for (int c = 0; c < trial.cols(); ++c)
              trial(r, c) +=
                  step * gauss(rng) * std::max(0.3, std::abs(vals(r, c)));
          if (dec.free_horizon)
            trialT = std::clamp(T * std::exp(0.2 * step * gauss(rng)),
                                opts.tmax * 1e-4, opts.tmax);
        }
        auto [pv, pT] = corrector.correct(trial, trialT, dec.free_horizon,
                                          opts.tmax, ctx, 3);
        EvalRecord rec = eval_uniform(pv, pT);
        if (ctx.feasible(rec) && rec.cost(opts.cost) < cost_cur) {
          vals = pv;
          T = pT;
          cost_cur = rec.cost(opts.cost);
          step = std::min(0.6, step * 1.25);
        } else {
          step = std::max(0.01, step * 0.85);
        }
      }
    } else if (!ctx.exhausted() && ctx.best().has) {
      const BestCandidate& b = ctx.best();
      ControlSignal sig =
          ControlSignal::with_durations(b.values, b.durations).resampled(N);
      Vec start = dec.encode(sig.values(), sig.horizon());
      std::int64_t nm_budget = phase_left;
      if (nm_budget > dec.dim() + 2) {
        Vec scale = Vec::Constant(dec.dim(), 0.15);
        simplex_refine(start, scale, eval_theta,
                       [&]() { return ctx.exhausted(); }, nm_budget);
      }
    }
    gn_polish(4);

    bool have_feasible = ctx.best_feasible().has;
    if (!have_feasible) ++infeasible_rounds;
    double current = have_feasible
                         ? ctx.best_feasible().rec.cost(opts.cost)
                         : std::numeric_limits<double>::infinity();
    if (have_feasible &&
        current > previous_best - 0.003 * std::max(previous_best, 1e-12)) {
      ++stall_rounds;
    } else {
      stall_rounds = 0;
    }
    previous_best = std::min(previous_best, current);
    if (stall_rounds >= 2) break;
  }

  PlanResult result;
  result.evaluations = ctx.evaluations();
  const BestCandidate& b = ctx.best();
  if (b.has) {
    ControlSignal sig = ControlSignal::with_durations(b.values, b.durations);
    result.cost_J = sig.cost_J();
    result.cost_I = sig.cost_I();
    result.value = opts.cost == CostKind::I ? result.cost_I : result.cost_J;
    result.endpoint_error = b.rec.err;
    result.converged = ctx.feasible(b.rec);
    result.control = std::move(sig);
  }
  return result;
}

PlanResult sr_distance(const ControlAffineSystem& system, const Vec& q0,
                       const Vec& q1, std::int64_t budget, std::uint64_t seed,
                       std::vector<ControlSignal> warm_starts) {
  SteerOptions opts;
  opts.cost = CostKind::SR;
  opts.tmax = 1.0;
  opts.budget = budget;
  opts.seed = seed;
  opts.warm_starts = std::move(warm_starts);
  return steer(system.small_system(), q0, q1, opts);
}

namespace {

PlanResult value_function(const ControlAffineSystem& system, const Vec& q0,
                          const Vec& q1, double tmax, std::int64_t budget,
                          std::uint64_t seed, CostKind kind) {
  if (!system.has_drift())
    throw PlanError("value functions require a drifted system");
  ControlAffineSystem small = system.small_system();

  // Bound-derived candidates: drift to e^{t f0} q0, then replay an SR plan
  // as a short burst. Trajectories of the driftless system are approximated
  // arbitrarily well by rescaling its controls onto small intervals.
  std::vector<ControlSignal> warm;
  const int K = 6;
  std::int64_t sr_budget = std::max<std::int64_t>(200, budget / (4 * (K + 1)));
  std::int64_t used = 0;
  for (int k = 0; k <= K; ++k) {
    double t = tmax * k / K;
    Vec p = t == 0.0 ? q0 : flow(*system.drift, q0, t);
    SteerOptions sr_opts;
    sr_opts.cost = CostKind::SR;
    sr_opts.tmax = 1.0;
    sr_opts.budget = sr_budget;
    sr_opts.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(k));
    sr_opts.segments = 8;
    sr_opts.acceptance_radius = 1e-3;
    PlanResult plan = steer(small, p, q1, sr_opts);
    used += plan.evaluations;
    if (!plan.converged || !plan.control) continue;
    double tau = std::min(0.01, tmax - t);
    if (!(tau > 0)) continue;
    ControlSignal burst = plan.control->rescaled(tau);
    if (t > 0.0) {
      ControlSignal drift_leg(system.control_dim(), 1, t);
      warm.push_back(ControlSignal::concatenate(drift_leg, burst));
    } else {
      warm.push_back(burst);
    }
  }

  SteerOptions opts;
  opts.cost = kind;
  opts.tmax = tmax;
  opts.budget = std::max<std::int64_t>(kRoundChunk, budget - used);
  opts.seed = seed;
  opts.warm_starts = std::move(warm);
  return steer(system, q0, q1, opts);
}

}  // namespace

PlanResult value_J(const ControlAffineSystem& system, const Vec& q0,
                   const Vec& q1, double tmax, std::int64_t budget,
                   std::uint64_t seed) {
  return value_function(system, q0, q1, tmax, budget, seed, CostKind::J);
}

PlanResult value_I(const ControlAffineSystem& system, const Vec& q0,
                   const Vec& q1, double tmax, std::int64_t budget,
                   std::uint64_t seed) {
  return value_function(system, q0, q1, tmax, budget, seed, CostKind::I);
}

std::vector<Vec> reachable_sample(const ControlAffineSystem& system,
                                  const Vec& q0, double eps, double tmax,
                                  int count, std::uint64_t seed) {
  if (eps < 0) throw PlanError("reachable_sample: eps must be >= 0");
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  const int m = system.control_dim();
  static constexpr int kSegments[3] = {1, 2, 4};
  static constexpr double kLevels[3] = {0.25, 0.5, 1.0};
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int segs = kSegments[i % 3];
    double level = eps * kLevels[(i / 3) % 3];
    double T = tmax * std::max(1e-3, unif(rng));
    Mat values(segs, m);
    for (int k = 0; k < segs; ++k)
      for (int j = 0; j < m; ++j) values(k, j) = gauss(rng);
    ControlSignal sig = ControlSignal::uniform(values, T);
    double cj = sig.cost_J();
    if (cj > 0)
      sig = ControlSignal::uniform(values * (level / cj), T);
    else
      sig = ControlSignal::uniform(Mat::Zero(segs, m), T);
    out.push_back(integrate(system, sig, q0).endpoint());
  }
  return out;
}

namespace {

double grid_ceil(double c, const BallBoxOptions& o) {
  double steps = std::ceil((c - o.c_min) / o.c_step - 1e-12);
  return o.c_min + std::max(0.0, steps) * o.c_step;
}

}  // namespace

BallBoxResult ballbox_constant(const ControlAffineSystem& system, const Vec& q,
                               const PrivilegedChart& chart,
                               std::span<const double> eps_grid,
                               const BallBoxOptions& opts) {
  BallBoxResult result;
  const bool drifted = system.has_drift();
  const auto& weights = chart.weights();
  const int n = static_cast<int>(weights.size());
  if (drifted && !chart.drift_slot())
    throw PlanError("ballbox_constant: drifted systems need a drift chart");

  auto outer_contains = [&](double C, double eps, const Vec& z) {
    if (drifted) {
      DriftBoxSpec spec{C * eps, opts.tmax, weights, *chart.drift_slot(),
                        weights[*chart.drift_slot()]};
      return pi_contains(spec, z);
    }
    return box_contains(BoxSpec{C * eps, weights}, z);
  };

  auto inner_ok = [&](double C, double eps, std::uint64_t probe_seed) {
    double eta = eps / C;
    for (int i = 0; i < n; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vec z = Vec::Zero(n);
        z[i] = sign * std::pow(eta, weights[i]);
        Vec target = chart.from_coords(z);
        PrivilegedChart target_chart = chart.rebased(target);
        SteerOptions sopts;
        sopts.cost = drifted ? CostKind::J : CostKind::SR;
        sopts.tmax = opts.tmax;
        sopts.budget = opts.probe_budget;
        sopts.seed = derive_seed(probe_seed, static_cast<std::uint64_t>(i * 2) +
                                                 (sign > 0 ? 0 : 1));
        sopts.segments = 6;
        sopts.acceptance_radius = std::max(1e-4, 0.02 * eps);
        sopts.target_chart = &target_chart;
        PlanResult plan = steer(system, q, target, sopts);
        if (!plan.converged || plan.cost_J > opts.inner_slack * eps)
          return false;
      }
    }
    return true;
  };

  double global_C = opts.c_min;
  bool all_ok = true;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    double eps = eps_grid[e];
    BallBoxEpsRecord rec;
    rec.eps = eps;
    std::vector<Vec> samples = reachable_sample(
        system, q, eps, opts.tmax, opts.sample_count,
        derive_seed(opts.seed, 1000 + e));
    // Outer: smallest grid C containing every sample.
    double need = opts.c_min;
    bool outer_fail = false;
    for (const Vec& p : samples) {
      auto z = chart.try_to_coords(p, NewtonOptions{1e-9, 40});
      if (!z) {
        outer_fail = true;
        rec.detail = "chart inversion failed on a reachable sample";
        break;
      }
      while (need <= opts.c_max + 1e-12 && !outer_contains(need, eps, *z))
        need += opts.c_step;
      if (need > opts.c_max + 1e-12) {
        outer_fail = true;
        rec.detail = "no grid C contains all reachable samples";
        break;
      }
    }
    if (outer_fail) {
      rec.ok = false;
      all_ok = false;
      result.per_eps.push_back(rec);
      continue;
    }
    rec.outer_C = need;
    // Inner: increase C until the shrunken corner probes are reachable.
    double C = std::max(need, opts.c_min);
    bool inner_found = false;
    while (C <= opts.c_max + 1e-12) {
      if (inner_ok(C, eps, derive_seed(opts.seed, 2000 + 100 * e))) {
        inner_found = true;
        break;
      }
      C += opts.c_step;
    }
    rec.ok = inner_found;
    rec.min_C = inner_found ? C : 0.0;
    if (!inner_found) {
      rec.detail = "no grid C makes the inner probes reachable";
      all_ok = false;
    }
    global_C = std::max(global_C, inner_found ? C : opts.c_max);
    result.per_eps.push_back(rec);
  }

  if (all_ok) {
    global_C = grid_ceil(global_C, opts);
    // The single constant must pass the inner probes at every eps, not just
    // at each per-eps minimum.
    for (std::size_t e = 0; e < eps_grid.size() && all_ok; ++e) {
      if (result.per_eps[e].min_C >= global_C - 1e-12) continue;
      if (!inner_ok(global_C, eps_grid[e],
                    derive_seed(opts.seed, 3000 + 100 * e))) {
        all_ok = false;
        result.detail = "global C fails inner probes at eps = " +
                        std::to_string(eps_grid[e]);
      }
    }
  }
  result.ok = all_ok;
  result.C = all_ok ? global_C : 0.0;
  return result;
}

}  // namespace driftlab
