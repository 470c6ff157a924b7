#ifndef DRIFTLAB_STRUCTURE_HPP
#define DRIFTLAB_STRUCTURE_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftlab/field.hpp"

namespace driftlab {

class StructureError : public Error {
 public:
  using Error::Error;
};

/// Generator indices (1-based) of a nested bracket; (i1,...,ik) stands for
/// [f_{i1}, [f_{i2}, [... f_{ik}]]]. Single letters are the generators.
struct BracketWord {
  std::vector<int> letters;

  int length() const { return static_cast<int>(letters.size()); }
  std::string str() const;
  friend bool operator==(const BracketWord&, const BracketWord&) = default;
};

struct BracketEntry {
  BracketWord word;
  VectorField field;
};

/// All nested bracket words up to length `max_len` of the controlled fields,
/// ordered by length then lexicographically. Includes the generators.
std::vector<BracketEntry> bracket_closure(const ControlAffineSystem& system,
                                          int max_len);

struct Flag {
  Vec point;
  std::vector<int> dims;     // (n_1, ..., n_r), n_r = ambient dimension
  std::vector<int> weights;  // non-decreasing, one per coordinate
  int step = 0;
};

inline constexpr double kDefaultRankTol = 1e-8;
inline constexpr int kDefaultDepthLimit = 6;

/// Growth vector and weights at q via numerical ranks of the evaluated
/// bracket matrices (relative singular value threshold rank_tol).
Flag flag_at(const ControlAffineSystem& system, const Vec& q,
             double rank_tol = kDefaultRankTol,
             int depth_limit = kDefaultDepthLimit);

struct EquiregularCertificate {
  bool passed = false;
  std::vector<int> dims;
  std::optional<Vec> offending_point;
  std::vector<int> offending_dims;
};

EquiregularCertificate equiregular_check(const ControlAffineSystem& system,
                                         std::span<const Vec> sample,
                                         double rank_tol = kDefaultRankTol);

struct FrameEntry {
  BracketWord word;  // empty for the drift entry
  VectorField field;
  int weight = 0;
  bool is_drift = false;
};

struct AdaptedFrame {
  Vec base;
  std::vector<FrameEntry> entries;
  std::optional<int> drift_slot;  // 0-based index into entries

  Mat matrix_at(const Vec& q) const;
  std::vector<int> weights() const;
};

/// Greedy completion of a basis of T_qM from the bracket closure, taking
/// fields in closure order whenever they keep the evaluated columns well
/// conditioned (smallest singular value >= rank_tol * largest).
AdaptedFrame adapted_frame_at(const ControlAffineSystem& system, const Vec& q,
                              double rank_tol = kDefaultRankTol);

/// As adapted_frame_at, but the drift occupies the first slot of weight
/// drift_order(q); requires f0(q) != 0.
AdaptedFrame drift_adapted_frame_at(const ControlAffineSystem& system,
                                    const Vec& q,
                                    double rank_tol = kDefaultRankTol);

/// An extra field to thread into the greedy completion ahead of the closure
/// entries of its weight level. Optional entries are dropped (slot -1) when
/// they fail independence or land on a slot of the wrong weight.
struct ForcedFrameEntry {
  VectorField field;
  int weight = 1;
  bool is_drift = false;
  bool required = true;
};

AdaptedFrame adapted_frame_with(const ControlAffineSystem& system,
                                const Vec& q,
                                const std::vector<ForcedFrameEntry>& forced,
                                double rank_tol = kDefaultRankTol,
                                std::vector<int>* forced_slots = nullptr);

/// Smallest s with f0(q) in Delta^s(q); 0 is the sentinel for f0(q) = 0.
int drift_order(const ControlAffineSystem& system, const Vec& q,
                double rank_tol = kDefaultRankTol);

struct PathPoint {
  Vec position;
  Vec velocity;
};
using PathFn = std::function<PathPoint(double)>;

/// Smallest k with gamma'(t) in Delta^k(gamma(t)).
int tangency_degree(const ControlAffineSystem& system, const PathFn& path,
                    double t, double rank_tol = kDefaultRankTol);

/// Max of tangency_degree over a uniform grid on [t0, t1] (the kappa of the
/// asymptotic exponents). Grid points with vanishing velocity are skipped.
int max_tangency_degree(const ControlAffineSystem& system, const PathFn& path,
                        double t0, double t1, int grid = 128,
                        double rank_tol = kDefaultRankTol);

/// Membership of v in the span of the given columns, by least-squares
/// residual relative to |v|.
bool in_span(const Mat& columns, const Vec& v, double rank_tol);

}  // namespace driftlab

#endif  // DRIFTLAB_STRUCTURE_HPP
