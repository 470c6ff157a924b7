#include "driftlab/structure.hpp"

#include <Eigen/Dense>
#include <algorithm>

namespace driftlab {

std::string BracketWord::str() const {
  if (letters.empty()) return "f0";
  if (letters.size() == 1) return "f" + std::to_string(letters[0]);
  std::string out = "[f" + std::to_string(letters[0]) + ",";
  BracketWord rest{std::vector<int>(letters.begin() + 1, letters.end())};
  out += rest.str();
  out += "]";
  return out;
}

namespace {

void extend_closure(const ControlAffineSystem& system,
                    std::vector<BracketEntry>& closure, int target_len) {
  const int m = system.control_dim();
  if (closure.empty()) {
    for (int j = 1; j <= m; ++j)
      closure.push_back({BracketWord{{j}}, system.controlled[j - 1]});
  }
  int have = closure.back().word.length();
  for (int len = have + 1; len <= target_len; ++len) {
    std::size_t begin = 0, end = closure.size();
    while (begin < end && closure[begin].word.length() < len - 1) ++begin;
    for (int j = 1; j <= m; ++j) {
      for (std::size_t k = begin; k < end; ++k) {
        BracketWord w;
        w.letters.reserve(static_cast<std::size_t>(len));
        w.letters.push_back(j);
        w.letters.insert(w.letters.end(), closure[k].word.letters.begin(),
                         closure[k].word.letters.end());
        closure.push_back(
            {std::move(w),
             lie_bracket(system.controlled[j - 1], closure[k].field)});
      }
    }
    // Generated j-major over a lexicographically sorted previous level, so
    // the new level is lexicographically sorted as well.
  }
}

int numerical_rank(const Mat& m, double rank_tol) {
  if (m.cols() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] >= rank_tol * sv[0]) ++rank;
  return rank;
}

std::vector<int> weights_from_dims(const std::vector<int>& dims) {
  std::vector<int> weights;
  int prev = 0;
  for (std::size_t s = 0; s < dims.size(); ++s) {
    for (int i = prev; i < dims[s]; ++i)
      weights.push_back(static_cast<int>(s) + 1);
    prev = dims[s];
  }
  return weights;
}

}  // namespace

std::vector<BracketEntry> bracket_closure(const ControlAffineSystem& system,
                                          int max_len) {
  if (max_len < 1) throw StructureError("bracket closure needs max_len >= 1");
  std::vector<BracketEntry> closure;
  extend_closure(system, closure, max_len);
  return closure;
}

Flag flag_at(const ControlAffineSystem& system, const Vec& q, double rank_tol,
             int depth_limit) {
  if (q.size() != system.dim) throw Error("flag_at: point dimension mismatch");
  const int n = system.dim;
  std::vector<BracketEntry> closure;
  std::vector<int> dims;
  Mat cols(n, 0);
  for (int depth = 1; depth <= depth_limit; ++depth) {
    extend_closure(system, closure, depth);
    std::size_t first = 0;
    while (first < closure.size() && closure[first].word.length() < depth)
      ++first;
    Mat grown(n, cols.cols() + static_cast<Eigen::Index>(closure.size() - first));
    grown.leftCols(cols.cols()) = cols;
    for (std::size_t k = first; k < closure.size(); ++k)
      grown.col(cols.cols() + static_cast<Eigen::Index>(k - first)) =
          closure[k].field(q);
    cols = std::move(grown);
    dims.push_back(numerical_rank(cols, rank_tol));
    if (dims.back() == n) {
      Flag flag;
      flag.point = q;
      flag.dims = dims;
      flag.weights = weights_from_dims(dims);
      flag.step = depth;
      return flag;
    }
  }
  throw StructureError(
      "Hormander check failed: bracket flag stalls at rank " +
      std::to_string(dims.empty() ? 0 : dims.back()) + " of " +
      std::to_string(n) + " within depth " + std::to_string(depth_limit));
}

EquiregularCertificate equiregular_check(const ControlAffineSystem& system,
                                         std::span<const Vec> sample,
                                         double rank_tol) {
  if (sample.empty())
    throw StructureError("equiregular_check needs a nonempty sample");
  EquiregularCertificate cert;
  cert.dims = flag_at(system, sample[0], rank_tol).dims;
  for (const Vec& q : sample) {
    Flag f = flag_at(system, q, rank_tol);
    if (f.dims != cert.dims) {
      cert.passed = false;
      cert.offending_point = q;
      cert.offending_dims = f.dims;
      return cert;
    }
  }
  cert.passed = true;
  return cert;
}

Mat AdaptedFrame::matrix_at(const Vec& q) const {
  Mat m(q.size(), static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) = entries[i].field(q);
  return m;
}

std::vector<int> AdaptedFrame::weights() const {
  std::vector<int> w;
  w.reserve(entries.size());
  for (const FrameEntry& e : entries) w.push_back(e.weight);
  return w;
}

AdaptedFrame adapted_frame_with(const ControlAffineSystem& system,
                                const Vec& q,
                                const std::vector<ForcedFrameEntry>& forced,
                                double rank_tol,
                                std::vector<int>* forced_slots) {
  const int n = system.dim;
  Flag flag = flag_at(system, q, rank_tol);
  for (const ForcedFrameEntry& f : forced)
    if (f.required && f.weight > flag.step)
      throw StructureError("forced frame entry weight exceeds the step");

  std::vector<BracketEntry> closure = bracket_closure(system, flag.step);
  struct Candidate {
    FrameEntry entry;
    int forced_index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(closure.size() + forced.size());
  std::size_t next = 0;
  for (int level = 1; level <= flag.step; ++level) {
    for (std::size_t i = 0; i < forced.size(); ++i)
      if (forced[i].weight == level)
        candidates.push_back({{BracketWord{}, forced[i].field, forced[i].weight,
                               forced[i].is_drift},
                              static_cast<int>(i)});
    while (next < closure.size() && closure[next].word.length() == level) {
      candidates.push_back({{closure[next].word, closure[next].field, 0, false},
                            -1});
      ++next;
    }
  }

  AdaptedFrame frame;
  frame.base = q;
  std::vector<int> slots(forced.size(), -1);
  Mat cols(n, 0);
  for (Candidate& cand : candidates) {
    if (static_cast<int>(frame.entries.size()) == n) break;
    Vec v = cand.entry.field(q);
    Mat grown(n, cols.cols() + 1);
    grown.leftCols(cols.cols()) = cols;
    grown.col(cols.cols()) = v;
    Eigen::JacobiSVD<Mat> svd(grown);
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] < rank_tol * sv[0]) continue;
    cols = std::move(grown);
    if (cand.forced_index >= 0)
      slots[cand.forced_index] = static_cast<int>(frame.entries.size());
    frame.entries.push_back(std::move(cand.entry));
  }
  if (static_cast<int>(frame.entries.size()) != n)
    throw StructureError(
        "failed to complete an adapted frame at the requested point "
        "(rank_tol " + std::to_string(rank_tol) + " leaves " +
        std::to_string(n - static_cast<int>(frame.entries.size())) +
        " slots open)");

  // A forced entry must land on a slot of its own weight; optional entries
  // that miss are dropped and the frame is rebuilt without them.
  for (std::size_t i = 0; i < forced.size(); ++i) {
    bool placed = slots[i] >= 0;
    bool well_placed = placed && flag.weights[slots[i]] == forced[i].weight;
    if (well_placed) continue;
    if (forced[i].required)
      throw StructureError(placed
                               ? "forced frame entry landed on a slot of "
                                 "mismatched weight"
                               : "forced frame entry is dependent on earlier "
                                 "slots");
    std::vector<ForcedFrameEntry> reduced = forced;
    reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(i));
    std::vector<int> reduced_slots;
    AdaptedFrame rebuilt =
        adapted_frame_with(system, q, reduced, rank_tol, &reduced_slots);
    if (forced_slots) {
      forced_slots->assign(forced.size(), -1);
      for (std::size_t j = 0, k = 0; j < forced.size(); ++j)
        if (j != i) (*forced_slots)[j] = reduced_slots[k++];
    }
    return rebuilt;
  }

  for (int i = 0; i < n; ++i) frame.entries[i].weight = flag.weights[i];
  for (std::size_t i = 0; i < forced.size(); ++i)
    if (slots[i] >= 0 && frame.entries[slots[i]].is_drift)
      frame.drift_slot = slots[i];
  if (forced_slots) *forced_slots = slots;
  return frame;
}

AdaptedFrame adapted_frame_at(const ControlAffineSystem& system, const Vec& q,
                              double rank_tol) {
  return adapted_frame_with(system, q, {}, rank_tol);
}

AdaptedFrame drift_adapted_frame_at(const ControlAffineSystem& system,
                                    const Vec& q, double rank_tol) {
  if (!system.has_drift())
    throw StructureError("drift_adapted_frame_at: system has no drift");
  int s = drift_order(system, q, rank_tol);
  if (s == 0) throw StructureError("drift vanishes at the base point");
  return adapted_frame_with(system, q, {{*system.drift, s, true, true}},
                            rank_tol);
}

bool in_span(const Mat& columns, const Vec& v, double rank_tol) {
  double vnorm = v.norm();
  if (vnorm == 0.0) return true;
  if (columns.cols() == 0) return false;
  Vec x = columns.completeOrthogonalDecomposition().solve(v);
  return (columns * x - v).norm() <= rank_tol * vnorm;
}

int drift_order(const ControlAffineSystem& system, const Vec& q,
                double rank_tol) {
  if (!system.has_drift()) throw StructureError("drift_order: drift absent");
  Vec f0 = (*system.drift)(q);
  if (f0.norm() < 1e-14) return 0;
  Flag flag = flag_at(system, q, rank_tol);
  std::vector<BracketEntry> closure = bracket_closure(system, flag.step);
  const int n = system.dim;
  for (int s = 1; s <= flag.step; ++s) {
    Eigen::Index count = 0;
    for (const BracketEntry& e : closure)
      if (e.word.length() <= s) ++count;
    Mat cols(n, count);
    Eigen::Index c = 0;
    for (const BracketEntry& e : closure)
      if (e.word.length() <= s) cols.col(c++) = e.field(q);
    if (in_span(cols, f0, rank_tol)) return s;
  }
  throw StructureError("drift not contained in the full flag; check rank_tol");
}

int tangency_degree(const ControlAffineSystem& system, const PathFn& path,
                    double t, double rank_tol) {
  PathPoint p = path(t);
  if (p.velocity.norm() == 0.0)
    throw StructureError("tangency_degree: vanishing velocity at t = " +
                         std::to_string(t));
  Flag flag = flag_at(system, p.position, rank_tol);
  std::vector<BracketEntry> closure = bracket_closure(system, flag.step);
  const int n = system.dim;
  for (int s = 1; s <= flag.step; ++s) {
    Eigen::Index count = 0;
    for (const BracketEntry& e : closure)
      if (e.word.length() <= s) ++count;
    Mat cols(n, count);
    Eigen::Index c = 0;
    for (const BracketEntry& e : closure)
      if (e.word.length() <= s) cols.col(c++) = e.field(p.position);
    if (in_span(cols, p.velocity, rank_tol)) return s;
  }
  throw StructureError("velocity not contained in the full flag at t = " +
                       std::to_string(t));
}

int max_tangency_degree(const ControlAffineSystem& system, const PathFn& path,
                        double t0, double t1, int grid, double rank_tol) {
  if (grid < 1) throw StructureError("max_tangency_degree: empty grid");
  int best = 0;
  for (int i = 0; i < grid; ++i) {
    double t = grid == 1 ? t0 : t0 + (t1 - t0) * i / (grid - 1);
    PathPoint p = path(t);
    if (p.velocity.norm() == 0.0) continue;
    best = std::max(best, tangency_degree(system, path, t, rank_tol));
  }
  if (best == 0)
    throw StructureError("max_tangency_degree: velocity vanishes on the grid");
  return best;
}

}  // namespace driftlab
