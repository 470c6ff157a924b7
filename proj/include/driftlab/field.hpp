#ifndef DRIFTLAB_FIELD_HPP
#define DRIFTLAB_FIELD_HPP

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driftlab/expr.hpp"

namespace driftlab {

/// A smooth vector field on R^n with symbolic components. Immutable; the
/// symbolic Jacobian and compiled evaluation tapes are prepared once at
/// construction so evaluation is cheap and thread-safe.
class VectorField {
 public:
  VectorField(int dim, std::vector<ScalarExpr> components);
  static VectorField zero(int dim);

  int dim() const { return dim_; }
  const ScalarExpr& component(int i) const { return data_->components[i]; }
  const ScalarExpr& partial(int i, int j) const {
    return data_->partials[static_cast<std::size_t>(i) * dim_ + j];
  }

  Vec operator()(const Vec& q) const;
  void eval_into(const double* q, double* out) const;

  Mat jacobian_at(const Vec& q) const;
  void jacobian_into(const double* q, double* out_row_major) const;

  bool is_zero() const;
  std::string str() const;  // comma-separated components

 private:
  struct Data {
    std::vector<ScalarExpr> components;
    std::vector<ScalarExpr> partials;  // row-major d components[i] / dx_j
    std::vector<CompiledExpr> compiled;
    std::vector<CompiledExpr> compiled_partials;
  };
  int dim_;
  std::shared_ptr<const Data> data_;
};

VectorField parse_field(std::string_view source, int dim);

/// [f,g] = (Dg)f - (Df)g, computed symbolically.
VectorField lie_bracket(const VectorField& f, const VectorField& g);

VectorField operator+(const VectorField& f, const VectorField& g);
VectorField operator*(double c, const VectorField& f);

/// Control-affine system q' = f0(q) + sum_i u_i f_i(q). A missing drift is
/// the small sub-Riemannian system; big_system() moves the drift into the
/// controlled family.
struct ControlAffineSystem {
  int dim = 0;
  std::optional<VectorField> drift;
  std::vector<VectorField> controlled;
  std::string label;

  ControlAffineSystem() = default;
  ControlAffineSystem(int n, std::optional<VectorField> f0,
                      std::vector<VectorField> fields, std::string name);

  bool has_drift() const { return drift.has_value(); }
  int control_dim() const { return static_cast<int>(controlled.size()); }

  ControlAffineSystem small_system() const;
  ControlAffineSystem big_system() const;
};

}  // namespace driftlab

#endif  // DRIFTLAB_FIELD_HPP
