#include "driftlab/field.hpp"

namespace driftlab {

VectorField::VectorField(int dim, std::vector<ScalarExpr> components)
    : dim_(dim) {
  if (dim <= 0) throw Error("vector field dimension must be positive");
  if (static_cast<int>(components.size()) != dim)
    throw Error("component count " + std::to_string(components.size()) +
                " does not match dimension " + std::to_string(dim));
  for (const ScalarExpr& c : components)
    if (c.min_dimension() > dim)
      throw Error("component reads variable beyond dimension " +
                  std::to_string(dim));
  auto data = std::make_shared<Data>();
  data->components = std::move(components);
  data->partials.reserve(static_cast<std::size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      data->partials.push_back(data->components[i].derivative(j));
  data->compiled.reserve(data->components.size());
  for (const ScalarExpr& c : data->components) data->compiled.emplace_back(c);
  data->compiled_partials.reserve(data->partials.size());
  for (const ScalarExpr& p : data->partials)
    data->compiled_partials.emplace_back(p);
  data_ = std::move(data);
}

VectorField VectorField::zero(int dim) {
  return VectorField(dim, std::vector<ScalarExpr>(dim, ScalarExpr()));
}

Vec VectorField::operator()(const Vec& q) const {
  if (q.size() != dim_) throw Error("point dimension mismatch");
  Vec out(dim_);
  eval_into(q.data(), out.data());
  return out;
}

void VectorField::eval_into(const double* q, double* out) const {
  for (int i = 0; i < dim_; ++i) out[i] = data_->compiled[i].eval(q);
}

Mat VectorField::jacobian_at(const Vec& q) const {
  if (q.size() != dim_) throw Error("point dimension mismatch");
  Mat out(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j)
      out(i, j) =
          data_->compiled_partials[static_cast<std::size_t>(i) * dim_ + j]
              .eval(q.data());
  return out;
}

void VectorField::jacobian_into(const double* q, double* out_row_major) const {
  const auto& cp = data_->compiled_partials;
  for (std::size_t k = 0; k < cp.size(); ++k) out_row_major[k] = cp[k].eval(q);
}

bool VectorField::is_zero() const {
  for (const ScalarExpr& c : data_->components)
    if (!c.is_zero()) return false;
  return true;
}

std::string VectorField::str() const {
  std::string out;
  for (int i = 0; i < dim_; ++i) {
    if (i > 0) out += ", ";
    out += data_->components[i].str();
  }
  return out;
}

VectorField parse_field(std::string_view source, int dim) {
  return VectorField(dim, parse_components(source, dim));
}

VectorField lie_bracket(const VectorField& f, const VectorField& g) {
  if (f.dim() != g.dim())
    throw Error("lie_bracket: dimension mismatch (" + std::to_string(f.dim()) +
                " vs " + std::to_string(g.dim()) + ")");
  int n = f.dim();
  std::vector<ScalarExpr> comps;
  comps.reserve(n);
  for (int i = 0; i < n; ++i) {
    ScalarExpr acc;
    for (int j = 0; j < n; ++j)
      acc = acc + g.partial(i, j) * f.component(j) -
            f.partial(i, j) * g.component(j);
    comps.push_back(acc);
  }
  return VectorField(n, std::move(comps));
}

VectorField operator+(const VectorField& f, const VectorField& g) {
  if (f.dim() != g.dim()) throw Error("field sum: dimension mismatch");
  std::vector<ScalarExpr> comps;
  comps.reserve(f.dim());
  for (int i = 0; i < f.dim(); ++i)
    comps.push_back(f.component(i) + g.component(i));
  return VectorField(f.dim(), std::move(comps));
}

VectorField operator*(double c, const VectorField& f) {
  std::vector<ScalarExpr> comps;
  comps.reserve(f.dim());
  for (int i = 0; i < f.dim(); ++i)
    comps.push_back(ScalarExpr::constant(c) * f.component(i));
  return VectorField(f.dim(), std::move(comps));
}

ControlAffineSystem::ControlAffineSystem(int n, std::optional<VectorField> f0,
                                         std::vector<VectorField> fields,
                                         std::string name)
    : dim(n), drift(std::move(f0)), controlled(std::move(fields)),
      label(std::move(name)) {
  if (dim <= 0) throw Error("system dimension must be positive");
  if (controlled.empty()) throw Error("system needs at least one controlled field");
  if (drift && drift->dim() != dim)
    throw Error("drift dimension does not match system dimension");
  for (const VectorField& f : controlled)
    if (f.dim() != dim)
      throw Error("controlled field dimension does not match system dimension");
}

ControlAffineSystem ControlAffineSystem::small_system() const {
  return ControlAffineSystem(dim, std::nullopt, controlled,
                             label.empty() ? label : label + ":small");
}

ControlAffineSystem ControlAffineSystem::big_system() const {
  if (!drift) return small_system();
  std::vector<VectorField> fields;
  fields.reserve(controlled.size() + 1);
  fields.push_back(*drift);
  fields.insert(fields.end(), controlled.begin(), controlled.end());
  return ControlAffineSystem(dim, std::nullopt, std::move(fields),
                             label.empty() ? label : label + ":big");
}

}  // namespace driftlab
