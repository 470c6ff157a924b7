#ifndef DRIFTLAB_EXPR_HPP
#define DRIFTLAB_EXPR_HPP

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace driftlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Division by zero or other pole hit during evaluation.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Syntax or identifier error, with 1-based source location.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

namespace detail {
struct ExprNode;
}

/// Immutable symbolic expression over variables x1..xn, constants, the four
/// arithmetic operations, integer powers, and sin/cos/exp. Construction folds
/// constant subtrees and eliminates additive/multiplicative identities; no
/// further normalization is attempted.
class ScalarExpr {
 public:
  ScalarExpr();  // the zero expression
  static ScalarExpr constant(double value);
  static ScalarExpr variable(int index);  // 0-based

  double operator()(const Vec& x) const { return eval(x.data(), x.size()); }
  double eval(const double* x, Eigen::Index n) const;

  /// Exact partial derivative with respect to variable `var` (0-based).
  ScalarExpr derivative(int var) const;

  bool is_zero() const;
  bool is_constant() const;
  double constant_value() const;  // valid only when is_constant()

  /// Smallest n such that the expression reads only x1..xn.
  int min_dimension() const;

  /// Grammar-conforming rendering; parse(str()) evaluates identically.
  std::string str() const;

  friend ScalarExpr operator+(const ScalarExpr&, const ScalarExpr&);
  friend ScalarExpr operator-(const ScalarExpr&, const ScalarExpr&);
  friend ScalarExpr operator*(const ScalarExpr&, const ScalarExpr&);
  friend ScalarExpr operator/(const ScalarExpr&, const ScalarExpr&);
  friend ScalarExpr operator-(const ScalarExpr&);
  friend ScalarExpr pow(const ScalarExpr&, int exponent);
  friend ScalarExpr sin(const ScalarExpr&);
  friend ScalarExpr cos(const ScalarExpr&);
  friend ScalarExpr exp(const ScalarExpr&);

  const detail::ExprNode* node() const { return node_.get(); }

 private:
  explicit ScalarExpr(std::shared_ptr<const detail::ExprNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<const detail::ExprNode> node_;
};

inline ScalarExpr operator+(const ScalarExpr& a, double b) {
  return a + ScalarExpr::constant(b);
}
inline ScalarExpr operator*(double a, const ScalarExpr& b) {
  return ScalarExpr::constant(a) * b;
}

/// Parses a single expression in the component grammar. Variables above
/// x`dim` are rejected as dimension mismatches.
ScalarExpr parse_scalar(std::string_view source, int dim);

/// Parses a comma-separated component list ("0, 0, 1"); expects exactly
/// `dim` components.
std::vector<ScalarExpr> parse_components(std::string_view source, int dim);

/// Flat postfix tape for fast repeated evaluation of one expression.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const ScalarExpr& e);

  double eval(const double* x) const;

 private:
  enum class Op : std::uint8_t {
    kConst,
    kVar,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kPow,
    kSin,
    kCos,
    kExp,
    kNeg,
  };
  struct Instr {
    Op op;
    std::int32_t arg;
    double value;
  };
  std::vector<Instr> tape_;
  int stack_need_ = 1;
};

}  // namespace driftlab

#endif  // DRIFTLAB_EXPR_HPP
