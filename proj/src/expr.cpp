#include "driftlab/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace driftlab {
namespace detail {

enum class Kind : std::uint8_t {
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

struct ExprNode {
  Kind kind;
  double value = 0.0;    // kConst
  int index = 0;         // kVar
  int exponent = 0;      // kPow
  std::shared_ptr<const ExprNode> a;
  std::shared_ptr<const ExprNode> b;
};

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::kConst;
  n->value = v;
  return n;
}

NodePtr make_var(int i) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::kVar;
  n->index = i;
  return n;
}

NodePtr make_node(Kind k, NodePtr a, NodePtr b = nullptr, int exponent = 0) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  n->exponent = exponent;
  return n;
}

bool is_const(const NodePtr& n, double v) {
  return n->kind == Kind::kConst && n->value == v;
}

double ipow(double base, int e) {
  if (e == 0) return 1.0;
  bool neg = e < 0;
  unsigned k = neg ? static_cast<unsigned>(-(long long)e)
                   : static_cast<unsigned>(e);
  double acc = 1.0, p = base;
  while (k != 0) {
    if (k & 1u) acc *= p;
    p *= p;
    k >>= 1;
  }
  if (neg) {
    if (acc == 0.0) throw EvalError("pole: zero raised to a negative power");
    return 1.0 / acc;
  }
  return acc;
}

// Smart constructors: constant folding plus zero/one elimination only.
NodePtr add(NodePtr a, NodePtr b) {
  if (a->kind == Kind::kConst && b->kind == Kind::kConst)
    return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_node(Kind::kAdd, std::move(a), std::move(b));
}

NodePtr neg(NodePtr a) {
  if (a->kind == Kind::kConst) return make_const(-a->value);
  if (a->kind == Kind::kNeg) return a->a;
  return make_node(Kind::kNeg, std::move(a));
}

NodePtr sub(NodePtr a, NodePtr b) {
  if (a->kind == Kind::kConst && b->kind == Kind::kConst)
    return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(std::move(b));
  return make_node(Kind::kSub, std::move(a), std::move(b));
}

NodePtr mul(NodePtr a, NodePtr b) {
  if (a->kind == Kind::kConst && b->kind == Kind::kConst)
    return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return neg(std::move(b));
  if (is_const(b, -1.0)) return neg(std::move(a));
  return make_node(Kind::kMul, std::move(a), std::move(b));
}

NodePtr div(NodePtr a, NodePtr b) {
  if (b->kind == Kind::kConst) {
    if (b->value == 0.0) throw EvalError("division by the zero constant");
    if (a->kind == Kind::kConst) return make_const(a->value / b->value);
    if (b->value == 1.0) return a;
  }
  if (is_const(a, 0.0)) return a;
  return make_node(Kind::kDiv, std::move(a), std::move(b));
}

NodePtr pown(NodePtr a, int e) {
  if (e == 1) return a;
  if (e == 0) return make_const(1.0);
  if (a->kind == Kind::kConst) return make_const(ipow(a->value, e));
  return make_node(Kind::kPow, std::move(a), nullptr, e);
}

NodePtr unary(Kind k, NodePtr a) {
  if (a->kind == Kind::kConst) {
    switch (k) {
      case Kind::kSin: return make_const(std::sin(a->value));
      case Kind::kCos: return make_const(std::cos(a->value));
      case Kind::kExp: return make_const(std::exp(a->value));
      default: break;
    }
  }
  return make_node(k, std::move(a));
}

double eval_node(const ExprNode* n, const double* x, Eigen::Index dim) {
  switch (n->kind) {
    case Kind::kConst: return n->value;
    case Kind::kVar:
      if (n->index >= dim)
        throw EvalError("variable x" + std::to_string(n->index + 1) +
                        " out of range for point of dimension " +
                        std::to_string(dim));
      return x[n->index];
    case Kind::kAdd:
      return eval_node(n->a.get(), x, dim) + eval_node(n->b.get(), x, dim);
    case Kind::kSub:
      return eval_node(n->a.get(), x, dim) - eval_node(n->b.get(), x, dim);
    case Kind::kMul:
      return eval_node(n->a.get(), x, dim) * eval_node(n->b.get(), x, dim);
    case Kind::kDiv: {
      double num = eval_node(n->a.get(), x, dim);
      double den = eval_node(n->b.get(), x, dim);
      if (den == 0.0) throw EvalError("pole: division by zero");
      return num / den;
    }
    case Kind::kPow: return ipow(eval_node(n->a.get(), x, dim), n->exponent);
    case Kind::kSin: return std::sin(eval_node(n->a.get(), x, dim));
    case Kind::kCos: return std::cos(eval_node(n->a.get(), x, dim));
    case Kind::kExp: return std::exp(eval_node(n->a.get(), x, dim));
    case Kind::kNeg: return -eval_node(n->a.get(), x, dim);
  }
  throw Error("corrupt expression node");
}

NodePtr diff_node(const NodePtr& n, int var) {
  switch (n->kind) {
    case Kind::kConst: return make_const(0.0);
    case Kind::kVar: return make_const(n->index == var ? 1.0 : 0.0);
    case Kind::kAdd: return add(diff_node(n->a, var), diff_node(n->b, var));
    case Kind::kSub: return sub(diff_node(n->a, var), diff_node(n->b, var));
    case Kind::kMul:
      return add(mul(diff_node(n->a, var), n->b),
                 mul(n->a, diff_node(n->b, var)));
    case Kind::kDiv:
      return div(sub(mul(diff_node(n->a, var), n->b),
                     mul(n->a, diff_node(n->b, var))),
                 pown(n->b, 2));
    case Kind::kPow:
      return mul(mul(make_const(n->exponent), pown(n->a, n->exponent - 1)),
                 diff_node(n->a, var));
    case Kind::kSin: return mul(unary(Kind::kCos, n->a), diff_node(n->a, var));
    case Kind::kCos:
      return neg(mul(unary(Kind::kSin, n->a), diff_node(n->a, var)));
    case Kind::kExp: return mul(unary(Kind::kExp, n->a), diff_node(n->a, var));
    case Kind::kNeg: return neg(diff_node(n->a, var));
  }
  throw Error("corrupt expression node");
}

int min_dim_node(const ExprNode* n) {
  switch (n->kind) {
    case Kind::kConst: return 0;
    case Kind::kVar: return n->index + 1;
    default: {
      int d = n->a ? min_dim_node(n->a.get()) : 0;
      if (n->b) d = std::max(d, min_dim_node(n->b.get()));
      return d;
    }
  }
}

// Precedence levels for printing: additive 1, multiplicative 2, power 3.
int precedence(Kind k) {
  switch (k) {
    case Kind::kAdd:
    case Kind::kSub:
    case Kind::kNeg: return 1;
    case Kind::kMul:
    case Kind::kDiv: return 2;
    case Kind::kPow: return 3;
    default: return 4;
  }
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void print_node(const ExprNode* n, std::string& out, int parent_prec) {
  int prec = precedence(n->kind);
  bool parens = prec < parent_prec;
  if (parens) out += '(';
  switch (n->kind) {
    case Kind::kConst:
      if (n->value < 0.0 || std::signbit(n->value)) {
        // Negative literals are not in the grammar; print as 0 - |c| unless
        // already shielded by parentheses from the caller.
        out += "(0 - ";
        out += format_double(-n->value);
        out += ')';
      } else {
        out += format_double(n->value);
      }
      break;
    case Kind::kVar:
      out += 'x';
      out += std::to_string(n->index + 1);
      break;
    case Kind::kAdd:
      print_node(n->a.get(), out, 1);
      out += " + ";
      print_node(n->b.get(), out, 2);
      break;
    case Kind::kSub:
      print_node(n->a.get(), out, 1);
      out += " - ";
      print_node(n->b.get(), out, 2);
      break;
    case Kind::kMul:
      print_node(n->a.get(), out, 2);
      out += " * ";
      print_node(n->b.get(), out, 3);
      break;
    case Kind::kDiv:
      print_node(n->a.get(), out, 2);
      out += " / ";
      print_node(n->b.get(), out, 3);
      break;
    case Kind::kPow:
      print_node(n->a.get(), out, 4);
      out += '^';
      out += std::to_string(n->exponent);
      break;
    case Kind::kSin:
      out += "sin(";
      print_node(n->a.get(), out, 0);
      out += ')';
      break;
    case Kind::kCos:
      out += "cos(";
      print_node(n->a.get(), out, 0);
      out += ')';
      break;
    case Kind::kExp:
      out += "exp(";
      print_node(n->a.get(), out, 0);
      out += ')';
      break;
    case Kind::kNeg:
      out += "0 - ";
      print_node(n->a.get(), out, 2);
      break;
  }
  if (parens) out += ')';
}

}  // namespace detail

using detail::Kind;
using detail::NodePtr;

ScalarExpr::ScalarExpr() : node_(detail::make_const(0.0)) {}

ScalarExpr ScalarExpr::constant(double value) {
  return ScalarExpr(detail::make_const(value));
}

ScalarExpr ScalarExpr::variable(int index) {
  if (index < 0) throw Error("variable index must be non-negative");
  return ScalarExpr(detail::make_var(index));
}

double ScalarExpr::eval(const double* x, Eigen::Index n) const {
  return detail::eval_node(node_.get(), x, n);
}

ScalarExpr ScalarExpr::derivative(int var) const {
  return ScalarExpr(detail::diff_node(node_, var));
}

bool ScalarExpr::is_zero() const { return detail::is_const(node_, 0.0); }

bool ScalarExpr::is_constant() const {
  return node_->kind == Kind::kConst;
}

double ScalarExpr::constant_value() const {
  if (!is_constant()) throw Error("expression is not a constant");
  return node_->value;
}

int ScalarExpr::min_dimension() const {
  return detail::min_dim_node(node_.get());
}

std::string ScalarExpr::str() const {
  std::string out;
  detail::print_node(node_.get(), out, 0);
  return out;
}

ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b) {
  return ScalarExpr(detail::add(a.node_, b.node_));
}
ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b) {
  return ScalarExpr(detail::sub(a.node_, b.node_));
}
ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b) {
  return ScalarExpr(detail::mul(a.node_, b.node_));
}
ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b) {
  return ScalarExpr(detail::div(a.node_, b.node_));
}
ScalarExpr operator-(const ScalarExpr& a) {
  return ScalarExpr(detail::neg(a.node_));
}
ScalarExpr pow(const ScalarExpr& a, int exponent) {
  return ScalarExpr(detail::pown(a.node_, exponent));
}
ScalarExpr sin(const ScalarExpr& a) {
  return ScalarExpr(detail::unary(Kind::kSin, a.node_));
}
ScalarExpr cos(const ScalarExpr& a) {
  return ScalarExpr(detail::unary(Kind::kCos, a.node_));
}
ScalarExpr exp(const ScalarExpr& a) {
  return ScalarExpr(detail::unary(Kind::kExp, a.node_));
}

namespace {

// Recursive-descent parser for
//   expr   := ('+'|'-')? term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' integer)?
//   base   := number | 'x'index | '(' expr ')' | func '(' expr ')'
// The optional leading sign is a convenience superset of the grammar.
class Parser {
 public:
  Parser(std::string_view src, int dim) : src_(src), dim_(dim) {}

  ScalarExpr parse_expression() {
    ScalarExpr e = parse_expr();
    skip_ws();
    if (!at_end()) fail("unexpected trailing input");
    return e;
  }

 private:
  std::string_view src_;
  int dim_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek())))
      advance();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line_, col_);
  }

  bool consume(char c) {
    skip_ws();
    if (!at_end() && peek() == c) {
      advance();
      return true;
    }
    return false;
  }

  ScalarExpr parse_expr() {
    skip_ws();
    bool negate = false;
    if (!at_end() && (peek() == '-' || peek() == '+')) {
      negate = peek() == '-';
      advance();
    }
    ScalarExpr acc = parse_term();
    if (negate) acc = -acc;
    for (;;) {
      skip_ws();
      if (at_end()) break;
      char c = peek();
      if (c == '+') {
        advance();
        acc = acc + parse_term();
      } else if (c == '-') {
        advance();
        acc = acc - parse_term();
      } else {
        break;
      }
    }
    return acc;
  }

  ScalarExpr parse_term() {
    ScalarExpr acc = parse_factor();
    for (;;) {
      skip_ws();
      if (at_end()) break;
      char c = peek();
      if (c == '*') {
        advance();
        acc = acc * parse_factor();
      } else if (c == '/') {
        advance();
        acc = acc / parse_factor();
      } else {
        break;
      }
    }
    return acc;
  }

  ScalarExpr parse_factor() {
    ScalarExpr base = parse_base();
    skip_ws();
    if (!at_end() && peek() == '^') {
      advance();
      skip_ws();
      bool neg_exp = false;
      if (!at_end() && (peek() == '-' || peek() == '+')) {
        neg_exp = peek() == '-';
        advance();
      }
      if (at_end() || !std::isdigit(static_cast<unsigned char>(peek())))
        fail("expected integer exponent after '^'");
      long e = 0;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
        e = e * 10 + (peek() - '0');
        if (e > 64) fail("exponent too large");
        advance();
      }
      return pow(base, static_cast<int>(neg_exp ? -e : e));
    }
    return base;
  }

  ScalarExpr parse_base() {
    skip_ws();
    if (at_end()) fail("unexpected end of expression");
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return parse_number();
    if (c == '(') {
      advance();
      ScalarExpr e = parse_expr();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  ScalarExpr parse_number() {
    std::size_t start = pos_;
    int start_line = line_, start_col = col_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) ||
                         peek() == '.'))
      advance();
    if (!at_end() && (peek() == 'e' || peek() == 'E')) {
      std::size_t mark = pos_;
      advance();
      if (!at_end() && (peek() == '+' || peek() == '-')) advance();
      if (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek())))
          advance();
      } else {
        pos_ = mark;  // 'e' belonged to something else; not a valid exponent
      }
    }
    std::string text(src_.substr(start, pos_ - start));
    double value = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
      throw ParseError("malformed number '" + text + "'", start_line,
                       start_col);
    return ScalarExpr::constant(value);
  }

  ScalarExpr parse_identifier() {
    int start_line = line_, start_col = col_;
    std::string name;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) {
      name += peek();
      advance();
    }
    if (name == "sin" || name == "cos" || name == "exp") {
      if (!consume('(')) fail("expected '(' after function name");
      ScalarExpr arg = parse_expr();
      if (!consume(')')) fail("expected ')'");
      if (name == "sin") return sin(arg);
      if (name == "cos") return cos(arg);
      return exp(arg);
    }
    if (name == "x") {
      if (at_end() || !std::isdigit(static_cast<unsigned char>(peek())))
        throw ParseError("expected variable index after 'x'", start_line,
                         start_col);
      long idx = 0;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
        idx = idx * 10 + (peek() - '0');
        if (idx > 1000000) fail("variable index too large");
        advance();
      }
      if (idx < 1)
        throw ParseError("variable indices start at x1", start_line,
                         start_col);
      if (idx > dim_)
        throw ParseError("dimension mismatch: x" + std::to_string(idx) +
                             " exceeds declared dimension " +
                             std::to_string(dim_),
                         start_line, start_col);
      return ScalarExpr::variable(static_cast<int>(idx - 1));
    }
    throw ParseError("unknown identifier '" + name + "'", start_line,
                     start_col);
  }
};

}  // namespace

ScalarExpr parse_scalar(std::string_view source, int dim) {
  return Parser(source, dim).parse_expression();
}

std::vector<ScalarExpr> parse_components(std::string_view source, int dim) {
  // Split on top-level commas; the grammar has no commas inside expressions,
  // but parenthesis tracking keeps error positions honest.
  std::vector<ScalarExpr> out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i <= source.size(); ++i) {
    if (i < source.size()) {
      char c = source[i];
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c != ',' || depth != 0) continue;
    }
    out.push_back(Parser(source.substr(start, i - start), dim)
                      .parse_expression());
    start = i + 1;
  }
  if (static_cast<int>(out.size()) != dim)
    throw ParseError("dimension mismatch: expected " + std::to_string(dim) +
                         " components, found " + std::to_string(out.size()),
                     1, 1);
  return out;
}

CompiledExpr::CompiledExpr(const ScalarExpr& e) {
  // Post-order flattening.
  struct Frame {
    const detail::ExprNode* node;
    bool expanded;
  };
  std::vector<Frame> stack{{e.node(), false}};
  std::vector<int> depth_stack;
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const auto* n = f.node;
    if (!f.expanded) {
      stack.push_back({n, true});
      if (n->b) stack.push_back({n->b.get(), false});
      if (n->a) stack.push_back({n->a.get(), false});
      continue;
    }
    switch (n->kind) {
      case Kind::kConst: tape_.push_back({Op::kConst, 0, n->value}); break;
      case Kind::kVar: tape_.push_back({Op::kVar, n->index, 0.0}); break;
      case Kind::kAdd: tape_.push_back({Op::kAdd, 0, 0.0}); break;
      case Kind::kSub: tape_.push_back({Op::kSub, 0, 0.0}); break;
      case Kind::kMul: tape_.push_back({Op::kMul, 0, 0.0}); break;
      case Kind::kDiv: tape_.push_back({Op::kDiv, 0, 0.0}); break;
      case Kind::kPow: tape_.push_back({Op::kPow, n->exponent, 0.0}); break;
      case Kind::kSin: tape_.push_back({Op::kSin, 0, 0.0}); break;
      case Kind::kCos: tape_.push_back({Op::kCos, 0, 0.0}); break;
      case Kind::kExp: tape_.push_back({Op::kExp, 0, 0.0}); break;
      case Kind::kNeg: tape_.push_back({Op::kNeg, 0, 0.0}); break;
    }
  }
  int depth = 0;
  stack_need_ = 1;
  for (const Instr& ins : tape_) {
    switch (ins.op) {
      case Op::kConst:
      case Op::kVar: ++depth; break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: --depth; break;
      default: break;
    }
    stack_need_ = std::max(stack_need_, depth);
  }
}

double CompiledExpr::eval(const double* x) const {
  thread_local std::vector<double> scratch;
  if (static_cast<int>(scratch.size()) < stack_need_)
    scratch.resize(static_cast<std::size_t>(stack_need_));
  double* s = scratch.data();
  int top = -1;
  for (const Instr& ins : tape_) {
    switch (ins.op) {
      case Op::kConst: s[++top] = ins.value; break;
      case Op::kVar: s[++top] = x[ins.arg]; break;
      case Op::kAdd: --top; s[top] += s[top + 1]; break;
      case Op::kSub: --top; s[top] -= s[top + 1]; break;
      case Op::kMul: --top; s[top] *= s[top + 1]; break;
      case Op::kDiv:
        --top;
        if (s[top + 1] == 0.0) throw EvalError("pole: division by zero");
        s[top] /= s[top + 1];
        break;
      case Op::kPow: s[top] = detail::ipow(s[top], ins.arg); break;
      case Op::kSin: s[top] = std::sin(s[top]); break;
      case Op::kCos: s[top] = std::cos(s[top]); break;
      case Op::kExp: s[top] = std::exp(s[top]); break;
      case Op::kNeg: s[top] = -s[top]; break;
    }
  }
  return s[0];
}

}  // namespace driftlab
