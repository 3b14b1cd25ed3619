#pragma once

// Closed-form scalar expressions on R^d: exact symbolic partial derivatives,
// numeric evaluation, and a flattened program form for hot loops.

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nilchart {

/// Thrown when a quotient denominator (or a negative power base) vanishes.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, std::string subtree)
      : std::runtime_error(what + ": " + subtree), subtree_(std::move(subtree)) {}
  const std::string& subtree() const noexcept { return subtree_; }

 private:
  std::string subtree_;
};

enum class Op : std::uint8_t { Const, Var, Add, Mul, Div, Pow, Exp, PosPow };

struct Node;

/// Immutable expression handle. Copies share the underlying tree.
class ScalarExpr {
 public:
  ScalarExpr();  // constant 0
  explicit ScalarExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  const Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }

  bool is_constant() const;
  bool is_constant(double v) const;
  double constant_value() const;

 private:
  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int index = 0;       // Var: 0-based variable; Pow/PosPow: exponent
  ScalarExpr a{std::shared_ptr<const Node>()};  // first operand (also the argument of unary nodes)
  ScalarExpr b{std::shared_ptr<const Node>()};  // second operand
};

namespace detail {

inline std::shared_ptr<const Node> make_const_node(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

// Shared constant 0 backing default-constructed expressions.
inline const std::shared_ptr<const Node>& zero_node() {
  static const std::shared_ptr<const Node> z = [] {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = 0.0;
    return std::shared_ptr<const Node>(n);
  }();
  return z;
}

}  // namespace detail

inline ScalarExpr::ScalarExpr() : node_(detail::zero_node()) {}
inline bool ScalarExpr::is_constant() const { return node_->op == Op::Const; }
inline bool ScalarExpr::is_constant(double v) const {
  return node_->op == Op::Const && node_->value == v;
}
inline double ScalarExpr::constant_value() const { return node_->value; }

// ---------------------------------------------------------------------------
// Construction with constant folding and 0/1 absorption only.

inline ScalarExpr constant(double v) { return ScalarExpr(detail::make_const_node(v)); }

inline ScalarExpr variable(int i) {
  if (i < 0) throw std::invalid_argument("variable index must be non-negative");
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->index = i;
  return ScalarExpr(n);
}

namespace detail {
inline ScalarExpr make_binary(Op op, ScalarExpr a, ScalarExpr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return ScalarExpr(n);
}
inline ScalarExpr make_unary(Op op, ScalarExpr a, int k = 0) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->index = k;
  return ScalarExpr(n);
}
}  // namespace detail

inline ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant()) return constant(a.constant_value() + b.constant_value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return detail::make_binary(Op::Add, a, b);
}

inline ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant()) return constant(a.constant_value() * b.constant_value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  // c1 * (c2 * e) -> (c1 c2) * e
  if (a.is_constant() && b.node().op == Op::Mul && b.node().a.is_constant())
    return constant(a.constant_value() * b.node().a.constant_value()) * b.node().b;
  if (b.is_constant()) return b * a;
  return detail::make_binary(Op::Mul, a, b);
}

inline ScalarExpr operator-(const ScalarExpr& a) { return constant(-1.0) * a; }
inline ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b) { return a + (-b); }

inline ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
    return constant(a.constant_value() / b.constant_value());
  if (a.is_constant(0.0)) return constant(0.0);
  if (b.is_constant(1.0)) return a;
  return detail::make_binary(Op::Div, a, b);
}

inline ScalarExpr pow(const ScalarExpr& a, int k) {
  if (k == 0) return constant(1.0);
  if (k == 1) return a;
  if (a.is_constant() && (a.constant_value() != 0.0 || k > 0))
    return constant(std::pow(a.constant_value(), k));
  return detail::make_unary(Op::Pow, a, k);
}

inline ScalarExpr exp(const ScalarExpr& a) {
  if (a.is_constant()) return constant(std::exp(a.constant_value()));
  return detail::make_unary(Op::Exp, a);
}

/// arg^k where arg >= 0, and 0 otherwise. k = 0 is the Heaviside step.
inline ScalarExpr pospow(const ScalarExpr& a, int k) {
  if (k < 0) throw std::invalid_argument("pospow exponent must be non-negative");
  if (a.is_constant()) {
    double v = a.constant_value();
    return constant(v >= 0.0 ? (k == 0 ? 1.0 : std::pow(v, k)) : 0.0);
  }
  return detail::make_unary(Op::PosPow, a, k);
}

inline ScalarExpr operator+(const ScalarExpr& a, double b) { return a + constant(b); }
inline ScalarExpr operator+(double a, const ScalarExpr& b) { return constant(a) + b; }
inline ScalarExpr operator-(const ScalarExpr& a, double b) { return a - constant(b); }
inline ScalarExpr operator-(double a, const ScalarExpr& b) { return constant(a) - b; }
inline ScalarExpr operator*(double a, const ScalarExpr& b) { return constant(a) * b; }
inline ScalarExpr operator*(const ScalarExpr& a, double b) { return a * constant(b); }
inline ScalarExpr operator/(const ScalarExpr& a, double b) { return a / constant(b); }
inline ScalarExpr operator/(double a, const ScalarExpr& b) { return constant(a) / b; }

// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void print(const ScalarExpr& e, std::ostream& os) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Const:
      if (n.value < 0.0)
        os << "(-" << format_number(-n.value) << ")";
      else
        os << format_number(n.value);
      break;
    case Op::Var: os << "x" << (n.index + 1); break;
    case Op::Add:
      os << "(";
      print(n.a, os);
      os << " + ";
      print(n.b, os);
      os << ")";
      break;
    case Op::Mul:
      os << "(";
      print(n.a, os);
      os << " * ";
      print(n.b, os);
      os << ")";
      break;
    case Op::Div:
      os << "(";
      print(n.a, os);
      os << " / ";
      print(n.b, os);
      os << ")";
      break;
    case Op::Pow:
      os << "(";
      print(n.a, os);
      os << ")^" << n.index;
      break;
    case Op::Exp:
      os << "exp(";
      print(n.a, os);
      os << ")";
      break;
    case Op::PosPow:
      os << "pospow(";
      print(n.a, os);
      os << ", " << n.index << ")";
      break;
  }
}

}  // namespace detail

/// Infix rendering accepted back by parse_expression.
inline std::string to_string(const ScalarExpr& e) {
  std::ostringstream os;
  detail::print(e, os);
  return os.str();
}

/// Largest variable index referenced, or -1 for a constant expression.
inline int max_variable(const ScalarExpr& e) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Const: return -1;
    case Op::Var: return n.index;
    case Op::Add:
    case Op::Mul:
    case Op::Div: return std::max(max_variable(n.a), max_variable(n.b));
    default: return max_variable(n.a);
  }
}

// ---------------------------------------------------------------------------
// Differentiation. Shared subtrees are differentiated once per call.

namespace detail {

class Differentiator {
 public:
  explicit Differentiator(int var) : var_(var) {}

  ScalarExpr operator()(const ScalarExpr& e) {
    auto it = memo_.find(e.get());
    if (it != memo_.end()) return it->second;
    ScalarExpr d = compute(e);
    memo_.emplace(e.get(), d);
    return d;
  }

 private:
  ScalarExpr compute(const ScalarExpr& e) {
    const Node& n = e.node();
    switch (n.op) {
      case Op::Const: return constant(0.0);
      case Op::Var: return constant(n.index == var_ ? 1.0 : 0.0);
      case Op::Add: return (*this)(n.a) + (*this)(n.b);
      case Op::Mul: return (*this)(n.a) * n.b + n.a * (*this)(n.b);
      case Op::Div: {
        ScalarExpr da = (*this)(n.a);
        ScalarExpr db = (*this)(n.b);
        return da / n.b - n.a * db / pow(n.b, 2);
      }
      case Op::Pow:
        return constant(n.index) * pow(n.a, n.index - 1) * (*this)(n.a);
      case Op::Exp: return e * (*this)(n.a);
      case Op::PosPow:
        if (n.index == 0) return constant(0.0);
        return constant(n.index) * pospow(n.a, n.index - 1) * (*this)(n.a);
    }
    return constant(0.0);
  }

  int var_;
  std::unordered_map<const Node*, ScalarExpr> memo_;
};

}  // namespace detail

/// Exact partial derivative with respect to the 0-based variable i.
inline ScalarExpr differentiate(const ScalarExpr& e, int i) {
  return detail::Differentiator(i)(e);
}

/// Replace each variable x_i by replacements[i].
inline ScalarExpr substitute(const ScalarExpr& e, const std::vector<ScalarExpr>& replacements) {
  std::unordered_map<const Node*, ScalarExpr> memo;
  auto rec = [&](auto&& self, const ScalarExpr& x) -> ScalarExpr {
    auto it = memo.find(x.get());
    if (it != memo.end()) return it->second;
    const Node& n = x.node();
    ScalarExpr r;
    switch (n.op) {
      case Op::Const: r = x; break;
      case Op::Var:
        if (n.index >= static_cast<int>(replacements.size()))
          throw std::out_of_range("substitute: missing replacement for x" + std::to_string(n.index + 1));
        r = replacements[n.index];
        break;
      case Op::Add: r = self(self, n.a) + self(self, n.b); break;
      case Op::Mul: r = self(self, n.a) * self(self, n.b); break;
      case Op::Div: r = self(self, n.a) / self(self, n.b); break;
      case Op::Pow: r = pow(self(self, n.a), n.index); break;
      case Op::Exp: r = exp(self(self, n.a)); break;
      case Op::PosPow: r = pospow(self(self, n.a), n.index); break;
    }
    memo.emplace(x.get(), r);
    return r;
  };
  return rec(rec, e);
}

// ---------------------------------------------------------------------------
// Evaluation.

namespace detail {

inline double eval_pow(double base, int k, const Node& n) {
  if (k < 0 && base == 0.0) throw EvaluationError("negative power of zero", to_string(n.a));
  return std::pow(base, k);
}

inline double eval_pospow(double base, int k) {
  if (base < 0.0) return 0.0;
  return k == 0 ? 1.0 : std::pow(base, k);
}

}  // namespace detail

/// Tree-walking evaluation; convenient but slower than Program.
inline double evaluate(const ScalarExpr& e, const double* x) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return x[n.index];
    case Op::Add: return evaluate(n.a, x) + evaluate(n.b, x);
    case Op::Mul: return evaluate(n.a, x) * evaluate(n.b, x);
    case Op::Div: {
      double den = evaluate(n.b, x);
      if (den == 0.0) throw EvaluationError("division by zero", to_string(n.b));
      return evaluate(n.a, x) / den;
    }
    case Op::Pow: return detail::eval_pow(evaluate(n.a, x), n.index, n);
    case Op::Exp: return std::exp(evaluate(n.a, x));
    case Op::PosPow: return detail::eval_pospow(evaluate(n.a, x), n.index);
  }
  return 0.0;
}

inline double evaluate(const ScalarExpr& e, const std::vector<double>& x) {
  int mv = max_variable(e);
  if (mv >= static_cast<int>(x.size()))
    throw std::out_of_range("evaluate: point has dimension " + std::to_string(x.size()) +
                            " but expression uses x" + std::to_string(mv + 1));
  return evaluate(e, x.data());
}

/// True if some pospow argument lies within h of its kink at x.
inline bool near_kink(const ScalarExpr& e, const double* x, double h) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Const:
    case Op::Var: return false;
    case Op::Add:
    case Op::Mul:
    case Op::Div: return near_kink(n.a, x, h) || near_kink(n.b, x, h);
    case Op::PosPow:
      if (std::abs(evaluate(n.a, x)) < h) return true;
      return near_kink(n.a, x, h);
    default: return near_kink(n.a, x, h);
  }
}

/// A list of expressions flattened into one instruction tape. Common
/// subtrees (by identity) are evaluated once.
class Program {
 public:
  Program() = default;
  explicit Program(const std::vector<ScalarExpr>& outputs) {
    std::unordered_map<const Node*, int> slot;
    outputs_.reserve(outputs.size());
    for (const auto& e : outputs) outputs_.push_back(emit(e, slot));
  }

  std::size_t output_count() const { return outputs_.size(); }
  std::size_t size() const { return tape_.size(); }
  int arity() const { return arity_; }

  /// Writes output_count() values to out. scratch is resized as needed.
  void eval(const double* x, double* out, std::vector<double>& scratch) const {
    scratch.resize(tape_.size());
    double* v = scratch.data();
    for (std::size_t i = 0; i < tape_.size(); ++i) {
      const Instr& in = tape_[i];
      switch (in.op) {
        case Op::Const: v[i] = in.c; break;
        case Op::Var: v[i] = x[in.k]; break;
        case Op::Add: v[i] = v[in.a] + v[in.b]; break;
        case Op::Mul: v[i] = v[in.a] * v[in.b]; break;
        case Op::Div:
          if (v[in.b] == 0.0) throw EvaluationError("division by zero", to_string(in.src->b));
          v[i] = v[in.a] / v[in.b];
          break;
        case Op::Pow: v[i] = detail::eval_pow(v[in.a], in.k, *in.src); break;
        case Op::Exp: v[i] = std::exp(v[in.a]); break;
        case Op::PosPow: v[i] = detail::eval_pospow(v[in.a], in.k); break;
      }
    }
    for (std::size_t o = 0; o < outputs_.size(); ++o) out[o] = v[outputs_[o]];
  }

  void eval(const double* x, double* out) const {
    std::vector<double> scratch;
    eval(x, out, scratch);
  }

  std::vector<double> operator()(const std::vector<double>& x) const {
    std::vector<double> out(outputs_.size());
    eval(x.data(), out.data());
    return out;
  }

 private:
  struct Instr {
    Op op;
    int a = 0, b = 0, k = 0;
    double c = 0.0;
    const Node* src = nullptr;
  };

  int emit(const ScalarExpr& e, std::unordered_map<const Node*, int>& slot) {
    auto it = slot.find(e.get());
    if (it != slot.end()) return it->second;
    const Node& n = e.node();
    Instr in;
    in.op = n.op;
    in.src = &n;
    switch (n.op) {
      case Op::Const: in.c = n.value; break;
      case Op::Var:
        in.k = n.index;
        arity_ = std::max(arity_, n.index + 1);
        break;
      case Op::Add:
      case Op::Mul:
      case Op::Div:
        in.a = emit(n.a, slot);
        in.b = emit(n.b, slot);
        break;
      default:
        in.a = emit(n.a, slot);
        in.k = n.index;
        break;
    }
    keep_.push_back(e);
    tape_.push_back(in);
    int id = static_cast<int>(tape_.size()) - 1;
    slot.emplace(e.get(), id);
    return id;
  }

  std::vector<Instr> tape_;
  std::vector<int> outputs_;
  std::vector<ScalarExpr> keep_;  // owns the nodes referenced by src
  int arity_ = 0;
};

}  // namespace nilchart
