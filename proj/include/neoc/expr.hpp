#pragma once

// Scalar expression trees: parsing, printing, evaluation, symbolic
// differentiation and simplification. Problem files describe f, g and m with
// this syntax, and every parameter/state derivative the solvers need is
// produced here.
//
// Grammar (`^` and `**` are the same operator, right associative):
//   sum     := signed (('+' | '-') signed)*
//   signed  := ('-' | '+') signed | product
//   product := factor (('*' | '/') factor)*
//   factor  := '-' factor | power
//   power   := atom (('^' | '**') factor)?
//   atom    := number | name | name '(' sum ')' | '(' sum ')'

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "neoc/error.hpp"

namespace neoc {

enum class Op : std::uint8_t {
  constant,
  variable,
  neg,
  sin,
  cos,
  exp,
  log,
  sqrt,
  abs,
  sgn,
  add,
  sub,
  mul,
  div,
  pow,
};

constexpr bool is_unary(Op op) noexcept {
  return op == Op::neg || op == Op::sin || op == Op::cos || op == Op::exp || op == Op::log ||
         op == Op::sqrt || op == Op::abs || op == Op::sgn;
}

constexpr bool is_binary(Op op) noexcept {
  return op == Op::add || op == Op::sub || op == Op::mul || op == Op::div || op == Op::pow;
}

constexpr bool is_function(Op op) noexcept { return is_unary(op) && op != Op::neg; }

inline std::string_view function_name(Op op) {
  switch (op) {
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::abs: return "abs";
    case Op::sgn: return "sgn";
    default: return "";
  }
}

inline bool lookup_function(std::string_view name, Op& out) {
  static constexpr std::array<Op, 7> kFunctions{Op::sin, Op::cos, Op::exp, Op::log,
                                                Op::sqrt, Op::abs, Op::sgn};
  for (Op op : kFunctions) {
    if (function_name(op) == name) {
      out = op;
      return true;
    }
  }
  return false;
}

// Immutable handle to a shared expression tree.
//
// The `smooth` flag is cleared on derivatives taken through abs/sgn: such a
// derivative is only valid away from the kink (where it is defined as zero).
class Expr {
 public:
  struct Node;

  Expr();

  static Expr constant(double value);
  static Expr variable(std::string name);
  static Expr unary(Op op, Expr arg);
  static Expr binary(Op op, Expr lhs, Expr rhs);

  Op op() const;
  double value() const;
  const std::string& name() const;
  const Expr& arg() const;
  const Expr& lhs() const;
  const Expr& rhs() const;

  bool is_constant() const { return op() == Op::constant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  bool smooth() const noexcept { return smooth_; }
  Expr with_smooth(bool smooth) const {
    Expr copy = *this;
    copy.smooth_ = smooth;
    return copy;
  }

  const Node* node() const noexcept { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> node, bool smooth = true)
      : node_(std::move(node)), smooth_(smooth) {}

  std::shared_ptr<const Node> node_;
  bool smooth_ = true;
};

struct Expr::Node {
  Op op = Op::constant;
  double value = 0.0;
  std::string name;
  Expr lhs;  // unary operand, or left operand
  Expr rhs;
};

// A default Expr is the constant 0.
inline Expr::Expr() : node_(nullptr) {}

inline Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::constant;
  n->value = value;
  return Expr(std::move(n));
}

inline Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::variable;
  n->name = std::move(name);
  return Expr(std::move(n));
}

inline Expr Expr::unary(Op op, Expr arg) {
  auto n = std::make_shared<Node>();
  n->op = op;
  const bool smooth = arg.smooth();
  n->lhs = std::move(arg);
  return Expr(std::move(n), smooth);
}

inline Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  const bool smooth = lhs.smooth() && rhs.smooth();
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return Expr(std::move(n), smooth);
}

inline Op Expr::op() const { return node_ ? node_->op : Op::constant; }
inline double Expr::value() const { return node_ ? node_->value : 0.0; }

inline const std::string& Expr::name() const {
  static const std::string empty;
  return node_ ? node_->name : empty;
}

inline const Expr& Expr::arg() const { return node_->lhs; }
inline const Expr& Expr::lhs() const { return node_->lhs; }
inline const Expr& Expr::rhs() const { return node_->rhs; }

// Raw tree builders; no simplification happens here.
inline Expr operator+(Expr a, Expr b) { return Expr::binary(Op::add, std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return Expr::binary(Op::sub, std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return Expr::binary(Op::mul, std::move(a), std::move(b)); }
inline Expr operator/(Expr a, Expr b) { return Expr::binary(Op::div, std::move(a), std::move(b)); }
inline Expr operator-(Expr a) { return Expr::unary(Op::neg, std::move(a)); }
inline Expr pow(Expr a, Expr b) { return Expr::binary(Op::pow, std::move(a), std::move(b)); }
inline Expr call(Op fn, Expr a) { return Expr::unary(fn, std::move(a)); }

// Structural equality (constants compared bit-for-bit).
inline bool equal(const Expr& a, const Expr& b) {
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::constant: return std::bit_cast<std::uint64_t>(a.value()) == std::bit_cast<std::uint64_t>(b.value());
    case Op::variable: return a.name() == b.name();
    default: break;
  }
  if (is_unary(a.op())) return equal(a.arg(), b.arg());
  return equal(a.lhs(), b.lhs()) && equal(a.rhs(), b.rhs());
}

inline void collect_symbols(const Expr& e, std::set<std::string>& out) {
  if (e.op() == Op::variable) {
    out.insert(e.name());
  } else if (is_unary(e.op())) {
    collect_symbols(e.arg(), out);
  } else if (is_binary(e.op())) {
    collect_symbols(e.lhs(), out);
    collect_symbols(e.rhs(), out);
  }
}

inline std::set<std::string> symbols(const Expr& e) {
  std::set<std::string> out;
  collect_symbols(e, out);
  return out;
}

inline bool depends_on(const Expr& e, std::string_view symbol) {
  if (e.op() == Op::variable) return e.name() == symbol;
  if (is_unary(e.op())) return depends_on(e.arg(), symbol);
  if (is_binary(e.op())) return depends_on(e.lhs(), symbol) || depends_on(e.rhs(), symbol);
  return false;
}

inline bool contains_kink(const Expr& e) {
  if (e.op() == Op::abs || e.op() == Op::sgn) return true;
  if (is_unary(e.op())) return contains_kink(e.arg());
  if (is_binary(e.op())) return contains_kink(e.lhs()) || contains_kink(e.rhs());
  return false;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf.data(), ptr);
}

// Binding strength used by the printer: 1 sum, 2 negation, 3 product, 4 power, 5 atom.
inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::add:
    case Op::sub: return 1;
    case Op::neg: return 2;
    case Op::mul:
    case Op::div: return 3;
    case Op::pow: return 4;
    case Op::constant: return (e.value() < 0 || std::signbit(e.value())) ? 2 : 5;
    default: return 5;
  }
}

inline void print(const Expr& e, std::string& out);

inline void print_at_least(const Expr& e, int min_prec, std::string& out) {
  if (precedence(e) < min_prec) {
    out += '(';
    print(e, out);
    out += ')';
  } else {
    print(e, out);
  }
}

inline void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::constant: {
      const double v = e.value();
      if (std::signbit(v)) {
        out += '-';
        out += format_number(-v);
      } else {
        out += format_number(v);
      }
      return;
    }
    case Op::variable: out += e.name(); return;
    case Op::neg:
      out += '-';
      print_at_least(e.arg(), 3, out);
      return;
    case Op::add:
    case Op::sub:
      print_at_least(e.lhs(), 1, out);
      out += e.op() == Op::add ? " + " : " - ";
      print_at_least(e.rhs(), 2, out);
      return;
    case Op::mul:
    case Op::div:
      print_at_least(e.lhs(), 3, out);
      out += e.op() == Op::mul ? "*" : "/";
      print_at_least(e.rhs(), 4, out);
      return;
    case Op::pow:
      print_at_least(e.lhs(), 5, out);
      out += '^';
      print_at_least(e.rhs(), 4, out);
      return;
    default:
      out += function_name(e.op());
      out += '(';
      print(e.arg(), out);
      out += ')';
      return;
  }
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    skip_space();
    if (at_end()) fail("expected an expression");
    Expr e = parse_sum();
    skip_space();
    if (!at_end()) fail(std::string("unexpected '") + text_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, pos_); }

  bool at_end() const { return pos_ >= text_.size(); }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  // '*' but not the start of '**'.
  bool accept_times() {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '*' &&
        !(pos_ + 1 < text_.size() && text_[pos_ + 1] == '*')) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_sum() {
    Expr lhs = parse_signed();
    for (;;) {
      if (accept("+")) {
        lhs = lhs + parse_signed();
      } else if (accept("-")) {
        lhs = lhs - parse_signed();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_signed() {
    if (accept("-")) return -parse_signed();
    if (accept("+")) return parse_signed();
    return parse_product();
  }

  Expr parse_product() {
    Expr lhs = parse_factor();
    for (;;) {
      if (accept_times()) {
        lhs = lhs * parse_factor();
      } else if (accept("/")) {
        lhs = lhs / parse_factor();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_factor() {
    if (accept("-")) return -parse_factor();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (accept("^") || accept("**")) return pow(std::move(base), parse_factor());
    return base;
  }

  Expr parse_atom() {
    skip_space();
    if (at_end()) fail("expected a number, name or '('");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr inner = parse_sum();
      if (!accept(")")) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      skip_space();
      if (!at_end() && text_[pos_] == '(') {
        Op fn{};
        if (!lookup_function(name, fn)) {
          pos_ = start;
          fail("unknown function '" + name + "'");
        }
        ++pos_;
        Expr arg = parse_sum();
        if (!accept(")")) fail("expected ')' after argument of " + name);
        return call(fn, std::move(arg));
      }
      return Expr::variable(std::move(name));
    }
    fail(std::string("expected a number, name or '(' but found '") + c + "'");
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (!at_end() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse(std::string_view text) { return detail::Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

using Bindings = std::map<std::string, double, std::less<>>;

namespace detail {

inline double apply_unary(Op op, double a) {
  switch (op) {
    case Op::neg: return -a;
    case Op::sin: return std::sin(a);
    case Op::cos: return std::cos(a);
    case Op::exp: return std::exp(a);
    case Op::log: return std::log(a);
    case Op::sqrt: return std::sqrt(a);
    case Op::abs: return std::fabs(a);
    case Op::sgn: return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
    default: return 0.0;
  }
}

inline double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
    case Op::div: return a / b;
    case Op::pow: return std::pow(a, b);
    default: return 0.0;
  }
}

inline double eval_checked(const Expr& e, const Bindings& bindings) {
  switch (e.op()) {
    case Op::constant: return e.value();
    case Op::variable: {
      auto it = bindings.find(e.name());
      if (it == bindings.end()) throw DomainError("unbound variable '" + e.name() + "'");
      return it->second;
    }
    default: break;
  }
  if (is_unary(e.op())) {
    const double a = eval_checked(e.arg(), bindings);
    if (e.op() == Op::sqrt && a < 0)
      throw DomainError("sqrt of negative value in '" + to_string(e) + "'");
    if (e.op() == Op::log && a <= 0)
      throw DomainError("log of non-positive value in '" + to_string(e) + "'");
    return apply_unary(e.op(), a);
  }
  const double a = eval_checked(e.lhs(), bindings);
  const double b = eval_checked(e.rhs(), bindings);
  if (e.op() == Op::div && b == 0.0) throw DomainError("division by zero in '" + to_string(e) + "'");
  if (e.op() == Op::pow) {
    if (a < 0 && b != std::floor(b))
      throw DomainError("negative base with non-integer exponent in '" + to_string(e) + "'");
    if (a == 0.0 && b < 0) throw DomainError("division by zero in '" + to_string(e) + "'");
  }
  return apply_binary(e.op(), a, b);
}

}  // namespace detail

inline double eval(const Expr& e, const Bindings& bindings) { return detail::eval_checked(e, bindings); }

// Flattened postfix program with variables resolved to slot indices. This is
// the evaluation path used inside quadrature loops and ODE integration; domain
// violations surface as NaN/Inf which callers check.
class CompiledExpr {
 public:
  CompiledExpr() = default;

  CompiledExpr(const Expr& e, std::span<const std::string> slots) {
    int depth = 0;
    emit(e, slots, depth);
  }

  double operator()(std::span<const double> values) const {
    if (max_depth_ <= kInlineStack) {
      std::array<double, kInlineStack> stack;
      return run(values, stack.data());
    }
    std::vector<double> stack(static_cast<std::size_t>(max_depth_));
    return run(values, stack.data());
  }

  bool empty() const noexcept { return code_.empty(); }

 private:
  static constexpr int kInlineStack = 48;

  struct Instr {
    Op op;
    int slot;
    double value;
  };

  void emit(const Expr& e, std::span<const std::string> slots, int& depth) {
    switch (e.op()) {
      case Op::constant:
        code_.push_back({Op::constant, -1, e.value()});
        bump(depth, 1);
        return;
      case Op::variable: {
        auto it = std::find(slots.begin(), slots.end(), e.name());
        if (it == slots.end()) throw ValidationError("unknown symbol '" + e.name() + "'");
        code_.push_back({Op::variable, static_cast<int>(it - slots.begin()), 0.0});
        bump(depth, 1);
        return;
      }
      default: break;
    }
    if (is_unary(e.op())) {
      emit(e.arg(), slots, depth);
      code_.push_back({e.op(), -1, 0.0});
      return;
    }
    emit(e.lhs(), slots, depth);
    emit(e.rhs(), slots, depth);
    code_.push_back({e.op(), -1, 0.0});
    bump(depth, -1);
  }

  void bump(int& depth, int delta) {
    depth += delta;
    max_depth_ = std::max(max_depth_, depth);
  }

  double run(std::span<const double> values, double* stack) const {
    int top = -1;
    for (const Instr& ins : code_) {
      switch (ins.op) {
        case Op::constant: stack[++top] = ins.value; break;
        case Op::variable: stack[++top] = values[static_cast<std::size_t>(ins.slot)]; break;
        case Op::add: --top; stack[top] += stack[top + 1]; break;
        case Op::sub: --top; stack[top] -= stack[top + 1]; break;
        case Op::mul: --top; stack[top] *= stack[top + 1]; break;
        case Op::div: --top; stack[top] /= stack[top + 1]; break;
        case Op::pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
        default: stack[top] = detail::apply_unary(ins.op, stack[top]); break;
      }
    }
    return top == 0 ? stack[0] : 0.0;
  }

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

// Constant folding and 0/1 identity elimination, bottom-up. Every rewrite is
// exact in IEEE arithmetic at finite points.
inline Expr simplify(const Expr& e) {
  const bool smooth = e.smooth();
  switch (e.op()) {
    case Op::constant:
    case Op::variable: return e;
    default: break;
  }

  if (is_unary(e.op())) {
    Expr a = simplify(e.arg());
    if (a.is_constant()) {
      const double v = detail::apply_unary(e.op(), a.value());
      if (std::isfinite(v) && !(e.op() == Op::sqrt && a.value() < 0))
        return Expr::constant(v).with_smooth(smooth);
    }
    if (e.op() == Op::neg && a.op() == Op::neg) return a.arg().with_smooth(smooth);
    return Expr::unary(e.op(), std::move(a)).with_smooth(smooth);
  }

  Expr a = simplify(e.lhs());
  Expr b = simplify(e.rhs());
  if (a.is_constant() && b.is_constant()) {
    const double v = detail::apply_binary(e.op(), a.value(), b.value());
    const bool bad_pow = e.op() == Op::pow && a.value() < 0 && b.value() != std::floor(b.value());
    if (std::isfinite(v) && !bad_pow && !(e.op() == Op::div && b.value() == 0.0))
      return Expr::constant(v).with_smooth(smooth);
  }
  switch (e.op()) {
    case Op::add:
      if (a.is_constant(0.0)) return b.with_smooth(smooth);
      if (b.is_constant(0.0)) return a.with_smooth(smooth);
      break;
    case Op::sub:
      if (b.is_constant(0.0)) return a.with_smooth(smooth);
      if (a.is_constant(0.0)) return simplify(-b).with_smooth(smooth);
      break;
    case Op::mul:
      if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0).with_smooth(smooth);
      if (a.is_constant(1.0)) return b.with_smooth(smooth);
      if (b.is_constant(1.0)) return a.with_smooth(smooth);
      if (a.is_constant(-1.0)) return simplify(-b).with_smooth(smooth);
      if (b.is_constant(-1.0)) return simplify(-a).with_smooth(smooth);
      break;
    case Op::div:
      if (b.is_constant(1.0)) return a.with_smooth(smooth);
      if (a.is_constant(0.0)) return Expr::constant(0.0).with_smooth(smooth);
      break;
    case Op::pow:
      if (b.is_constant(1.0)) return a.with_smooth(smooth);
      if (b.is_constant(0.0)) return Expr::constant(1.0).with_smooth(smooth);
      if (a.is_constant(1.0)) return Expr::constant(1.0).with_smooth(smooth);
      break;
    default: break;
  }
  return Expr::binary(e.op(), std::move(a), std::move(b)).with_smooth(smooth);
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

namespace detail {

inline Expr diff_raw(const Expr& e, std::string_view s, bool& kink) {
  const Expr zero = Expr::constant(0.0);
  switch (e.op()) {
    case Op::constant: return zero;
    case Op::variable: return Expr::constant(e.name() == s ? 1.0 : 0.0);
    default: break;
  }
  if (!depends_on(e, s)) return zero;

  if (is_unary(e.op())) {
    const Expr& u = e.arg();
    Expr du = diff_raw(u, s, kink);
    switch (e.op()) {
      case Op::neg: return -du;
      case Op::sin: return call(Op::cos, u) * du;
      case Op::cos: return -(call(Op::sin, u) * du);
      case Op::exp: return call(Op::exp, u) * du;
      case Op::log: return du / u;
      case Op::sqrt: return du / (Expr::constant(2.0) * call(Op::sqrt, u));
      case Op::abs: kink = true; return call(Op::sgn, u) * du;
      case Op::sgn: kink = true; return zero;
      default: return zero;
    }
  }

  const Expr& u = e.lhs();
  const Expr& v = e.rhs();
  switch (e.op()) {
    case Op::add: return diff_raw(u, s, kink) + diff_raw(v, s, kink);
    case Op::sub: return diff_raw(u, s, kink) - diff_raw(v, s, kink);
    case Op::mul: return diff_raw(u, s, kink) * v + u * diff_raw(v, s, kink);
    case Op::div:
      return (diff_raw(u, s, kink) * v - u * diff_raw(v, s, kink)) / pow(v, Expr::constant(2.0));
    case Op::pow:
      if (!depends_on(v, s)) return v * pow(u, v - Expr::constant(1.0)) * diff_raw(u, s, kink);
      return e * (diff_raw(v, s, kink) * call(Op::log, u) + v * diff_raw(u, s, kink) / u);
    default: return zero;
  }
}

}  // namespace detail

// d e / d symbol, simplified. abs/sgn on the path mark the result non-smooth.
inline Expr diff(const Expr& e, std::string_view symbol) {
  bool kink = false;
  Expr d = simplify(detail::diff_raw(e, symbol, kink));
  return d.with_smooth(e.smooth() && !kink);
}

inline Expr substitute(const Expr& e, std::string_view symbol, const Expr& replacement) {
  switch (e.op()) {
    case Op::constant: return e;
    case Op::variable: return e.name() == symbol ? replacement : e;
    default: break;
  }
  if (is_unary(e.op())) return Expr::unary(e.op(), substitute(e.arg(), symbol, replacement)).with_smooth(e.smooth());
  return Expr::binary(e.op(), substitute(e.lhs(), symbol, replacement), substitute(e.rhs(), symbol, replacement))
      .with_smooth(e.smooth());
}

}  // namespace neoc
