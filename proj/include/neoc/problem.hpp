#pragma once

// Parameterized control-affine optimal control problems
//
//   xdot = f(x, alpha) + g(x, alpha) u,   cost = int m(x, alpha) + u'Ru dt
//
// loaded from a line-oriented problem file or taken from the builtin catalog.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "neoc/error.hpp"
#include "neoc/expr.hpp"

namespace neoc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const { return (hi - lo).prod(); }
  Vec center() const { return 0.5 * (lo + hi); }
  Vec half_width() const { return 0.5 * (hi - lo); }
  // Largest distance from the origin to a point of the box.
  double radius() const { return lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).norm(); }

  bool contains(const Vec& x, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
  }
};

struct ProblemHints {
  std::vector<std::string> u0;  // one expression per control channel
  std::string basis;            // basis spec, see basis.hpp
  int quad_order = 0;           // 0: derived from the basis
  bool admissibility_gate = true;
};

// Optional explicit linear-quadratic data (A, B, Q as expressions in the
// parameters only); takes precedence over linearizing f, g, m at the origin.
struct LqrSection {
  std::vector<Expr> A;  // n*n row-major
  std::vector<Expr> B;  // n*p
  std::vector<Expr> Q;  // n*n
};

struct ProblemSpec {
  std::string name;
  int n = 0;  // states
  int p = 0;  // controls
  int q = 0;  // parameters
  std::vector<Expr> f;  // n
  std::vector<Expr> g;  // n*p row-major
  Expr m;
  Mat R;
  Box domain;
  Vec alpha_nominal;
  std::vector<std::string> alpha_names;
  std::optional<Box> alpha_box;
  bool semidefinite_cost = false;
  ProblemHints hints;
  std::optional<LqrSection> lqr;

  std::vector<std::string> state_names() const {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) out.push_back("x" + std::to_string(i));
    return out;
  }

  // Evaluation slot layout shared by every compiled expression: x1..xn, then the parameters.
  std::vector<std::string> slots() const {
    auto out = state_names();
    out.insert(out.end(), alpha_names.begin(), alpha_names.end());
    return out;
  }

  // Parameter box used for sampling checks: the declared box, else nominal +- 10%.
  Box perturbation_box() const {
    if (alpha_box) return *alpha_box;
    Vec span = alpha_nominal.cwiseAbs().cwiseMax(1.0) * 0.1;
    return Box{alpha_nominal - span, alpha_nominal + span};
  }

  int param_index(std::string_view name) const {
    for (int l = 0; l < q; ++l)
      if (alpha_names[static_cast<std::size_t>(l)] == name) return l;
    return -1;
  }
};

inline std::vector<double> pack(const Vec& x, const Vec& alpha) {
  std::vector<double> xa(static_cast<std::size_t>(x.size() + alpha.size()));
  std::copy(x.data(), x.data() + x.size(), xa.begin());
  std::copy(alpha.data(), alpha.data() + alpha.size(), xa.begin() + x.size());
  return xa;
}

// A list of compiled expressions evaluated together.
class Evaluator {
 public:
  Evaluator() = default;
  Evaluator(const std::vector<Expr>& exprs, std::span<const std::string> slots) {
    code_.reserve(exprs.size());
    for (const Expr& e : exprs) code_.emplace_back(e, slots);
  }

  std::size_t size() const { return code_.size(); }

  void operator()(std::span<const double> xa, double* out) const {
    for (std::size_t i = 0; i < code_.size(); ++i) out[i] = code_[i](xa);
  }

  double at(std::size_t i, std::span<const double> xa) const { return code_[i](xa); }

 private:
  std::vector<CompiledExpr> code_;
};

// Compiled f, g, m of a problem.
class Model {
 public:
  Model() = default;
  explicit Model(const ProblemSpec& spec)
      : n(spec.n), p(spec.p), q(spec.q), R(spec.R), Rinv(spec.R.inverse()) {
    const auto s = spec.slots();
    f_ = Evaluator(spec.f, s);
    g_ = Evaluator(spec.g, s);
    m_ = Evaluator({spec.m}, s);
  }

  int n = 0, p = 0, q = 0;
  Mat R, Rinv;

  Vec f(std::span<const double> xa) const {
    Vec out(n);
    f_(xa, out.data());
    return out;
  }

  // n x p
  Mat g(std::span<const double> xa) const {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(n, p);
    g_(xa, out.data());
    return out;
  }

  double m(std::span<const double> xa) const { return m_.at(0, xa); }

 private:
  Evaluator f_, g_, m_;
};

// ---------------------------------------------------------------------------
// Derived symbolic fields
// ---------------------------------------------------------------------------

struct DerivedProblem {
  int n = 0, p = 0, q = 0;
  std::vector<Expr> df_dalpha;               // n*q, entry (i, l) at i*q + l
  std::vector<std::vector<Expr>> dg_dalpha;  // q entries of n*p
  std::vector<Expr> dm_dalpha;               // q
  std::vector<Expr> A0;                      // df/dx at the origin, n*n, parameters only
  std::vector<Expr> B0;                      // g at the origin, n*p
  std::vector<Expr> Hm;                      // Hessian of m at the origin, n*n
};

namespace detail {

inline Expr at_origin(const Expr& e, const std::vector<std::string>& states) {
  Expr out = e;
  for (const auto& s : states) out = substitute(out, s, Expr::constant(0.0));
  return simplify(out);
}

inline Expr smooth_diff(const Expr& e, const std::string& symbol, const std::string& what) {
  Expr d = diff(e, symbol);
  if (!d.smooth())
    throw ValidationError("non-differentiable expression on the path of " + what + ": '" + to_string(e) + "'");
  return d;
}

}  // namespace detail

inline DerivedProblem derived_fields(const ProblemSpec& p) {
  DerivedProblem d;
  d.n = p.n;
  d.p = p.p;
  d.q = p.q;
  const auto states = p.state_names();
  for (int i = 0; i < p.n; ++i)
    for (int l = 0; l < p.q; ++l)
      d.df_dalpha.push_back(detail::smooth_diff(p.f[static_cast<std::size_t>(i)], p.alpha_names[static_cast<std::size_t>(l)],
                                                "d f" + std::to_string(i + 1) + "/d " + p.alpha_names[static_cast<std::size_t>(l)]));
  for (int l = 0; l < p.q; ++l) {
    const auto& a = p.alpha_names[static_cast<std::size_t>(l)];
    std::vector<Expr> dg;
    for (const Expr& gij : p.g) dg.push_back(detail::smooth_diff(gij, a, "d g/d " + a));
    d.dg_dalpha.push_back(std::move(dg));
    d.dm_dalpha.push_back(detail::smooth_diff(p.m, a, "d m/d " + a));
  }
  for (int i = 0; i < p.n; ++i)
    for (int j = 0; j < p.n; ++j)
      d.A0.push_back(detail::at_origin(diff(p.f[static_cast<std::size_t>(i)], states[static_cast<std::size_t>(j)]), states));
  for (const Expr& gij : p.g) d.B0.push_back(detail::at_origin(gij, states));
  for (int i = 0; i < p.n; ++i) {
    Expr di = diff(p.m, states[static_cast<std::size_t>(i)]);
    for (int j = 0; j < p.n; ++j) d.Hm.push_back(detail::at_origin(diff(di, states[static_cast<std::size_t>(j)]), states));
  }
  return d;
}

// Compiled parameter derivatives for quadrature loops.
class DerivedModel {
 public:
  DerivedModel() = default;
  DerivedModel(const ProblemSpec& spec, const DerivedProblem& d) : n(spec.n), p(spec.p), q(spec.q) {
    const auto s = spec.slots();
    df_ = Evaluator(d.df_dalpha, s);
    dm_ = Evaluator(d.dm_dalpha, s);
    for (const auto& dg : d.dg_dalpha) dg_.emplace_back(dg, s);
  }

  int n = 0, p = 0, q = 0;

  // n x q
  Mat df(std::span<const double> xa) const {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(n, q);
    df_(xa, out.data());
    return out;
  }

  // n x p derivative of g with respect to parameter l
  Mat dg(int l, std::span<const double> xa) const {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(n, p);
    dg_[static_cast<std::size_t>(l)](xa, out.data());
    return out;
  }

  Vec dm(std::span<const double> xa) const {
    Vec out(q);
    dm_(xa, out.data());
    return out;
  }

 private:
  Evaluator df_, dm_;
  std::vector<Evaluator> dg_;
};

// True when f is linear in x, g does not depend on x and m is a quadratic form.
inline bool is_linear_quadratic(const ProblemSpec& p) {
  const auto states = p.state_names();
  auto state_free = [&](const Expr& e) {
    for (const auto& s : states)
      if (depends_on(e, s)) return false;
    return true;
  };
  Vec zero = Vec::Zero(p.n);
  const auto xa = pack(zero, p.alpha_nominal);
  for (const Expr& fi : p.f) {
    for (const auto& s : states)
      if (!state_free(simplify(diff(fi, s)))) return false;
  }
  for (const Expr& gij : p.g)
    if (!state_free(gij)) return false;
  for (const auto& s : states) {
    Expr ds = diff(p.m, s);
    if (std::fabs(CompiledExpr(ds, p.slots())(xa)) > 1e-14) return false;
    for (const auto& t : states)
      if (!state_free(diff(ds, t))) return false;
  }
  return std::fabs(CompiledExpr(p.m, p.slots())(xa)) <= 1e-14;
}

// ---------------------------------------------------------------------------
// Problem-file loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<double> parse_reals(const std::string& text, std::size_t line, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw ParseError(key + ": '" + tok + "' is not a number", 0, line);
    out.push_back(v);
  }
  return out;
}

// "1 0; 0 2" -> rows
inline Mat parse_matrix(const std::string& text, std::size_t line, const std::string& key) {
  std::vector<std::vector<double>> rows;
  std::size_t start = 0;
  for (;;) {
    const std::size_t semi = text.find(';', start);
    rows.push_back(parse_reals(text.substr(start, semi == std::string::npos ? std::string::npos : semi - start), line, key));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols || cols == 0) throw ParseError(key + ": ragged or empty matrix", 0, line);
  Mat M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return M;
}

inline bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(key + ": expected true or false", 0, line);
}

struct Entry {
  std::string value;
  std::size_t line;
};

using Section = std::map<std::string, Entry, std::less<>>;

inline int parse_dim(const Section& s, const std::string& key) {
  auto it = s.find(key);
  if (it == s.end()) throw ValidationError("missing key [dims] " + key);
  const auto v = parse_reals(it->second.value, it->second.line, key);
  if (v.size() != 1 || v[0] < 1 || v[0] != std::floor(v[0]) || v[0] > 64)
    throw ParseError(key + ": expected a positive integer", 0, it->second.line);
  return static_cast<int>(v[0]);
}

inline Expr parse_field(const Entry& e, const std::string& key) {
  try {
    return parse(unquote(e.value));
  } catch (const ParseError& err) {
    throw ParseError(key + ": " + err.what(), err.offset(), e.line);
  }
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline bool valid_symbol(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline std::string vec_str(const Vec& v) {
  std::string out = "(";
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_number(v[i]);
  }
  return out + ")";
}

}  // namespace detail

// Checks every load-time invariant; throws ValidationError naming the first violation.
inline void validate(const ProblemSpec& p) {
  if (static_cast<int>(p.f.size()) != p.n || static_cast<int>(p.g.size()) != p.n * p.p)
    throw ValidationError("dimension mismatch between [dims] and [dynamics]");
  if (p.R.rows() != p.p || p.R.cols() != p.p) throw ValidationError("dimension mismatch: R must be control x control");
  if (p.domain.dim() != p.n || p.domain.hi.size() != p.n) throw ValidationError("dimension mismatch: domain bounds must have state entries");
  if (p.alpha_nominal.size() != p.q || static_cast<int>(p.alpha_names.size()) != p.q)
    throw ValidationError("dimension mismatch: params names/nominal must have params entries");

  if (!p.R.allFinite() || (p.R - p.R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + p.R.cwiseAbs().maxCoeff()) ||
      p.R.llt().info() != Eigen::Success || p.R.llt().matrixL().toDenseMatrix().diagonal().minCoeff() <= 0)
    throw ValidationError("R not positive definite");

  for (int i = 0; i < p.n; ++i) {
    if (!std::isfinite(p.domain.lo[i]) || !std::isfinite(p.domain.hi[i]) || !(p.domain.lo[i] < p.domain.hi[i]))
      throw ValidationError("domain must be bounded with lo < hi");
    if (p.domain.lo[i] > 0 || p.domain.hi[i] < 0) throw ValidationError("domain must contain the origin");
  }

  const auto slots = p.slots();
  {
    std::set<std::string> seen;
    for (const auto& s : slots)
      if (!seen.insert(s).second) throw ValidationError("duplicate symbol '" + s + "'");
  }
  const std::set<std::string> allowed(slots.begin(), slots.end());
  auto check_symbols = [&](const Expr& e, const std::string& where) {
    for (const auto& s : symbols(e))
      if (!allowed.count(s)) throw ValidationError("unknown symbol '" + s + "' in " + where);
  };
  for (int i = 0; i < p.n; ++i) check_symbols(p.f[static_cast<std::size_t>(i)], "f" + std::to_string(i + 1));
  for (const Expr& gij : p.g) check_symbols(gij, "g");
  check_symbols(p.m, "m");
  if (p.lqr) {
    const std::set<std::string> params(p.alpha_names.begin(), p.alpha_names.end());
    for (const auto* list : {&p.lqr->A, &p.lqr->B, &p.lqr->Q})
      for (const Expr& e : *list)
        for (const auto& s : symbols(e))
          if (!params.count(s)) throw ValidationError("[lqr] entries may only use parameters, found '" + s + "'");
    if (static_cast<int>(p.lqr->A.size()) != p.n * p.n || static_cast<int>(p.lqr->B.size()) != p.n * p.p ||
        static_cast<int>(p.lqr->Q.size()) != p.n * p.n)
      throw ValidationError("dimension mismatch in [lqr]");
  }
  if (p.alpha_box) {
    if (p.alpha_box->lo.size() != p.q || p.alpha_box->hi.size() != p.q)
      throw ValidationError("dimension mismatch: parameter box must have params entries");
    if (!p.alpha_box->contains(p.alpha_nominal)) throw ValidationError("nominal parameters outside the parameter box");
  }

  const Model model(p);
  const Vec zero = Vec::Zero(p.n);

  // f(0, alpha) = 0 at the nominal parameters and at 8 samples of the parameter box.
  std::vector<Vec> alphas{p.alpha_nominal};
  {
    const Box box = p.perturbation_box();
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < 8; ++k) {
      Vec a(p.q);
      for (int l = 0; l < p.q; ++l) a[l] = box.lo[l] + unit(rng) * (box.hi[l] - box.lo[l]);
      alphas.push_back(a);
    }
  }
  for (const Vec& a : alphas) {
    const Vec f0 = model.f(pack(zero, a));
    if (!f0.allFinite() || f0.cwiseAbs().maxCoeff() > 1e-12)
      throw ValidationError("f(0,alpha) != 0 at alpha=" + detail::vec_str(a));
  }

  // m(0) = 0 and m > 0 (or >= 0 when declared semidefinite) on a sample grid.
  const double m0 = model.m(pack(zero, p.alpha_nominal));
  if (!(std::fabs(m0) <= 1e-12)) throw ValidationError("m(0,alpha) != 0");
  int per_axis = 513;
  while (per_axis > 2 && std::pow(static_cast<double>(per_axis), p.n) > 4096.0) --per_axis;
  if (per_axis % 2 == 0) --per_axis;  // keep the axis midpoints on the grid
  std::vector<int> idx(static_cast<std::size_t>(p.n), 0);
  Vec x(p.n);
  for (;;) {
    bool origin = true;
    for (int i = 0; i < p.n; ++i) {
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per_axis - 1);
      x[i] = p.domain.lo[i] + t * (p.domain.hi[i] - p.domain.lo[i]);
      if (x[i] != 0.0) origin = false;
    }
    if (!origin) {
      const double mv = model.m(pack(x, p.alpha_nominal));
      const bool ok = p.semidefinite_cost ? mv >= -1e-12 : mv > 0.0;
      if (!std::isfinite(mv) || !ok)
        throw ValidationError(std::string("m(x,alpha) not positive ") + (p.semidefinite_cost ? "semidefinite" : "definite") +
                              " at x=" + detail::vec_str(x));
    }
    int k = 0;
    while (k < p.n && ++idx[static_cast<std::size_t>(k)] == per_axis) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == p.n) break;
  }
}

inline ProblemSpec load_problem(std::string_view text) {
  static const std::map<std::string, std::set<std::string>, std::less<>> kFixedKeys{
      {"dims", {"state", "control", "params"}},
      {"cost", {"m", "R", "semidefinite"}},
      {"domain", {"lo", "hi"}},
      {"params", {"names", "nominal", "box_lo", "box_hi"}},
      {"hints", {"u0", "basis", "quad_order", "admissibility_gate"}},
      {"problem", {"name"}},
  };

  std::map<std::string, detail::Section, std::less<>> sections;
  std::string current;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", 0, line_no);
      current = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (current != "dynamics" && current != "lqr" && !kFixedKeys.count(current))
        throw ParseError("unknown section [" + current + "]", 0, line_no);
      if (sections.count(current)) throw ParseError("duplicate section [" + current + "]", 0, line_no);
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", 0, line_no);
    if (current.empty()) throw ParseError("key outside of any section", 0, line_no);
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::unquote(detail::trim(std::string_view(line).substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", 0, line_no);
    auto& sec = sections[current];
    if (sec.count(key)) throw ParseError("duplicate key '" + key + "'", 0, line_no);
    sec[key] = detail::Entry{value, line_no};
  }

  for (const char* req : {"dims", "dynamics", "cost", "domain", "params"})
    if (!sections.count(req)) throw ValidationError(std::string("missing section [") + req + "]");

  ProblemSpec p;
  const auto& dims = sections["dims"];
  for (const auto& [key, entry] : dims)
    if (!kFixedKeys.at("dims").count(key)) throw ParseError("unknown key '" + key + "' in [dims]", 0, entry.line);
  p.n = detail::parse_dim(dims, "state");
  p.p = detail::parse_dim(dims, "control");
  p.q = detail::parse_dim(dims, "params");

  auto require = [&](const std::string& sec, const std::string& key) -> const detail::Entry& {
    auto& s = sections[sec];
    auto it = s.find(key);
    if (it == s.end()) throw ValidationError("missing key [" + sec + "] " + key);
    return it->second;
  };

  // Unknown-key checks for the fixed-key sections.
  for (const auto& [name, keys] : kFixedKeys) {
    auto it = sections.find(name);
    if (it == sections.end()) continue;
    for (const auto& [key, entry] : it->second)
      if (!keys.count(key)) throw ParseError("unknown key '" + key + "' in [" + name + "]", 0, entry.line);
  }

  // [dynamics]
  {
    std::set<std::string> expected;
    for (int i = 1; i <= p.n; ++i) expected.insert("f" + std::to_string(i));
    for (int i = 1; i <= p.n; ++i)
      for (int j = 1; j <= p.p; ++j) expected.insert("g" + std::to_string(i) + std::to_string(j));
    for (const auto& [key, entry] : sections["dynamics"])
      if (!expected.count(key)) throw ParseError("unknown key '" + key + "' in [dynamics]", 0, entry.line);
    for (int i = 1; i <= p.n; ++i) {
      const std::string key = "f" + std::to_string(i);
      p.f.push_back(detail::parse_field(require("dynamics", key), key));
    }
    for (int i = 1; i <= p.n; ++i)
      for (int j = 1; j <= p.p; ++j) {
        const std::string key = "g" + std::to_string(i) + std::to_string(j);
        p.g.push_back(detail::parse_field(require("dynamics", key), key));
      }
  }

  // [cost]
  p.m = detail::parse_field(require("cost", "m"), "m");
  {
    const auto& e = require("cost", "R");
    p.R = detail::parse_matrix(e.value, e.line, "R");
    if (p.R.rows() != p.p || p.R.cols() != p.p)
      throw ValidationError("dimension mismatch: R is " + std::to_string(p.R.rows()) + "x" + std::to_string(p.R.cols()) +
                            ", expected " + std::to_string(p.p) + "x" + std::to_string(p.p));
    auto& cost = sections["cost"];
    if (auto it = cost.find("semidefinite"); it != cost.end())
      p.semidefinite_cost = detail::parse_bool(it->second.value, it->second.line, "semidefinite");
  }

  // [domain]
  {
    const auto& lo = require("domain", "lo");
    const auto& hi = require("domain", "hi");
    const auto l = detail::parse_reals(lo.value, lo.line, "lo");
    const auto h = detail::parse_reals(hi.value, hi.line, "hi");
    if (static_cast<int>(l.size()) != p.n || static_cast<int>(h.size()) != p.n)
      throw ValidationError("dimension mismatch: domain lo/hi need " + std::to_string(p.n) + " entries");
    p.domain.lo = Eigen::Map<const Vec>(l.data(), p.n);
    p.domain.hi = Eigen::Map<const Vec>(h.data(), p.n);
  }

  // [params]
  {
    const auto& names = require("params", "names");
    p.alpha_names = detail::split_words(names.value);
    for (const auto& s : p.alpha_names)
      if (!detail::valid_symbol(s)) throw ParseError("invalid parameter name '" + s + "'", 0, names.line);
    const auto& nom = require("params", "nominal");
    const auto v = detail::parse_reals(nom.value, nom.line, "nominal");
    if (static_cast<int>(p.alpha_names.size()) != p.q || static_cast<int>(v.size()) != p.q)
      throw ValidationError("dimension mismatch: params names/nominal need " + std::to_string(p.q) + " entries");
    p.alpha_nominal = Eigen::Map<const Vec>(v.data(), p.q);
    auto& sec = sections["params"];
    const bool has_lo = sec.count("box_lo"), has_hi = sec.count("box_hi");
    if (has_lo != has_hi) throw ValidationError("box_lo and box_hi must be given together");
    if (has_lo) {
      const auto bl = detail::parse_reals(sec["box_lo"].value, sec["box_lo"].line, "box_lo");
      const auto bh = detail::parse_reals(sec["box_hi"].value, sec["box_hi"].line, "box_hi");
      if (static_cast<int>(bl.size()) != p.q || static_cast<int>(bh.size()) != p.q)
        throw ValidationError("dimension mismatch: parameter box needs " + std::to_string(p.q) + " entries");
      p.alpha_box = Box{Eigen::Map<const Vec>(bl.data(), p.q), Eigen::Map<const Vec>(bh.data(), p.q)};
    }
  }

  if (auto it = sections.find("problem"); it != sections.end())
    if (auto n = it->second.find("name"); n != it->second.end()) p.name = n->second.value;

  // [hints]
  if (auto it = sections.find("hints"); it != sections.end()) {
    auto& h = it->second;
    if (auto u = h.find("u0"); u != h.end()) {
      std::stringstream ss(u->second.value);
      std::string part;
      while (std::getline(ss, part, ',')) p.hints.u0.push_back(detail::trim(part));
      if (static_cast<int>(p.hints.u0.size()) != p.p)
        throw ValidationError("dimension mismatch: u0 needs " + std::to_string(p.p) + " expressions");
      for (const auto& s : p.hints.u0) detail::parse_field(detail::Entry{s, u->second.line}, "u0");
    }
    if (auto b = h.find("basis"); b != h.end()) p.hints.basis = b->second.value;
    if (auto o = h.find("quad_order"); o != h.end()) {
      const auto v = detail::parse_reals(o->second.value, o->second.line, "quad_order");
      if (v.size() != 1 || v[0] < 2 || v[0] != std::floor(v[0]))
        throw ParseError("quad_order: expected an integer >= 2", 0, o->second.line);
      p.hints.quad_order = static_cast<int>(v[0]);
    }
    if (auto g = h.find("admissibility_gate"); g != h.end())
      p.hints.admissibility_gate = detail::parse_bool(g->second.value, g->second.line, "admissibility_gate");
  }

  // [lqr]
  if (auto it = sections.find("lqr"); it != sections.end()) {
    LqrSection l;
    std::set<std::string> expected;
    auto fill = [&](char tag, int rows, int cols, std::vector<Expr>& out) {
      for (int i = 1; i <= rows; ++i)
        for (int j = 1; j <= cols; ++j) {
          const std::string key = tag + std::to_string(i) + std::to_string(j);
          expected.insert(key);
          out.push_back(detail::parse_field(require("lqr", key), key));
        }
    };
    fill('A', p.n, p.n, l.A);
    fill('B', p.n, p.p, l.B);
    fill('Q', p.n, p.n, l.Q);
    for (const auto& [key, entry] : it->second)
      if (!expected.count(key)) throw ParseError("unknown key '" + key + "' in [lqr]", 0, entry.line);
    p.lqr = std::move(l);
  }

  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"cartpole_lqr", "scalar_siso", "bilinear", "pendulum"};
  return names;
}

namespace detail {

inline std::string builtin_text(std::string_view name) {
  if (name == "scalar_siso")
    return R"([problem]
name = scalar_siso
[dims]
state = 1
control = 1
params = 1
[dynamics]
f1 = -alpha*x1
g11 = 1
[cost]
m = (1+alpha)*x1^2 + x1^4
R = 1
[domain]
lo = -1
hi = 1
[params]
names = alpha
nominal = 1
box_lo = 0
box_hi = 7
[hints]
u0 = -5*x1
basis = 2;4;6;8;10
quad_order = 12
)";
  if (name == "bilinear")
    return R"([problem]
name = bilinear
[dims]
state = 1
control = 1
params = 1
[dynamics]
f1 = 0
g11 = alpha*x1^2
[cost]
m = alpha*x1^2 + alpha^2*x1^4
R = 1
[domain]
lo = -1
hi = 1
[params]
names = alpha
nominal = 1
box_lo = 0.5
box_hi = 1.5
[hints]
u0 = -x1^3
basis = 2;4;6;8;10
quad_order = 12
admissibility_gate = false
)";
  if (name == "pendulum")
    return R"([problem]
name = pendulum
[dims]
state = 2
control = 1
params = 2
[dynamics]
f1 = x2
f2 = sin(x1) - (m/l)*x2
g11 = 0
g21 = 1/m
[cost]
m = l^2*(x1^2 + x2^2)
R = 1
[domain]
lo = -1 -1
hi = 1 1
[params]
names = m l
nominal = 1 1
box_lo = 0.5 0.5
box_hi = 1.5 1.5
[hints]
u0 = -sin(x1) - x1 - x2
basis = 2 0;1 1;0 2;4 0;3 1;2 2;1 3;0 4
quad_order = 6
)";
  if (name == "cartpole_lqr") {
    // Linearized cart-pendulum about the upright equilibrium, gravity 9.8.
    const std::string den = "(I*(M+m) + M*m*l^2)";
    return "[problem]\nname = cartpole_lqr\n[dims]\nstate = 4\ncontrol = 1\nparams = 5\n[dynamics]\n"
           "f1 = x2\n"
           "f2 = (-(I + m*l^2)*b*x2 + m^2*9.8*l^2*x3)/" + den + "\n"
           "f3 = x4\n"
           "f4 = (-m*l*b*x2 + m*9.8*l*(M + m)*x3)/" + den + "\n"
           "g11 = 0\ng21 = (I + m*l^2)/" + den + "\ng31 = 0\ng41 = m*l/" + den + "\n"
           "[cost]\nm = x1^2 + x3^2\nR = 1\nsemidefinite = true\n"
           "[domain]\nlo = -1 -1 -1 -1\nhi = 1 1 1 1\n"
           "[params]\nnames = M m b l I\nnominal = 0.5 0.2 0.1 0.3 0.006\n"
           "box_lo = 0.25 0.1 0 0.15 0.003\nbox_hi = 1 0.4 0.5 0.6 0.012\n"
           "[hints]\nbasis = 2 0 0 0;1 1 0 0;1 0 1 0;1 0 0 1;0 2 0 0;0 1 1 0;0 1 0 1;0 0 2 0;0 0 1 1;0 0 0 2\n"
           "quad_order = 4\nadmissibility_gate = false\n";
  }
  std::string valid;
  for (const auto& n : builtin_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ValidationError("unknown builtin '" + std::string(name) + "'; valid names: " + valid);
}

}  // namespace detail

inline ProblemSpec builtin(std::string_view name) { return load_problem(detail::builtin_text(name)); }

// A problem with its compiled evaluators. Parameter derivatives are built up
// front; if that fails the problem stays usable at fixed parameters and the
// error resurfaces when a derivative is requested.
class CompiledProblem {
 public:
  CompiledProblem() = default;
  explicit CompiledProblem(ProblemSpec spec)
      : spec_(std::make_shared<const ProblemSpec>(std::move(spec))), model_(std::make_shared<const Model>(*spec_)) {
    try {
      derived_ = std::make_shared<const DerivedProblem>(derived_fields(*spec_));
      derived_model_ = std::make_shared<const DerivedModel>(*spec_, *derived_);
    } catch (const Error& e) {
      derived_error_ = e.what();
    }
  }

  const ProblemSpec& spec() const { return *spec_; }
  const std::shared_ptr<const ProblemSpec>& spec_ptr() const { return spec_; }
  const std::shared_ptr<const Model>& model() const { return model_; }

  const DerivedProblem& derived() const {
    if (!derived_) throw ValidationError(derived_error_);
    return *derived_;
  }

  const std::shared_ptr<const DerivedModel>& derived_model() const {
    if (!derived_model_) throw ValidationError(derived_error_);
    return derived_model_;
  }

 private:
  std::shared_ptr<const ProblemSpec> spec_;
  std::shared_ptr<const Model> model_;
  std::shared_ptr<const DerivedProblem> derived_;
  std::shared_ptr<const DerivedModel> derived_model_;
  std::string derived_error_;
};

}  // namespace neoc
