#pragma once

// Monomial bases and tensor Gauss-Legendre quadrature on boxes.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neoc/error.hpp"
#include "neoc/expr.hpp"
#include "neoc/problem.hpp"

namespace neoc {

using MultiIndex = std::vector<int>;

class BasisSet {
 public:
  BasisSet() = default;

  BasisSet(int n, std::vector<MultiIndex> spec) : n_(n), idx_(std::move(spec)) {
    if (n < 1) throw ValidationError("basis dimension must be positive");
    if (idx_.empty()) throw ValidationError("empty basis");
    std::set<MultiIndex> seen;
    for (const auto& a : idx_) {
      if (static_cast<int>(a.size()) != n)
        throw ValidationError("multi-index " + label(a) + " has " + std::to_string(a.size()) + " entries, expected " +
                              std::to_string(n));
      int deg = 0;
      for (int e : a) {
        if (e < 0) throw ValidationError("negative exponent in multi-index " + label(a));
        deg += e;
      }
      if (deg == 0) throw ValidationError("constant basis function " + label(a) + " (psi(0) must vanish)");
      if (!seen.insert(a).second) throw ValidationError("duplicate multi-index " + label(a));
      max_degree_ = std::max(max_degree_, deg);
      for (int e : a) max_axis_degree_ = std::max(max_axis_degree_, e);
    }
    std::vector<std::string> names;
    for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
    for (const auto& a : idx_) {
      Expr term;
      bool first = true;
      for (int i = 0; i < n; ++i) {
        if (a[static_cast<std::size_t>(i)] == 0) continue;
        Expr xi = Expr::variable(names[static_cast<std::size_t>(i)]);
        Expr factor = a[static_cast<std::size_t>(i)] == 1 ? xi : pow(xi, Expr::constant(a[static_cast<std::size_t>(i)]));
        term = first ? factor : term * factor;
        first = false;
      }
      exprs_.push_back(term);
      std::vector<Expr> grad;
      for (const auto& s : names) grad.push_back(diff(term, s));
      grads_.push_back(std::move(grad));
    }
  }

  int dim() const { return n_; }
  int size() const { return static_cast<int>(idx_.size()); }
  int max_degree() const { return max_degree_; }
  const std::vector<MultiIndex>& indices() const { return idx_; }
  const std::vector<Expr>& exprs() const { return exprs_; }
  // grads()[j][i] = d psi_j / d x_i
  const std::vector<std::vector<Expr>>& grads() const { return grads_; }

  Vec values(const Vec& x) const {
    const auto pw = powers(x);
    Vec out(size());
    for (int j = 0; j < size(); ++j) {
      double v = 1.0;
      for (int i = 0; i < n_; ++i) v *= pw(i, idx_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
      out[j] = v;
    }
    return out;
  }

  // N x n Jacobian of Psi.
  Mat jacobian(const Vec& x) const {
    const auto pw = powers(x);
    Mat out(size(), n_);
    for (int j = 0; j < size(); ++j) {
      const auto& a = idx_[static_cast<std::size_t>(j)];
      for (int d = 0; d < n_; ++d) {
        const int ad = a[static_cast<std::size_t>(d)];
        if (ad == 0) {
          out(j, d) = 0.0;
          continue;
        }
        double v = ad * pw(d, ad - 1);
        for (int i = 0; i < n_; ++i)
          if (i != d) v *= pw(i, a[static_cast<std::size_t>(i)]);
        out(j, d) = v;
      }
    }
    return out;
  }

  std::string spec_string() const {
    std::string out;
    for (std::size_t j = 0; j < idx_.size(); ++j) {
      if (j) out += ';';
      for (std::size_t i = 0; i < idx_[j].size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(idx_[j][i]);
      }
    }
    return out;
  }

 private:
  static std::string label(const MultiIndex& a) {
    std::string s = "(";
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(a[i]);
    return s + ")";
  }

  // pw(i, k) = x_i^k
  Mat powers(const Vec& x) const {
    Mat pw(n_, max_axis_degree_ + 1);
    for (int i = 0; i < n_; ++i) {
      pw(i, 0) = 1.0;
      for (int k = 1; k <= max_axis_degree_; ++k) pw(i, k) = pw(i, k - 1) * x[i];
    }
    return pw;
  }

  int n_ = 0;
  std::vector<MultiIndex> idx_;
  std::vector<Expr> exprs_;
  std::vector<std::vector<Expr>> grads_;
  int max_degree_ = 0;
  int max_axis_degree_ = 0;
};

inline BasisSet monomial_basis(int n, const std::vector<MultiIndex>& spec) { return BasisSet(n, spec); }

// "2;4;6" (1-D) or "2 0;1 1;0 2" (2-D). Without any ';' a comma list is read
// as one exponent per entry.
inline std::vector<MultiIndex> parse_basis_spec(const std::string& text, int n) {
  std::vector<std::string> parts;
  const char sep = text.find(';') != std::string::npos ? ';' : ',';
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(part);
  std::vector<MultiIndex> out;
  for (std::string& pstr : parts) {
    if (sep == ';') std::replace(pstr.begin(), pstr.end(), ',', ' ');
    std::istringstream in(pstr);
    MultiIndex a;
    std::string tok;
    while (in >> tok) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ValidationError("basis spec: '" + tok + "' is not an integer exponent");
      a.push_back(v);
    }
    if (a.empty()) throw ValidationError("basis spec: empty multi-index");
    if (static_cast<int>(a.size()) != n)
      throw ValidationError("basis spec: multi-index '" + pstr + "' has " + std::to_string(a.size()) + " entries, expected " +
                            std::to_string(n));
    out.push_back(std::move(a));
  }
  if (out.empty()) throw ValidationError("basis spec: no multi-indices");
  return out;
}

// All monomials whose total degree is in `degrees`, in graded lexicographic order.
inline std::vector<MultiIndex> total_degree_indices(int n, const std::vector<int>& degrees) {
  std::vector<MultiIndex> out;
  for (int deg : degrees) {
    MultiIndex a(static_cast<std::size_t>(n), 0);
    std::function<void(int, int)> rec = [&](int i, int left) {
      if (i == n - 1) {
        a[static_cast<std::size_t>(i)] = left;
        out.push_back(a);
        return;
      }
      for (int e = left; e >= 0; --e) {
        a[static_cast<std::size_t>(i)] = e;
        rec(i + 1, left - e);
      }
    };
    rec(0, deg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureGrid {
  Mat nodes;    // n x K
  Vec weights;  // K
  std::vector<int> order;

  int dim() const { return static_cast<int>(nodes.rows()); }
  int size() const { return static_cast<int>(nodes.cols()); }
  Vec node(int k) const { return nodes.col(k); }
};

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int order, Vec& x, Vec& w) {
  x.resize(order);
  w.resize(order);
  for (int i = 0; i < (order + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= order; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::fabs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root for the weight.
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= order; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = order * (z * p0 - p1) / (z * z - 1.0);
    x[i] = -z;
    x[order - 1 - i] = z;
    w[i] = w[order - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  if (order % 2 == 1) x[order / 2] = 0.0;
}

inline QuadratureGrid gauss_grid(const Box& domain, const std::vector<int>& order) {
  const int n = domain.dim();
  if (static_cast<int>(order.size()) != n) throw ValidationError("quadrature order needs one entry per axis");
  double count = 1.0;
  for (int o : order) {
    if (o < 2) throw ValidationError("quadrature order must be at least 2");
    count *= o;
  }
  if (count > 1e6) throw ValidationError("quadrature grid exceeds 10^6 nodes; lower the order");
  std::vector<Vec> ax(static_cast<std::size_t>(n)), aw(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec x, w;
    gauss_legendre(order[static_cast<std::size_t>(i)], x, w);
    const double h = 0.5 * (domain.hi[i] - domain.lo[i]), c = 0.5 * (domain.hi[i] + domain.lo[i]);
    ax[static_cast<std::size_t>(i)] = (c + h * x.array()).matrix();
    aw[static_cast<std::size_t>(i)] = h * w;
  }
  QuadratureGrid grid;
  grid.order = order;
  const int K = static_cast<int>(count);
  grid.nodes.resize(n, K);
  grid.weights.resize(K);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < K; ++k) {
    double wt = 1.0;
    for (int i = 0; i < n; ++i) {
      grid.nodes(i, k) = ax[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
      wt *= aw[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    }
    grid.weights[k] = wt;
    // last axis fastest
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < order[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return grid;
}

inline QuadratureGrid gauss_grid(const Box& domain, int order) {
  return gauss_grid(domain, std::vector<int>(static_cast<std::size_t>(domain.dim()), order));
}

inline int default_quad_order(const BasisSet& basis) { return basis.max_degree() + 2; }

using PointFn = std::function<double(const Vec&)>;

// sum_k w_k a(x_k) b(x_k)
inline double inner_product(const PointFn& a, const PointFn& b, const QuadratureGrid& grid) {
  double s = 0.0;
  for (int k = 0; k < grid.size(); ++k) {
    const Vec x = grid.node(k);
    double va = 0, vb = 0;
    try {
      va = a(x);
      vb = b(x);
    } catch (const Error& e) {
      throw DomainError("at quadrature node " + std::to_string(k) + ": " + e.what());
    }
    if (!std::isfinite(va) || !std::isfinite(vb))
      throw DomainError("non-finite integrand at quadrature node " + std::to_string(k));
    s += grid.weights[k] * va * vb;
  }
  return s;
}

// Basis values and gradients at every node of a grid.
struct Tabulation {
  Mat psi;                // N x K
  std::vector<Mat> dpsi;  // n entries of N x K, dpsi[d](j, k) = d psi_j / d x_d at node k
  Mat psi_w;              // psi scaled by the weights, N x K
};

inline Tabulation tabulate(const BasisSet& basis, const QuadratureGrid& grid) {
  const int N = basis.size(), K = grid.size(), n = basis.dim();
  Tabulation t;
  t.psi.resize(N, K);
  t.dpsi.assign(static_cast<std::size_t>(n), Mat(N, K));
  for (int k = 0; k < K; ++k) {
    const Vec x = grid.node(k);
    t.psi.col(k) = basis.values(x);
    const Mat J = basis.jacobian(x);
    for (int d = 0; d < n; ++d) t.dpsi[static_cast<std::size_t>(d)].col(k) = J.col(d);
  }
  t.psi_w = t.psi * grid.weights.asDiagonal();
  return t;
}

inline double gram_condition(const Tabulation& t) {
  const Mat G = t.psi_w * t.psi.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline void check_gram(const Tabulation& t) {
  const double c = gram_condition(t);
  if (!(c < 1e12))
    throw ValidationError("basis is numerically dependent on this grid (Gram condition number " + detail::format_number(c) +
                          " >= 1e12); raise the quadrature order or change the basis");
}

// True when every expression is a polynomial in the given state symbols, so
// the default quadrature order integrates the Galerkin products exactly.
inline bool polynomial_in(const Expr& e, const std::vector<std::string>& states) {
  auto free_of_states = [&](const Expr& x) {
    for (const auto& s : states)
      if (depends_on(x, s)) return false;
    return true;
  };
  if (free_of_states(e)) return true;
  switch (e.op()) {
    case Op::variable: return true;
    case Op::neg: return polynomial_in(e.arg(), states);
    case Op::add:
    case Op::sub:
    case Op::mul: return polynomial_in(e.lhs(), states) && polynomial_in(e.rhs(), states);
    case Op::div: return polynomial_in(e.lhs(), states) && free_of_states(e.rhs());
    case Op::pow:
      return polynomial_in(e.lhs(), states) && e.rhs().is_constant() && e.rhs().value() >= 0 &&
             e.rhs().value() == std::floor(e.rhs().value());
    default: return false;
  }
}

inline bool polynomial_problem(const ProblemSpec& p) {
  const auto states = p.state_names();
  for (const Expr& e : p.f)
    if (!polynomial_in(e, states)) return false;
  for (const Expr& e : p.g)
    if (!polynomial_in(e, states)) return false;
  return polynomial_in(p.m, states);
}

}  // namespace neoc
