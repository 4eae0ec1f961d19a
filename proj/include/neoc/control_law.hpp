#pragma once

// Feedback laws u(x). Every variant vanishes at the origin.

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "neoc/basis.hpp"
#include "neoc/error.hpp"
#include "neoc/expr.hpp"
#include "neoc/problem.hpp"

namespace neoc {

// u = -1/2 R^-1 g(x, alpha)' J_psi(x)' w
inline Vec galerkin_control(const Model& model, const BasisSet& basis, const Vec& w, const Vec& alpha, const Vec& x) {
  const Vec grad = basis.jacobian(x).transpose() * w;
  const Mat G = model.g(pack(x, alpha));
  return -0.5 * (model.Rinv * (G.transpose() * grad));
}

struct GalerkinLaw {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const BasisSet> basis;
  Vec weights;
  Vec alpha;

  Vec operator()(const Vec& x) const { return galerkin_control(*model, *basis, weights, alpha, x); }
};

// u = -K x
struct LinearGain {
  Mat K;

  Vec operator()(const Vec& x) const { return -(K * x); }
};

// User-supplied expressions in x1..xn and the problem parameters.
struct ExprLaw {
  std::vector<Expr> exprs;
  std::vector<std::string> slots;
  Vec alpha;
  std::shared_ptr<const Evaluator> code;

  ExprLaw() = default;
  ExprLaw(std::vector<Expr> e, const ProblemSpec& p, Vec a)
      : exprs(std::move(e)), slots(p.slots()), alpha(std::move(a)) {
    if (static_cast<int>(exprs.size()) != p.p)
      throw ValidationError("control law needs " + std::to_string(p.p) + " expressions, got " + std::to_string(exprs.size()));
    code = std::make_shared<Evaluator>(exprs, slots);
    const Vec u0 = (*this)(Vec::Zero(p.n));
    if (!u0.allFinite() || u0.cwiseAbs().maxCoeff() > 1e-12) throw ValidationError("control law does not vanish at the origin");
  }

  Vec operator()(const Vec& x) const {
    Vec u(static_cast<Eigen::Index>(exprs.size()));
    (*code)(pack(x, alpha), u.data());
    return u;
  }
};

// Nominal Galerkin law plus its first-order parameter adjustment:
// u_NE = u*(x) - 1/2 R^-1 ( g' J_psi' J_w dalpha + sum_l dalpha_l dg_l' J_psi' w ).
struct NeocLaw {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const DerivedModel> derived;
  std::shared_ptr<const BasisSet> basis;
  Vec weights;    // nominal weights
  Mat J_w;        // N x q weight sensitivity
  Vec alpha;      // nominal parameters
  Vec delta;      // parameter perturbation
  Vec dw;         // J_w * delta

  Vec base(const Vec& x) const { return galerkin_control(*model, *basis, weights, alpha, x); }

  Vec adjustment(const Vec& x) const {
    const Mat J = basis->jacobian(x);
    const auto xa = pack(x, alpha);
    const Mat G = model->g(xa);
    const Vec grad = J.transpose() * weights;
    Vec t = G.transpose() * (J.transpose() * dw);
    for (int l = 0; l < delta.size(); ++l)
      if (delta[l] != 0.0) t += delta[l] * (derived->dg(l, xa).transpose() * grad);
    return -0.5 * (model->Rinv * t);
  }

  Vec operator()(const Vec& x) const { return base(x) + adjustment(x); }
};

class ControlLaw {
 public:
  using Variant = std::variant<GalerkinLaw, LinearGain, ExprLaw, NeocLaw>;

  ControlLaw() = default;
  template <class T>
  ControlLaw(T law) : v_(std::move(law)) {}

  Vec operator()(const Vec& x) const {
    return std::visit([&](const auto& law) -> Vec { return law(x); }, v_);
  }

  std::string kind() const {
    switch (v_.index()) {
      case 0: return "galerkin";
      case 1: return "linear_gain";
      case 2: return "expression";
      default: return "neoc";
    }
  }

  const Variant& variant() const { return v_; }
  template <class T>
  const T* get() const {
    return std::get_if<T>(&v_);
  }

 private:
  Variant v_;
};

inline ControlLaw expr_law(const std::vector<std::string>& texts, const ProblemSpec& p, const Vec& alpha) {
  std::vector<Expr> exprs;
  for (const auto& t : texts) exprs.push_back(parse(t));
  return ExprLaw(std::move(exprs), p, alpha);
}

// Splits "e1,e2" at top-level commas.
inline std::vector<std::string> split_law_list(const std::string& text) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace neoc
