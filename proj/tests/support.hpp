#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "neoc/neoc.hpp"

namespace neoc::test {

// Recipe built from a builtin's hints, as the CLI does.
inline SolveRecipe recipe_for(const ProblemSpec& spec, HjbOptions opt = {}) {
  CompiledProblem cp(spec);
  auto basis = std::make_shared<const BasisSet>(monomial_basis(spec.n, parse_basis_spec(spec.hints.basis, spec.n)));
  const int k = spec.hints.quad_order > 0 ? spec.hints.quad_order : default_quad_order(*basis);
  std::function<ControlLaw(const Vec&)> init;
  if (!spec.hints.u0.empty()) {
    const auto texts = spec.hints.u0;
    init = [texts, spec](const Vec& a) -> ControlLaw { return expr_law(texts, spec, a); };
  } else {
    const LqrProblem lp = LqrProblem::from_problem(spec);
    init = [lp](const Vec& a) -> ControlLaw {
      const LqrMatrices m = lp.at(a);
      return LinearGain{stabilizing_gain(m.A, m.B, m.R)};
    };
  }
  return SolveRecipe{cp, basis, std::vector<int>(static_cast<std::size_t>(spec.n), k), init, opt};
}

inline SolveRecipe recipe_for(const std::string& name, HjbOptions opt = {}) { return recipe_for(builtin(name), opt); }

inline Vec vec1(double v) { return Vec::Constant(1, v); }

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Closed form of the scalar example: u = a x - x sqrt(1 + a + a^2 + x^2).
inline double scalar_u(double x, double a) { return a * x - x * std::sqrt(1 + a + a * a + x * x); }

// Matching value function: u = -phi'/2 with g = R = 1, integrated from 0.
inline double scalar_phi(double x, double a) {
  const double c = 1 + a + a * a;
  return -a * x * x + (2.0 / 3.0) * (std::pow(c + x * x, 1.5) - std::pow(c, 1.5));
}

inline std::vector<Vec> line_grid(double lo, double hi, int n) {
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) out.push_back(vec1(lo + (hi - lo) * i / (n - 1)));
  return out;
}

inline double sup_vs(const ControlLaw& a, const std::function<double(const Vec&)>& b, const std::vector<Vec>& pts) {
  double s = 0;
  for (const Vec& x : pts) s = std::max(s, std::abs(a(x)[0] - b(x)));
  return s;
}

inline double sup_diff(const ControlLaw& a, const ControlLaw& b, const std::vector<Vec>& pts) {
  double s = 0;
  for (const Vec& x : pts) s = std::max(s, (a(x) - b(x)).cwiseAbs().maxCoeff());
  return s;
}

}  // namespace neoc::test
