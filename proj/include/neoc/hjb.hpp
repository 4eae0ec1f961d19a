#pragma once

// Galerkin policy iteration for the steady Hamilton-Jacobi equation of a
// control-affine problem. The value is approximated as phi(x) = w' Psi(x) and
// the law as u(x) = -1/2 R^-1 g(x)' J_psi(x)' w.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "neoc/basis.hpp"
#include "neoc/control_law.hpp"
#include "neoc/error.hpp"
#include "neoc/problem.hpp"
#include "neoc/sim.hpp"

namespace neoc {

// Problem data, basis and tabulated quadrature at one parameter value.
class GalerkinSetup {
 public:
  GalerkinSetup(CompiledProblem problem, std::shared_ptr<const BasisSet> basis, QuadratureGrid grid, Vec alpha)
      : problem_(std::move(problem)), basis_(std::move(basis)), grid_(std::move(grid)), alpha_(std::move(alpha)) {
    const auto& spec = problem_.spec();
    if (basis_->dim() != spec.n) throw ValidationError("basis dimension does not match the state dimension");
    if (grid_.dim() != spec.n) throw ValidationError("grid dimension does not match the state dimension");
    if (alpha_.size() != spec.q) throw ValidationError("parameter vector has the wrong length");
    tab_ = tabulate(*basis_, grid_);
    check_gram(tab_);
    const int K = grid_.size();
    f_.resize(spec.n, K);
    g_.resize(static_cast<std::size_t>(K));
    m_.resize(K);
    const Model& model = *problem_.model();
    for (int k = 0; k < K; ++k) {
      const auto xa = pack(grid_.node(k), alpha_);
      f_.col(k) = model.f(xa);
      g_[static_cast<std::size_t>(k)] = model.g(xa);
      m_[k] = model.m(xa);
    }
    if (!f_.allFinite() || !m_.allFinite()) throw DomainError("problem data not finite on the quadrature grid");
  }

  const CompiledProblem& problem() const { return problem_; }
  const ProblemSpec& spec() const { return problem_.spec(); }
  const Model& model() const { return *problem_.model(); }
  const std::shared_ptr<const BasisSet>& basis() const { return basis_; }
  const QuadratureGrid& grid() const { return grid_; }
  const Tabulation& tab() const { return tab_; }
  const Vec& alpha() const { return alpha_; }

  const Mat& f_nodes() const { return f_; }
  const Mat& g_node(int k) const { return g_[static_cast<std::size_t>(k)]; }
  const Vec& m_nodes() const { return m_; }

  // Gradient of w' Psi at node k.
  Vec grad_at(const Vec& w, int k) const {
    Vec out(spec().n);
    for (int d = 0; d < spec().n; ++d) out[d] = tab_.dpsi[static_cast<std::size_t>(d)].col(k).dot(w);
    return out;
  }

  // Law -1/2 R^-1 g' grad(w' Psi) at every node, p x K.
  Mat law_nodes(const Vec& w) const {
    const int K = grid_.size();
    Mat U(spec().p, K);
    const Mat& Rinv = model().Rinv;
    for (int k = 0; k < K; ++k) U.col(k) = -0.5 * (Rinv * (g_node(k).transpose() * grad_at(w, k)));
    return U;
  }

  Mat law_nodes(const ControlLaw& law) const {
    const int K = grid_.size();
    Mat U(spec().p, K);
    for (int k = 0; k < K; ++k) U.col(k) = law(grid_.node(k));
    if (!U.allFinite()) throw DomainError("control law not finite on the quadrature grid");
    return U;
  }

  // Matrix with entries <grad psi_i' F, psi_j> for the node-wise vector field F (n x K).
  Mat transport_matrix(const Mat& F) const {
    const int N = basis_->size();
    Mat D = Mat::Zero(N, grid_.size());
    for (int d = 0; d < spec().n; ++d) D += tab_.dpsi[static_cast<std::size_t>(d)] * F.row(d).asDiagonal();
    return tab_.psi_w * D.transpose();
  }

  GalerkinLaw law(const Vec& w) const { return GalerkinLaw{problem_.model(), basis_, w, alpha_}; }

 private:
  CompiledProblem problem_;
  std::shared_ptr<const BasisSet> basis_;
  QuadratureGrid grid_;
  Vec alpha_;
  Tabulation tab_;
  Mat f_;
  std::vector<Mat> g_;
  Vec m_;
};

inline double condition_number(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || !(s[s.size() - 1] > 0)) return std::numeric_limits<double>::infinity();
  return s[0] / s[s.size() - 1];
}

struct StepResult {
  Vec weights;
  double condition = 0.0;
  double orthogonality = 0.0;  // max_j |(A w - b)_j| / |b|
};

namespace detail {

inline StepResult galerkin_solve(const GalerkinSetup& s, const Mat& U) {
  const int K = s.grid().size();
  const Mat& R = s.model().R;
  Mat F = s.f_nodes();
  Vec cost(K);
  for (int k = 0; k < K; ++k) {
    const Vec u = U.col(k);
    F.col(k) += s.g_node(k) * u;
    cost[k] = u.dot(R * u) + s.m_nodes()[k];
  }
  const Mat A = s.transport_matrix(F);
  const Vec b = -(s.tab().psi_w * cost);
  StepResult r;
  r.condition = condition_number(A);
  if (!(r.condition <= 1e12))
    throw SolverError("Galerkin matrix is singular or ill-conditioned (condition number " + format_number(r.condition) +
                      "); change the basis or domain, or check that the control law is admissible");
  r.weights = A.partialPivLu().solve(b);
  const double bn = b.norm();
  r.orthogonality = (A * r.weights - b).cwiseAbs().maxCoeff() / (bn > 0 ? bn : 1.0);
  const Vec phi = s.tab().psi.transpose() * r.weights;
  const double scale = 1.0 + phi.cwiseAbs().maxCoeff();
  if (!r.weights.allFinite() || phi.minCoeff() < -1e-9 * scale || phi.maxCoeff() <= 0.0)
    throw SolverError("policy evaluation produced non-positive value (min over the grid " + format_number(phi.minCoeff()) +
                      "); the control law is not admissible on the domain");
  return r;
}

}  // namespace detail

// One policy-evaluation step: the value weights of the law u_i.
inline StepResult galerkin_step(const GalerkinSetup& s, const ControlLaw& u_i) { return detail::galerkin_solve(s, s.law_nodes(u_i)); }

struct HjbOptions {
  int max_iter = 100;
  double tol_w = 1e-10;
  double tol_res = 0.0;  // optional stop on the orthogonality defect; 0 disables it
  bool gate = true;      // simulate the initial law before iterating
};

struct MonotonicityViolation {
  int iteration = 0;  // index of the later iterate
  double excess = 0.0;  // max over nodes of phi_{i+1} - phi_i, relative to 1 + phi_i
};

struct HjbSolution {
  std::shared_ptr<const GalerkinSetup> setup;
  Vec weights;
  int iterations = 0;
  bool converged = false;
  std::vector<Vec> history;  // w_1, w_2, ...
  std::vector<double> dw_norms;
  std::vector<double> residual_norms;
  std::vector<double> conditions;
  std::vector<MonotonicityViolation> violations;

  const Vec& alpha() const { return setup->alpha(); }
  const BasisSet& basis() const { return *setup->basis(); }
  GalerkinLaw law() const { return setup->law(weights); }
};

inline HjbSolution policy_iteration(std::shared_ptr<const GalerkinSetup> setup, const ControlLaw& u0, const HjbOptions& opt = {}) {
  const GalerkinSetup& s = *setup;
  if (opt.max_iter < 1) throw ValidationError("max_iter must be at least 1");
  if (!(opt.tol_w > 0)) throw ValidationError("tol_w must be positive");
  if (opt.gate && s.spec().hints.admissibility_gate) {
    const auto rep = admissibility_probe(s.model(), s.alpha(), u0, s.spec().domain);
    if (!rep.admissible) throw SolverError("initial control law is not admissible: " + rep.message);
  }

  HjbSolution sol;
  sol.setup = setup;
  Mat U = s.law_nodes(u0);
  Vec phi_prev;
  int consecutive = 0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    StepResult step = detail::galerkin_solve(s, U);
    const Vec& w = step.weights;
    if (w.cwiseAbs().maxCoeff() > 1e9) throw SolverError("policy iteration diverged at iteration " + std::to_string(it));
    const double dw = sol.history.empty() ? w.cwiseAbs().maxCoeff() : (w - sol.history.back()).cwiseAbs().maxCoeff();
    sol.history.push_back(w);
    sol.dw_norms.push_back(dw);
    sol.residual_norms.push_back(step.orthogonality);
    sol.conditions.push_back(step.condition);

    const Vec phi = s.tab().psi.transpose() * w;
    if (phi_prev.size()) {
      const Vec excess = (phi - phi_prev).array() / (1.0 + phi_prev.array().abs());
      const double worst = excess.maxCoeff();
      if (worst > 1e-9) sol.violations.push_back({it, worst});
      consecutive = worst > 1e-7 ? consecutive + 1 : 0;
      if (consecutive > 3)
        throw SolverError("value estimates increased for more than 3 consecutive iterations (at iteration " +
                          std::to_string(it) + ", relative increase " + detail::format_number(worst) + ")");
    }
    phi_prev = phi;
    sol.weights = w;
    sol.iterations = it;
    if (it > 1 && (dw <= opt.tol_w || (opt.tol_res > 0 && step.orthogonality <= opt.tol_res))) {
      sol.converged = true;
      break;
    }
    U = s.law_nodes(w);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_inside(const GalerkinSetup& s, const Vec& x, bool allow_extrapolation) {
  if (x.size() != s.spec().n) throw ValidationError("point has the wrong dimension");
  if (!allow_extrapolation && !s.spec().domain.contains(x, 1e-12))
    throw DomainError("point outside the domain (extrapolation is disabled)");
}

}  // namespace detail

inline double eval_value(const HjbSolution& s, const Vec& x, bool allow_extrapolation = false) {
  detail::check_inside(*s.setup, x, allow_extrapolation);
  return s.basis().values(x).dot(s.weights);
}

inline Vec eval_control(const HjbSolution& s, const Vec& x, bool allow_extrapolation = false) {
  detail::check_inside(*s.setup, x, allow_extrapolation);
  return s.law()(x);
}

// eta(x) = grad' f + m - 1/4 grad' g R^-1 g' grad for the value weights w.
inline double hjb_residual(const GalerkinSetup& s, const Vec& w, const Vec& x) {
  const Vec grad = s.basis()->jacobian(x).transpose() * w;
  const auto xa = pack(x, s.alpha());
  const Mat G = s.model().g(xa);
  const Vec gt = G.transpose() * grad;
  return grad.dot(s.model().f(xa)) + s.model().m(xa) - 0.25 * gt.dot(s.model().Rinv * gt);
}

inline double hjb_residual(const HjbSolution& s, const Vec& x) {
  detail::check_inside(*s.setup, x, false);
  return hjb_residual(*s.setup, s.weights, x);
}

// RMS of the residual over the quadrature nodes.
inline double residual_rms(const GalerkinSetup& s, const Vec& w) {
  double acc = 0.0;
  for (int k = 0; k < s.grid().size(); ++k) {
    const double e = hjb_residual(s, w, s.grid().node(k));
    acc += e * e;
  }
  return std::sqrt(acc / s.grid().size());
}

// Everything needed to re-solve the same problem at another parameter value.
struct SolveRecipe {
  CompiledProblem problem;
  std::shared_ptr<const BasisSet> basis;
  std::vector<int> quad_order;
  std::function<ControlLaw(const Vec& alpha)> initial_law;
  HjbOptions options;

  std::shared_ptr<const GalerkinSetup> setup_at(const Vec& alpha) const {
    return std::make_shared<const GalerkinSetup>(problem, basis, gauss_grid(problem.spec().domain, quad_order), alpha);
  }

  HjbSolution solve(const Vec& alpha) const { return policy_iteration(setup_at(alpha), initial_law(alpha), options); }
};

}  // namespace neoc
