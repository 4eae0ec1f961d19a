#pragma once

// Parameter sensitivity of the converged Galerkin weights and the neighboring
// extremal (NEOC) control laws built from it.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "neoc/control_law.hpp"
#include "neoc/error.hpp"
#include "neoc/hjb.hpp"
#include "neoc/problem.hpp"

namespace neoc {

struct SensitivityResult {
  Mat J_w;  // N x q, column l = d w / d alpha_l
  double condition = 0.0;
};

// Solves M dw/dalpha_l = c_l with the closed-loop Galerkin matrix
// M[j][i] = <grad psi_i' (f - 1/2 g R^-1 g' grad phi), psi_j> and
// c_l[j] = <-(df/dalpha_l)' grad phi - dm/dalpha_l + 1/2 grad phi' dg_l R^-1 g' grad phi, psi_j>.
inline SensitivityResult weight_sensitivity(const GalerkinSetup& s, const Vec& w) {
  const auto& dm = *s.problem().derived_model();
  const int K = s.grid().size(), n = s.spec().n, q = s.spec().q;
  const Mat& Rinv = s.model().Rinv;
  Mat F = s.f_nodes();
  Mat rhs(q, K);
  for (int k = 0; k < K; ++k) {
    const Vec grad = s.grad_at(w, k);
    const Mat& G = s.g_node(k);
    const Vec v = Rinv * (G.transpose() * grad);  // R^-1 g' grad phi
    F.col(k) -= 0.5 * (G * v);
    const auto xa = pack(s.grid().node(k), s.alpha());
    const Mat df = dm.df(xa);
    const Vec dmv = dm.dm(xa);
    for (int l = 0; l < q; ++l) {
      const Mat dg = dm.dg(l, xa);
      rhs(l, k) = -df.col(l).dot(grad) - dmv[l] + 0.5 * grad.dot(dg * v);
    }
  }
  (void)n;
  const Mat M = s.transport_matrix(F);
  SensitivityResult r;
  r.condition = condition_number(M);
  if (!(r.condition <= 1e12))
    throw SolverError("sensitivity system is singular or ill-conditioned (condition number " +
                      detail::format_number(r.condition) + ")");
  const Mat C = s.tab().psi_w * rhs.transpose();  // N x q
  r.J_w = M.partialPivLu().solve(C);
  if (!r.J_w.allFinite()) throw SolverError("sensitivity solve produced non-finite entries");
  return r;
}

inline SensitivityResult weight_sensitivity(const HjbSolution& sol) { return weight_sensitivity(*sol.setup, sol.weights); }

inline NeocLaw make_neoc_law(const GalerkinSetup& s, const Vec& w, const Mat& J_w, const Vec& delta_alpha) {
  if (delta_alpha.size() != s.spec().q)
    throw ValidationError("delta has " + std::to_string(delta_alpha.size()) + " entries, expected " + std::to_string(s.spec().q));
  NeocLaw law;
  law.model = s.problem().model();
  law.derived = s.problem().derived_model();
  law.basis = s.basis();
  law.weights = w;
  law.J_w = J_w;
  law.alpha = s.alpha();
  law.delta = delta_alpha;
  law.dw = J_w * delta_alpha;
  return law;
}

inline NeocLaw neoc_law(const HjbSolution& sol, const SensitivityResult& sens, const Vec& delta_alpha) {
  return make_neoc_law(*sol.setup, sol.weights, sens.J_w, delta_alpha);
}

// delta u = -1/2 R^-1 ( g' J_psi' J_w + [dg_l' J_psi' w]_l ) delta_alpha
inline Vec neoc_adjustment(const HjbSolution& sol, const SensitivityResult& sens, const Vec& x, const Vec& delta_alpha) {
  if (x.size() != sol.setup->spec().n) throw ValidationError("point has the wrong dimension");
  return neoc_law(sol, sens, delta_alpha).adjustment(x);
}

// xi(x) = J_w' Psi(x); the first-order value change is xi' delta_alpha.
inline Vec value_sensitivity(const HjbSolution& sol, const SensitivityResult& sens, const Vec& x) {
  if (x.size() != sol.setup->spec().n) throw ValidationError("point has the wrong dimension");
  return sens.J_w.transpose() * sol.basis().values(x);
}

// Smallest step count whose per-step second-order error M |dalpha/N|^2 / 2 stays within eps.
inline int min_steps(double M_est, const Vec& delta_alpha, double epsilon) {
  if (!(M_est > 0) || !(epsilon > 0)) throw ValidationError("min_steps needs M > 0 and epsilon > 0");
  const double n = std::ceil(M_est * delta_alpha.squaredNorm() / (2.0 * epsilon));
  if (!(n < 1e9)) throw ValidationError("step count overflow");
  return std::max(1, static_cast<int>(n));
}

// Sampled estimate of max |d^2 u / d alpha^2| along the segment alpha_lo -> alpha_hi:
// 5 centers on the segment, central second differences of recalculated laws.
inline double estimate_M(const SolveRecipe& recipe, const Vec& alpha_lo, const Vec& alpha_hi, const std::vector<Vec>& points,
                         int samples = 5) {
  const Vec dir = alpha_hi - alpha_lo;
  const double len = dir.norm();
  if (!(len > 0)) throw ValidationError("degenerate alpha_range");
  if (samples < 2) throw ValidationError("estimate_M needs at least 2 samples");
  const double h = 0.05;  // fraction of the segment
  auto solve_at = [&](const Vec& a) {
    try {
      return recipe.solve(a);
    } catch (const Error& e) {
      throw SolverError("solve failed at alpha=" + detail::vec_str(a) + ": " + e.what());
    }
  };
  double M = 0.0;
  for (int c = 0; c < samples; ++c) {
    const double t = static_cast<double>(c) / (samples - 1);
    const Vec a0 = alpha_lo + t * dir;
    const auto lm = solve_at(a0 - h * dir).law();
    const auto l0 = solve_at(a0).law();
    const auto lp = solve_at(a0 + h * dir).law();
    const double step = h * len;
    for (const Vec& x : points) {
      const Vec d2 = (lp(x) - 2.0 * l0(x) + lm(x)) / (step * step);
      M = std::max(M, d2.cwiseAbs().maxCoeff());
    }
  }
  return M;
}

struct HomotopyStep {
  int index = 0;
  Vec alpha;      // parameters at the start of the step
  double dw_norm = 0.0;
  double condition = 0.0;
};

struct HomotopyResult {
  ControlLaw law;  // final law, valid at alpha + delta
  Vec weights;     // weights at the start of the final step (predictor) or after the final polish
  Vec alpha_final;
  std::vector<HomotopyStep> steps;
};

// Splits delta into N equal increments. Each step re-evaluates the weight
// sensitivity at the current (w, alpha) and advances w by J_w delta/N; with
// `polish` one Galerkin step at the new parameters follows each update. The
// predictor-only path returns its last increment as a NEOC law, so N = 1 is
// the plain NEOC law.
inline HomotopyResult homotopy_neoc(const HjbSolution& base, const Vec& delta_alpha, int N_steps, bool polish) {
  if (N_steps < 1) throw ValidationError("homotopy needs at least one step");
  const GalerkinSetup& s0 = *base.setup;
  if (delta_alpha.size() != s0.spec().q) throw ValidationError("delta has the wrong length");
  const Vec inc = delta_alpha / static_cast<double>(N_steps);
  HomotopyResult res;
  Vec w = base.weights;
  std::shared_ptr<const GalerkinSetup> setup = base.setup;
  for (int k = 0; k < N_steps; ++k) {
    const Vec a_k = s0.alpha() + static_cast<double>(k) * inc;
    if (k > 0) setup = std::make_shared<const GalerkinSetup>(s0.problem(), s0.basis(), s0.grid(), a_k);
    SensitivityResult sens;
    try {
      sens = weight_sensitivity(*setup, w);
    } catch (const SolverError& e) {
      throw SolverError("homotopy aborted at step " + std::to_string(k + 1) + " (alpha=" + detail::vec_str(a_k) + "): " + e.what());
    }
    HomotopyStep st;
    st.index = k + 1;
    st.alpha = a_k;
    st.condition = sens.condition;
    const Vec dw = sens.J_w * inc;
    st.dw_norm = dw.cwiseAbs().maxCoeff();
    res.steps.push_back(st);

    const bool last = k == N_steps - 1;
    if (last && !polish) {
      res.law = make_neoc_law(*setup, w, sens.J_w, inc);
      res.weights = w;
      res.alpha_final = s0.alpha() + delta_alpha;
      return res;
    }
    w += dw;
    if (polish) {
      const Vec a_next = last ? Vec(s0.alpha() + delta_alpha) : Vec(s0.alpha() + static_cast<double>(k + 1) * inc);
      auto next = std::make_shared<const GalerkinSetup>(s0.problem(), s0.basis(), s0.grid(), a_next);
      try {
        w = galerkin_step(*next, next->law(w)).weights;
      } catch (const SolverError& e) {
        throw SolverError("homotopy polish failed at step " + std::to_string(k + 1) + " (alpha=" + detail::vec_str(a_next) +
                          "): " + e.what());
      }
      if (last) {
        res.law = next->law(w);
        res.weights = w;
        res.alpha_final = a_next;
        return res;
      }
    }
  }
  return res;  // not reached
}

}  // namespace neoc
