#pragma once

// Linear-quadratic special case: Kleinman iteration for the algebraic Riccati
// equation, symmetric Lyapunov solves for dP/dalpha and the NEOC gain.
// Gains follow u = -K x throughout.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "neoc/error.hpp"
#include "neoc/expr.hpp"
#include "neoc/problem.hpp"

namespace neoc {

struct LqrMatrices {
  Mat A, B, Q, R;
};

class LqrProblem {
 public:
  LqrProblem() = default;

  LqrProblem(int n, int p, std::vector<Expr> A, std::vector<Expr> B, std::vector<Expr> Q, Mat R, std::vector<std::string> names,
             Vec alpha_nominal)
      : n_(n), p_(p), A_(std::move(A)), B_(std::move(B)), Q_(std::move(Q)), R_(std::move(R)), names_(std::move(names)),
        alpha_nominal_(std::move(alpha_nominal)) {
    if (static_cast<int>(A_.size()) != n * n || static_cast<int>(B_.size()) != n * p || static_cast<int>(Q_.size()) != n * n)
      throw ValidationError("dimension mismatch in LQR data");
    if (R_.rows() != p || R_.cols() != p || R_.llt().info() != Eigen::Success) throw ValidationError("R not positive definite");
    for (const auto* list : {&A_, &B_, &Q_})
      for (const Expr& e : *list)
        for (const auto& s : symbols(e))
          if (std::find(names_.begin(), names_.end(), s) == names_.end())
            throw ValidationError("LQR entries may only use parameters, found '" + s + "'");
    for (const auto& name : names_) {
      std::vector<Expr> dA, dB, dQ;
      for (const Expr& e : A_) dA.push_back(diff(e, name));
      for (const Expr& e : B_) dB.push_back(diff(e, name));
      for (const Expr& e : Q_) dQ.push_back(diff(e, name));
      dA_.push_back(std::move(dA));
      dB_.push_back(std::move(dB));
      dQ_.push_back(std::move(dQ));
    }
  }

  // From the [lqr] section when present, otherwise from the linearization of
  // f and g at the origin and half the Hessian of m.
  static LqrProblem from_problem(const ProblemSpec& spec) {
    if (spec.lqr) return LqrProblem(spec.n, spec.p, spec.lqr->A, spec.lqr->B, spec.lqr->Q, spec.R, spec.alpha_names, spec.alpha_nominal);
    const DerivedProblem d = derived_fields(spec);
    std::vector<Expr> Q;
    for (const Expr& h : d.Hm) Q.push_back(simplify(Expr::constant(0.5) * h));
    return LqrProblem(spec.n, spec.p, d.A0, d.B0, Q, spec.R, spec.alpha_names, spec.alpha_nominal);
  }

  int n() const { return n_; }
  int p() const { return p_; }
  int q() const { return static_cast<int>(names_.size()); }
  const Vec& alpha_nominal() const { return alpha_nominal_; }
  const std::vector<std::string>& names() const { return names_; }
  const Mat& R() const { return R_; }

  LqrMatrices at(const Vec& alpha) const {
    check_alpha(alpha);
    return {eval(A_, n_, n_, alpha), eval(B_, n_, p_, alpha), eval(Q_, n_, n_, alpha), R_};
  }

  // Derivatives of A, B, Q with respect to parameter l (R is parameter free).
  LqrMatrices derivative(int l, const Vec& alpha) const {
    check_alpha(alpha);
    if (l < 0 || l >= q()) throw ValidationError("parameter index out of range");
    const auto L = static_cast<std::size_t>(l);
    return {eval(dA_[L], n_, n_, alpha), eval(dB_[L], n_, p_, alpha), eval(dQ_[L], n_, n_, alpha), Mat::Zero(p_, p_)};
  }

 private:
  void check_alpha(const Vec& alpha) const {
    if (alpha.size() != q()) throw ValidationError("parameter vector has the wrong length");
  }

  Mat eval(const std::vector<Expr>& e, int rows, int cols, const Vec& alpha) const {
    const std::vector<double> vals(alpha.data(), alpha.data() + alpha.size());
    Mat M(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) M(i, j) = CompiledExpr(e[static_cast<std::size_t>(i * cols + j)], names_)(vals);
    if (!M.allFinite()) throw DomainError("LQR data not finite at these parameters");
    return M;
  }

  int n_ = 0, p_ = 0;
  std::vector<Expr> A_, B_, Q_;
  Mat R_;
  std::vector<std::string> names_;
  Vec alpha_nominal_;
  std::vector<std::vector<Expr>> dA_, dB_, dQ_;
};

// Numerical rank with singular values above 1e-10 sigma_max.
inline int numerical_rank(const Mat& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > 1e-10 * s[0]) ++r;
  return r;
}

struct AssumptionReport {
  int n = 0;
  int controllability_rank = 0;
  int observability_rank = 0;
  bool controllable() const { return controllability_rank == n; }
  bool observable() const { return observability_rank == n; }
  bool pass() const { return controllable() && observable(); }

  std::string message() const {
    std::string out;
    if (!controllable()) out += "controllability rank " + std::to_string(controllability_rank) + " < " + std::to_string(n);
    if (!observable()) {
      if (!out.empty()) out += "; ";
      out += "observability rank " + std::to_string(observability_rank) + " < " + std::to_string(n);
    }
    return out.empty() ? "controllable and observable" : out;
  }
};

inline Mat psd_sqrt(const Mat& Q) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Q + Q.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

inline AssumptionReport check_assumptions(const LqrMatrices& m) {
  const int n = static_cast<int>(m.A.rows());
  AssumptionReport rep;
  rep.n = n;
  Mat ctrb(n, n * m.B.cols());
  Mat blk = m.B;
  for (int i = 0; i < n; ++i) {
    ctrb.middleCols(i * m.B.cols(), m.B.cols()) = blk;
    blk = m.A * blk;
  }
  rep.controllability_rank = numerical_rank(ctrb);
  const Mat C = psd_sqrt(m.Q);
  Mat obsv(n * n, n);
  Mat row = C;
  for (int i = 0; i < n; ++i) {
    obsv.middleRows(i * n, n) = row;
    row = row * m.A;
  }
  rep.observability_rank = numerical_rank(obsv);
  return rep;
}

inline AssumptionReport check_assumptions(const LqrProblem& lp, const Vec& alpha) { return check_assumptions(lp.at(alpha)); }

inline bool is_hurwitz(const Mat& E, double margin = 0.0) {
  if (E.size() == 0) return true;
  Eigen::EigenSolver<Mat> es(E, false);
  return es.eigenvalues().real().maxCoeff() < -margin;
}

// Solves E' X + X E + F = 0 for symmetric X over the n(n+1)/2 upper-triangle unknowns.
inline Mat lyap_solve(const Mat& E, const Mat& F) {
  const int n = static_cast<int>(E.rows());
  if (E.cols() != n || F.rows() != n || F.cols() != n) throw ValidationError("lyap_solve: dimension mismatch");
  if (!is_hurwitz(E)) throw SolverError("E is not Hurwitz; the Lyapunov equation has no unique solution");
  const int m = n * (n + 1) / 2;
  auto slot = [n](int i, int j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  };
  Mat L = Mat::Zero(m, m);
  const Mat Fs = 0.5 * (F + F.transpose());
  Vec rhs(m);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const int r = slot(i, j);
      rhs[r] = -Fs(i, j);
      // (E'X + XE)_ij = sum_k E_ki X_kj + X_ik E_kj
      for (int k = 0; k < n; ++k) {
        L(r, slot(k, j)) += E(k, i);
        L(r, slot(i, k)) += E(k, j);
      }
    }
  Eigen::PartialPivLU<Mat> lu(L);
  Vec z = lu.solve(rhs);
  z += lu.solve(rhs - L * z);  // one refinement step
  Mat X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) X(i, j) = X(j, i) = z[slot(i, j)];
  return X;
}

inline double lyap_residual(const Mat& E, const Mat& F, const Mat& X) { return (E.transpose() * X + X * E + F).norm(); }

// W = int_0^T e^{-At} B R^-1 B' e^{-A't} dt via the block exponential of [[A, BR^-1B'], [0, -A']].
inline Mat backward_gramian(const Mat& A, const Mat& B, const Mat& Rinv, double T) {
  const int n = static_cast<int>(A.rows());
  Mat M = Mat::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = A * T;
  M.topRightCorner(n, n) = B * Rinv * B.transpose() * T;
  M.bottomRightCorner(n, n) = -A.transpose() * T;
  const Mat E = M.exp();
  const Mat W = Mat((-A * T).exp()) * E.topRightCorner(n, n);
  return 0.5 * (W + W.transpose());
}

// K0 = 0 for Hurwitz A, otherwise R^-1 B' W^-1 with a finite-horizon Gramian.
inline Mat stabilizing_gain(const Mat& A, const Mat& B, const Mat& R) {
  const int n = static_cast<int>(A.rows());
  if (is_hurwitz(A)) return Mat::Zero(B.cols(), n);
  const Mat Rinv = R.inverse();
  for (double T : {1.0, 2.0, 0.5, 5.0, 0.2, 10.0, 0.1, 20.0}) {
    const Mat W = backward_gramian(A, B, Rinv, T);
    if (!W.allFinite()) continue;
    Eigen::LLT<Mat> llt(W);
    if (llt.info() != Eigen::Success) continue;
    const Mat K = Rinv * B.transpose() * llt.solve(Mat::Identity(n, n));
    if (K.allFinite() && is_hurwitz(A - B * K)) return K;
  }
  throw SolverError("no stabilizing initial gain found (is (A, B) stabilizable?)");
}

struct RiccatiSolution {
  Mat P, K, E;
  int iterations = 0;
  double residual = 0.0;                  // Frobenius norm of the Riccati residual
  std::vector<double> monotonicity;       // min eigenvalue of P_i - P_{i+1} per iteration
};

inline double riccati_residual(const LqrMatrices& m, const Mat& P) {
  return (m.A.transpose() * P + P * m.A - P * m.B * m.R.inverse() * m.B.transpose() * P + m.Q).norm();
}

inline RiccatiSolution care_solve(const LqrMatrices& m, std::optional<Mat> K0 = std::nullopt, int max_iter = 200) {
  const Mat Rinv = m.R.inverse();
  Mat K = K0 ? *K0 : stabilizing_gain(m.A, m.B, m.R);
  if (!is_hurwitz(m.A - m.B * K)) throw SolverError("initial gain is not stabilizing");
  RiccatiSolution sol;
  Mat P_prev;
  for (int it = 1; it <= max_iter; ++it) {
    const Mat E = m.A - m.B * K;
    Mat P = lyap_solve(E, m.Q + K.transpose() * m.R * K);
    P = 0.5 * (P + P.transpose());
    K = Rinv * m.B.transpose() * P;
    sol.iterations = it;
    if (P_prev.size()) {
      Eigen::SelfAdjointEigenSolver<Mat> es(P_prev - P);
      sol.monotonicity.push_back(es.eigenvalues().minCoeff());
      const double change = (P - P_prev).norm();
      P_prev = P;
      if (change <= 1e-13 * (1.0 + P.norm())) break;
    } else {
      P_prev = P;
    }
    if (it == max_iter) throw SolverError("Kleinman iteration stalled after " + std::to_string(max_iter) + " iterations");
  }
  sol.P = P_prev;
  sol.K = Rinv * m.B.transpose() * sol.P;
  sol.E = m.A - m.B * sol.K;
  sol.residual = riccati_residual(m, sol.P);
  if (!(sol.residual <= 1e-9 * m.Q.norm() + 1e-12 * (1.0 + sol.P.norm())))
    throw SolverError("Riccati residual " + detail::format_number(sol.residual) + " above tolerance");
  return sol;
}

inline RiccatiSolution care_solve(const LqrProblem& lp, const Vec& alpha, std::optional<Mat> K0 = std::nullopt) {
  return care_solve(lp.at(alpha), std::move(K0));
}

// dP/dalpha_l from E' X + X E + F_l = 0.
inline Mat riccati_sensitivity(const LqrProblem& lp, const RiccatiSolution& sol, const Vec& alpha, int l) {
  const LqrMatrices m = lp.at(alpha);
  const LqrMatrices d = lp.derivative(l, alpha);
  const Mat Rinv = m.R.inverse();
  const Mat& P = sol.P;
  const Mat F = d.A.transpose() * P + P * d.A - P * d.B * Rinv * m.B.transpose() * P - P * m.B * Rinv * d.B.transpose() * P + d.Q;
  return lyap_solve(sol.E, F);
}

// K_NE = K + R^-1 sum_l (dB_l' P + B' dP_l) dalpha_l
inline Mat neoc_gain(const LqrProblem& lp, const RiccatiSolution& sol, const std::vector<Mat>& dP, const Vec& alpha,
                     const Vec& delta_alpha) {
  if (static_cast<int>(dP.size()) != lp.q() || delta_alpha.size() != lp.q())
    throw ValidationError("neoc_gain: need one dP and one delta entry per parameter");
  const LqrMatrices m = lp.at(alpha);
  const Mat Rinv = m.R.inverse();
  Mat K = sol.K;
  for (int l = 0; l < lp.q(); ++l) {
    if (delta_alpha[l] == 0.0) continue;
    const LqrMatrices d = lp.derivative(l, alpha);
    K += Rinv * (d.B.transpose() * sol.P + m.B.transpose() * dP[static_cast<std::size_t>(l)]) * delta_alpha[l];
  }
  return K;
}

}  // namespace neoc
