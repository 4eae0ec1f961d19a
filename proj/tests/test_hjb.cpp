#include <gtest/gtest.h>

#include <cmath>

#include "neoc/neoc.hpp"
#include "support.hpp"

using namespace neoc;
using test::recipe_for;
using test::vec1;

namespace {

const char* kScalarLq = R"([problem]
name = scalar_lq
[dims]
state = 1
control = 1
params = 1
[dynamics]
f1 = a*x1
g11 = 1
[cost]
m = 3*x1^2
R = 1
[domain]
lo = -1
hi = 1
[params]
names = a
nominal = 0.5
[hints]
basis = 2
)";

HjbSolution scalar_solution() { return recipe_for("scalar_siso").solve(vec1(1.0)); }

}  // namespace

TEST(GalerkinStep, FirstIterateNonNegative) {
  const auto s = recipe_for("scalar_siso").setup_at(vec1(1.0));
  const StepResult r = galerkin_step(*s, expr_law({"-5*x1"}, s->spec(), vec1(1.0)));
  const Vec phi = s->tab().psi.transpose() * r.weights;
  EXPECT_GE(phi.minCoeff(), 0.0);
  EXPECT_LT(r.orthogonality, 1e-12);
}

TEST(GalerkinStep, LinearPolicyValue) {
  const ProblemSpec spec = load_problem(kScalarLq);
  const auto s = recipe_for(spec).setup_at(vec1(0.5));
  for (double k : {1.0, 2.0, 5.0}) {
    const StepResult r = galerkin_step(*s, LinearGain{Mat::Constant(1, 1, k)});
    EXPECT_NEAR(r.weights[0], (3 + k * k) / (2 * (k - 0.5)), 1e-12) << "k=" << k;
  }
}

TEST(GalerkinStep, DestabilizingLawRejected) {
  const auto s = recipe_for("scalar_siso").setup_at(vec1(1.0));
  try {
    galerkin_step(*s, expr_law({"5*x1"}, s->spec(), vec1(1.0)));
    FAIL() << "accepted a destabilizing law";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("policy evaluation produced non-positive value"), std::string::npos);
  }
}

TEST(PolicyIteration, ScalarClosedForm) {
  const HjbSolution sol = scalar_solution();
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.iterations, 100);
  const double err = test::sup_vs(sol.law(), [](const Vec& x) { return test::scalar_u(x[0], 1.0); },
                                    test::line_grid(-1, 1, 201));
  EXPECT_LT(err, 1e-2);
  EXPECT_NEAR(eval_control(sol, vec1(1.0))[0], 1 - std::sqrt(4.0), 1e-2);
  EXPECT_NEAR(eval_value(sol, vec1(0.6)), test::scalar_phi(0.6, 1.0), 1e-3);
}

TEST(PolicyIteration, ValueAndControlVanishAtOrigin) {
  for (const char* name : {"scalar_siso", "pendulum"}) {
    const ProblemSpec spec = builtin(name);
    const HjbSolution sol = recipe_for(spec).solve(spec.alpha_nominal);
    const Vec zero = Vec::Zero(spec.n);
    EXPECT_EQ(eval_value(sol, zero), 0.0);
    EXPECT_EQ(eval_control(sol, zero).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(hjb_residual(sol, zero), 0.0);
  }
}

TEST(PolicyIteration, OutsideDomainNeedsExtrapolation) {
  const HjbSolution sol = scalar_solution();
  EXPECT_THROW(eval_value(sol, vec1(1.5)), DomainError);
  EXPECT_NO_THROW(eval_value(sol, vec1(1.5), true));
}

TEST(PolicyIteration, FixedPointOfGalerkinStep) {
  const HjbSolution sol = scalar_solution();
  const StepResult r = galerkin_step(*sol.setup, sol.law());
  EXPECT_LT((r.weights - sol.weights).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PolicyIteration, OrthogonalityOfEachStep) {
  const HjbSolution sol = scalar_solution();
  for (double o : sol.residual_norms) EXPECT_LT(o, 1e-10);
  // The policy-evaluation residual is orthogonal to every basis function.
  const GalerkinSetup& s = *sol.setup;
  const Vec& w_prev = sol.history[sol.history.size() - 2];
  const GalerkinLaw u = s.law(w_prev);
  const Vec& w = sol.history.back();
  for (int j = 0; j < s.basis()->size(); ++j) {
    double acc = 0, scale = 0;
    for (int k = 0; k < s.grid().size(); ++k) {
      const Vec x = s.grid().node(k);
      const Vec uk = u(x);
      const double e = (s.basis()->jacobian(x).transpose() * w).dot(s.f_nodes().col(k) + s.g_node(k) * uk) +
                       s.m_nodes()[k] + uk.dot(uk);
      acc += s.grid().weights[k] * e * s.tab().psi(j, k);
      scale += s.grid().weights[k] * std::abs(s.tab().psi(j, k)) * (s.m_nodes()[k] + uk.dot(uk));
    }
    EXPECT_LT(std::abs(acc), 1e-10 * (1 + scale)) << "basis " << j;
  }
}

TEST(PolicyIteration, MonotoneValues) {
  for (const auto& name : builtin_names()) {
    const ProblemSpec spec = builtin(name);
    const HjbSolution sol = recipe_for(spec).solve(spec.alpha_nominal);
    const Mat& psi = sol.setup->tab().psi;
    for (std::size_t i = 1; i + 1 < sol.history.size(); ++i) {
      const Vec a = psi.transpose() * sol.history[i], b = psi.transpose() * sol.history[i + 1];
      EXPECT_LE((b - a.cwiseProduct(Vec::Constant(a.size(), 1 + 1e-7)) - Vec::Constant(a.size(), 1e-7)).maxCoeff(), 0.0)
          << name << " iterate " << i + 2;
    }
  }
}

TEST(PolicyIteration, ResidualImproves) {
  const HjbSolution sol = scalar_solution();
  EXPECT_GT(residual_rms(*sol.setup, sol.history.front()), residual_rms(*sol.setup, sol.weights));
  // Projecting the closed-form value onto the basis leaves a residual bounded by the projection error.
  const GalerkinSetup& s = *sol.setup;
  const Mat G = s.tab().psi_w * s.tab().psi.transpose();
  Vec rhs(s.basis()->size());
  for (int j = 0; j < rhs.size(); ++j) {
    double acc = 0;
    for (int k = 0; k < s.grid().size(); ++k) acc += s.tab().psi_w(j, k) * test::scalar_phi(s.grid().nodes(0, k), 1.0);
    rhs[j] = acc;
  }
  const Vec w_proj = G.ldlt().solve(rhs);
  EXPECT_LT(residual_rms(s, w_proj), 1e-3);
}

TEST(PolicyIteration, IterateGapIdentity) {
  // V_{u0}(x0) - V_{u1}(x0) equals the integral of m + u0'R u0 + grad V_{u1}'(f + g u0)
  // along the u0 trajectory.
  const SolveRecipe r = recipe_for("scalar_siso");
  const auto s = r.setup_at(vec1(1.0));
  const ControlLaw u0 = expr_law({"-5*x1"}, s->spec(), vec1(1.0));
  const Vec w1 = galerkin_step(*s, u0).weights;
  const Vec w2 = galerkin_step(*s, s->law(w1)).weights;
  const Model& model = s->model();
  for (double x0 : {0.3, 0.7, -0.9}) {
    const Trajectory tr = integrate(model, vec1(1.0), u0, vec1(x0), s->spec().domain);
    ASSERT_EQ(tr.reason, Termination::decayed);
    const Vec gap = trajectory_integral(tr, [&](const Vec& x, const Vec& u) {
      const auto xa = pack(x, vec1(1.0));
      const Vec grad = s->basis()->jacobian(x).transpose() * w2;
      return Vec::Constant(1, model.m(xa) + u.dot(u) + grad.dot(model.f(xa) + model.g(xa) * u));
    });
    const BasisSet& b = *s->basis();
    const double lhs = b.values(vec1(x0)).dot(w1) - b.values(vec1(x0)).dot(w2);
    EXPECT_NEAR(lhs, gap[0], 1e-4 * (1 + std::abs(lhs))) << "x0=" << x0;
    EXPECT_GE(lhs, 0.0);
  }
}

TEST(PolicyIteration, BilinearGalerkinFixedPoint) {
  // The value function is singular at the origin, so the projected HJB residual is the checkable property:
  // <m - g^2 phi'^2 / 4, psi_j> = 0 on the solve grid, with the closed-form control reached only approximately.
  const HjbSolution sol = recipe_for("bilinear").solve(vec1(1.0));
  EXPECT_TRUE(sol.converged);
  const BasisSet& b = *sol.setup->basis();
  const QuadratureGrid& grid = sol.setup->grid();
  const auto residual = [&](const Vec& x) {
    const double x1 = x[0], dphi = (b.jacobian(x).transpose() * sol.weights)[0], g = x1 * x1;
    return x1 * x1 + std::pow(x1, 4) - 0.25 * g * g * dphi * dphi;
  };
  for (int j = 0; j < b.size(); ++j) {
    const double r = inner_product(residual, [&](const Vec& x) { return b.values(x)[j]; }, grid);
    EXPECT_NEAR(r, 0.0, 1e-8) << "psi_" << j;
  }
  // Errors are largest near the origin, where g vanishes.
  double near = 0, far = 0;
  for (const Vec& x : test::line_grid(-1, 1, 201)) {
    const double e = std::abs(sol.law()(x)[0] + x[0] * std::sqrt(1 + x[0] * x[0]));
    double& slot = std::abs(x[0]) < 0.2 ? near : far;
    slot = std::max(slot, e);
  }
  EXPECT_GE(near, far);
  EXPECT_LT(far, 0.2);
  RecordProperty("bilinear_far_error", std::to_string(far));
}

TEST(PolicyIteration, PendulumClosedLoopHurwitz) {
  const ProblemSpec spec = builtin("pendulum");
  const HjbSolution sol = recipe_for(spec).solve(spec.alpha_nominal);
  EXPECT_TRUE(sol.converged);
  const Model& model = *sol.setup->problem().model();
  const GalerkinLaw law = sol.law();
  Mat J(2, 2);
  for (int d = 0; d < 2; ++d) {
    Vec e = Vec::Zero(2);
    e[d] = 1e-6;
    J.col(d) = (closed_loop_rhs(model, spec.alpha_nominal, law, e) - closed_loop_rhs(model, spec.alpha_nominal, law, -e)) / 2e-6;
  }
  EXPECT_TRUE(is_hurwitz(J));
}

TEST(PolicyIteration, CartpoleMatchesRiccati) {
  const ProblemSpec spec = builtin("cartpole_lqr");
  const HjbSolution sol = recipe_for(spec).solve(spec.alpha_nominal);
  EXPECT_TRUE(sol.converged);
  const RiccatiSolution ric = care_solve(LqrProblem::from_problem(spec), spec.alpha_nominal);
  const Vec x = test::vec({0.3, -0.2, 0.1, 0.4});
  const double v = x.dot(ric.P * x);
  EXPECT_NEAR(eval_value(sol, x), v, 1e-6 * (1 + v));
  EXPECT_NEAR(sol.law()(x)[0], -(ric.K * x)[0], 1e-6);
}

TEST(PolicyIteration, Options) {
  const SolveRecipe r = recipe_for("scalar_siso");
  HjbOptions o;
  o.max_iter = 2;
  const HjbSolution sol = policy_iteration(r.setup_at(vec1(1.0)), r.initial_law(vec1(1.0)), o);
  EXPECT_EQ(sol.iterations, 2);
  EXPECT_FALSE(sol.converged);
  o.max_iter = 0;
  EXPECT_THROW(policy_iteration(r.setup_at(vec1(1.0)), r.initial_law(vec1(1.0)), o), ValidationError);
}

TEST(PolicyIteration, GateRejectsBadInitialLaw) {
  const SolveRecipe r = recipe_for("scalar_siso");
  const auto s = r.setup_at(vec1(1.0));
  EXPECT_THROW(policy_iteration(s, expr_law({"2*x1"}, s->spec(), vec1(1.0))), SolverError);
}
