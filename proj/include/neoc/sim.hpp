#pragma once

// Closed-loop RK4 integration, performance-index evaluation and law comparison.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "neoc/control_law.hpp"
#include "neoc/error.hpp"
#include "neoc/problem.hpp"

namespace neoc {

struct SimOptions {
  double dt = 1e-3;
  double T_max = 50.0;
  double decay_tol = 1e-8;
  double escape_factor = 10.0;  // escape when |x| > escape_factor * radius(domain)
};

enum class Termination { decayed, horizon, escaped };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::decayed: return "decayed";
    case Termination::horizon: return "horizon";
    default: return "escaped";
  }
}

struct Trajectory {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  Termination reason = Termination::horizon;

  std::size_t size() const { return states.size(); }
  const Vec& final_state() const { return states.back(); }
};

inline Vec closed_loop_rhs(const Model& model, const Vec& alpha, const ControlLaw& law, const Vec& x, Vec* u_out = nullptr) {
  const Vec u = law(x);
  if (u_out) *u_out = u;
  const auto xa = pack(x, alpha);
  return model.f(xa) + model.g(xa) * u;
}

// Classic fixed-step RK4. Stops at the first sample with |x| <= decay_tol.
inline Trajectory integrate(const Model& model, const Vec& alpha, const ControlLaw& law, const Vec& x0, const Box& domain,
                            const SimOptions& opt = {}) {
  if (!domain.contains(x0, 1e-12)) throw DomainError("initial state outside the domain");
  if (!(opt.dt > 0) || !(opt.T_max > 0)) throw ValidationError("dt and T_max must be positive");
  const double escape = opt.escape_factor * domain.radius();
  const long steps = static_cast<long>(std::llround(opt.T_max / opt.dt));

  Trajectory tr;
  tr.dt = opt.dt;
  Vec x = x0;
  Vec u;
  const double h = opt.dt;
  for (long k = 0;; ++k) {
    Vec k1 = closed_loop_rhs(model, alpha, law, x, &u);
    tr.times.push_back(static_cast<double>(k) * h);
    tr.states.push_back(x);
    tr.controls.push_back(u);
    if (!x.allFinite() || !u.allFinite()) throw SolverError("non-finite state at step " + std::to_string(k));
    const double nx = x.norm();
    if (nx <= opt.decay_tol) {
      tr.reason = Termination::decayed;
      return tr;
    }
    if (nx > escape) {
      tr.reason = Termination::escaped;
      return tr;
    }
    if (k == steps) {
      tr.reason = Termination::horizon;
      return tr;
    }
    const Vec k2 = closed_loop_rhs(model, alpha, law, x + 0.5 * h * k1);
    const Vec k3 = closed_loop_rhs(model, alpha, law, x + 0.5 * h * k2);
    const Vec k4 = closed_loop_rhs(model, alpha, law, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

// Composite Simpson over uniformly spaced samples; an odd number of intervals
// closes with the 3/8 rule on the last three.
inline double simpson(const std::vector<double>& y, double h) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  if (n == 2) return 0.5 * h * (y[0] + y[1]);
  const std::size_t intervals = n - 1;
  std::size_t even = intervals % 2 == 0 ? intervals : intervals - 3;
  double s = 0.0;
  for (std::size_t i = 0; i + 2 <= even; i += 2) s += h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
  if (even != intervals) {
    const std::size_t i = even;
    s += 3.0 * h / 8.0 * (y[i] + 3.0 * y[i + 1] + 3.0 * y[i + 2] + y[i + 3]);
  }
  return s;
}

// Simpson integral of fn(x, u) (vector valued) along a trajectory.
inline Vec trajectory_integral(const Trajectory& tr, const std::function<Vec(const Vec&, const Vec&)>& fn) {
  if (tr.size() == 0) return {};
  std::vector<Vec> vals;
  vals.reserve(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) vals.push_back(fn(tr.states[k], tr.controls[k]));
  const Eigen::Index m = vals.front().size();
  Vec out(m);
  std::vector<double> col(tr.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < tr.size(); ++k) col[k] = vals[k][i];
    out[i] = simpson(col, tr.dt);
  }
  return out;
}

struct CostResult {
  double value = 0.0;       // +inf when the trajectory did not decay
  double tail_bound = 0.0;  // estimate of the neglected integral after decay
  Termination reason = Termination::decayed;
  double t_end = 0.0;
};

inline CostResult cost(const Model& model, const Vec& alpha, const ControlLaw& law, const Vec& x0, const Box& domain,
                       const SimOptions& opt = {}) {
  const Trajectory tr = integrate(model, alpha, law, x0, domain, opt);
  CostResult r;
  r.reason = tr.reason;
  r.t_end = tr.times.back();
  if (tr.reason != Termination::decayed) {
    r.value = std::numeric_limits<double>::infinity();
    return r;
  }
  std::vector<double> L(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const Vec& u = tr.controls[k];
    L[k] = u.dot(model.R * u) + model.m(pack(tr.states[k], alpha));
  }
  r.value = simpson(L, tr.dt);
  // Tail after decay: integrand ~ L_end exp(-2 lambda t), with lambda from the last stretch of the trajectory.
  const std::size_t n = tr.size();
  if (n > 10) {
    const std::size_t back = std::min<std::size_t>(n - 1, 1000);
    const double a = tr.states[n - 1 - back].norm(), b = tr.states[n - 1].norm();
    const double lambda = (a > 0 && b > 0 && a > b) ? std::log(a / b) / (static_cast<double>(back) * tr.dt) : 0.0;
    r.tail_bound = lambda > 0 ? L.back() / (2.0 * lambda) : L.back() * opt.T_max;
  }
  return r;
}

// Heuristic admissibility gate: from +-half-width probes on every axis the
// closed loop must shrink |x| by 1e-3 within T and stay inside twice the domain.
struct AdmissibilityReport {
  bool admissible = true;
  std::string message;
};

inline AdmissibilityReport admissibility_probe(const Model& model, const Vec& alpha, const ControlLaw& law, const Box& domain,
                                               double T = 20.0, double dt = 1e-3) {
  AdmissibilityReport rep;
  const int n = domain.dim();
  const Box wide{2.0 * domain.lo, 2.0 * domain.hi};
  const Vec hw = domain.half_width();
  for (int i = 0; i < n; ++i) {
    for (double sgn : {1.0, -1.0}) {
      Vec x0 = Vec::Zero(n);
      x0[i] = std::clamp(sgn * hw[i], domain.lo[i], domain.hi[i]);
      if (x0.norm() == 0.0) continue;
      SimOptions opt;
      opt.dt = dt;
      opt.T_max = T;
      opt.decay_tol = 1e-3 * x0.norm();
      Trajectory tr;
      try {
        tr = integrate(model, alpha, law, x0, domain, opt);
      } catch (const Error& e) {
        rep.admissible = false;
        rep.message = std::string("probe trajectory failed: ") + e.what();
        return rep;
      }
      for (const Vec& x : tr.states) {
        if (!wide.contains(x)) {
          rep.admissible = false;
          rep.message = "closed loop leaves twice the domain from probe x0[" + std::to_string(i) + "]=" +
                        detail::format_number(x0[i]);
          return rep;
        }
      }
      if (tr.reason != Termination::decayed) {
        rep.admissible = false;
        rep.message = "closed loop does not decay by 1e-3 within T=" + detail::format_number(T) + " from probe x0[" +
                      std::to_string(i) + "]=" + detail::format_number(x0[i]);
        return rep;
      }
    }
  }
  return rep;
}

// Least-squares fit of log|x(t)| = log(a |x0|) - lambda t over [0, t_end].
struct DecayFit {
  double a = 0.0;
  double lambda = 0.0;
  double r2 = 0.0;
};

inline DecayFit exponential_fit(const Trajectory& tr, double t_end) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  int cnt = 0;
  const double n0 = tr.states.front().norm();
  for (std::size_t k = 0; k < tr.size() && tr.times[k] <= t_end; ++k) {
    const double nx = tr.states[k].norm();
    if (!(nx > 0)) break;
    const double t = tr.times[k], y = std::log(nx / n0);
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    syy += y * y;
    ++cnt;
  }
  DecayFit fit;
  if (cnt < 3) return fit;
  const double mx = sx / cnt, my = sy / cnt;
  const double cxx = sxx / cnt - mx * mx, cxy = sxy / cnt - mx * my, cyy = syy / cnt - my * my;
  const double slope = cxy / cxx;
  fit.lambda = -slope;
  fit.a = std::exp(my - slope * mx);
  fit.r2 = cyy > 0 ? (cxy * cxy) / (cxx * cyy) : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Comparison of several laws
// ---------------------------------------------------------------------------

struct NamedLaw {
  std::string name;
  ControlLaw law;
};

struct ComparisonReport {
  std::vector<std::string> names;
  std::vector<Vec> points;
  std::vector<std::vector<Vec>> values;  // [law][point]
  Mat sup;                               // pairwise max over points of |u_a - u_b|_inf
  Mat rms;                               // pairwise root mean square of the same pointwise distance
  std::vector<Vec> probes;
  std::vector<std::vector<CostResult>> costs;  // [law][probe]

  double sup_between(const std::string& a, const std::string& b) const { return sup(index(a), index(b)); }
  double rms_between(const std::string& a, const std::string& b) const { return rms(index(a), index(b)); }

  int index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    throw ValidationError("no law named '" + name + "' in the report");
  }

  // x columns, one column per law output, then the pairwise |difference| columns.
  std::string to_csv() const {
    std::ostringstream out;
    const int n = points.empty() ? 0 : static_cast<int>(points.front().size());
    const int p = values.empty() || values.front().empty() ? 0 : static_cast<int>(values.front().front().size());
    std::vector<std::string> cols;
    for (int i = 1; i <= n; ++i) cols.push_back("x" + std::to_string(i));
    for (const auto& name : names)
      for (int c = 1; c <= p; ++c) cols.push_back(p == 1 ? name : name + "_u" + std::to_string(c));
    for (std::size_t a = 0; a < names.size(); ++a)
      for (std::size_t b = a + 1; b < names.size(); ++b) cols.push_back("abs_" + names[a] + "_minus_" + names[b]);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (std::size_t k = 0; k < points.size(); ++k) {
      bool first = true;
      auto put = [&](double v) {
        out << (first ? "" : ",") << detail::format_number(v);
        first = false;
      };
      for (int i = 0; i < n; ++i) put(points[k][i]);
      for (std::size_t a = 0; a < names.size(); ++a)
        for (int c = 0; c < p; ++c) put(values[a][k][c]);
      for (std::size_t a = 0; a < names.size(); ++a)
        for (std::size_t b = a + 1; b < names.size(); ++b) put((values[a][k] - values[b][k]).cwiseAbs().maxCoeff());
      out << '\n';
    }
    return out.str();
  }
};

inline ComparisonReport compare_laws(const Model& model, const Vec& alpha_hat, const std::vector<NamedLaw>& laws,
                                     const std::vector<Vec>& grid_points, const std::vector<Vec>& probes, const Box& domain,
                                     const SimOptions& opt = {}) {
  ComparisonReport rep;
  const std::size_t L = laws.size(), K = grid_points.size();
  for (const auto& l : laws) rep.names.push_back(l.name);
  rep.points = grid_points;
  rep.values.assign(L, std::vector<Vec>(K));
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t k = 0; k < K; ++k) rep.values[a][k] = laws[a].law(grid_points[k]);
  rep.sup = Mat::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  rep.rms = rep.sup;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) {
      double s = 0.0, ss = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = (rep.values[a][k] - rep.values[b][k]).cwiseAbs().maxCoeff();
        s = std::max(s, d);
        ss += d * d;
      }
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      rep.sup(ia, ib) = rep.sup(ib, ia) = s;
      rep.rms(ia, ib) = rep.rms(ib, ia) = K ? std::sqrt(ss / static_cast<double>(K)) : 0.0;
    }
  rep.probes = probes;
  rep.costs.assign(L, {});
  for (std::size_t a = 0; a < L; ++a)
    for (const Vec& x0 : probes) {
      CostResult c;
      try {
        c = cost(model, alpha_hat, laws[a].law, x0, domain, opt);
      } catch (const SolverError&) {
        c.value = std::numeric_limits<double>::infinity();
        c.reason = Termination::escaped;
      }
      rep.costs[a].push_back(c);
    }
  return rep;
}

// Uniform grid with `per_axis` points per axis, last axis fastest.
inline std::vector<Vec> uniform_grid(const Box& box, int per_axis) {
  const int n = box.dim();
  std::vector<Vec> out;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (;;) {
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per_axis - 1);
      x[i] = box.lo[i] + t * (box.hi[i] - box.lo[i]);
    }
    out.push_back(x);
    int i = n - 1;
    while (i >= 0 && ++idx[static_cast<std::size_t>(i)] == per_axis) idx[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
  }
  return out;
}

// Probe initial states: `count` points evenly spread on the boundary of the
// box scaled by `scale` (a circle in 2-D, the two ends in 1-D, +-e_i in higher dimensions).
inline std::vector<Vec> probe_points(const Box& box, int count, double scale) {
  const int n = box.dim();
  const Vec hw = box.half_width();
  std::vector<Vec> out;
  if (n == 1) {
    for (int k = 0; k < count; ++k) {
      const double t = count == 1 ? 1.0 : -1.0 + 2.0 * k / (count - 1);
      Vec x(1);
      x[0] = scale * t * (t >= 0 ? box.hi[0] : -box.lo[0]);
      if (x[0] == 0.0) x[0] = scale * 0.25 * box.hi[0];
      out.push_back(x);
    }
    return out;
  }
  if (n == 2) {
    for (int k = 0; k < count; ++k) {
      const double th = 2.0 * std::numbers::pi * k / count;
      Vec x(2);
      x << scale * hw[0] * std::cos(th), scale * hw[1] * std::sin(th);
      out.push_back(x);
    }
    return out;
  }
  for (int k = 0; k < count; ++k) {
    Vec x = Vec::Zero(n);
    const int axis = (k / 2) % n;
    x[axis] = scale * hw[axis] * (k % 2 == 0 ? 1.0 : -1.0) * (1.0 - 0.5 * (k / (2 * n)) / std::max(1, count / (2 * n)));
    out.push_back(x);
  }
  return out;
}

}  // namespace neoc
