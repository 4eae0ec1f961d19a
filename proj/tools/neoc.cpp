// neoc: command-line front end for the Galerkin HJB solver, NEOC sensitivities,
// homotopy continuation and the LQR path.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "neoc/neoc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace neoc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string builtin;
  std::string problem_file;
  std::string basis;
  int quad_order = 0;
  int max_iter = 100;
  double tol = 1e-10;
  std::string u0;
  std::string delta;
  std::string delta_param;
  std::string steps = "1";
  bool recalc = false;
  bool polish = false;
  bool no_gate = false;
  std::string out = "neoc_out";
  double dt = 1e-3;
  double horizon = 50.0;
  std::uint64_t seed = 0;
  int grid_pts = 201;
  int random_probes = 0;
  std::vector<std::string> laws;

  json to_json() const {
    json j;
    j["command"] = command;
    if (!builtin.empty()) j["builtin"] = builtin;
    if (!problem_file.empty()) j["problem"] = problem_file;
    j["basis"] = basis;
    j["quad_order"] = quad_order;
    j["max_iter"] = max_iter;
    j["tol"] = tol;
    j["u0"] = u0;
    j["delta"] = delta;
    j["delta_param"] = delta_param;
    j["steps"] = steps;
    j["recalc"] = recalc;
    j["polish"] = polish;
    j["gate"] = !no_gate;
    j["out"] = out;
    j["dt"] = dt;
    j["horizon"] = horizon;
    j["seed"] = seed;
    j["grid_pts"] = grid_pts;
    j["random_probes"] = random_probes;
    j["laws"] = laws;
    return j;
  }
};

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return detail::format_number(v);
}

json num_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json vec_json(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(num_json(v[i]));
  return j;
}

json mat_json(const Mat& m) {
  json j = json::array();
  for (int i = 0; i < m.rows(); ++i) j.push_back(vec_json(m.row(i).transpose()));
  return j;
}

std::string vec_text(const Vec& v) {
  std::ostringstream out;
  out << '[';
  for (int i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v[i]);
    out << (i ? ", " : "") << buf;
  }
  out << ']';
  return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

Vec parse_vec(const std::string& text) {
  std::string t = text;
  for (char& c : t)
    if (c == ',') c = ' ';
  std::istringstream in(t);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    double d = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw UsageError("'" + tok + "' is not a number");
    v.push_back(d);
  }
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<int> parse_steps(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = detail::trim(part);
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v < 1)
      throw UsageError("--steps entries must be positive integers, got '" + part + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--steps is empty");
  return out;
}

// Everything a command needs about the problem and its discretization.
struct Context {
  RunConfig cfg;
  CompiledProblem problem;
  std::shared_ptr<const BasisSet> basis;
  std::vector<int> order;
  SolveRecipe recipe;
  SimOptions sim;
  std::vector<Vec> grid_points;
  std::vector<Vec> probes;
};

ProblemSpec load_spec(const RunConfig& cfg) {
  if (cfg.builtin.empty() == cfg.problem_file.empty()) throw UsageError("give exactly one of --builtin or --problem");
  if (!cfg.builtin.empty()) return builtin(cfg.builtin);
  std::ifstream f(cfg.problem_file, std::ios::binary);
  if (!f) throw UsageError("cannot read problem file " + cfg.problem_file);
  std::stringstream ss;
  ss << f.rdbuf();
  return load_problem(ss.str());
}

std::function<ControlLaw(const Vec&)> initial_law(const RunConfig& cfg, const ProblemSpec& spec) {
  std::vector<std::string> texts;
  if (!cfg.u0.empty()) {
    texts = split_law_list(cfg.u0);
  } else if (!spec.hints.u0.empty()) {
    texts = spec.hints.u0;
  } else if (is_linear_quadratic(spec)) {
    const LqrProblem lp = LqrProblem::from_problem(spec);
    return [lp](const Vec& alpha) -> ControlLaw {
      const LqrMatrices m = lp.at(alpha);
      return LinearGain{stabilizing_gain(m.A, m.B, m.R)};
    };
  } else {
    throw UsageError("missing --u0: a nonlinear problem needs an admissible initial control law");
  }
  if (static_cast<int>(texts.size()) != spec.p)
    throw UsageError("--u0 needs " + std::to_string(spec.p) + " comma-separated expressions");
  for (const auto& t : texts) parse(t);  // surface syntax errors before solving
  return [texts, spec](const Vec& alpha) -> ControlLaw { return expr_law(texts, spec, alpha); };
}

Context make_context(const RunConfig& cfg) {
  if (!(cfg.tol > 0)) throw UsageError("--tol must be positive");
  if (cfg.max_iter < 1) throw UsageError("--max-iter must be at least 1");
  if (!(cfg.dt > 0) || !(cfg.horizon > 0)) throw UsageError("--dt and --horizon must be positive");
  if (cfg.grid_pts < 2) throw UsageError("--grid-pts must be at least 2");
  Context c;
  c.cfg = cfg;
  c.problem = CompiledProblem(load_spec(cfg));
  const ProblemSpec& spec = c.problem.spec();

  std::string bspec = !cfg.basis.empty() ? cfg.basis : spec.hints.basis;
  std::vector<MultiIndex> idx;
  if (!bspec.empty()) {
    idx = parse_basis_spec(bspec, spec.n);
  } else {
    idx = total_degree_indices(spec.n, is_linear_quadratic(spec) ? std::vector<int>{2} : std::vector<int>{2, 4});
  }
  c.basis = std::make_shared<const BasisSet>(monomial_basis(spec.n, idx));
  const int k = cfg.quad_order > 0 ? cfg.quad_order : (spec.hints.quad_order > 0 ? spec.hints.quad_order : default_quad_order(*c.basis));
  if (cfg.quad_order <= 0 && spec.hints.quad_order <= 0 && !polynomial_problem(spec))
    std::cerr << "note: non-polynomial integrands; the default quadrature order " << k << " may be inexact (raise --quad-order)\n";
  c.order.assign(static_cast<std::size_t>(spec.n), k);

  HjbOptions opt;
  opt.max_iter = cfg.max_iter;
  opt.tol_w = cfg.tol;
  opt.gate = !cfg.no_gate;
  c.recipe = SolveRecipe{c.problem, c.basis, c.order, initial_law(cfg, spec), opt};

  c.sim.dt = cfg.dt;
  c.sim.T_max = cfg.horizon;

  int per_axis = cfg.grid_pts;
  if (spec.n >= 2) {
    const int cap = static_cast<int>(std::floor(std::pow(201.0 * 201.0, 1.0 / spec.n) + 1e-9));
    per_axis = std::min(per_axis, cap);
  }
  c.grid_points = uniform_grid(spec.domain, per_axis);
  const int count = spec.n == 1 ? 5 : (spec.n == 2 ? 8 : 2 * spec.n);
  c.probes = probe_points(spec.domain, count, 0.5);
  if (cfg.random_probes > 0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (int i = 0; i < cfg.random_probes; ++i) {
      Vec x(spec.n);
      for (int d = 0; d < spec.n; ++d) x[d] = spec.domain.center()[d] + unit(rng) * (spec.domain.hi[d] - spec.domain.lo[d]);
      c.probes.push_back(x);
    }
  }
  return c;
}

Vec resolve_delta(const Context& c, bool required) {
  const ProblemSpec& spec = c.problem.spec();
  if (c.cfg.delta.empty()) {
    if (required) throw UsageError("--delta is required for this command");
    return Vec::Zero(spec.q);
  }
  const Vec v = parse_vec(c.cfg.delta);
  if (!c.cfg.delta_param.empty()) {
    const int l = spec.param_index(c.cfg.delta_param);
    if (l < 0) throw UsageError("unknown parameter '" + c.cfg.delta_param + "'");
    if (v.size() != 1) throw UsageError("--delta-param takes a single --delta value");
    Vec d = Vec::Zero(spec.q);
    d[l] = v[0];
    return d;
  }
  if (v.size() != spec.q)
    throw UsageError("--delta needs " + std::to_string(spec.q) + " values (or use --delta-param NAME)");
  return v;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path p(cfg.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw UsageError("output directory " + cfg.out + " is not writable");
  return p;
}

std::string grid_header(int n) {
  std::string h;
  for (int i = 1; i <= n; ++i) h += (i > 1 ? "," : "") + ("x" + std::to_string(i));
  return h;
}

void put_point(std::ostringstream& out, const Vec& x) {
  for (int i = 0; i < x.size(); ++i) out << (i ? "," : "") << num(x[i]);
}

std::string control_header(const std::string& name, int p) {
  if (p == 1) return name;
  std::string h;
  for (int c = 1; c <= p; ++c) h += (c > 1 ? "," : "") + name + "_u" + std::to_string(c);
  return h;
}

json solution_json(const HjbSolution& sol) {
  json j;
  j["alpha"] = vec_json(sol.alpha());
  j["basis"] = sol.basis().spec_string();
  j["quad_order"] = sol.setup->grid().order;
  j["weights"] = vec_json(sol.weights);
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  json dw = json::array(), res = json::array();
  for (double v : sol.dw_norms) dw.push_back(num_json(v));
  for (double v : sol.residual_norms) res.push_back(num_json(v));
  j["weight_change"] = dw;
  j["orthogonality_defect"] = res;
  j["residual_rms"] = residual_rms(*sol.setup, sol.weights);
  json viol = json::array();
  for (const auto& v : sol.violations) viol.push_back({{"iteration", v.iteration}, {"excess", v.excess}});
  j["monotonicity_violations"] = viol;
  return j;
}

HjbSolution solve_nominal(const Context& c) {
  HjbSolution sol = c.recipe.solve(c.problem.spec().alpha_nominal);
  if (!sol.converged)
    std::cerr << "note: policy iteration stopped at max-iter " << sol.iterations << " (last weight change "
              << num(sol.dw_norms.back()) << ")\n";
  return sol;
}

json report_json(const ComparisonReport& rep) {
  json j;
  j["laws"] = rep.names;
  json sup = json::object(), rms = json::object();
  for (std::size_t a = 0; a < rep.names.size(); ++a)
    for (std::size_t b = a + 1; b < rep.names.size(); ++b) {
      const std::string key = rep.names[a] + "_vs_" + rep.names[b];
      sup[key] = rep.sup(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      rms[key] = rep.rms(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  j["sup"] = sup;
  j["rms"] = rms;
  json probes = json::array();
  for (std::size_t k = 0; k < rep.probes.size(); ++k) {
    json pj;
    pj["x0"] = vec_json(rep.probes[k]);
    json costs = json::object();
    for (std::size_t a = 0; a < rep.names.size(); ++a) {
      const CostResult& cr = rep.costs[a][k];
      costs[rep.names[a]] = {{"cost", num_json(cr.value)}, {"termination", to_string(cr.reason)}, {"tail_bound", num_json(cr.tail_bound)}};
    }
    pj["costs"] = costs;
    probes.push_back(pj);
  }
  j["probes"] = probes;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_solve(const Context& c) {
  const ProblemSpec& spec = c.problem.spec();
  const HjbSolution sol = solve_nominal(c);
  const fs::path dir = out_dir(c.cfg);
  json j;
  j["config"] = c.cfg.to_json();
  j["problem"] = spec.name;
  j["solution"] = solution_json(sol);
  write_json(dir / "solution.json", j);

  std::ostringstream vg, cg;
  vg << grid_header(spec.n) << ",value\n";
  cg << grid_header(spec.n) << "," << control_header("u", spec.p) << "\n";
  const GalerkinLaw law = sol.law();
  for (const Vec& x : c.grid_points) {
    put_point(vg, x);
    vg << "," << num(eval_value(sol, x)) << "\n";
    put_point(cg, x);
    const Vec u = law(x);
    for (int i = 0; i < u.size(); ++i) cg << "," << num(u[i]);
    cg << "\n";
  }
  write_file(dir / "value_grid.csv", vg.str());
  write_file(dir / "control_grid.csv", cg.str());
  std::cout << "iterations " << sol.iterations << (sol.converged ? " (converged)" : " (max-iter reached)") << "\n";
  std::cout << "weights " << vec_text(sol.weights) << "\n";
  return 0;
}

int cmd_neoc(const Context& c) {
  const ProblemSpec& spec = c.problem.spec();
  const Vec delta = resolve_delta(c, true);
  const HjbSolution sol = solve_nominal(c);
  const SensitivityResult sens = weight_sensitivity(sol);
  const NeocLaw law = neoc_law(sol, sens, delta);
  const fs::path dir = out_dir(c.cfg);

  json sj;
  sj["config"] = c.cfg.to_json();
  sj["problem"] = spec.name;
  sj["alpha"] = vec_json(spec.alpha_nominal);
  sj["delta"] = vec_json(delta);
  sj["weights"] = vec_json(sol.weights);
  sj["J_w_alpha"] = mat_json(sens.J_w);
  sj["condition"] = sens.condition;
  write_json(dir / "sensitivity.json", sj);

  std::ostringstream g;
  g << grid_header(spec.n) << "," << control_header("u_nominal", spec.p) << "," << control_header("delta_u", spec.p) << ","
    << control_header("u_neoc", spec.p) << "\n";
  for (const Vec& x : c.grid_points) {
    put_point(g, x);
    const Vec b = law.base(x), d = law.adjustment(x), u = b + d;
    for (const Vec* v : {&b, &d, &u})
      for (int i = 0; i < v->size(); ++i) g << "," << num((*v)[i]);
    g << "\n";
  }
  write_file(dir / "neoc_grid.csv", g.str());

  if (c.cfg.recalc) {
    const Vec alpha_hat = spec.alpha_nominal + delta;
    const HjbSolution rec = c.recipe.solve(alpha_hat);
    const std::vector<NamedLaw> laws{{"nominal", sol.law()}, {"neoc", law}, {"recalculated", rec.law()}};
    const ComparisonReport rep = compare_laws(*c.problem.model(), alpha_hat, laws, c.grid_points, c.probes, spec.domain, c.sim);
    write_file(dir / "comparison.csv", rep.to_csv());
    json rj = report_json(rep);
    rj["config"] = c.cfg.to_json();
    write_json(dir / "comparison.json", rj);
    std::cout << "sup |u_neoc - u_recalculated| " << num(rep.sup_between("neoc", "recalculated")) << "\n";
    std::cout << "sup |u_nominal - u_recalculated| " << num(rep.sup_between("nominal", "recalculated")) << "\n";
  }
  std::cout << "J_w_alpha condition " << num(sens.condition) << "\n";
  return 0;
}

int cmd_homotopy(const Context& c) {
  const ProblemSpec& spec = c.problem.spec();
  const Vec delta = resolve_delta(c, true);
  const std::vector<int> steps = parse_steps(c.cfg.steps);
  const HjbSolution sol = solve_nominal(c);
  const fs::path dir = out_dir(c.cfg);
  const Vec alpha_hat = spec.alpha_nominal + delta;
  std::optional<GalerkinLaw> rec;
  if (c.cfg.recalc) rec = c.recipe.solve(alpha_hat).law();

  std::vector<std::vector<Vec>> values;
  json runs = json::array();
  std::ostringstream table;
  table << "steps,polish," << (rec ? "sup_error,rms_error" : "sup_change_from_nominal") << "\n";
  int status = 0;
  std::vector<int> done;
  for (int N : steps) {
    HomotopyResult h;
    try {
      h = homotopy_neoc(sol, delta, N, c.cfg.polish);
    } catch (const SolverError& e) {
      std::cerr << "error: " << e.what() << "\n";
      status = 1;
      break;
    }
    done.push_back(N);
    std::vector<Vec> vals;
    double sup = 0.0, ss = 0.0;
    for (const Vec& x : c.grid_points) {
      vals.push_back(h.law(x));
      const Vec ref = rec ? (*rec)(x) : sol.law()(x);
      const double d = (vals.back() - ref).cwiseAbs().maxCoeff();
      sup = std::max(sup, d);
      ss += d * d;
    }
    const double rms = std::sqrt(ss / static_cast<double>(c.grid_points.size()));
    values.push_back(std::move(vals));
    json rj;
    rj["steps"] = N;
    if (rec) {
      rj["sup_error"] = sup;
      rj["rms_error"] = rms;
      table << N << "," << (c.cfg.polish ? 1 : 0) << "," << num(sup) << "," << num(rms) << "\n";
      std::cout << "N=" << N << " sup error " << num(sup) << "\n";
    } else {
      rj["sup_change_from_nominal"] = sup;
      table << N << "," << (c.cfg.polish ? 1 : 0) << "," << num(sup) << "\n";
      std::cout << "N=" << N << " sup change " << num(sup) << "\n";
    }
    json diag = json::array();
    for (const auto& st : h.steps) diag.push_back({{"step", st.index}, {"alpha", vec_json(st.alpha)}, {"dw_inf", st.dw_norm}, {"condition", st.condition}});
    rj["diagnostics"] = diag;
    runs.push_back(rj);
  }

  std::ostringstream g;
  g << grid_header(spec.n);
  for (int N : done) g << "," << control_header("u_N" + std::to_string(N), spec.p);
  if (rec) {
    g << "," << control_header("u_recalculated", spec.p);
    for (int N : done) g << ",err_N" << N;
  }
  g << "\n";
  for (std::size_t k = 0; k < c.grid_points.size(); ++k) {
    put_point(g, c.grid_points[k]);
    for (std::size_t r = 0; r < done.size(); ++r)
      for (int i = 0; i < spec.p; ++i) g << "," << num(values[r][k][i]);
    if (rec) {
      const Vec ref = (*rec)(c.grid_points[k]);
      for (int i = 0; i < spec.p; ++i) g << "," << num(ref[i]);
      for (std::size_t r = 0; r < done.size(); ++r) g << "," << num((values[r][k] - ref).cwiseAbs().maxCoeff());
    }
    g << "\n";
  }
  write_file(dir / "homotopy_grid.csv", g.str());
  write_file(dir / "homotopy.csv", table.str());
  json j;
  j["config"] = c.cfg.to_json();
  j["problem"] = spec.name;
  j["delta"] = vec_json(delta);
  j["runs"] = runs;
  j["complete"] = status == 0;
  write_json(dir / "homotopy.json", j);
  return status;
}

int cmd_lqr(const RunConfig& cfg) {
  const ProblemSpec spec = load_spec(cfg);
  const LqrProblem lp = LqrProblem::from_problem(spec);
  Context c;
  c.cfg = cfg;
  c.problem = CompiledProblem(spec);
  const Vec delta = resolve_delta(c, false);
  const Vec& alpha = spec.alpha_nominal;
  const AssumptionReport rep = check_assumptions(lp, alpha);
  if (!rep.pass()) {
    std::cerr << "error: assumption check failed: " << rep.message() << "\n";
    return 1;
  }
  const RiccatiSolution sol = care_solve(lp, alpha);
  std::vector<Mat> dP;
  for (int l = 0; l < lp.q(); ++l) dP.push_back(riccati_sensitivity(lp, sol, alpha, l));
  const Mat K_ne = neoc_gain(lp, sol, dP, alpha, delta);
  std::optional<RiccatiSolution> rec;
  if (cfg.recalc) {
    const Vec alpha_hat = alpha + delta;
    const AssumptionReport rep2 = check_assumptions(lp, alpha_hat);
    if (!rep2.pass()) {
      std::cerr << "error: assumption check failed at the perturbed parameters: " << rep2.message() << "\n";
      return 1;
    }
    rec = care_solve(lp, alpha_hat);
  }

  auto rows = [](const Mat& K) {
    std::string s;
    for (int i = 0; i < K.rows(); ++i) s += (i ? "; " : "") + vec_text(K.row(i).transpose());
    return s;
  };
  std::cout << "K_nom   " << rows(sol.K) << "\n";
  if (rec) std::cout << "K_recal " << rows(rec->K) << "\n";
  std::cout << "K_neoc  " << rows(K_ne) << "\n";

  const fs::path dir = out_dir(cfg);
  json j;
  j["config"] = cfg.to_json();
  j["problem"] = spec.name;
  j["alpha"] = vec_json(alpha);
  j["delta"] = vec_json(delta);
  j["controllability_rank"] = rep.controllability_rank;
  j["observability_rank"] = rep.observability_rank;
  j["P"] = mat_json(sol.P);
  j["K_nom"] = mat_json(sol.K);
  j["K_neoc"] = mat_json(K_ne);
  if (rec) j["K_recal"] = mat_json(rec->K);
  j["kleinman_iterations"] = sol.iterations;
  j["riccati_residual"] = sol.residual;
  json dps = json::object();
  for (int l = 0; l < lp.q(); ++l) dps[lp.names()[static_cast<std::size_t>(l)]] = mat_json(dP[static_cast<std::size_t>(l)]);
  j["dP_dalpha"] = dps;
  j["closed_loop_neoc_hurwitz"] = is_hurwitz(lp.at(alpha + delta).A - lp.at(alpha + delta).B * K_ne);
  write_json(dir / "lqr.json", j);
  return 0;
}

int cmd_compare(const Context& c) {
  const ProblemSpec& spec = c.problem.spec();
  const Vec delta = resolve_delta(c, true);
  const Vec alpha_hat = spec.alpha_nominal + delta;
  const HjbSolution sol = solve_nominal(c);
  const SensitivityResult sens = weight_sensitivity(sol);
  std::vector<NamedLaw> laws{{"nominal", sol.law()}, {"neoc", neoc_law(sol, sens, delta)}};
  laws.push_back({"recalculated", c.recipe.solve(alpha_hat).law()});
  for (const auto& entry : c.cfg.laws) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw UsageError("--law expects NAME=EXPR[,EXPR...]");
    laws.push_back({detail::trim(entry.substr(0, eq)), expr_law(split_law_list(entry.substr(eq + 1)), spec, alpha_hat)});
  }
  const ComparisonReport rep = compare_laws(*c.problem.model(), alpha_hat, laws, c.grid_points, c.probes, spec.domain, c.sim);
  const fs::path dir = out_dir(c.cfg);
  write_file(dir / "comparison.csv", rep.to_csv());
  json j = report_json(rep);
  j["config"] = c.cfg.to_json();
  j["problem"] = spec.name;
  j["alpha_hat"] = vec_json(alpha_hat);
  write_json(dir / "comparison.json", j);

  std::cout << "probe";
  for (const auto& n : rep.names) std::cout << "," << n;
  std::cout << "\n";
  for (std::size_t k = 0; k < rep.probes.size(); ++k) {
    std::cout << vec_text(rep.probes[k]);
    for (std::size_t a = 0; a < rep.names.size(); ++a) std::cout << "," << num(rep.costs[a][k].value);
    std::cout << "\n";
  }
  return 0;
}

int cmd_list() {
  const std::map<std::string, std::string> about{
      {"cartpole_lqr", "linearized cart-pendulum, 4 states, parameters M m b l I"},
      {"scalar_siso", "xdot = -alpha x + u, m = (1+alpha) x^2 + x^4"},
      {"bilinear", "xdot = alpha x^2 u, m = alpha x^2 + alpha^2 x^4"},
      {"pendulum", "inverted pendulum, parameters m l"},
  };
  for (const auto& n : builtin_names()) std::cout << n << "  " << about.at(n) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Galerkin HJB solver with neighboring-extremal parameter adjustments"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub, bool solver) {
    sub->add_option("--builtin", cfg.builtin, "builtin problem name");
    sub->add_option("--problem", cfg.problem_file, "problem file");
    sub->add_option("--delta", cfg.delta, "parameter perturbation (space-separated vector)");
    sub->add_option("--delta-param", cfg.delta_param, "apply a scalar --delta to this parameter");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_flag("--recalc", cfg.recalc, "also solve at the perturbed parameters");
    sub->add_option("--seed", cfg.seed, "seed for randomized probes");
    if (!solver) return;
    sub->add_option("--basis", cfg.basis, "basis multi-indices, e.g. \"2;4;6\" or \"2 0;1 1;0 2\"");
    sub->add_option("--quad-order", cfg.quad_order, "Gauss-Legendre points per axis");
    sub->add_option("--max-iter", cfg.max_iter, "policy iteration cap");
    sub->add_option("--tol", cfg.tol, "weight-change tolerance");
    sub->add_option("--u0", cfg.u0, "initial admissible law, comma-separated per control");
    sub->add_option("--steps", cfg.steps, "homotopy step counts, e.g. 1,10,50,100");
    sub->add_option("--dt", cfg.dt, "simulation step");
    sub->add_option("--horizon", cfg.horizon, "simulation horizon");
    sub->add_option("--grid-pts", cfg.grid_pts, "output grid points per axis");
    sub->add_option("--random-probes", cfg.random_probes, "extra random probe states (uses --seed)");
    sub->add_flag("--polish", cfg.polish, "one Galerkin step after each homotopy update");
    sub->add_flag("--no-gate", cfg.no_gate, "skip the simulated admissibility check of u0");
  };

  auto* solve = app.add_subcommand("solve", "policy iteration at the nominal parameters");
  auto* neoc = app.add_subcommand("neoc", "weight sensitivity and NEOC law for --delta");
  auto* homotopy = app.add_subcommand("homotopy", "split --delta into N NEOC steps");
  auto* lqr = app.add_subcommand("lqr", "Riccati solution, dP/dalpha and NEOC gain");
  auto* compare = app.add_subcommand("compare", "nominal, NEOC and recalculated laws with simulated costs");
  app.add_subcommand("list-builtins", "list builtin problems");
  for (auto* s : {solve, neoc, homotopy, compare}) add_common(s, true);
  add_common(lqr, false);
  compare->add_option("--law", cfg.laws, "extra law NAME=EXPR[,EXPR...] evaluated at the perturbed parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("list-builtins")) return cmd_list();
    if (app.got_subcommand("lqr")) {
      cfg.command = "lqr";
      return cmd_lqr(cfg);
    }
    for (auto* s : {solve, neoc, homotopy, compare})
      if (s->parsed()) cfg.command = s->get_name();
    if (cfg.command == "homotopy") parse_steps(cfg.steps);
    const Context c = make_context(cfg);
    if (cfg.command == "solve") return cmd_solve(c);
    if (cfg.command == "neoc") return cmd_neoc(c);
    if (cfg.command == "homotopy") return cmd_homotopy(c);
    return cmd_compare(c);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
