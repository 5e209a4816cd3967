#include "nhk/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>

#include "nhk/brackets.hpp"
#include "nhk/condvar.hpp"
#include "nhk/dynamics.hpp"
#include "nhk/errors.hpp"
#include "nhk/hamiltonize.hpp"
#include "nhk/routh.hpp"
#include "nhk/systems.hpp"

namespace nhk::cli {

namespace {

using json = nlohmann::ordered_json;

struct Options {
  std::string command;
  std::string system;
  std::string f = "auto";
  std::vector<double> lambda;
  int samples = 200;
  std::uint64_t seed = 1;
  std::optional<double> tol;
  double t = 10.0;
  double dt = 1e-3;
  std::string ic;
  std::string out;
  bool json = false;
  std::vector<std::string> basis;
  bool reduce = false;
  std::string flow;
  std::vector<std::string> cyclic;
  std::string density;
};

/// Raised when a trajectory stops early at a singular state.
struct IntegrationFailure : Error {
  json report;
  IntegrationFailure(const std::string& what, json r) : Error(what), report(std::move(r)) {}
};

struct Context {
  SystemDef def;
  const RegistryEntry* entry = nullptr;
  std::unique_ptr<Model> model;
};

Context load(const Options& o) {
  Context c;
  c.def = load_system(o.system);
  for (const auto& n : registry_names())
    if (n == o.system) c.entry = &registry_get(n);
  c.model = std::make_unique<Model>(c.def);
  return c;
}

double tol_or(const Options& o, double fallback) { return o.tol ? *o.tol : fallback; }

SampleOptions sample_options(const Options& o, double default_tol) {
  SampleOptions s;
  s.count = o.samples;
  s.seed = o.seed;
  s.tol = tol_or(o, default_tol);
  return s;
}

std::set<std::string> declared_names(const std::vector<std::string>& vars, const std::map<std::string, double>& params) {
  std::set<std::string> out(vars.begin(), vars.end());
  for (const auto& [k, v] : params) out.insert(k);
  return out;
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json report_json(const ResidualReport& r) {
  json j;
  j["operation"] = r.operation;
  j["verdict"] = r.pass ? "pass" : "fail";
  json fam = json::array();
  for (const auto& f : r.families) {
    json e;
    e["condition_family"] = f.family;
    e["max_residual"] = f.max_residual;
    e["mean_residual"] = f.mean_residual;
    e["samples"] = r.samples;
    e["seed"] = r.seed;
    e["tol"] = r.tol;
    e["verdict"] = f.max_residual <= r.tol ? "pass" : "fail";
    if (f.worst_point.size()) e["worst_point"] = vec_json(f.worst_point);
    fam.push_back(e);
  }
  j["families"] = fam;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

struct ResolvedF {
  Multiplier f;
  std::string description;
  std::string source;
};

ResolvedF resolve_f(const Context& c, const Options& o) {
  const Model& model = *c.model;
  if (o.f != "auto") {
    auto names = declared_names(c.def.coordinate_names(), c.def.params);
    Expr e = expr::parse(o.f, &names);
    return {Multiplier::from_expr(e, model), expr::to_string(e), "option"};
  }
  if (c.entry && c.entry->multiplier)
    return {Multiplier::from_expr(*c.entry->multiplier, model), expr::to_string(*c.entry->multiplier), "registry"};
  if (model.kind() == Kind::Chaplygin && model.m() == 2) {
    Solve2dofResult r = solve_2dof(model);
    return {r.f, r.description, "solve2dof"};
  }
  throw ConfigError("no multiplier known for '" + c.def.name + "'; pass --f EXPR");
}

ReducedSystem make_reduced(const Context& c, const Options& o) {
  std::vector<double> lambda = o.lambda;
  std::optional<std::vector<std::string>> cyclic;
  if (!o.cyclic.empty()) cyclic = o.cyclic;
  if (c.entry && c.entry->reduction) {
    if (lambda.empty()) lambda = c.entry->reduction->lambda;
    if (!cyclic) cyclic = c.entry->reduction->cyclic;
  }
  if (lambda.empty()) throw ConfigError("reduction needs --lambda values for the cyclic momenta");
  return reduce(*c.model, lambda, cyclic);
}

ResolvedF resolve_reduced_f(const Context& c, const Options& o, const ReducedSystem& rs) {
  if (o.f != "auto") {
    auto names = declared_names(rs.names(), c.def.params);
    Expr e = expr::parse(o.f, &names);
    return {Multiplier::symbolic(e, rs.names(), {}, c.def.params), expr::to_string(e), "option"};
  }
  if (c.entry && c.entry->reduction && c.entry->reduction->multiplier) {
    const Expr& e = *c.entry->reduction->multiplier;
    return {Multiplier::symbolic(e, rs.names(), {}, c.def.params), expr::to_string(e), "registry"};
  }
  if (rs.dim() == 2) {
    Solve2dofResult r = solve_reduced_2dof(rs);
    return {r.f, r.description, "solve2dof"};
  }
  throw ConfigError("no multiplier known for the reduced system; pass --f EXPR");
}

VectorXd initial_state(const Context& c, const Options& o) {
  const int dim = 2 * c.def.m + c.def.s;
  VectorXd x;
  if (!o.ic.empty()) {
    std::vector<double> vals;
    std::stringstream ss(o.ic);
    std::string item;
    while (std::getline(ss, item, ',')) {
      Expr e = expr::parse(item);
      vals.push_back(expr::evaluate(e, c.def.params));
    }
    x = Eigen::Map<VectorXd>(vals.data(), static_cast<int>(vals.size()));
  } else if (c.entry) {
    x = c.entry->initial_state;
  } else {
    throw ConfigError("no default initial state; pass --ic with " + std::to_string(dim) + " values");
  }
  if (x.size() != dim)
    throw ConfigError("initial state needs " + std::to_string(dim) + " values (r, p_alpha, p_i), got " +
                      std::to_string(x.size()));
  return x;
}

json header(const Options& o, const Context* c) {
  json j;
  j["schema"] = kSchema;
  j["command"] = o.command;
  if (c) {
    j["system"] = c->def.name;
    j["kind"] = kind_name(c->def.kind);
  }
  j["seed"] = o.seed;
  return j;
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << content;
    if (!f) throw ConfigError("cannot write '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot write '" + path + "'");
}

std::string csv_text(const Trajectory& tr, const std::vector<std::string>& names) {
  std::ostringstream os;
  write_csv(os, tr, names);
  return os.str();
}

std::vector<std::string> state_names(const Model& model, const std::string& momentum_prefix) {
  std::vector<std::string> out = model.def().shape;
  for (const auto& n : model.def().shape) out.push_back(momentum_prefix + n);
  for (int i = 0; i < model.s(); ++i) out.push_back(momentum_prefix + "i" + std::to_string(i + 1));
  return out;
}

bool monotone(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

json trajectory_summary(const Trajectory& tr) {
  json j;
  j["steps"] = tr.size() ? tr.size() - 1 : 0;
  j["dt"] = tr.step;
  j["t_end"] = tr.t.empty() ? 0.0 : tr.t.back();
  j["integrator"] = tr.integrator;
  j["truncated"] = tr.truncated;
  if (tr.truncated) j["message"] = tr.message;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_list(const Options& o, json& rep) {
  json arr = json::array();
  for (const auto& n : registry_names()) {
    const RegistryEntry& e = registry_get(n);
    json s;
    s["name"] = n;
    s["kind"] = kind_name(e.def.kind);
    s["m"] = e.def.m;
    s["k"] = e.def.k;
    s["s"] = e.def.s;
    s["description"] = e.def.description;
    s["multiplier"] = e.multiplier ? json(expr::to_string(*e.multiplier)) : json(nullptr);
    if (e.reduction) {
      json r;
      r["cyclic"] = e.reduction->cyclic;
      r["lambda"] = e.reduction->lambda;
      r["multiplier"] =
          e.reduction->multiplier ? json(expr::to_string(*e.reduction->multiplier)) : json(nullptr);
      s["reduction"] = r;
    }
    arr.push_back(s);
  }
  rep["systems"] = arr;
  rep["verdict"] = "pass";
  (void)o;
  return kPass;
}

int cmd_check(const Options& o, const Context& c, json& rep) {
  SampleOptions s = sample_options(o, 1e-8);
  json reports = json::array();
  bool pass = true;
  if (o.reduce) {
    ReducedSystem rs = make_reduced(c, o);
    ResolvedF f = resolve_reduced_f(c, o, rs);
    rep["multiplier"] = f.description;
    rep["multiplier_source"] = f.source;
    ReducedHamiltonization rh = reduced_hamiltonize(rs, f.f, s);
    reports.push_back(report_json(rh.report));
    pass = rh.report.pass;
  } else {
    ResolvedF f = resolve_f(c, o);
    rep["multiplier"] = f.description;
    rep["multiplier_source"] = f.source;
    std::vector<ResidualReport> rs{residuals_hpd(*c.model, f.f, s)};
    if (c.def.kind == Kind::Chaplygin) rs.push_back(residuals_chaplygin(*c.model, f.f, s));
    if (c.def.kind == Kind::Eps) rs.push_back(residuals_eps(*c.model, f.f, s));
    for (const auto& r : rs) {
      reports.push_back(report_json(r));
      pass = pass && r.pass;
    }
  }
  rep["reports"] = reports;
  rep["verdict"] = pass ? "pass" : "fail";
  return pass ? kPass : kFail;
}

void write_table(const std::string& path, const Multiplier& f, const std::vector<Interval>& box,
                 const std::vector<std::string>& names) {
  std::ostringstream os;
  os << names[0] << "," << names[1] << ",f\n";
  char buf[80];
  const int n = 21;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      VectorXd w(2);
      w << box[0].lo + box[0].width() * i / (n - 1), box[1].lo + box[1].width() * j / (n - 1);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", w[0], w[1], f.value(w));
      os << buf;
    }
  write_atomic(path, os.str());
}

int cmd_solve2dof(const Options& o, const Context& c, json& rep) {
  Solve2dofResult r;
  int m = c.def.m;
  std::vector<Interval> box;
  std::vector<std::string> names;
  if (o.reduce) {
    ReducedSystem rs = make_reduced(c, o);
    r = solve_reduced_2dof(rs);
    m = rs.dim();
    box = rs.box();
    names = rs.names();
    rep["reduced_coordinates"] = names;
    rep["lambda"] = rs.lambda();
  } else {
    r = solve_2dof(*c.model);
    box = c.def.shape_box;
    names = c.def.shape;
  }
  rep["multiplier"] = r.description;
  rep["symbolic"] = r.symbolic ? json(expr::to_string(*r.symbolic)) : json(nullptr);
  rep["tabulated"] = !r.symbolic.has_value();
  if (r.symbolic)
    rep["measure"] = expr::to_string(measure_density(*r.symbolic, m));
  else
    rep["measure"] = m == 2 ? "f" : "f^" + std::to_string(m - 1);
  rep["normalization"] = json::array({r.base[0], r.base[1]});
  rep["compat_residual"] = r.compat_residual;
  rep["path_defect"] = r.path_defect;
  if (!o.out.empty()) {
    write_table(o.out, r.f, box, names);
    rep["table"] = o.out;
  }
  rep["verdict"] = "pass";
  return kPass;
}

int cmd_fit(const Options& o, const Context& c, json& rep) {
  if (o.basis.empty()) throw ConfigError("fit needs at least one --basis expression");
  auto names = declared_names(c.def.coordinate_names(), c.def.params);
  std::vector<Expr> basis;
  for (const auto& b : o.basis) basis.push_back(expr::parse(b, &names));
  FitResult r = fit_ansatz(*c.model, basis, sample_options(o, 1e-8));
  json coeffs = json::array();
  for (std::size_t i = 0; i < basis.size(); ++i) {
    json e;
    e["basis"] = expr::to_string(basis[i]);
    e["coefficient"] = r.coefficients[i];
    coeffs.push_back(e);
  }
  rep["coefficients"] = coeffs;
  rep["multiplier"] = expr::to_string(r.multiplier);
  rep["reports"] = json::array({report_json(r.report)});
  rep["verdict"] = r.report.pass ? "pass" : "fail";
  return r.report.pass ? kPass : kFail;
}

int cmd_reduce(const Options& o, const Context& c, json& rep) {
  CyclicSplit split = detect_cyclic(*c.model, std::min(o.samples, 100), o.seed);
  json cands = json::array();
  for (const auto& k : split.candidates) {
    json e;
    e["name"] = k.name;
    e["lagrangian_independent"] = k.lagrangian_independent;
    e["by_free_variable_scan"] = k.by_ast;
    e["momentum_conserved"] = k.momentum_conserved;
    e["strict"] = k.strict;
    e["force_residual"] = k.force_residual;
    cands.push_back(e);
  }
  rep["candidates"] = cands;
  rep["detected_cyclic"] = split.cyclic_names(c.def);
  rep["excluded"] = split.excluded;
  ReducedSystem rs = make_reduced(c, o);
  rep["cyclic"] = rs.split().cyclic_names(c.def);
  rep["reduced_coordinates"] = rs.names();
  rep["lambda"] = rs.lambda();
  rep["strict"] = rs.strict();
  bool pass = true;
  if (rs.dim() == 2 || o.f != "auto" || (c.entry && c.entry->reduction && c.entry->reduction->multiplier)) {
    ResolvedF f = resolve_reduced_f(c, o, rs);
    rep["multiplier"] = f.description;
    rep["multiplier_source"] = f.source;
    ReducedHamiltonization rh = reduced_hamiltonize(rs, f.f, sample_options(o, 1e-8));
    std::vector<Interval> box = rs.box();
    VectorXd mid(rs.dim());
    for (int i = 0; i < rs.dim(); ++i) mid[i] = box[i].mid();
    MatrixXd S = rh.gyroscopic(mid);
    json sj = json::array();
    for (int i = 0; i < S.rows(); ++i) {
      json row = json::array();
      for (int j = 0; j < S.cols(); ++j) row.push_back(S(i, j));
      sj.push_back(row);
    }
    rep["gyroscopic_at"] = vec_json(mid);
    rep["gyroscopic_term"] = sj;
    GyroscopicForm gf = gyroscopic_form(rs, f.f, sample_options(o, 1e-8));
    rep["gyroscopic_exact"] = gf.exact;
    rep["gyroscopic_closedness"] = gf.closedness;
    rep["reports"] = json::array({report_json(rh.report)});
    pass = rh.report.pass;
  }
  rep["verdict"] = pass ? "pass" : "fail";
  return pass ? kPass : kFail;
}

struct Run {
  Trajectory traj;
  std::vector<std::string> names;
  ScalarField energy;
};

Run run_flow(const std::string& flow, const Options& o, const Context& c, json& rep,
             std::optional<ReducedSystem>& rs_store) {
  const Model& model = *c.model;
  VectorXd x0 = initial_state(c, o);
  rep["initial_state"] = vec_json(x0);
  Run run;
  if (flow == "lda") {
    run.traj = integrate(lda_flow(model), x0, 0.0, o.t, o.dt);
    run.names = state_names(model, "p_");
    run.energy = [&model](const VectorXd& x) { return hamiltonian(model, x); };
    return run;
  }
  if (flow == "hamiltonized") {
    ResolvedF f = resolve_f(c, o);
    rep["multiplier"] = f.description;
    Multiplier fm = f.f;
    ScalarField rate = [&model, fm](const VectorXd& x) { return fm.value(model.point(x.head(model.m()))); };
    run.traj = integrate(hamiltonized_flow(model, fm), rescale_momenta(model, fm, x0), 0.0, o.t, o.dt, &rate);
    run.names = state_names(model, "P_");
    run.energy = hamiltonized_energy(model, fm);
    return run;
  }
  if (flow == "condvar") {
    ResolvedF f = resolve_f(c, o);
    if (!f.f.expr()) throw ConfigError("the conditionally variational flow needs a closed-form multiplier");
    rep["multiplier"] = f.description;
    auto lv = std::make_shared<VariationalLagrangian>(build_variational(model, *f.f.expr()));
    VectorXd xg(2 * model.m() + model.k());
    xg << x0, model.default_group();
    Projection pr = project_onto_constraints(*lv, lda_to_quasivelocity(model, *lv, xg));
    rep["projection_residual"] = pr.residual;
    run.traj = integrate(almost_el_flow(*lv), pr.state, 0.0, o.t, o.dt);
    run.names = lv->coords;
    run.names.insert(run.names.end(), lv->omega.begin(), lv->omega.end());
    const int m = model.m();
    run.energy = [&model, lv, m](const VectorXd& x) {
      VectorXd y = quasivelocity_to_lda(model, *lv, x);
      return hamiltonian(model, y.head(2 * m));
    };
    rep["constraint_drift"] = constraint_conservation(*lv, run.traj);
    return run;
  }
  if (flow == "reduced" || flow == "reduced_hamiltonized" || flow == "gyroscopic") {
    rs_store.emplace(make_reduced(c, o));
    const ReducedSystem& rs = *rs_store;
    VectorXd xr = rs.project(x0);
    rep["reduced_coordinates"] = rs.names();
    rep["lambda"] = rs.lambda();
    if (flow == "reduced") {
      run.traj = integrate(rs.flow(), xr, 0.0, o.t, o.dt);
      run.names = rs.names();
      for (const auto& n : rs.names()) run.names.push_back("p_" + n);
      run.energy = [&rs](const VectorXd& x) { return rs.hamiltonian(x); };
      return run;
    }
    ResolvedF f = resolve_reduced_f(c, o, rs);
    rep["multiplier"] = f.description;
    auto rh = std::make_shared<ReducedHamiltonization>(reduced_hamiltonize(rs, f.f, sample_options(o, 1e-8)));
    VectorXd X0 = reduced_rescale(rs, f.f, xr);
    run.names = rs.names();
    if (flow == "reduced_hamiltonized") {
      run.traj = integrate(rh->flow, X0, 0.0, o.t, o.dt);
      for (const auto& n : rs.names()) run.names.push_back("P_" + n);
      run.energy = [rh](const VectorXd& x) { return rh->energy(x); };
      return run;
    }
    auto gf = std::make_shared<GyroscopicForm>(gyroscopic_form(rs, f.f, sample_options(o, 1e-8)));
    if (!gf->exact) throw ConfigError("gyroscopic term is not closed; no canonical form");
    run.traj = integrate(gf->flow, gf->from_bracket_coordinates(X0), 0.0, o.t, o.dt);
    for (const auto& n : rs.names()) run.names.push_back("PW_" + n);
    run.energy = [rh, gf](const VectorXd& x) { return rh->energy(gf->to_bracket_coordinates(x)); };
    return run;
  }
  throw ConfigError("unknown flow '" + flow + "' (expected lda, hamiltonized, condvar, reduced, reduced_hamiltonized or gyroscopic)");
}

int cmd_simulate(const Options& o, const Context& c, json& rep, std::ostream& out) {
  const std::string flow = o.flow.empty() ? "lda" : o.flow;
  rep["flow"] = flow;
  rep["t"] = o.t;
  rep["dt"] = o.dt;
  std::optional<ReducedSystem> rs;
  Run run = run_flow(flow, o, c, rep, rs);
  rep["trajectory"] = trajectory_summary(run.traj);
  rep["energy_drift"] = energy_drift(run.energy, run.traj);
  if (run.traj.has_tau()) rep["tau_monotone"] = monotone(run.traj.tau);
  const std::string csv = csv_text(run.traj, run.names);
  if (!o.out.empty()) {
    write_atomic(o.out, csv);
    rep["csv"] = o.out;
  } else if (!o.json) {
    out << csv;
  }
  if (run.traj.truncated) throw IntegrationFailure(run.traj.message, rep);
  rep["verdict"] = "pass";
  return kPass;
}

int cmd_compare(const Options& o, const Context& c, json& rep) {
  const double tol = tol_or(o, 1e-6);
  std::string first, second;
  if (o.reduce) {
    first = "reduced";
    second = o.flow.empty() ? "reduced_hamiltonized" : o.flow;
  } else {
    first = "lda";
    second = o.flow.empty() ? "hamiltonized" : o.flow;
  }
  rep["flows"] = json::array({first, second});
  rep["t"] = o.t;
  rep["dt"] = o.dt;
  std::optional<ReducedSystem> rs1, rs2;
  json r1, r2;
  Run a = run_flow(first, o, c, r1, rs1);
  Run b = run_flow(second, o, c, r2, rs2);
  for (auto* r : {&r1, &r2})
    for (auto it = r->begin(); it != r->end(); ++it)
      if (!rep.contains(it.key())) rep[it.key()] = it.value();
  rep["trajectories"] = json::array({trajectory_summary(a.traj), trajectory_summary(b.traj)});
  if (a.traj.truncated || b.traj.truncated)
    throw IntegrationFailure(a.traj.truncated ? a.traj.message : b.traj.message, rep);

  // map the second trajectory into the first one's variables
  StateMap map;
  const Model& model = *c.model;
  if (second == "hamiltonized") {
    Multiplier f = resolve_f(c, o).f;
    map = [&model, f](const VectorXd& x) { return unscale_momenta(model, f, x); };
  } else if (second == "condvar") {
    ResolvedF f = resolve_f(c, o);
    auto lv = std::make_shared<VariationalLagrangian>(build_variational(model, *f.f.expr()));
    const int m = model.m();
    map = [&model, lv, m](const VectorXd& x) { return VectorXd(quasivelocity_to_lda(model, *lv, x).head(2 * m)); };
  } else if (second == "reduced_hamiltonized" || second == "gyroscopic") {
    const ReducedSystem& rs = *rs2;
    Multiplier f = resolve_reduced_f(c, o, rs).f;
    std::shared_ptr<GyroscopicForm> gf;
    if (second == "gyroscopic") gf = std::make_shared<GyroscopicForm>(gyroscopic_form(rs, f, sample_options(o, 1e-8)));
    map = [&rs, f, gf](const VectorXd& x) {
      return reduced_unscale(rs, f, gf ? gf->to_bracket_coordinates(x) : x);
    };
  } else if (second == "reduced") {
    const ReducedSystem& rs = *rs2;
    a.traj.x = [&] {
      std::vector<VectorXd> v;
      for (const auto& x : a.traj.x) v.push_back(rs.project(x));
      return v;
    }();
  } else if (second != "lda") {
    throw ConfigError("cannot compare against flow '" + second + "'");
  }
  const double dev = compare(a.traj, b.traj, map);
  rep["max_deviation"] = dev;
  rep["energy_drift"] = energy_drift(b.energy, b.traj);
  rep["tau_monotone"] = b.traj.has_tau() ? json(monotone(b.traj.tau)) : json(nullptr);
  rep["tol"] = tol;
  if (!o.out.empty()) {
    write_atomic(o.out + "." + first + ".csv", csv_text(a.traj, a.names));
    write_atomic(o.out + "." + second + ".csv", csv_text(b.traj, b.names));
  }
  const bool pass = dev <= tol;
  rep["verdict"] = pass ? "pass" : "fail";
  return pass ? kPass : kFail;
}

int cmd_measure(const Options& o, const Context& c, json& rep) {
  const Model& model = *c.model;
  Multiplier density = Multiplier::constant(1.0, model.m(), model.k());
  std::string desc;
  if (!o.density.empty()) {
    auto names = declared_names(c.def.coordinate_names(), c.def.params);
    Expr e = expr::parse(o.density, &names);
    density = Multiplier::from_expr(e, model);
    desc = expr::to_string(e);
  } else if (c.entry && (c.entry->measure || c.entry->measureless) && o.f == "auto") {
    desc = c.entry->measure ? expr::to_string(*c.entry->measure) : "1";
    if (c.entry->measure) density = Multiplier::from_expr(*c.entry->measure, model);
  } else {
    ResolvedF f = resolve_f(c, o);
    if (f.f.expr()) {
      Expr e = measure_density(*f.f.expr(), model.m());
      density = Multiplier::from_expr(e, model);
      desc = expr::to_string(e);
    } else {
      Multiplier fm = f.f;
      const int p = model.m() - 1;
      density = Multiplier::numeric(
          [fm, p](const VectorXd& q) {
            MultiplierValue v = fm.eval(q);
            const double scale = p * std::pow(v.f, p - 1);
            v.dr *= scale;
            v.dg *= scale;
            v.f = std::pow(v.f, p);
            return v;
          },
          model.m(), model.k(), "f^" + std::to_string(p));
      desc = "(" + f.description + ")^" + std::to_string(p);
    }
  }
  rep["density"] = desc;
  SampleOptions s = sample_options(o, 1e-6);
  ResidualReport r = divergence_test(model, density, s);
  rep["reports"] = json::array({report_json(r)});
  rep["verdict"] = r.pass ? "pass" : "fail";
  return r.pass ? kPass : kFail;
}

int cmd_jacobi(const Options& o, const Context& c, json& rep) {
  const Model& model = *c.model;
  SampleOptions s = sample_options(o, 1e-9);
  s.count = std::min(o.samples, 50);
  ResidualReport r;
  r.operation = "jacobi";
  r.seed = s.seed;
  r.tol = s.tol;
  if (o.reduce) {
    ReducedSystem rs = make_reduced(c, o);
    ResolvedF f = resolve_reduced_f(c, o, rs);
    rep["multiplier"] = f.description;
    ReducedHamiltonization rh = reduced_hamiltonize(rs, f.f, s);
    std::vector<Interval> pbox = rs.box();
    for (int i = 0; i < rs.dim(); ++i) pbox.push_back(c.def.momentum_box);
    auto states = sample_box(pbox, s.count, s.seed);
    r.samples = static_cast<int>(states.size());
    JacobiScan js = jacobiator_scan(rh.bracket, states);
    r.families.push_back({"antisymmetry_reduced", antisymmetry_defect(rh.bracket, states), 0.0, VectorXd()});
    r.families.push_back({"jacobi_reduced", js.max_abs, 0.0, js.state});
  } else {
    auto states = sample_states(model, s);
    r.samples = static_cast<int>(states.size());
    BracketField lda = lda_bracket_field(model);
    JacobiScan jl = jacobiator_scan(lda, states);
    json info;
    info["antisymmetry"] = antisymmetry_defect(lda, states);
    info["jacobiator"] = jl.max_abs;
    info["triple"] = jl.triple;
    rep["untransformed_bracket"] = info;
    if (o.f == "auto" && !(c.entry && c.entry->multiplier) && !(model.kind() == Kind::Chaplygin && model.m() == 2)) {
      r.families.push_back({"antisymmetry_lda", info["antisymmetry"].get<double>(), 0.0, VectorXd()});
      r.families.push_back({"jacobi_lda", jl.max_abs, 0.0, jl.state});
    } else {
      ResolvedF f = resolve_f(c, o);
      rep["multiplier"] = f.description;
      BracketField hb = transformed_bracket_field(model, f.f, true);
      JacobiScan jh = jacobiator_scan(hb, states);
      r.families.push_back({"antisymmetry_hamiltonized", antisymmetry_defect(hb, states), 0.0, VectorXd()});
      r.families.push_back({"jacobi_hamiltonized", jh.max_abs, 0.0, jh.state});
    }
  }
  for (auto& fam : r.families) fam.mean_residual = fam.max_residual;
  r.finalize();
  rep["reports"] = json::array({report_json(r)});
  rep["verdict"] = r.pass ? "pass" : "fail";
  return r.pass ? kPass : kFail;
}

int cmd_condvar(const Options& o, const Context& c, json& rep, std::ostream& out) {
  const Model& model = *c.model;
  ResolvedF f = resolve_f(c, o);
  if (!f.f.expr()) throw ConfigError("the conditionally variational construction needs a closed-form multiplier");
  VariationalLagrangian lv = build_variational(model, *f.f.expr());
  rep["multiplier"] = f.description;
  rep["L"] = expr::to_string(lv.L);
  rep["L_V"] = expr::to_string(lv.LV);
  json cons = json::array();
  for (const auto& e : lv.constraints) cons.push_back(expr::to_string(e));
  rep["constraints"] = cons;
  rep["quasivelocities"] = lv.omega;

  const double tol = tol_or(o, 1e-6);
  VectorXd x0 = initial_state(c, o);
  VectorXd xg(2 * model.m() + model.k());
  xg << x0, model.default_group();
  Projection pr = project_onto_constraints(lv, lda_to_quasivelocity(model, lv, xg));
  rep["projection_residual"] = pr.residual;
  Trajectory a = integrate(lda_flow_with_group(model), xg, 0.0, o.t, o.dt);
  Trajectory b = integrate(almost_el_flow(lv), pr.state, 0.0, o.t, o.dt);
  rep["trajectories"] = json::array({trajectory_summary(a), trajectory_summary(b)});
  if (a.truncated || b.truncated) throw IntegrationFailure(a.truncated ? a.message : b.message, rep);
  double dev = compare(a, b, [&](const VectorXd& x) { return quasivelocity_to_lda(model, lv, x); });
  rep["max_deviation"] = dev;
  rep["constraint_drift"] = constraint_conservation(lv, b);
  rep["tol"] = tol;
  if (!o.out.empty()) {
    std::vector<std::string> names = lv.coords;
    names.insert(names.end(), lv.omega.begin(), lv.omega.end());
    write_atomic(o.out, csv_text(b, names));
  }
  (void)out;
  const bool pass = dev <= tol;
  rep["verdict"] = pass ? "pass" : "fail";
  return pass ? kPass : kFail;
}

// ---------------------------------------------------------------------------

std::string format_scalar(const json& v) {
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void render_text(const json& j, std::ostream& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  for (auto it = j.begin(); it != j.end(); ++it) {
    const json& v = it.value();
    if (v.is_object()) {
      out << pad << it.key() << ":\n";
      render_text(v, out, indent + 2);
    } else if (v.is_array() && !v.empty() && v[0].is_object()) {
      out << pad << it.key() << ":\n";
      for (const auto& e : v) {
        out << pad << "  -\n";
        render_text(e, out, indent + 4);
      }
    } else if (v.is_array()) {
      out << pad << it.key() << ": [";
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << format_scalar(v[i]);
      out << "]\n";
    } else {
      out << pad << it.key() << ": " << format_scalar(v) << "\n";
    }
  }
}

int error_code(const std::exception& e) {
  if (dynamic_cast<const IncompatibleError*>(&e) || dynamic_cast<const ReductionError*>(&e) ||
      dynamic_cast<const NotConditionallyVariationalError*>(&e))
    return kIncompatible;
  if (dynamic_cast<const SingularityError*>(&e) || dynamic_cast<const DegenerateMetricError*>(&e) ||
      dynamic_cast<const MultiplierVanishesError*>(&e))
    return kSingularity;
  return kConfigError;
}

const char* error_type(int code) {
  switch (code) {
    case kIncompatible: return "incompatible";
    case kSingularity: return "singularity";
    case kIntegrationSingularity: return "integration_singularity";
    default: return "config";
  }
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("system", o.system, "builtin system name or path to a system-definition file")->required();
  sub->add_option("--f", o.f, "reducing multiplier expression, or 'auto'");
  sub->add_option("--lambda", o.lambda, "values of the cyclic momenta")->delimiter(',');
  sub->add_option("--cyclic", o.cyclic, "cyclic coordinates to reduce")->delimiter(',');
  sub->add_flag("--reduce", o.reduce, "work on the Routh-reduced system");
  sub->add_option("--samples", o.samples, "number of random samples")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "sampling seed");
  sub->add_option("--tol", o.tol, "pass/fail tolerance");
  sub->add_option("--t", o.t, "final time")->check(CLI::PositiveNumber);
  sub->add_option("--dt", o.dt, "integrator step")->check(CLI::PositiveNumber);
  sub->add_option("--ic", o.ic, "initial state, comma separated (r, p_alpha, p_i)");
  sub->add_option("--out", o.out, "output file (or file prefix for compare)");
  sub->add_flag("--json", o.json, "print the report as JSON");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Chaplygin Hamiltonization of nonholonomic systems", "nhk"};
  app.require_subcommand(1);
  auto* list = app.add_subcommand("list", "list builtin systems");
  list->add_flag("--json", o.json, "print the report as JSON");
  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"check", "test the reducing-multiplier conditions for f"},
      {"solve2dof", "solve for f on a two-dimensional shape space"},
      {"fit", "fit log f to a linear ansatz"},
      {"reduce", "detect cyclic coordinates and Hamiltonize the reduced system"},
      {"simulate", "integrate one flow and write its trajectory"},
      {"compare", "integrate the original and the Hamiltonized flows and compare them"},
      {"measure", "divergence test of an invariant-measure density"},
      {"jacobi", "antisymmetry and Jacobi identity of the brackets"},
      {"condvar", "conditionally variational Lagrangian and its flow"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : specs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, o);
    subs[s.name] = sub;
  }
  subs["fit"]->add_option("--basis", o.basis, "basis function for log f (repeatable)");
  for (const char* n : {"simulate", "compare"})
    subs[n]->add_option("--flow", o.flow, "lda, hamiltonized, condvar, reduced, reduced_hamiltonized or gyroscopic");
  subs["measure"]->add_option("--density", o.density, "density expression to test");

  std::vector<const char*> argv{"nhk"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "nhk: " << e.what() << "\n";
    return kConfigError;
  }
  for (auto* s : app.get_subcommands()) o.command = s->get_name();

  json rep;
  int code = kPass;
  std::unique_ptr<Context> ctx;
  try {
    if (o.command == "list") {
      rep = header(o, nullptr);
      code = cmd_list(o, rep);
    } else {
      ctx = std::make_unique<Context>(load(o));
      rep = header(o, ctx.get());
      const Context& c = *ctx;
      if (o.command == "check") code = cmd_check(o, c, rep);
      else if (o.command == "solve2dof") code = cmd_solve2dof(o, c, rep);
      else if (o.command == "fit") code = cmd_fit(o, c, rep);
      else if (o.command == "reduce") code = cmd_reduce(o, c, rep);
      else if (o.command == "simulate") code = cmd_simulate(o, c, rep, out);
      else if (o.command == "compare") code = cmd_compare(o, c, rep);
      else if (o.command == "measure") code = cmd_measure(o, c, rep);
      else if (o.command == "jacobi") code = cmd_jacobi(o, c, rep);
      else if (o.command == "condvar") code = cmd_condvar(o, c, rep, out);
    }
  } catch (const IntegrationFailure& e) {
    rep = e.report;
    code = kIntegrationSingularity;
    rep["error"] = {{"type", error_type(code)}, {"message", e.what()}};
    rep["verdict"] = "error";
  } catch (const std::exception& e) {
    if (rep.is_null()) rep = header(o, ctx.get());
    code = error_code(e);
    rep["error"] = {{"type", error_type(code)}, {"message", e.what()}};
    rep["verdict"] = "error";
  }
  rep["exit_code"] = code;

  if (rep.contains("error")) err << "nhk: " << rep["error"]["message"].get<std::string>() << "\n";
  if (o.json) {
    out << rep.dump(2) << "\n";
  } else if (!(o.command == "simulate" && o.out.empty() && code == kPass)) {
    render_text(rep, out, 0);
  }
  return code;
}

}  // namespace nhk::cli
