#include "nhk/condvar.hpp"

#include <algorithm>
#include <cmath>

#include "nhk/errors.hpp"
#include "nhk/hamiltonize.hpp"

namespace nhk {

namespace {

using namespace expr;

bool is_identity(const ExprMatrix& frame) {
  for (int i = 0; i < frame.rows; ++i)
    for (int j = 0; j < frame.cols; ++j)
      if (!is_const(frame(i, j), i == j ? 1.0 : 0.0)) return false;
  return true;
}

Expr entry(const ExprMatrix& M, int i, int j) {
  if (M.data.empty() || !M(i, j)) return constant(0.0);
  return M(i, j);
}

Expr bind_params(const Expr& e, const std::map<std::string, double>& params) {
  std::map<std::string, Expr> repl;
  for (const auto& [k, v] : params) repl[k] = constant(v);
  return fold(substitute(e, repl));
}

struct Compiled {
  std::vector<std::string> slots;
  Program f;
  std::vector<Program> dq, dw, constraints;
  std::vector<std::vector<Program>> Hww, Hwq;
};

std::shared_ptr<Compiled> compile(const VariationalLagrangian& lv) {
  auto c = std::make_shared<Compiled>();
  const int n = lv.n();
  c->slots = lv.coords;
  c->slots.insert(c->slots.end(), lv.omega.begin(), lv.omega.end());
  Expr LV = bind_params(lv.LV, lv.params);
  c->f = Program(bind_params(lv.f, lv.params), c->slots);
  c->Hww.assign(n, {});
  c->Hwq.assign(n, {});
  for (int I = 0; I < n; ++I) {
    c->dq.emplace_back(fold(differentiate(LV, lv.coords[I])), c->slots);
    Expr dwI = fold(differentiate(LV, lv.omega[I]));
    c->dw.emplace_back(dwI, c->slots);
    for (int J = 0; J < n; ++J) {
      c->Hww[I].emplace_back(fold(differentiate(dwI, lv.omega[J])), c->slots);
      c->Hwq[I].emplace_back(fold(differentiate(dwI, lv.coords[J])), c->slots);
    }
  }
  for (const auto& phi : lv.constraints) c->constraints.emplace_back(bind_params(phi, lv.params), c->slots);
  return c;
}

}  // namespace

VariationalLagrangian build_variational(const Model& model, const Expr& f, int samples, std::uint64_t seed) {
  const SystemDef& d = model.def();
  if (d.kind != Kind::Chaplygin || !d.abelian() || !is_identity(d.frame))
    throw ConfigError("conditionally variational construction requires an abelian chaplygin system");
  const int m = d.m, k = d.k;
  VariationalLagrangian lv;
  lv.f = f;
  lv.m = m;
  lv.params = d.params;
  lv.coords = d.coordinate_names();
  for (const auto& c : lv.coords) {
    std::string w = "omega_" + c;
    if (std::find(lv.coords.begin(), lv.coords.end(), w) != lv.coords.end() || d.params.count(w))
      throw ConfigError("name clash with quasivelocity '" + w + "'");
    lv.omega.push_back(w);
  }
  auto om = [&](int I) { return variable(lv.omega[I]); };
  Expr f2 = mul(f, f);

  // kinetic energy in q-dot = f omega
  Expr T = constant(0.0);
  for (int al = 0; al < m; ++al)
    for (int be = 0; be < m; ++be) T = add(T, mul(entry(d.g_rr, al, be), mul(om(al), om(be))));
  for (int a = 0; a < k; ++a)
    for (int al = 0; al < m; ++al)
      T = add(T, mul(constant(2.0), mul(entry(d.g_gr, a, al), mul(om(m + a), om(al)))));
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) T = add(T, mul(entry(d.g_gg, a, b), mul(om(m + a), om(m + b))));
  lv.L = fold(sub(mul(div(f2, constant(2.0)), T), d.V));

  // (1/f) dL/d omega^a phi^a = f^2 (g_{a alpha} omega^alpha + g_ab omega^b)(omega^a + A^a_alpha omega^alpha)
  Expr correction = constant(0.0);
  for (int a = 0; a < k; ++a) {
    Expr mom = constant(0.0);
    for (int al = 0; al < m; ++al) mom = add(mom, mul(entry(d.g_gr, a, al), om(al)));
    for (int b = 0; b < k; ++b) mom = add(mom, mul(entry(d.g_gg, a, b), om(m + b)));
    Expr con = om(m + a);
    for (int al = 0; al < m; ++al) con = add(con, mul(entry(d.A, a, al), om(al)));
    correction = add(correction, mul(mom, con));
    lv.constraints.push_back(fold(mul(f, con)));
  }
  lv.LV = fold(sub(lv.L, mul(f2, correction)));

  // g-tilde_ab = f^2 g_ab must be invertible
  SampleOptions opt;
  opt.count = samples;
  opt.seed = seed;
  Program fp(bind_params(f, d.params), lv.coords);
  for (const auto& q : sample_configurations(model, opt)) {
    std::vector<double> slots(q.data(), q.data() + q.size());
    const double fv = fp(slots);
    GeometryAtPoint g = model.derived(model.point(q));
    MatrixXd gt = fv * fv * g.g_gg;
    Eigen::JacobiSVD<MatrixXd> svd(gt);
    const auto& sv = svd.singularValues();
    if (!std::isfinite(sv[0]) || sv[sv.size() - 1] <= 1e-12 * std::max(1.0, sv[0]))
      throw NotConditionallyVariationalError("g-tilde is singular near q = (" +
                                             [&] {
                                               std::string s;
                                               for (int i = 0; i < q.size(); ++i)
                                                 s += (i ? ", " : "") + format_number(q[i]);
                                               return s;
                                             }() +
                                             ")");
  }
  return lv;
}

VectorField almost_el_flow(const VariationalLagrangian& lv) {
  auto c = compile(lv);
  const int n = lv.n();
  return [c, n](const VectorXd& x) -> VectorXd {
    std::vector<double> s(x.data(), x.data() + x.size());
    const double fv = c->f(s);
    MatrixXd H(n, n), Mq(n, n);
    VectorXd rhs(n);
    for (int I = 0; I < n; ++I) {
      rhs[I] = c->dq[I](s);
      for (int J = 0; J < n; ++J) {
        H(I, J) = c->Hww[I][J](s);
        Mq(I, J) = c->Hwq[I][J](s);
      }
    }
    VectorXd w = x.tail(n);
    rhs = fv * (rhs - Mq * w);
    Eigen::FullPivLU<MatrixXd> lu(H);
    if (!lu.isInvertible() || lu.rcond() < 1e-13) throw SingularityError("omega-Hessian of L_V is singular");
    VectorXd out(2 * n);
    out.head(n) = fv * w;
    out.tail(n) = lu.solve(rhs);
    return out;
  };
}

VectorXd constraint_values(const VariationalLagrangian& lv, const VectorXd& x) {
  std::vector<std::string> slots = lv.coords;
  slots.insert(slots.end(), lv.omega.begin(), lv.omega.end());
  std::vector<double> s(x.data(), x.data() + x.size());
  VectorXd out(static_cast<int>(lv.constraints.size()));
  for (std::size_t a = 0; a < lv.constraints.size(); ++a)
    out[static_cast<int>(a)] = Program(bind_params(lv.constraints[a], lv.params), slots)(s);
  return out;
}

double constraint_conservation(const VariationalLagrangian& lv, const Trajectory& traj) {
  if (traj.x.empty()) return 0.0;
  std::vector<std::string> slots = lv.coords;
  slots.insert(slots.end(), lv.omega.begin(), lv.omega.end());
  Program fp(bind_params(lv.f, lv.params), slots);
  std::vector<Program> phi;
  for (const auto& e : lv.constraints) phi.emplace_back(bind_params(e, lv.params), slots);
  auto values = [&](const VectorXd& x) {
    std::vector<double> s(x.data(), x.data() + x.size());
    const double fv = fp(s);
    std::vector<double> out;
    for (const auto& p : phi) out.push_back(fv * p(s));
    return out;
  };
  const auto v0 = values(traj.x[0]);
  double worst = 0.0;
  for (const auto& x : traj.x) {
    auto v = values(x);
    for (std::size_t a = 0; a < v.size(); ++a) worst = std::max(worst, std::fabs(v[a] - v0[a]));
  }
  return worst;
}

Projection project_onto_constraints(const VariationalLagrangian& lv, const VectorXd& x) {
  const int n = lv.n(), m = lv.m, k = n - m;
  std::vector<std::string> slots = lv.coords;
  slots.insert(slots.end(), lv.omega.begin(), lv.omega.end());
  Projection out;
  out.state = x;
  // phi^a is f (omega^a + A omega^r); evaluate A omega^r with omega^a set to zero
  VectorXd y = x;
  for (int a = 0; a < k; ++a) y[n + m + a] = 0.0;
  std::vector<double> s(y.data(), y.data() + y.size());
  Program fp(bind_params(lv.f, lv.params), slots);
  const double fv = fp(s);
  for (int a = 0; a < k; ++a) {
    const double Aw = Program(bind_params(lv.constraints[a], lv.params), slots)(s) / fv;
    out.state[n + m + a] = -Aw;
    out.residual = std::max(out.residual, std::fabs(x[n + m + a] + Aw));
  }
  return out;
}

VectorXd lda_to_quasivelocity(const Model& model, const VariationalLagrangian& lv, const VectorXd& x) {
  const int m = model.m(), k = model.k(), n = m + k;
  VectorXd q(n);
  q.head(m) = x.head(m);
  q.tail(k) = x.segment(2 * m + model.s(), k);
  GeometryAtPoint g = model.derived(model.point(q));
  VectorXd rdot = g.Ginv * x.segment(m, m);
  VectorXd qdot(n);
  qdot.head(m) = rdot;
  qdot.tail(k) = -g.A * rdot;
  std::vector<double> s(q.data(), q.data() + q.size());
  s.resize(2 * n, 0.0);
  std::vector<std::string> slots = lv.coords;
  slots.insert(slots.end(), lv.omega.begin(), lv.omega.end());
  const double fv = Program(bind_params(lv.f, lv.params), slots)(s);
  VectorXd out(2 * n);
  out.head(n) = q;
  out.tail(n) = qdot / fv;
  return out;
}

VectorXd quasivelocity_to_lda(const Model& model, const VariationalLagrangian& lv, const VectorXd& x) {
  const int m = model.m(), k = model.k(), n = m + k;
  std::vector<double> s(x.data(), x.data() + x.size());
  std::vector<std::string> slots = lv.coords;
  slots.insert(slots.end(), lv.omega.begin(), lv.omega.end());
  const double fv = Program(bind_params(lv.f, lv.params), slots)(s);
  GeometryAtPoint g = model.derived(model.point(x.head(n)));
  VectorXd out(2 * m + k);
  out.head(m) = x.head(m);
  out.segment(m, m) = g.G * (fv * x.segment(n, m));
  out.tail(k) = x.segment(m, k);
  return out;
}

}  // namespace nhk
