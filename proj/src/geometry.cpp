#include "nhk/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "nhk/errors.hpp"
#include "nhk/multiplier.hpp"

namespace nhk {

using namespace expr;

MatrixXd checked_inverse(const MatrixXd& m, const char* what, double* cond_out) {
  if (m.rows() == 0) {
    if (cond_out) *cond_out = 1.0;
    return m;
  }
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  double smin = sv(sv.size() - 1);
  double cond = smin > 0.0 ? smax / smin : INFINITY;
  if (cond_out) *cond_out = cond;
  if (!(cond <= 1e12)) throw DegenerateMetricError(std::string(what) + " is degenerate (condition number above 1e12)");
  return m.inverse();
}

namespace {

ExprMatrix compose_G(const SystemDef& d) {
  ExprMatrix G = ExprMatrix::zeros(d.m, d.m);
  for (int al = 0; al < d.m; ++al)
    for (int be = 0; be < d.m; ++be) {
      Expr acc = d.g_rr(al, be);
      for (int a = 0; a < d.k; ++a) {
        acc = sub(acc, mul(d.g_gr(a, al), d.A(a, be)));
        acc = sub(acc, mul(d.g_gr(a, be), d.A(a, al)));
        for (int b = 0; b < d.k; ++b) acc = add(acc, mul(mul(d.A(a, al), d.g_gg(a, b)), d.A(b, be)));
      }
      G(al, be) = acc;
    }
  return G;
}

ExprMatrix compose_Gij(const SystemDef& d) {
  ExprMatrix G = ExprMatrix::zeros(d.s, d.s);
  for (int i = 0; i < d.s; ++i)
    for (int j = 0; j < d.s; ++j) {
      Expr acc = constant(0.0);
      for (int a = 0; a < d.k; ++a)
        for (int b = 0; b < d.k; ++b) acc = add(acc, mul(mul(d.g_gg(a, b), d.e(a, i)), d.e(b, j)));
      G(i, j) = acc;
    }
  return G;
}

ExprMatrix compose_M(const SystemDef& d) {
  ExprMatrix M = ExprMatrix::zeros(d.k, d.m);
  for (int a = 0; a < d.k; ++a)
    for (int al = 0; al < d.m; ++al) {
      Expr acc = d.g_gr(a, al);
      for (int b = 0; b < d.k; ++b) acc = sub(acc, mul(d.g_gg(a, b), d.A(b, al)));
      M(a, al) = acc;
    }
  return M;
}

void check_dims(const ExprMatrix& m, int r, int c, const char* what) {
  if (m.rows != r || m.cols != c || static_cast<int>(m.data.size()) != r * c)
    throw ConfigError(std::string("block ") + what + " has the wrong shape");
}

}  // namespace

Model::Model(SystemDef def) : def_(std::move(def)) {
  const SystemDef& d = def_;
  if (d.m < 0 || d.k <= 0 || d.s < 0 || d.s > d.k) throw ConfigError("invalid dimensions");
  if (static_cast<int>(d.shape.size()) != d.m || static_cast<int>(d.group.size()) != d.k)
    throw ConfigError("coordinate names do not match dimensions");
  check_dims(d.g_rr, d.m, d.m, "g_alpha_beta");
  check_dims(d.g_gr, d.k, d.m, "g_a_alpha");
  check_dims(d.g_gg, d.k, d.k, "g_ab");
  check_dims(d.A, d.k, d.m, "connection");
  check_dims(d.e, d.k, d.s, "body_basis");
  check_dims(d.frame, d.k, d.k, "group_frame");
  if (d.C.size() != static_cast<std::size_t>(d.k * d.k * d.k)) throw ConfigError("structure constants have wrong size");
  if (d.kind == Kind::Chaplygin && d.s != 0) throw ConfigError("chaplygin systems require s = 0");
  if (d.kind == Kind::Eps && d.m != 0) throw ConfigError("eps systems require m = 0");
  if (static_cast<int>(def_.shape_box.size()) != d.m) def_.shape_box.assign(d.m, Interval{});
  if (static_cast<int>(def_.group_box.size()) != d.k) def_.group_box.assign(d.k, Interval{});
  if (!def_.V) def_.V = constant(0.0);

  slot_names_ = d.coordinate_names();
  for (const auto& [name, value] : d.params) slot_names_.push_back(name);

  G_expr_ = compose_G(d);
  Gij_expr_ = compose_Gij(d);
  M_expr_ = compose_M(d);

  g_rr_ = compile(d.g_rr);
  g_gr_ = compile(d.g_gr);
  g_gg_ = compile(d.g_gg);
  A_ = compile(d.A);
  e_ = compile(d.e);
  frame_ = compile(d.frame);
  G_ = compile(G_expr_);
  Gij_ = compile(Gij_expr_);
  for (const auto& r : d.shape) {
    dA_.push_back(compile_derivative(d.A, r));
    de_.push_back(compile_derivative(d.e, r));
    dG_.push_back(compile_derivative(G_expr_, r));
    dGij_.push_back(compile_derivative(Gij_expr_, r));
    dV_.emplace_back(fold(differentiate(d.V, r)), slot_names_);
  }
  V_ = Program(d.V, slot_names_);
  validate(8, 7);
}

Model::Compiled Model::compile(const ExprMatrix& m) const {
  Compiled c;
  c.rows = m.rows;
  c.cols = m.cols;
  for (const auto& e : m.data) c.progs.emplace_back(e, slot_names_);
  return c;
}

Model::Compiled Model::compile_derivative(const ExprMatrix& m, const std::string& var) const {
  Compiled c;
  c.rows = m.rows;
  c.cols = m.cols;
  for (const auto& e : m.data) c.progs.emplace_back(fold(differentiate(e, var)), slot_names_);
  return c;
}

MatrixXd Model::run(const Compiled& c, const std::vector<double>& slots) const {
  MatrixXd out(c.rows, c.cols);
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) out(i, j) = c.progs[static_cast<std::size_t>(i) * c.cols + j](slots);
  return out;
}

MatrixXd Model::eval(const ExprMatrix& m, const std::vector<double>& slots) const {
  MatrixXd out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(i, j) = Program(m(i, j), slot_names_)(slots);
  return out;
}

VectorXd Model::default_group() const {
  VectorXd g(def_.k);
  for (int a = 0; a < def_.k; ++a) g[a] = def_.group_box[a].mid();
  return g;
}

VectorXd Model::point(const VectorXd& r) const {
  if (r.size() == def_.m + def_.k) return r;
  if (r.size() != def_.m) throw ConfigError("point has wrong dimension");
  VectorXd q(def_.m + def_.k);
  q << r, default_group();
  return q;
}

std::vector<double> Model::slots(const VectorXd& q_in) const {
  VectorXd q = point(q_in);
  std::vector<double> out(q.data(), q.data() + q.size());
  for (const auto& [name, value] : def_.params) out.push_back(value);
  return out;
}

Tensor3 Model::curvature(const VectorXd& q) const {
  auto sl = slots(q);
  const int m = def_.m, k = def_.k;
  MatrixXd A = run(A_, sl);
  std::vector<MatrixXd> dA;
  for (int b = 0; b < m; ++b) dA.push_back(run(dA_[b], sl));
  Tensor3 B(k, m, m);
  for (int a = 0; a < k; ++a)
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be) {
        double v = dA[be](a, al) - dA[al](a, be);
        for (int b = 0; b < k; ++b)
          for (int c = 0; c < k; ++c) v += def_.structure(a, b, c) * A(b, al) * A(c, be);
        B(a, al, be) = v;
      }
  return B;
}

Tensor3 Model::f_coefficients(const VectorXd& q) const {
  auto sl = slots(q);
  const int m = def_.m, k = def_.k, s = def_.s;
  Tensor3 F(k, s, m);
  if (s == 0) return F;
  MatrixXd A = run(A_, sl);
  MatrixXd e = run(e_, sl);
  for (int be = 0; be < m; ++be) {
    MatrixXd de = run(de_[be], sl);
    for (int a = 0; a < k; ++a)
      for (int i = 0; i < s; ++i) {
        double v = de(a, i);
        for (int b = 0; b < k; ++b)
          for (int c = 0; c < k; ++c) v += def_.structure(a, b, c) * e(b, i) * A(c, be);
        F(a, i, be) = v;
      }
  }
  return F;
}

GeometryAtPoint Model::derived(const VectorXd& q_in, const Multiplier* f) const {
  VectorXd q = point(q_in);
  auto sl = slots(q);
  const int m = def_.m, k = def_.k, s = def_.s;
  GeometryAtPoint g;
  g.g_rr = run(g_rr_, sl);
  g.g_gr = run(g_gr_, sl);
  g.g_gg = run(g_gg_, sl);
  g.A = run(A_, sl);
  g.e = run(e_, sl);
  g.frame = run(frame_, sl);
  g.G = run(G_, sl);
  g.Ginv = checked_inverse(g.G, "G_alpha_beta", &g.cond_G);
  g.Gij = run(Gij_, sl);
  g.Gij_inv = checked_inverse(g.Gij, "G_ij", &g.cond_Gij);
  g.Gamma = g.e * g.Gij_inv;
  g.M = g.g_gr - g.g_gg * g.A;
  g.Gi = g.Gamma.transpose() * g.M;
  g.B = curvature(q);
  g.F = f_coefficients(q);

  g.Kchap = Tensor3(m, m, m);
  MatrixXd MG = g.M * g.Ginv;  // (b, gamma) = M_{b eps} G^{eps gamma}
  for (int ga = 0; ga < m; ++ga)
    for (int be = 0; be < m; ++be)
      for (int al = 0; al < m; ++al) {
        double v = 0.0;
        for (int b = 0; b < k; ++b) v += MG(b, ga) * g.B(b, be, al);
        g.Kchap(ga, be, al) = v;
      }

  g.Keps = Tensor3(s, s, s);
  if (s > 0) {
    MatrixXd gG = g.g_gg * g.Gamma;  // (a, kk) = g_ab Gamma^{b kk}
    for (int kk = 0; kk < s; ++kk)
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i) {
          double v = 0.0;
          for (int a = 0; a < k; ++a)
            for (int c = 0; c < k; ++c)
              for (int d = 0; d < k; ++d) v += gG(a, kk) * def_.structure(a, c, d) * g.e(c, i) * g.e(d, j);
          g.Keps(kk, j, i) = v;
        }
  }

  if (f) {
    MultiplierValue fv = f->eval(q);
    g.has_f = true;
    g.f = fv.f;
    g.df = fv.dr.size() == m ? fv.dr : VectorXd::Zero(m);
    g.Xf = VectorXd::Zero(k);
    if (fv.dg.size() == k) g.Xf = g.frame.transpose() * fv.dg;
    g.Cchap = Tensor3(m, m, m);
    for (int ga = 0; ga < m; ++ga)
      for (int al = 0; al < m; ++al)
        for (int be = 0; be < m; ++be)
          g.Cchap(ga, al, be) = (ga == be ? g.df[al] : 0.0) - (ga == al ? g.df[be] : 0.0);
    g.Cbar = Tensor3(s, s, s);
    for (int kk = 0; kk < s; ++kk)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
          double v = 0.0;
          for (int d = 0; d < k; ++d) v += g.Xf[d] * ((kk == i ? g.e(d, j) : 0.0) - (kk == j ? g.e(d, i) : 0.0));
          g.Cbar(kk, i, j) = v;
        }
  }
  return g;
}

MetricGradient Model::metric_gradient(const VectorXd& q) const {
  auto sl = slots(q);
  MetricGradient mg;
  for (int c = 0; c < def_.m; ++c) {
    mg.dG.push_back(run(dG_[c], sl));
    mg.dGij.push_back(run(dGij_[c], sl));
  }
  mg.V = V_(sl);
  mg.dV.resize(def_.m);
  for (int c = 0; c < def_.m; ++c) mg.dV[c] = dV_[c](sl);
  return mg;
}

void Model::validate(int samples, std::uint64_t seed) const {
  std::vector<Interval> box = def_.shape_box;
  box.insert(box.end(), def_.group_box.begin(), def_.group_box.end());
  auto pts = sample_box(box, samples, seed);
  for (const auto& q : pts) {
    std::vector<double> sl;
    MatrixXd grr, ggg, e, M, Gij;
    try {
      sl = slots(q);
      grr = run(g_rr_, sl);
      ggg = run(g_gg_, sl);
      e = run(e_, sl);
      M = run(g_gr_, sl) - ggg * run(A_, sl);
      Gij = run(Gij_, sl);
    } catch (const SingularityError&) {
      continue;
    }
    double scale = 1.0 + max_abs(grr) + max_abs(ggg);
    if (max_abs(grr - grr.transpose()) > 1e-12 * scale) throw ConfigError("g_alpha_beta is not symmetric");
    if (max_abs(ggg - ggg.transpose()) > 1e-12 * scale) throw ConfigError("g_ab is not symmetric");
    if (def_.s > 0) {
      Eigen::JacobiSVD<MatrixXd> svd(e);
      const auto& sv = svd.singularValues();
      if (!(sv(sv.size() - 1) > 1e-10 * (1.0 + sv(0))))
        throw ConfigError("columns of body_basis are linearly dependent");
      if (def_.m > 0) {
        MatrixXd orth = e.transpose() * M;
        if (max_abs(orth) > 1e-10 * (scale + max_abs(M)))
          throw ConfigError("body_basis is not orthogonal to the coupling M_{a alpha} = g_{a alpha} - g_ab A^b_alpha");
      }
    }
  }
}

}  // namespace nhk
