#include "nhk/brackets.hpp"

#include <cmath>

#include "nhk/errors.hpp"

namespace nhk {

PhaseSplit split_phase(const Model& model, const VectorXd& x) {
  const int m = model.m(), s = model.s();
  if (x.size() != 2 * m + s) throw ConfigError("phase point has dimension " + std::to_string(x.size()) +
                                               ", expected " + std::to_string(2 * m + s));
  return {x.head(m), x.segment(m, m), x.segment(2 * m, s)};
}

VectorXd join_phase(const VectorXd& r, const VectorXd& p, const VectorXd& pi) {
  VectorXd x(r.size() + p.size() + pi.size());
  x << r, p, pi;
  return x;
}

const char* bracket_kind_name(BracketKind k) {
  switch (k) {
    case BracketKind::Chaplygin: return "chaplygin";
    case BracketKind::Eps: return "eps";
    case BracketKind::Transformed: return "transformed";
    case BracketKind::Reduced: return "reduced";
    default: return "hpd";
  }
}

MatrixXd BracketTable::matrix() const {
  const int m = this->m(), s = this->s();
  MatrixXd P = MatrixXd::Zero(2 * m + s, 2 * m + s);
  P.block(0, m, m, m) = rp;
  P.block(m, 0, m, m) = -rp.transpose();
  P.block(m, m, m, m) = papb;
  P.block(2 * m, m, s, m) = pipa;
  P.block(m, 2 * m, m, s) = -pipa.transpose();
  P.block(2 * m, 2 * m, s, s) = pipj;
  return P;
}

VectorXd constrained_momentum(const GeometryAtPoint& g, const VectorXd& p, const VectorXd& pi) {
  MatrixXd MG = g.M * g.Ginv;
  VectorXd mu = MG * p;
  if (pi.size() > 0) mu += (g.g_gg * g.Gamma - MG * g.Gi.transpose()) * pi;
  return mu;
}

namespace {

// Cee(a, i, j) = C^a_{bd} e^b_i e^d_j
Tensor3 structure_on_basis(const SystemDef& d, const MatrixXd& e) {
  const int k = d.k, s = d.s;
  Tensor3 out(k, s, s);
  if (d.abelian()) return out;
  for (int a = 0; a < k; ++a)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) {
        double v = 0.0;
        for (int b = 0; b < k; ++b)
          for (int c = 0; c < k; ++c) v += d.structure(a, b, c) * e(b, i) * e(c, j);
        out(a, i, j) = v;
      }
  return out;
}

}  // namespace

BracketTable bracket_at(const Model& model, const VectorXd& x) {
  const SystemDef& d = model.def();
  auto [r, p, pi] = split_phase(model, x);
  GeometryAtPoint g = model.derived(model.point(r));
  VectorXd mu = constrained_momentum(g, p, pi);
  const int m = d.m, s = d.s, k = d.k;

  BracketTable t;
  t.kind = d.kind == Kind::Chaplygin ? BracketKind::Chaplygin : d.kind == Kind::Eps ? BracketKind::Eps : BracketKind::Hpd;
  t.rp = MatrixXd::Identity(m, m);
  t.papb = MatrixXd::Zero(m, m);
  for (int al = 0; al < m; ++al)
    for (int be = 0; be < m; ++be) {
      double v = 0.0;
      for (int a = 0; a < k; ++a) v -= mu[a] * g.B(a, al, be);
      t.papb(al, be) = v;
    }
  t.pipa = MatrixXd::Zero(s, m);
  for (int i = 0; i < s; ++i)
    for (int al = 0; al < m; ++al) {
      double v = 0.0;
      for (int a = 0; a < k; ++a) v += mu[a] * g.F(a, i, al);
      t.pipa(i, al) = v;
    }
  t.pipj = MatrixXd::Zero(s, s);
  Tensor3 cee = structure_on_basis(d, g.e);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      double v = 0.0;
      for (int a = 0; a < k; ++a) v -= mu[a] * cee(a, i, j);
      t.pipj(i, j) = v;
    }
  return t;
}

TransformedComponents transformed_components(const Model& model, const Multiplier& f, const VectorXd& q) {
  GeometryAtPoint g = model.derived(model.point(q), &f);
  return transformed_components(g, model.def());
}

TransformedComponents transformed_components(const GeometryAtPoint& g, const SystemDef& d) {
  if (!g.has_f) throw ConfigError("transformed components need a multiplier");
  const int m = d.m, s = d.s, k = d.k;
  const double f = g.f;
  MatrixXd MG = g.M * g.Ginv;             // (a, alpha)
  MatrixXd MGGk = MG * g.Gi.transpose();  // (a, k) = M_{a gamma} G^{gamma alpha} G^k_alpha
  MatrixXd gGam = g.g_gg * g.Gamma;       // (a, k) = g_ab Gamma^{bk}
  Tensor3 cee = structure_on_basis(d, g.e);
  VectorXd Xe = g.e.transpose() * g.Xf;   // X_d f e^d_i
  VectorXd XA = g.A.transpose() * g.Xf;   // X_d f A^d_alpha

  TransformedComponents tc;
  tc.f = f;
  tc.A = Tensor3(s, s, s);
  tc.B = Tensor3(m, s, s);
  tc.C = Tensor3(s, s, m);
  tc.D = Tensor3(m, s, m);
  tc.E = Tensor3(s, m, m);
  tc.F = Tensor3(m, m, m);

  for (int kk = 0; kk < s; ++kk)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) {
        double v = 0.0;
        for (int a = 0; a < k; ++a) v += cee(a, i, j) * MGGk(a, kk);
        tc.A(kk, i, j) = f * v - (f * g.Keps(kk, j, i) - g.Cbar(kk, i, j));
      }
  for (int al = 0; al < m; ++al)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) {
        double v = 0.0;
        for (int a = 0; a < k; ++a) v += cee(a, i, j) * MG(a, al);
        tc.B(al, i, j) = -f * v;
      }
  for (int kk = 0; kk < s; ++kk)
    for (int i = 0; i < s; ++i)
      for (int al = 0; al < m; ++al) {
        double v = 0.0;
        for (int a = 0; a < k; ++a) v += g.F(a, i, al) * (gGam(a, kk) - MGGk(a, kk));
        tc.C(kk, i, al) = (kk == i ? g.df[al] - XA[al] : 0.0) + f * v;
      }
  for (int be = 0; be < m; ++be)
    for (int i = 0; i < s; ++i)
      for (int al = 0; al < m; ++al) {
        double v = 0.0;
        for (int a = 0; a < k; ++a) v += g.F(a, i, al) * MG(a, be);
        tc.D(be, i, al) = f * v - (be == al ? Xe[i] : 0.0);
      }
  for (int kk = 0; kk < s; ++kk)
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be) {
        double v = 0.0;
        for (int b = 0; b < k; ++b) v += g.B(b, al, be) * (MGGk(b, kk) - gGam(b, kk));
        tc.E(kk, al, be) = f * v;
      }
  for (int ga = 0; ga < m; ++ga)
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be) {
        double v = (ga == be ? XA[al] : 0.0) - (ga == al ? XA[be] : 0.0);
        tc.F(ga, al, be) = v + f * g.Kchap(ga, be, al) - g.Cchap(ga, al, be);
      }
  return tc;
}

BracketTable transformed_bracket(const TransformedComponents& tc, const VectorXd& P, const VectorXd& Pi,
                                 bool poisson_part) {
  const int m = static_cast<int>(P.size()), s = static_cast<int>(Pi.size());
  const double inv = 1.0 / tc.f;
  BracketTable t;
  t.kind = BracketKind::Transformed;
  t.rp = MatrixXd::Identity(m, m);
  t.papb = MatrixXd::Zero(m, m);
  t.pipa = MatrixXd::Zero(s, m);
  t.pipj = MatrixXd::Zero(s, s);
  for (int al = 0; al < m; ++al)
    for (int be = 0; be < m; ++be) {
      double v = 0.0;
      for (int kk = 0; kk < s; ++kk) v += tc.E(kk, al, be) * Pi[kk];
      if (!poisson_part)
        for (int ga = 0; ga < m; ++ga) v += tc.F(ga, al, be) * P[ga];
      t.papb(al, be) = inv * v;
    }
  for (int i = 0; i < s; ++i)
    for (int be = 0; be < m; ++be) {
      double v = 0.0;
      for (int kk = 0; kk < s; ++kk) v += tc.C(kk, i, be) * Pi[kk];
      if (!poisson_part)
        for (int ga = 0; ga < m; ++ga) v += tc.D(ga, i, be) * P[ga];
      t.pipa(i, be) = inv * v;
    }
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      double v = 0.0;
      for (int kk = 0; kk < s; ++kk) v += tc.A(kk, i, j) * Pi[kk];
      if (!poisson_part)
        for (int ga = 0; ga < m; ++ga) v += tc.B(ga, i, j) * P[ga];
      t.pipj(i, j) = inv * v;
    }
  return t;
}

BracketField lda_bracket_field(const Model& model) {
  return [&model](const VectorXd& x) { return bracket_at(model, x).matrix(); };
}

BracketField transformed_bracket_field(const Model& model, const Multiplier& f, bool poisson_part) {
  return [&model, f, poisson_part](const VectorXd& x) {
    auto [r, P, Pi] = split_phase(model, x);
    auto tc = transformed_components(model, f, model.point(r));
    return transformed_bracket(tc, P, Pi, poisson_part).matrix();
  };
}

BracketField canonical_bracket_field(int m) {
  return [m](const VectorXd&) {
    MatrixXd P = MatrixXd::Zero(2 * m, 2 * m);
    P.block(0, m, m, m) = MatrixXd::Identity(m, m);
    P.block(m, 0, m, m) = -MatrixXd::Identity(m, m);
    return P;
  };
}

namespace {

std::vector<MatrixXd> structure_derivatives(const BracketField& field, const VectorXd& x, double h_rel) {
  std::vector<MatrixXd> d;
  d.reserve(static_cast<std::size_t>(x.size()));
  for (int L = 0; L < x.size(); ++L) {
    double h = h_rel * (1.0 + std::fabs(x[L]));
    VectorXd xp = x, xm = x;
    xp[L] += h;
    xm[L] -= h;
    d.push_back((field(xp) - field(xm)) / (2.0 * h));
  }
  return d;
}

double cyclic_sum(const MatrixXd& P, const std::vector<MatrixXd>& dP, int I, int J, int K) {
  double v = 0.0;
  for (int L = 0; L < P.rows(); ++L)
    v += P(I, L) * dP[L](J, K) + P(J, L) * dP[L](K, I) + P(K, L) * dP[L](I, J);
  return v;
}

}  // namespace

double jacobiator(const BracketField& field, const VectorXd& x, int I, int J, int K, double h_rel) {
  const int n = static_cast<int>(x.size());
  if (I < 0 || J < 0 || K < 0 || I >= n || J >= n || K >= n) throw ConfigError("jacobiator index out of range");
  MatrixXd P = field(x);
  return cyclic_sum(P, structure_derivatives(field, x, h_rel), I, J, K);
}

JacobiScan jacobiator_scan(const BracketField& field, const std::vector<VectorXd>& states, double h_rel) {
  JacobiScan out;
  for (const auto& x : states) {
    MatrixXd P = field(x);
    auto dP = structure_derivatives(field, x, h_rel);
    const int n = static_cast<int>(x.size());
    for (int I = 0; I < n; ++I)
      for (int J = I + 1; J < n; ++J)
        for (int K = J + 1; K < n; ++K) {
          double v = std::fabs(cyclic_sum(P, dP, I, J, K));
          if (out.state.size() == 0 || v > out.max_abs) {
            out.max_abs = v;
            out.triple = {I, J, K};
            out.state = x;
          }
        }
  }
  return out;
}

double antisymmetry_defect(const BracketField& field, const std::vector<VectorXd>& states) {
  double worst = 0.0;
  for (const auto& x : states) {
    MatrixXd P = field(x);
    worst = std::max(worst, max_abs(P + P.transpose()));
  }
  return worst;
}

}  // namespace nhk
