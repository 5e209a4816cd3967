#pragma once
// Reference mechanics computed straight from the system definition: the full
// Lagrangian on q = (r, g), constraints ds + A dr = 0 enforced with Lagrange
// multipliers, derivatives by five-point stencils. Valid for abelian Chaplygin
// systems whose group frame is the identity.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nhk/expr.hpp"
#include "nhk/geometry.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Mechanics {
 public:
  explicit Mechanics(const nhk::SystemDef& def) : def_(def), m_(def.m), k_(def.k) {}

  int n() const { return m_ + k_; }

  MatrixXd metric(const VectorXd& q) const {
    auto env = bind(q);
    MatrixXd M = MatrixXd::Zero(n(), n());
    for (int a = 0; a < m_; ++a)
      for (int b = 0; b < m_; ++b) M(a, b) = value(def_.g_rr, a, b, env);
    for (int a = 0; a < k_; ++a)
      for (int b = 0; b < m_; ++b) M(m_ + a, b) = M(b, m_ + a) = value(def_.g_gr, a, b, env);
    for (int a = 0; a < k_; ++a)
      for (int b = 0; b < k_; ++b) M(m_ + a, m_ + b) = value(def_.g_gg, a, b, env);
    return M;
  }

  /// Phi(q) with Phi q-dot = 0, i.e. [A | I].
  MatrixXd constraint(const VectorXd& q) const {
    auto env = bind(q);
    MatrixXd P = MatrixXd::Zero(k_, n());
    for (int a = 0; a < k_; ++a) {
      for (int al = 0; al < m_; ++al) P(a, al) = value(def_.A, a, al, env);
      P(a, m_ + a) = 1.0;
    }
    return P;
  }

  double potential(const VectorXd& q) const { return nhk::expr::evaluate(def_.V, bind(q)); }

  /// Constrained metric G = H^T M H with H = [I; -A].
  MatrixXd constrained_metric(const VectorXd& q) const {
    MatrixXd H = horizontal(q);
    return H.transpose() * metric(q) * H;
  }

  MatrixXd horizontal(const VectorXd& q) const {
    MatrixXd P = constraint(q);
    MatrixXd H(n(), m_);
    H.topRows(m_) = MatrixXd::Identity(m_, m_);
    H.bottomRows(k_) = -P.leftCols(m_);
    return H;
  }

  /// q-double-dot of the constrained Euler-Lagrange equations.
  VectorXd acceleration(const VectorXd& q, const VectorXd& qd) const {
    const int N = n();
    MatrixXd M = metric(q);
    MatrixXd P = constraint(q);
    VectorXd Mdot_qd = VectorXd::Zero(N), dT = VectorXd::Zero(N), Pdot_qd = VectorXd::Zero(k_), dV(N);
    for (int j = 0; j < N; ++j) {
      MatrixXd dM = stencil([&](const VectorXd& y) { return metric(y); }, q, j);
      MatrixXd dP = stencil([&](const VectorXd& y) { return constraint(y); }, q, j);
      Mdot_qd += qd[j] * (dM * qd);
      Pdot_qd += qd[j] * (dP * qd);
      dT[j] = 0.5 * qd.dot(dM * qd);
      dV[j] = stencil([&](const VectorXd& y) {
                MatrixXd v(1, 1);
                v(0, 0) = potential(y);
                return v;
              }, q, j)(0, 0);
    }
    MatrixXd KKT = MatrixXd::Zero(N + k_, N + k_);
    KKT.topLeftCorner(N, N) = M;
    KKT.topRightCorner(N, k_) = -P.transpose();
    KKT.bottomLeftCorner(k_, N) = P;
    VectorXd rhs(N + k_);
    rhs.head(N) = -Mdot_qd + dT - dV;
    rhs.tail(k_) = -Pdot_qd;
    return KKT.fullPivLu().solve(rhs).head(N);
  }

  /// Classical RK4 on (q, q-dot).
  std::vector<VectorXd> integrate(VectorXd q, VectorXd qd, double t1, double h) const {
    const int N = n();
    auto F = [&](const VectorXd& s) {
      VectorXd d(2 * N);
      d.head(N) = s.tail(N);
      d.tail(N) = acceleration(s.head(N), s.tail(N));
      return d;
    };
    VectorXd s(2 * N);
    s << q, qd;
    std::vector<VectorXd> out{s};
    const int steps = static_cast<int>(std::lround(t1 / h));
    for (int i = 0; i < steps; ++i) {
      VectorXd k1 = F(s), k2 = F(s + 0.5 * h * k1), k3 = F(s + 0.5 * h * k2), k4 = F(s + h * k3);
      s += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      out.push_back(s);
    }
    return out;
  }

 private:
  std::map<std::string, double> bind(const VectorXd& q) const {
    std::map<std::string, double> env = def_.params;
    for (int i = 0; i < m_; ++i) env[def_.shape[i]] = q[i];
    for (int i = 0; i < k_; ++i) env[def_.group[i]] = q[m_ + i];
    return env;
  }

  static double value(const nhk::ExprMatrix& M, int i, int j, const std::map<std::string, double>& env) {
    if (M.data.empty() || !M(i, j)) return 0.0;
    return nhk::expr::evaluate(M(i, j), env);
  }

  static MatrixXd stencil(const std::function<MatrixXd(const VectorXd&)>& fn, const VectorXd& q, int j) {
    const double h = 1e-3;
    auto at = [&](double s) {
      VectorXd y = q;
      y[j] += s;
      return fn(y);
    };
    return (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
  }

  nhk::SystemDef def_;
  int m_, k_;
};

/// Unit-parameter Chaplygin sleigh in body momenta p = (u, 2 omega):
/// u-dot = omega^2, 2 omega-dot = -u omega.
inline VectorXd sleigh_rhs(const VectorXd& p) {
  const double u = p[0], w = p[1] / 2.0;
  VectorXd d(2);
  d << w * w, -u * w;
  return d;
}

}  // namespace oracle
