#pragma once

#include <map>
#include <string>
#include <vector>

#include "nhk/dynamics.hpp"
#include "nhk/geometry.hpp"

namespace nhk {

/// Variational Lagrangian L_V(q, omega) of an abelian Chaplygin system with
/// reducing multiplier f, where q-dot = f omega.
struct VariationalLagrangian {
  Expr L;                            // L(q, q-dot = f omega)
  Expr LV;                           // L - (1/f) dL/d omega^a phi^a
  Expr f;
  std::vector<Expr> constraints;     // phi^a(q, omega) = f (omega^a + A^a_alpha omega^alpha)
  std::vector<std::string> coords;   // shape then group coordinates
  std::vector<std::string> omega;    // "omega_<coord>"
  std::map<std::string, double> params;
  int m = 0;

  int n() const { return static_cast<int>(coords.size()); }
};

/// Throws ConfigError for non-Chaplygin or nonabelian systems and
/// NotConditionallyVariationalError when f^2 g_ab is singular on samples.
VariationalLagrangian build_variational(const Model& model, const Expr& f, int samples = 50, std::uint64_t seed = 11);

/// Almost Euler-Lagrange field on (q, omega):
/// d/dt dL_V/d omega = f dL_V/dq with q-dot = f omega, solved for omega-dot.
VectorField almost_el_flow(const VariationalLagrangian& lv);

/// Constraint values phi^a at a state (q, omega).
VectorXd constraint_values(const VariationalLagrangian& lv, const VectorXd& x);

/// max over t and a of |f phi^a(t) - f phi^a(0)|.
double constraint_conservation(const VariationalLagrangian& lv, const Trajectory& traj);

struct Projection {
  VectorXd state;
  double residual = 0.0;  // max |change| applied to the group quasivelocities
};
/// Sets omega^a = -A^a_alpha omega^alpha so that the constraints hold.
Projection project_onto_constraints(const VariationalLagrangian& lv, const VectorXd& x);

/// (r, p_alpha, g) of the Lagrange-d'Alembert flow with group coordinates, to (q, omega).
VectorXd lda_to_quasivelocity(const Model& model, const VariationalLagrangian& lv, const VectorXd& x);
/// (q, omega) with the constraints satisfied, to (r, p_alpha, g).
VectorXd quasivelocity_to_lda(const Model& model, const VariationalLagrangian& lv, const VectorXd& x);

}  // namespace nhk
