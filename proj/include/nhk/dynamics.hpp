#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nhk/brackets.hpp"
#include "nhk/geometry.hpp"
#include "nhk/multiplier.hpp"

namespace nhk {

using VectorField = std::function<VectorXd(const VectorXd&)>;
using ScalarField = std::function<double(const VectorXd&)>;
using StateMap = std::function<VectorXd(const VectorXd&)>;

/// Constrained reduced Hamiltonian h = 1/2 p G^{-1} p + 1/2 p_i G^{ij} p_j + V
/// at x = (r, p_alpha, p_i).
double hamiltonian(const Model& model, const VectorXd& x);
/// Gradient of h with respect to (r, p_alpha, p_i).
VectorXd hamiltonian_gradient(const Model& model, const VectorXd& x);

/// Lagrange-d'Alembert (HPD) vector field on (r, p_alpha, p_i).
VectorField lda_flow(const Model& model);
/// Same flow extended by the group coordinates, state (r, p_alpha, p_i, g),
/// with g-dot^sigma = g^sigma_d xi^d and xi = -A r-dot + e Omega.
VectorField lda_flow_with_group(const Model& model);

/// Quasi-Hamiltonian field x-dot = f Pi^P grad H on (r, P_alpha, P_i), with
/// P = f p and H(r, P) = h(r, P / f). Only the Poisson part of the rescaled
/// bracket is kept, so the field reproduces the original dynamics exactly
/// when f is a reducing multiplier.
VectorField hamiltonized_flow(const Model& model, const Multiplier& f);
/// H(r, P) = h(r, P / f).
ScalarField hamiltonized_energy(const Model& model, const Multiplier& f);

/// (r, p) -> (r, f p) and back.
VectorXd rescale_momenta(const Model& model, const Multiplier& f, const VectorXd& x);
VectorXd unscale_momenta(const Model& model, const Multiplier& f, const VectorXd& x);

struct Trajectory {
  std::vector<double> t;
  std::vector<double> tau;  // empty unless a reparameterization rate was supplied
  std::vector<VectorXd> x;
  double step = 0.0;
  std::string integrator = "rk4";
  bool truncated = false;
  std::string message;

  std::size_t size() const { return t.size(); }
  bool has_tau() const { return !tau.empty(); }
};

/// Fixed-step classical RK4 from t0 to t1. When tau_rate is given, tau is
/// accumulated with Simpson's rule on the rate, using a cubic Hermite midpoint.
/// A singularity raised by the field stops the run and sets `truncated`.
Trajectory integrate(const VectorField& field, const VectorXd& x0, double t0, double t1, double h,
                     const ScalarField* tau_rate = nullptr);

/// State at time t by cubic Lagrange interpolation on the four nearest samples.
VectorXd sample_at(const Trajectory& traj, double t);

/// Largest component deviation between `a` and `map(b)` on a's time grid,
/// each component scaled by 1 + max_t |a_k|. Throws ConfigError when the spans
/// differ.
double compare(const Trajectory& a, const Trajectory& b, const StateMap& map_b = nullptr);

/// Built-in maps named "identity", "momenta-scale-by-f" (rescaled momenta back to
/// p = P / f) and "velocity-scale-by-f" ((q, omega) to (q, f omega)).
StateMap named_map(const std::string& name, const Model& model, const Multiplier& f);

/// max_t |H(x(t)) - H(x(0))|.
double energy_drift(const ScalarField& H, const Trajectory& traj);

/// CSV with header t[,tau],names..., values printed with 17 significant digits.
void write_csv(std::ostream& out, const Trajectory& traj, const std::vector<std::string>& names);

/// Names for the phase coordinates: r names, p_<r>, p<i>.
std::vector<std::string> phase_names(const Model& model, const std::string& momentum_prefix = "p_");

}  // namespace nhk
