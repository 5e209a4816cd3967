#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nhk/geometry.hpp"
#include "nhk/multiplier.hpp"
#include "nhk/sampling.hpp"

namespace nhk {

struct FamilyStat {
  std::string family;
  double max_residual = 0.0;
  double mean_residual = 0.0;
  VectorXd worst_point;
};

/// Outcome of a sampled condition check. `pass` holds iff every family's max
/// residual is within `tol`.
struct ResidualReport {
  std::string operation;
  std::vector<FamilyStat> families;
  int samples = 0;
  std::uint64_t seed = 0;
  double tol = 1e-8;
  bool pass = false;
  std::vector<std::string> notes;

  double max_residual() const;
  const FamilyStat* family(const std::string& name) const;
  /// Recomputes `pass` from the family maxima.
  void finalize();
};

struct SampleOptions {
  int count = 200;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  /// Overrides the declared shape box when nonempty (one interval per shape coordinate).
  std::vector<Interval> shape_box;
};

/// Configuration points q = (r, g): shape coordinates over the (possibly
/// overridden) shape box, group coordinates over the group box.
std::vector<VectorXd> sample_configurations(const Model& model, const SampleOptions& opt);
/// Phase points (r, p_alpha, p_i), momenta from the declared momentum box.
std::vector<VectorXd> sample_states(const Model& model, const SampleOptions& opt);

/// Families c1 (B, D, F blocks vanish), c2 (cyclic A A sum), c3, c4, c5 of the
/// general conditions, evaluated from the transformed component tensors.
ResidualReport residuals_hpd(const Model& model, const Multiplier& f, const SampleOptions& opt = {});
/// Local Chaplygin condition for every index triple, divided by max |G|.
ResidualReport residuals_chaplygin(const Model& model, const Multiplier& f, const SampleOptions& opt = {});
/// Cyclic sum of S^l_{km} = -(f K^l_{mk} - Cbar^l_{km}) for suspension systems.
ResidualReport residuals_eps(const Model& model, const Multiplier& f, const SampleOptions& opt = {});

/// Values (K^1_{12}, K^2_{12}) at a point of a two-dimensional shape space.
using KProvider = std::function<std::array<double, 2>(double r1, double r2)>;

struct Solve2dofOptions {
  int grid = 15;
  double compat_tol = 1e-6;
  double match_tol = 1e-7;
  int max_denominator = 12;
};

struct Solve2dofResult {
  Multiplier f;                 // symbolic when matched, otherwise tabulated
  Multiplier quadrature;        // direct line-integral evaluation, always available
  std::optional<expr::Expr> symbolic;
  double compat_residual = 0.0; // max compatibility defect on the grid
  double path_defect = 0.0;     // RK4 alternate-path vs quadrature, relative
  std::array<double, 2> base{0.0, 0.0};
  std::string description;
};

/// Solves d f / d r2 = f K^1_{12}, d f / d r1 = -f K^2_{12} with f(base) = 1.
/// Throws IncompatibleError naming the violating grid point.
/// The returned multipliers read r from the first two entries of q and accept
/// `n_group` trailing coordinates, which they ignore.
Solve2dofResult solve_2dof_core(const KProvider& K, const std::array<Interval, 2>& box,
                                const std::array<std::string, 2>& names, int n_group = 0,
                                const Solve2dofOptions& opt = {});
/// Two-degree-of-freedom Chaplygin systems.
Solve2dofResult solve_2dof(const Model& model, const Solve2dofOptions& opt = {});

struct FitResult {
  std::vector<double> coefficients;
  expr::Expr multiplier;
  ResidualReport report;
};
/// Least-squares fit of log f = sum_b c_b basis_b to the local Chaplygin
/// condition. Throws AmbiguousAnsatzError when the basis is rank deficient.
FitResult fit_ansatz(const Model& model, const std::vector<expr::Expr>& basis, const SampleOptions& opt = {});

/// f^(m-1).
expr::Expr measure_density(const expr::Expr& f, int m);

/// Divergence of density * X over phase space, central differences.
ResidualReport divergence_test(const Model& model, const Multiplier& density, const SampleOptions& opt = {});

/// Lambda_{beta alpha} - (1/f)(d_beta f p_alpha - d_alpha f p_beta).
ResidualReport lambda_f_relation(const Model& model, const Multiplier& f, const SampleOptions& opt = {});

/// Necessary condition that involves only the system's own tensors; vacuous for m <= 2.
ResidualReport converse_check(const Model& model, const SampleOptions& opt = {});

}  // namespace nhk
