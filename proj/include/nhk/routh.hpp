#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nhk/brackets.hpp"
#include "nhk/dynamics.hpp"
#include "nhk/geometry.hpp"
#include "nhk/hamiltonize.hpp"
#include "nhk/multiplier.hpp"

namespace nhk {

struct CyclicCandidate {
  std::string name;
  bool lagrangian_independent = false;  // G and V free of the coordinate
  bool by_ast = false;                  // independence settled by a free-variable scan
  bool momentum_conserved = false;      // the curvature force on p_v vanishes for all momenta
  bool strict = false;                  // Lambda_{alpha' v} vanishes identically
  double force_residual = 0.0;
};

struct CyclicSplit {
  std::vector<int> cyclic;     // indices into the shape coordinates
  std::vector<int> remaining;  // nonconserved coordinates w
  std::vector<CyclicCandidate> candidates;
  std::vector<std::string> excluded;  // Lagrangian-independent coordinates failing the momentum test

  std::vector<std::string> cyclic_names(const SystemDef& def) const;
};

/// Maximal set of nonholonomic cyclic shape coordinates.
CyclicSplit detect_cyclic(const Model& model, int samples = 100, std::uint64_t seed = 3);

/// Gyroscopic coefficients of the reduced equations at one point:
/// force_{alpha'} = -(Keps^{eps'}_{alpha' beta'} p_{eps'} + Kcyc^i_{alpha' beta'} lambda_i) wdot^{beta'}.
struct ReducedK {
  Tensor3 Keps;  // (eps', alpha', beta')
  Tensor3 Kcyc;  // (i, alpha', beta')
  double fit_residual = 0.0;
};

/// Second-stage reduced system on (w, p_w) at fixed cyclic momenta lambda.
class ReducedSystem {
 public:
  ReducedSystem(const Model& model, CyclicSplit split, std::vector<double> lambda);

  const Model& model() const { return *model_; }
  const CyclicSplit& split() const { return split_; }
  const std::vector<double>& lambda() const { return lambda_; }
  int dim() const { return static_cast<int>(split_.remaining.size()); }
  bool strict() const { return strict_; }
  std::vector<std::string> names() const;
  std::vector<Interval> box() const;

  /// Full phase point (r, p) from (w, p_w); cyclic coordinates at their box midpoints.
  VectorXd lift(const VectorXd& xr) const;
  VectorXd project(const VectorXd& x) const;

  /// H_R(w, p_w) = h(w, v0, p_w, lambda).
  double hamiltonian(const VectorXd& xr) const;
  /// (dH_R/dw, dH_R/dp_w).
  VectorXd hamiltonian_gradient(const VectorXd& xr) const;
  ReducedK K(const VectorXd& w) const;
  /// Routhian flow on (w, p_w) with the gyroscopic force written through K.
  VectorField flow() const;

  /// Vertical-vertical block of G (the cyclic velocity Hessian of l_c) at w.
  MatrixXd cyclic_metric(const VectorXd& w) const;

 private:
  const Model* model_;
  CyclicSplit split_;
  std::vector<double> lambda_;
  bool strict_ = true;
  VectorXd v0_;
};

/// Builds the reduced system; throws ReductionError when no cyclic coordinate is
/// available, the lambda count is wrong, or the cyclic block of G is singular.
ReducedSystem reduce(const Model& model, const std::vector<double>& lambda,
                     const std::optional<std::vector<std::string>>& cyclic = std::nullopt);

/// (K^1_{12}, K^2_{12}) provider for solve_2dof_core on a two-dimensional reduced space.
KProvider reduced_k_provider(const ReducedSystem& rs);
/// Runs solve_2dof_core on the reduced space.
Solve2dofResult solve_reduced_2dof(const ReducedSystem& rs, const Solve2dofOptions& opt = {});

struct ReducedHamiltonization {
  ResidualReport report;   // reduced Chaplygin condition plus Jacobiator
  BracketField bracket;    // on (w, P'), P' = f p_w
  /// Non-canonical term Sbar_{alpha' beta'} = -f Kcyc^i_{alpha' beta'} lambda_i.
  std::function<MatrixXd(const VectorXd& w)> gyroscopic;
  VectorField flow;        // in (w, P'), physical time
  ScalarField energy;      // H(w, P') = H_R(w, P'/f)
  JacobiScan jacobi;
};

ReducedHamiltonization reduced_hamiltonize(const ReducedSystem& rs, const Multiplier& f,
                                           const SampleOptions& opt = {});

/// (w, p_w) -> (w, f p_w) and back.
VectorXd reduced_rescale(const ReducedSystem& rs, const Multiplier& f, const VectorXd& xr);
VectorXd reduced_unscale(const ReducedSystem& rs, const Multiplier& f, const VectorXd& xr);

struct GyroscopicForm {
  bool exact = false;
  double closedness = 0.0;  // max |d Sbar| on samples
  std::vector<double> base;
  /// One-form W with dW = Sbar (Poincare-lemma line integral from `base`).
  std::function<VectorXd(const VectorXd& w)> W;
  /// Canonical flow on (w, P_W), P_W = P' + W, physical time.
  VectorField flow;
  /// (w, P_W) -> (w, P').
  StateMap to_bracket_coordinates;
  StateMap from_bracket_coordinates;
};

GyroscopicForm gyroscopic_form(const ReducedSystem& rs, const Multiplier& f, const SampleOptions& opt = {});

}  // namespace nhk
