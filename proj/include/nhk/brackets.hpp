#pragma once

#include <array>
#include <functional>
#include <vector>

#include "nhk/geometry.hpp"
#include "nhk/multiplier.hpp"

namespace nhk {

/// Phase-space points are laid out as x = (r^alpha, p_alpha, p_i), sizes m, m, s.
/// Group coordinates are held at the model's default (box midpoints).
struct PhaseSplit {
  VectorXd r, p, pi;
};
PhaseSplit split_phase(const Model& model, const VectorXd& x);
VectorXd join_phase(const VectorXd& r, const VectorXd& p, const VectorXd& pi);

enum class BracketKind { Hpd, Chaplygin, Eps, Transformed, Reduced };
const char* bracket_kind_name(BracketKind k);

/// Component table of an almost-Poisson bracket on (r, p_alpha, p_i).
struct BracketTable {
  BracketKind kind = BracketKind::Hpd;
  MatrixXd rp;    // {r^alpha, p_beta}, m x m
  MatrixXd papb;  // {p_alpha, p_beta}, m x m
  MatrixXd pipa;  // {p_i, p_alpha}, s x m
  MatrixXd pipj;  // {p_i, p_j}, s x s

  int m() const { return static_cast<int>(rp.rows()); }
  int s() const { return static_cast<int>(pipj.rows()); }
  /// Full antisymmetric structure matrix Pi with x^I-dot = Pi^{IJ} dH/dx^J.
  MatrixXd matrix() const;
};

/// Constrained momentum (mu_a)_c written linearly in (p_alpha, p_i).
VectorXd constrained_momentum(const GeometryAtPoint& g, const VectorXd& p, const VectorXd& pi);

/// Bracket of the Hamilton-Poincare-d'Alembert equations at a phase point.
BracketTable bracket_at(const Model& model, const VectorXd& x);

/// The six coefficient tensors of the bracket in the rescaled momenta P = f p.
/// Index storage: A(k,i,j), B(gamma,i,j), C(k,i,beta), D(beta,i,alpha),
/// E(k,alpha,beta), F(gamma,alpha,beta).
struct TransformedComponents {
  double f = 1.0;
  Tensor3 A, B, C, D, E, F;
};
TransformedComponents transformed_components(const Model& model, const Multiplier& f, const VectorXd& q);
TransformedComponents transformed_components(const GeometryAtPoint& g, const SystemDef& def);

/// Bracket {.,.}' on (r, P_alpha, P_i). With poisson_part only, the B, D and F
/// blocks are dropped (they vanish whenever f is a reducing multiplier).
BracketTable transformed_bracket(const TransformedComponents& tc, const VectorXd& P, const VectorXd& Pi,
                                 bool poisson_part = false);

/// Structure matrix as a function of the phase point.
using BracketField = std::function<MatrixXd(const VectorXd&)>;
BracketField lda_bracket_field(const Model& model);
BracketField transformed_bracket_field(const Model& model, const Multiplier& f, bool poisson_part = false);
BracketField canonical_bracket_field(int m);

/// Cyclic sum Pi^{IL} d_L Pi^{JK} + cyclic, derivatives by central differences
/// with step h_rel * (1 + |x_L|).
double jacobiator(const BracketField& field, const VectorXd& x, int I, int J, int K, double h_rel = 1e-5);

struct JacobiScan {
  double max_abs = 0.0;
  std::array<int, 3> triple{0, 0, 0};
  VectorXd state;
};
/// Largest Jacobiator over all index triples I < J < K and the given states.
JacobiScan jacobiator_scan(const BracketField& field, const std::vector<VectorXd>& states, double h_rel = 1e-5);

/// Largest |Pi + Pi^T| over the given states.
double antisymmetry_defect(const BracketField& field, const std::vector<VectorXd>& states);

}  // namespace nhk
