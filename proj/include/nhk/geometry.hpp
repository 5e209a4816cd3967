#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nhk/expr.hpp"
#include "nhk/sampling.hpp"
#include "nhk/tensor.hpp"

namespace nhk {

using expr::Expr;

/// Row-major matrix of expressions.
struct ExprMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Expr> data;

  static ExprMatrix zeros(int r, int c);
  static ExprMatrix identity(int n);
  Expr& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  const Expr& operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

enum class Kind { General, Chaplygin, Eps };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& s);

/// Full description of a nonholonomic system with symmetry.
///
/// Index conventions: alpha, beta run over the m shape coordinates r; a, b over
/// the k group directions; i, j over the s constrained-vertical directions.
/// Blocks: g_rr = g_{alpha beta} (m x m), g_gr = g_{a alpha} (k x m),
/// g_gg = g_{ab} (k x k), A = A^a_alpha (k x m), e = e^a_i (k x s).
/// Structure constants C^a_{bc} are stored at C[(a * k + b) * k + c].
/// frame(sigma, d) = g^sigma_d, the components of the left-invariant vector
/// fields in the group coordinates (identity unless specified).
struct SystemDef {
  std::string name;
  std::string description;
  Kind kind = Kind::General;
  int m = 0;
  int k = 0;
  int s = 0;
  std::vector<std::string> shape;
  std::vector<std::string> group;
  std::map<std::string, double> params;
  ExprMatrix g_rr, g_gr, g_gg, A, e, frame;
  std::vector<double> C;
  Expr V;
  std::vector<Interval> shape_box;
  std::vector<Interval> group_box;
  Interval momentum_box;

  double structure(int a, int b, int c) const { return C[(static_cast<std::size_t>(a) * k + b) * k + c]; }
  bool abelian() const;
  std::vector<std::string> coordinate_names() const;
};

SystemDef parse_system(const std::string& text);
std::string format_system(const SystemDef& def);

/// Every derived tensor at a point q = (r, g).
struct GeometryAtPoint {
  MatrixXd g_rr, g_gr, g_gg, A, e, frame;
  MatrixXd G, Ginv;        // G_{alpha beta} and inverse
  MatrixXd Gij, Gij_inv;   // G_{ij} and inverse
  MatrixXd Gamma;          // Gamma^{ai}, k x s
  MatrixXd Gi;             // G^i_alpha, s x m
  MatrixXd M;              // M_{a alpha}, k x m
  Tensor3 B;               // B^a_{alpha beta}: (a, alpha, beta)
  Tensor3 F;               // F^a_{i beta}: (a, i, beta)
  Tensor3 Kchap;           // K^gamma_{beta alpha}: (gamma, beta, alpha)
  Tensor3 Keps;            // K^k_{ji}: (k, j, i)
  double cond_G = 1.0;
  double cond_Gij = 1.0;

  bool has_f = false;
  double f = 1.0;
  VectorXd df;             // partial f / partial r^alpha
  VectorXd Xf;             // X_d f = partial f / partial g^sigma g^sigma_d
  Tensor3 Cchap;           // C^gamma_{alpha beta}: (gamma, alpha, beta)
  Tensor3 Cbar;            // Cbar^k_{ij}: (k, i, j)
};

/// Derivatives of the constrained metric blocks and potential along r.
struct MetricGradient {
  std::vector<MatrixXd> dG;    // dG[gamma] = d G_{alpha beta} / d r^gamma
  std::vector<MatrixXd> dGij;  // dGij[gamma] = d G_{ij} / d r^gamma
  double V = 0.0;
  VectorXd dV;
};

class Multiplier;

/// Compiled form of a SystemDef. All evaluation goes through here.
class Model {
 public:
  explicit Model(SystemDef def);

  const SystemDef& def() const { return def_; }
  int m() const { return def_.m; }
  int k() const { return def_.k; }
  int s() const { return def_.s; }
  Kind kind() const { return def_.kind; }

  /// Extends a shape point with default group coordinates (box midpoints).
  VectorXd point(const VectorXd& r) const;
  VectorXd default_group() const;
  std::vector<double> slots(const VectorXd& q) const;
  const std::vector<std::string>& slot_names() const { return slot_names_; }

  MatrixXd eval(const ExprMatrix& m, const std::vector<double>& slots) const;

  Tensor3 curvature(const VectorXd& q) const;
  Tensor3 f_coefficients(const VectorXd& q) const;
  GeometryAtPoint derived(const VectorXd& q, const Multiplier* f = nullptr) const;
  MetricGradient metric_gradient(const VectorXd& q) const;

  /// Symbolic constrained metric and coupling blocks, composed from the inputs.
  const ExprMatrix& G_expr() const { return G_expr_; }
  const ExprMatrix& Gij_expr() const { return Gij_expr_; }
  const ExprMatrix& M_expr() const { return M_expr_; }

  /// Checks symmetry, independence of e and the orthogonality e^a_i M_{a alpha} = 0
  /// at sampled points; throws ConfigError on violation.
  void validate(int samples = 20, std::uint64_t seed = 7) const;

 private:
  struct Compiled {
    int rows = 0, cols = 0;
    std::vector<expr::Program> progs;
  };
  Compiled compile(const ExprMatrix& m) const;
  Compiled compile_derivative(const ExprMatrix& m, const std::string& var) const;
  MatrixXd run(const Compiled& c, const std::vector<double>& slots) const;

  SystemDef def_;
  std::vector<std::string> slot_names_;
  ExprMatrix G_expr_, Gij_expr_, M_expr_;
  Compiled g_rr_, g_gr_, g_gg_, A_, e_, frame_, G_, Gij_;
  std::vector<Compiled> dA_, de_, dG_, dGij_;
  expr::Program V_;
  std::vector<expr::Program> dV_;
};

/// Inverts a symmetric matrix after a condition-number check (threshold 1e12).
MatrixXd checked_inverse(const MatrixXd& m, const char* what, double* cond_out = nullptr);

}  // namespace nhk
