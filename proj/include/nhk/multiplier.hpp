#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nhk/expr.hpp"
#include "nhk/tensor.hpp"

namespace nhk {

class Model;

struct MultiplierValue {
  double f = 1.0;
  VectorXd dr;  // partial f / partial r^alpha
  VectorXd dg;  // partial f / partial g^sigma
};

/// A reducing multiplier candidate f(r, g). Either symbolic (with exact
/// partials) or a numeric field supplying its own value and gradient.
class Multiplier {
 public:
  using Field = std::function<MultiplierValue(const VectorXd& q)>;

  static Multiplier constant(double c, int n_shape, int n_group = 0);
  /// Variables of `f` must be among `shape`, `group` or the keys of `params`.
  static Multiplier symbolic(const expr::Expr& f, std::vector<std::string> shape, std::vector<std::string> group,
                             const std::map<std::string, double>& params);
  static Multiplier from_expr(const expr::Expr& f, const Model& model);
  static Multiplier numeric(Field field, int n_shape, int n_group, std::string description);

  /// Evaluates at q = (r, g). Throws MultiplierVanishesError when |f| < 1e-12.
  MultiplierValue eval(const VectorXd& q) const;
  double value(const VectorXd& q) const { return eval(q).f; }

  const std::optional<expr::Expr>& expr() const { return expr_; }
  std::string describe() const;
  bool depends_on_group() const { return group_dependent_; }
  int n_shape() const { return n_shape_; }
  int n_group() const { return n_group_; }

 private:
  Field field_;
  std::optional<expr::Expr> expr_;
  std::string description_;
  int n_shape_ = 0;
  int n_group_ = 0;
  bool group_dependent_ = false;
};

}  // namespace nhk
