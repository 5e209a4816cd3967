#include "nhk/multiplier.hpp"

#include <cmath>
#include <algorithm>
#include <memory>

#include "nhk/errors.hpp"
#include "nhk/geometry.hpp"

namespace nhk {

Multiplier Multiplier::constant(double c, int n_shape, int n_group) {
  Multiplier out = symbolic(expr::constant(c), {}, {}, {});
  out.n_shape_ = n_shape;
  out.n_group_ = n_group;
  out.field_ = [c, n_shape, n_group](const VectorXd&) {
    return MultiplierValue{c, VectorXd::Zero(n_shape), VectorXd::Zero(n_group)};
  };
  return out;
}

Multiplier Multiplier::symbolic(const expr::Expr& f, std::vector<std::string> shape, std::vector<std::string> group,
                                const std::map<std::string, double>& params) {
  std::vector<std::string> slots = shape;
  slots.insert(slots.end(), group.begin(), group.end());
  std::vector<double> param_values;
  for (const auto& [name, value] : params) {
    slots.push_back(name);
    param_values.push_back(value);
  }
  const int n_shape = static_cast<int>(shape.size());
  const int n_group = static_cast<int>(group.size());

  struct Programs {
    expr::Program f;
    std::vector<expr::Program> dr, dg;
    std::vector<double> params;
  };
  auto progs = std::make_shared<Programs>();
  progs->f = expr::Program(f, slots);
  bool group_dependent = false;
  for (const auto& v : shape) progs->dr.emplace_back(expr::fold(expr::differentiate(f, v)), slots);
  for (const auto& v : group) {
    group_dependent = group_dependent || expr::depends_on(f, v);
    progs->dg.emplace_back(expr::fold(expr::differentiate(f, v)), slots);
  }
  progs->params = std::move(param_values);

  Multiplier out;
  out.expr_ = f;
  out.description_ = expr::to_string(f);
  out.n_shape_ = n_shape;
  out.n_group_ = n_group;
  out.group_dependent_ = group_dependent;
  out.field_ = [progs, n_shape, n_group](const VectorXd& q) {
    std::vector<double> buf(static_cast<std::size_t>(n_shape + n_group) + progs->params.size(), 0.0);
    for (int i = 0; i < n_shape + n_group && i < q.size(); ++i) buf[i] = q[i];
    std::copy(progs->params.begin(), progs->params.end(), buf.begin() + n_shape + n_group);
    MultiplierValue v;
    v.f = progs->f(buf);
    v.dr.resize(n_shape);
    v.dg.resize(n_group);
    for (int i = 0; i < n_shape; ++i) v.dr[i] = progs->dr[i](buf);
    for (int i = 0; i < n_group; ++i) v.dg[i] = progs->dg[i](buf);
    return v;
  };
  return out;
}

Multiplier Multiplier::from_expr(const expr::Expr& f, const Model& model) {
  const SystemDef& d = model.def();
  for (const auto& v : expr::free_variables(f)) {
    bool known = d.params.count(v) > 0;
    for (const auto& n : d.shape) known = known || n == v;
    for (const auto& n : d.group) known = known || n == v;
    if (!known) throw UnknownIdentifierError(v);
  }
  return symbolic(f, d.shape, d.group, d.params);
}

Multiplier Multiplier::numeric(Field field, int n_shape, int n_group, std::string description) {
  Multiplier out;
  out.field_ = std::move(field);
  out.n_shape_ = n_shape;
  out.n_group_ = n_group;
  out.description_ = std::move(description);
  return out;
}

MultiplierValue Multiplier::eval(const VectorXd& q) const {
  MultiplierValue v = field_(q);
  if (!std::isfinite(v.f)) throw SingularityError("multiplier is not finite");
  if (std::fabs(v.f) < 1e-12) throw MultiplierVanishesError("multiplier vanishes");
  if (v.dg.size() != n_group_) v.dg = VectorXd::Zero(n_group_);
  return v;
}

std::string Multiplier::describe() const { return description_; }

}  // namespace nhk
