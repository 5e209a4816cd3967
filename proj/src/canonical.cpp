// Canonical polynomial-over-atoms normal form used for expression equivalence.
// A polynomial maps monomials (sorted atom -> integer power) to coefficients.
// Atoms are variables and non-polynomial subterms keyed by the canonical
// string of their arguments, so sin(a) and sin(b) coincide when a and b do.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <map>
#include <string>

#include "nhk/errors.hpp"
#include "nhk/expr.hpp"

namespace nhk::expr {

namespace {

using Monomial = std::map<std::string, int>;
using Poly = std::map<Monomial, double>;

constexpr int kMaxExpand = 8;

void add_term(Poly& p, const Monomial& m, double c) {
  double& slot = p[m];
  slot += c;
  if (slot == 0.0) p.erase(m);
}

Poly constant_poly(double c) {
  Poly p;
  if (c != 0.0) p[{}] = c;
  return p;
}

Poly atom_poly(const std::string& key, int power = 1) {
  Poly p;
  p[Monomial{{key, power}}] = 1.0;
  return p;
}

Poly sum(const Poly& a, const Poly& b, double sign) {
  Poly out = a;
  for (const auto& [m, c] : b) add_term(out, m, sign * c);
  return out;
}

Monomial combine(const Monomial& a, const Monomial& b) {
  Monomial out = a;
  for (const auto& [k, e] : b) {
    int& slot = out[k];
    slot += e;
    if (slot == 0) out.erase(k);
  }
  return out;
}

Poly product(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) add_term(out, combine(ma, mb), ca * cb);
  return out;
}

std::string key_of(const Poly& p) {
  std::string s = "{";
  char buf[40];
  for (const auto& [m, c] : p) {
    std::snprintf(buf, sizeof buf, "%.15g", c);
    s += buf;
    for (const auto& [k, e] : m) s += "*[" + k + "]^" + std::to_string(e);
    s += ";";
  }
  return s + "}";
}

bool single_monomial(const Poly& p) { return p.size() == 1; }

Poly invert_monomial(const Poly& p) {
  const auto& [m, c] = *p.begin();
  Monomial inv;
  for (const auto& [k, e] : m) inv[k] = -e;
  Poly out;
  out[inv] = 1.0 / c;
  return out;
}

bool integer_value(double v, int& out) {
  if (std::floor(v) != v || std::fabs(v) > 64) return false;
  out = static_cast<int>(v);
  return true;
}

Poly canon(const Expr& e) {
  switch (e->op) {
    case Op::Const: return constant_poly(e->value);
    case Op::Var: return atom_poly(e->name);
    case Op::Neg: return sum(Poly{}, canon(e->a), -1.0);
    case Op::Add: return sum(canon(e->a), canon(e->b), 1.0);
    case Op::Sub: return sum(canon(e->a), canon(e->b), -1.0);
    case Op::Mul: return product(canon(e->a), canon(e->b));
    case Op::Div: {
      Poly num = canon(e->a);
      Poly den = canon(e->b);
      if (den.empty()) throw SingularityError("division by zero in canonical form");
      if (single_monomial(den)) return product(num, invert_monomial(den));
      return product(num, atom_poly(key_of(den), -1));
    }
    case Op::Pow: {
      Poly base = canon(e->a);
      Poly ex = canon(e->b);
      int n = 0;
      bool const_exp = ex.empty() || (ex.size() == 1 && ex.begin()->first.empty());
      double ev = ex.empty() ? 0.0 : ex.begin()->second;
      if (const_exp && integer_value(ev, n)) {
        if (n == 0) return constant_poly(1.0);
        if (n > 0 && n <= kMaxExpand) {
          Poly out = constant_poly(1.0);
          for (int i = 0; i < n; ++i) out = product(out, base);
          return out;
        }
        if (single_monomial(base)) {
          Poly b = n > 0 ? base : invert_monomial(base);
          Poly out = constant_poly(1.0);
          for (int i = 0; i < std::abs(n); ++i) out = product(out, b);
          return out;
        }
        return atom_poly(key_of(base), n);
      }
      return atom_poly("pow(" + key_of(base) + "," + key_of(ex) + ")");
    }
    default:
      return atom_poly(std::string(function_name(e->op)) + "(" + key_of(canon(e->a)) + ")");
  }
}

}  // namespace

bool equivalent(const Expr& a, const Expr& b, double tol) {
  Poly pa = canon(a);
  Poly pb = canon(b);
  double scale = 1.0;
  for (const auto& [m, c] : pa) scale = std::max(scale, std::fabs(c));
  for (const auto& [m, c] : pb) scale = std::max(scale, std::fabs(c));
  Poly diff = sum(pa, pb, -1.0);
  for (const auto& [m, c] : diff)
    if (std::fabs(c) > tol * scale) return false;
  return true;
}

}  // namespace nhk::expr
