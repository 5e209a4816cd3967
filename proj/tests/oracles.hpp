#pragma once
// Independent reference computations shared by unit tests and the acceptance
// runner. Nothing here calls the library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nhk/expr.hpp"

namespace oracle {

/// Richardson-extrapolated central difference, O(h^4).
inline double derivative(const std::function<double(double)>& fn, double x, double h = 1e-3) {
  auto central = [&](double hh) { return (fn(x + hh) - fn(x - hh)) / (2.0 * hh); };
  return (4.0 * central(h / 2.0) - central(h)) / 3.0;
}

struct RiddersResult {
  double value;
  double error;  // estimated absolute error
};

/// Ridders' polynomial extrapolation of central differences with an error
/// estimate (Numerical Recipes, dfridr).
inline RiddersResult ridders(const std::function<double(double)>& fn, double x, double h0 = 1e-3) {
  constexpr int N = 10;
  constexpr double con = 1.4, con2 = con * con;
  double a[N][N];
  double h = h0;
  a[0][0] = (fn(x + h) - fn(x - h)) / (2.0 * h);
  RiddersResult best{a[0][0], 1e300};
  for (int i = 1; i < N; ++i) {
    h /= con;
    a[0][i] = (fn(x + h) - fn(x - h)) / (2.0 * h);
    double fac = con2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= con2;
      double err = std::max(std::fabs(a[j][i] - a[j - 1][i]), std::fabs(a[j][i] - a[j - 1][i - 1]));
      if (err <= best.error) best = {a[j][i], err};
    }
    if (std::fabs(a[i][i] - a[i - 1][i - 1]) >= 2.0 * best.error) break;
  }
  return best;
}

/// Random expression trees over the given variables.
class ExprGenerator {
 public:
  ExprGenerator(std::vector<std::string> vars, unsigned seed) : vars_(std::move(vars)), rng_(seed) {}

  nhk::expr::Expr make(int depth) {
    using namespace nhk::expr;
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 13);
    int c = pick(rng_);
    switch (c) {
      case 0: return make_var(vars_[std::uniform_int_distribution<std::size_t>(0, vars_.size() - 1)(rng_)]);
      case 1: {
        double v = std::round(std::uniform_real_distribution<double>(-3.0, 3.0)(rng_) * 4.0) / 4.0;
        return make_const(v);
      }
      case 2: return make_unary(Op::Neg, make(depth - 1));
      case 3: return make_unary(Op::Sin, make(depth - 1));
      case 4: return make_unary(Op::Cos, make(depth - 1));
      case 5: return make_unary(Op::Tan, make(depth - 1));
      case 6: return make_unary(Op::Sec, make(depth - 1));
      case 7: return make_unary(Op::Exp, make(depth - 1));
      case 8: return make_unary(Op::Log, make(depth - 1));
      case 9: return make_unary(Op::Sqrt, make(depth - 1));
      case 10: return make_binary(Op::Add, make(depth - 1), make(depth - 1));
      case 11: return make_binary(Op::Sub, make(depth - 1), make(depth - 1));
      case 12: return make_binary(std::uniform_int_distribution<int>(0, 1)(rng_) ? Op::Mul : Op::Div,
                                  make(depth - 1), make(depth - 1));
      default: {
        bool int_exp = std::uniform_int_distribution<int>(0, 1)(rng_);
        Expr e = int_exp ? make_const(std::uniform_int_distribution<int>(-3, 3)(rng_)) : make(depth - 1);
        return make_binary(Op::Pow, make(depth - 1), e);
      }
    }
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

 private:
  std::vector<std::string> vars_;
  std::mt19937 rng_;
};

struct DerivativeSweep {
  int accepted = 0;
  double worst = 0.0;  // max of |symbolic - numeric| / (1 + |symbolic|)
};

/// Compares symbolic derivatives with extrapolated central differences on
/// random expressions at random points. Expressions whose value or derivative
/// is singular or large near the point are skipped and regenerated.
inline DerivativeSweep derivative_sweep(int count, unsigned seed) {
  using namespace nhk::expr;
  ExprGenerator gen({"x", "y"}, seed);
  DerivativeSweep out;
  int guard = 0;
  while (out.accepted < count && guard++ < 200 * count) {
    Expr e = gen.make(4);
    double x = gen.uniform(-1.5, 1.5), y = gen.uniform(-1.5, 1.5);
    try {
      Expr d = differentiate(e, "x");
      double sym = evaluate(d, {{"x", x}, {"y", y}});
      double val = evaluate(e, {{"x", x}, {"y", y}});
      if (std::fabs(val) > 1e3 || std::fabs(sym) > 1e3) continue;
      // Require the function to be tame on the stencil.
      bool tame = true;
      for (double t : {-2e-3, -1e-3, -5e-4, 5e-4, 1e-3, 2e-3}) {
        double v = evaluate(e, {{"x", x + t}, {"y", y}});
        tame = tame && std::fabs(v - val) < 10.0 * (1.0 + std::fabs(sym)) * std::fabs(t) + 1e-9;
      }
      if (!tame) continue;
      auto num = ridders([&](double xx) { return evaluate(e, {{"x", xx}, {"y", y}}); }, x);
      // Only judge points where the reference itself is trustworthy.
      if (num.error > 1e-9 * (1.0 + std::fabs(sym))) continue;
      out.worst = std::max(out.worst, std::fabs(sym - num.value) / (1.0 + std::fabs(sym)));
      ++out.accepted;
    } catch (const std::exception&) {
      continue;
    }
  }
  return out;
}

}  // namespace oracle
