#include "nhk/hamiltonize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "nhk/brackets.hpp"
#include "nhk/dynamics.hpp"
#include "nhk/errors.hpp"

namespace nhk {

// ---------------------------------------------------------------------------
// reports and sampling

double ResidualReport::max_residual() const {
  double m = 0.0;
  for (const auto& f : families) m = std::max(m, f.max_residual);
  return m;
}

const FamilyStat* ResidualReport::family(const std::string& name) const {
  for (const auto& f : families)
    if (f.family == name) return &f;
  return nullptr;
}

void ResidualReport::finalize() {
  pass = true;
  for (const auto& f : families)
    if (!(f.max_residual <= tol)) pass = false;
}

namespace {

/// Running max/mean of one residual family.
class Accumulator {
 public:
  explicit Accumulator(std::string name) { stat_.family = std::move(name); }
  void add(double v, const VectorXd& at) {
    v = std::fabs(v);
    if (!std::isfinite(v)) throw SingularityError("non-finite residual in family " + stat_.family);
    if (count_ == 0 || v > stat_.max_residual) {
      stat_.max_residual = v;
      stat_.worst_point = at;
    }
    sum_ += v;
    ++count_;
  }
  FamilyStat done() const {
    FamilyStat s = stat_;
    s.mean_residual = count_ ? sum_ / static_cast<double>(count_) : 0.0;
    return s;
  }

 private:
  FamilyStat stat_;
  double sum_ = 0.0;
  long count_ = 0;
};

ResidualReport start_report(const char* op, const SampleOptions& opt, std::size_t n) {
  ResidualReport r;
  r.operation = op;
  r.samples = static_cast<int>(n);
  r.seed = opt.seed;
  r.tol = opt.tol;
  return r;
}

void require_kind(const Model& model, Kind k, const char* op) {
  if (model.kind() != k)
    throw ConfigError(std::string(op) + " requires a " + kind_name(k) + " system, got " + kind_name(model.kind()));
}

std::vector<Interval> shape_box(const Model& model, const SampleOptions& opt) {
  if (opt.shape_box.empty()) return model.def().shape_box;
  if (static_cast<int>(opt.shape_box.size()) != model.m()) throw ConfigError("sampling box has the wrong dimension");
  return opt.shape_box;
}

}  // namespace

std::vector<VectorXd> sample_configurations(const Model& model, const SampleOptions& opt) {
  if (opt.count <= 0) throw ConfigError("sample count must be positive");
  std::vector<Interval> box = shape_box(model, opt);
  const auto& gb = model.def().group_box;
  box.insert(box.end(), gb.begin(), gb.end());
  return sample_box(box, opt.count, opt.seed);
}

std::vector<VectorXd> sample_states(const Model& model, const SampleOptions& opt) {
  if (opt.count <= 0) throw ConfigError("sample count must be positive");
  std::vector<Interval> box = shape_box(model, opt);
  for (int i = 0; i < model.m() + model.s(); ++i) box.push_back(model.def().momentum_box);
  return sample_box(box, opt.count, opt.seed);
}

// ---------------------------------------------------------------------------
// condition families

ResidualReport residuals_hpd(const Model& model, const Multiplier& f, const SampleOptions& opt) {
  auto pts = sample_configurations(model, opt);
  ResidualReport rep = start_report("residuals_hpd", opt, pts.size());
  Accumulator c1("c1"), c2("c2"), c3("c3"), c4("c4"), c5("c5");
  const int m = model.m(), s = model.s();
  for (const auto& q : pts) {
    GeometryAtPoint g = model.derived(q, &f);
    TransformedComponents t = transformed_components(g, model.def());
    c1.add(std::max({t.B.max_abs(), t.D.max_abs(), t.F.max_abs()}), q);
    double w2 = 0.0, w3 = 0.0, w4 = 0.0, w5 = 0.0;
    for (int mm = 0; mm < s; ++mm)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          for (int k = 0; k < s; ++k) {
            double v = 0.0;
            for (int l = 0; l < s; ++l)
              v += t.A(mm, i, l) * t.A(l, j, k) + t.A(mm, k, l) * t.A(l, i, j) + t.A(mm, j, l) * t.A(l, k, i);
            w2 = std::max(w2, std::fabs(v));
          }
    for (int i = 0; i < s; ++i)
      for (int al = 0; al < m; ++al)
        for (int be = 0; be < m; ++be)
          for (int ga = 0; ga < m; ++ga) {
            double v = 0.0;
            for (int j = 0; j < s; ++j)
              v += t.C(i, j, ga) * t.E(j, al, be) + t.C(i, j, al) * t.E(j, be, ga) + t.C(i, j, be) * t.E(j, ga, al);
            w3 = std::max(w3, std::fabs(v));
          }
    for (int i = 0; i < s; ++i)
      for (int k = 0; k < s; ++k)
        for (int al = 0; al < m; ++al)
          for (int be = 0; be < m; ++be) {
            double v = 0.0;
            for (int l = 0; l < s; ++l)
              v += t.A(i, k, l) * t.E(l, al, be) + t.C(i, l, al) * t.C(l, k, be) - t.C(i, l, be) * t.C(l, k, al);
            w4 = std::max(w4, std::fabs(v));
          }
    for (int l = 0; l < s; ++l)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          for (int al = 0; al < m; ++al) {
            double v = 0.0;
            for (int k = 0; k < s; ++k)
              v += t.A(l, i, k) * t.C(k, j, al) - t.C(l, k, al) * t.A(k, i, j) - t.A(l, j, k) * t.C(k, i, al);
            w5 = std::max(w5, std::fabs(v));
          }
    c2.add(w2, q);
    c3.add(w3, q);
    c4.add(w4, q);
    c5.add(w5, q);
  }
  rep.families = {c1.done(), c2.done(), c3.done(), c4.done(), c5.done()};
  rep.notes.push_back("the cyclic A-hat sum (c2) is tested as an equation set to zero");
  rep.finalize();
  return rep;
}

namespace {

double chaplygin_local_max(const GeometryAtPoint& g, const VectorXd& df, double f) {
  const int m = static_cast<int>(g.G.rows());
  double worst = 0.0;
  for (int al = 0; al < m; ++al)
    for (int de = 0; de < m; ++de)
      for (int nu = 0; nu < m; ++nu) {
        double v = df[de] * g.G(al, nu) + df[nu] * g.G(al, de) - 2.0 * df[al] * g.G(de, nu);
        double kt = 0.0;
        for (int mu = 0; mu < m; ++mu) kt += g.Kchap(mu, al, de) * g.G(mu, nu) + g.Kchap(mu, al, nu) * g.G(mu, de);
        worst = std::max(worst, std::fabs(v - f * kt));
      }
  return worst / std::max(1e-300, max_abs(g.G));
}

}  // namespace

ResidualReport residuals_chaplygin(const Model& model, const Multiplier& f, const SampleOptions& opt) {
  require_kind(model, Kind::Chaplygin, "residuals_chaplygin");
  auto pts = sample_configurations(model, opt);
  ResidualReport rep = start_report("residuals_chaplygin", opt, pts.size());
  Accumulator acc("chaplygin_local");
  for (const auto& q : pts) {
    GeometryAtPoint g = model.derived(q, &f);
    acc.add(chaplygin_local_max(g, g.df, g.f), q);
  }
  rep.families = {acc.done()};
  rep.notes.push_back("residual divided by max |G| at each sample");
  rep.finalize();
  return rep;
}

ResidualReport residuals_eps(const Model& model, const Multiplier& f, const SampleOptions& opt) {
  require_kind(model, Kind::Eps, "residuals_eps");
  auto pts = sample_configurations(model, opt);
  ResidualReport rep = start_report("residuals_eps", opt, pts.size());
  Accumulator acc("eps_local");
  const int s = model.s();
  for (const auto& q : pts) {
    GeometryAtPoint g = model.derived(q, &f);
    TransformedComponents t = transformed_components(g, model.def());
    // for m = 0 the A-hat tensor is exactly S^l_{km}
    double worst = 0.0;
    for (int mm = 0; mm < s; ++mm)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          for (int k = 0; k < s; ++k) {
            double v = 0.0;
            for (int l = 0; l < s; ++l)
              v += t.A(mm, i, l) * t.A(l, j, k) + t.A(mm, k, l) * t.A(l, i, j) + t.A(mm, j, l) * t.A(l, k, i);
            worst = std::max(worst, std::fabs(v));
          }
    acc.add(worst, q);
  }
  rep.families = {acc.done()};
  if (s <= 2) rep.notes.push_back("for s <= 2 the cyclic sum vanishes identically");
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------
// two degrees of freedom

namespace {

const double kGLNodes[10] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
                             -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
                             0.8650633666889845,  0.9739065285171717};
const double kGLWeights[10] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
                               0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                               0.1494513491505806, 0.0666713443086881};

/// Composite 10-point Gauss-Legendre on [a, b], panels no wider than `panel`.
template <class Fn>
double gauss_legendre(const Fn& fn, double a, double b, double panel) {
  if (a == b) return 0.0;
  const int n = std::max(1, static_cast<int>(std::ceil(std::fabs(b - a) / panel)));
  const double h = (b - a) / n;
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    const double c = a + (p + 0.5) * h;
    for (int i = 0; i < 10; ++i) total += kGLWeights[i] * fn(c + 0.5 * h * kGLNodes[i]);
  }
  return 0.5 * h * total;
}

/// RK4 for y' = g(t) from a to b (no state dependence, so this is Simpson on a grid).
template <class Fn>
double rk4_line(const Fn& g, double a, double b, double step) {
  if (a == b) return 0.0;
  const int n = std::max(1, static_cast<int>(std::ceil(std::fabs(b - a) / step)));
  const double h = (b - a) / n;
  double y = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = a + i * h;
    const double k1 = g(t), k2 = g(t + 0.5 * h), k4 = g(t + h);
    y += h / 6.0 * (k1 + 4.0 * k2 + k4);
  }
  return y;
}

struct LogSolver {
  KProvider K;
  std::array<Interval, 2> box;
  std::array<double, 2> base;
  double panel[2];

  double log_f(double r1, double r2) const {
    double a = gauss_legendre([&](double s) { return -K(s, base[1])[1]; }, base[0], r1, panel[0]);
    double b = gauss_legendre([&](double t) { return K(r1, t)[0]; }, base[1], r2, panel[1]);
    return a + b;
  }
  double log_f_other_path(double r1, double r2) const {
    double step0 = std::max(1e-3, std::fabs(r2 - base[1]) / 2000.0);
    double step1 = std::max(1e-3, std::fabs(r1 - base[0]) / 2000.0);
    double a = rk4_line([&](double t) { return K(base[0], t)[0]; }, base[1], r2, step0);
    double b = rk4_line([&](double s) { return -K(s, r2)[1]; }, base[0], r1, step1);
    return a + b;
  }
};

/// Tensor-product Chebyshev interpolant on a box.
class Chebyshev2 {
 public:
  template <class Fn>
  Chebyshev2(const Fn& fn, const std::array<Interval, 2>& box, int n) : box_(box), n_(n), c_(n, n) {
    MatrixXd vals(n, n);
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) x[j] = std::cos(M_PI * (j + 0.5) / n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) vals(i, j) = fn(map(x[i], 0), map(x[j], 1));
    MatrixXd T(n, n);  // T(k, j) = cos(k * acos x_j)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) T(k, j) = std::cos(M_PI * k * (j + 0.5) / n);
    c_ = T * vals * T.transpose() * (4.0 / (n * n));
    c_.row(0) *= 0.5;
    c_.col(0) *= 0.5;
  }
  bool contains(double r1, double r2) const {
    return r1 >= box_[0].lo && r1 <= box_[0].hi && r2 >= box_[1].lo && r2 <= box_[1].hi;
  }
  double operator()(double r1, double r2) const {
    VectorXd inner(n_);
    const double u = unmap(r2, 1);
    for (int i = 0; i < n_; ++i) inner[i] = clenshaw(c_.row(i).transpose(), u);
    return clenshaw(inner, unmap(r1, 0));
  }

 private:
  double map(double x, int d) const { return box_[d].mid() + 0.5 * box_[d].width() * x; }
  double unmap(double r, int d) const { return (r - box_[d].mid()) / (0.5 * box_[d].width()); }
  static double clenshaw(const VectorXd& c, double x) {
    double b1 = 0.0, b2 = 0.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 1; --k) {
      double b0 = 2.0 * x * b1 - b2 + c[k];
      b2 = b1;
      b1 = b0;
    }
    return x * b1 - b2 + c[0];
  }
  std::array<Interval, 2> box_;
  int n_;
  MatrixXd c_;
};

struct Candidate {
  std::string label;
  int var;
  std::function<double(double)> fn;
  std::function<expr::Expr(double coeff)> factor;  // f-factor for coefficient c
};

/// True when fn keeps one sign (and stays finite) on a dense sweep of the interval.
bool one_signed(const std::function<double(double)>& fn, const Interval& iv, int* sign) {
  int sg = 0;
  for (int i = 0; i <= 400; ++i) {
    double v = fn(iv.lo + iv.width() * i / 400.0);
    if (!std::isfinite(v) || v == 0.0) return false;
    int s = v > 0 ? 1 : -1;
    if (sg == 0) sg = s;
    if (s != sg) return false;
  }
  *sign = sg;
  return true;
}

expr::Expr rational(double c, int den) {
  long num = std::lround(c * den);
  if (den == 1) return expr::constant(static_cast<double>(num));
  return expr::parse(std::to_string(num) + "/" + std::to_string(den));
}

std::vector<Candidate> candidates(const std::array<Interval, 2>& box, const std::array<std::string, 2>& names) {
  using namespace expr;
  std::vector<Candidate> out;
  for (int v = 0; v < 2; ++v) {
    Expr u = variable(names[v]);
    auto signed_power = [](Expr base, int sign) { return sign > 0 ? base : neg(base); };
    struct LogOf {
      const char* label;
      std::function<double(double)> g;
      std::function<Expr(Expr)> build;
    };
    std::vector<LogOf> logs = {
        {"log|u|", [](double x) { return x; }, [](Expr e) { return e; }},
        {"log(1+u^2)", [](double x) { return 1.0 + x * x; },
         [](Expr e) { return add(constant(1.0), pow(e, constant(2.0))); }},
        {"log|sin u|", [](double x) { return std::sin(x); }, [](Expr e) { return apply(Op::Sin, e); }},
        {"log|cos u|", [](double x) { return std::cos(x); }, [](Expr e) { return apply(Op::Cos, e); }},
        {"log|tan u|", [](double x) { return std::tan(x); }, [](Expr e) { return apply(Op::Tan, e); }},
    };
    for (const auto& lg : logs) {
      int sign = 0;
      if (!one_signed(lg.g, box[v], &sign)) continue;
      auto g = lg.g;
      auto build = lg.build;
      out.push_back({lg.label, v, [g](double x) { return std::log(std::fabs(g(x))); },
                     [=](double c) -> Expr { return pow(signed_power(build(u), sign), constant(c)); }});
    }
    out.push_back({"u", v, [](double x) { return x; },
                   [=](double c) -> Expr { return apply(Op::Exp, mul(constant(c), u)); }});
    out.push_back({"u^2", v, [](double x) { return x * x; },
                   [=](double c) -> Expr { return apply(Op::Exp, mul(constant(c), pow(u, constant(2.0)))); }});
  }
  return out;
}

/// Smallest denominator q <= max_den with c*q within 1e-6 of an integer.
int rationalize(double c, int max_den) {
  for (int q = 1; q <= max_den; ++q)
    if (std::fabs(c * q - std::round(c * q)) <= 1e-6 * std::max(1.0, std::fabs(c * q))) return q;
  return 0;
}

std::optional<expr::Expr> match_symbolic(const std::vector<std::array<double, 3>>& samples,
                                         const std::array<Interval, 2>& box, const std::array<std::string, 2>& names,
                                         const Solve2dofOptions& opt) {
  const int n = static_cast<int>(samples.size());
  double scale = 1.0;
  for (const auto& s : samples) scale = std::max(scale, std::fabs(s[2]));
  double mean = 0.0;
  for (const auto& s : samples) mean += s[2] / n;
  double spread = 0.0;
  for (const auto& s : samples) spread = std::max(spread, std::fabs(s[2] - mean));
  if (spread <= opt.match_tol * scale) return expr::constant(1.0);

  auto cands = candidates(box, names);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = samples[i][2];

  auto try_subset = [&](const std::vector<int>& idx) -> std::optional<expr::Expr> {
    MatrixXd X(n, static_cast<int>(idx.size()) + 1);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        const Candidate& cd = cands[idx[c]];
        X(i, static_cast<int>(c) + 1) = cd.fn(samples[i][cd.var]);
      }
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    if (qr.rank() < X.cols()) return std::nullopt;
    VectorXd c = qr.solve(y);
    // rationalize, then require the rounded coefficients to still fit
    VectorXd cr = c;
    std::vector<int> dens(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      int q = rationalize(c[static_cast<int>(k) + 1], opt.max_denominator);
      if (q == 0 || std::lround(c[static_cast<int>(k) + 1] * q) == 0) return std::nullopt;
      dens[k] = q;
      cr[static_cast<int>(k) + 1] = static_cast<double>(std::lround(c[static_cast<int>(k) + 1] * q)) / q;
    }
    VectorXd rest = y - X.rightCols(X.cols() - 1) * cr.tail(cr.size() - 1);
    double off = rest.mean();
    if ((rest.array() - off).abs().maxCoeff() > opt.match_tol * scale) return std::nullopt;
    expr::Expr out;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double ck = cr[static_cast<int>(k) + 1];
      expr::Expr factor = cands[idx[k]].factor(ck);
      // rebuild with an exact rational exponent for readability
      if (factor->op == expr::Op::Pow) {
        factor = ck == 1.0 ? factor->a : expr::make_binary(expr::Op::Pow, factor->a, rational(ck, dens[k]));
      } else {
        factor = expr::fold(factor);
      }
      out = out ? expr::mul(out, factor) : factor;
    }
    return out;
  };

  const int nc = static_cast<int>(cands.size());
  for (int a = 0; a < nc; ++a)
    if (auto e = try_subset({a})) return e;
  for (int a = 0; a < nc; ++a)
    for (int b = a + 1; b < nc; ++b)
      if (auto e = try_subset({a, b})) return e;
  return std::nullopt;
}

std::string point_text(double a, double b) {
  std::ostringstream os;
  os.precision(6);
  os << "(" << a << ", " << b << ")";
  return os.str();
}

}  // namespace

Solve2dofResult solve_2dof_core(const KProvider& K, const std::array<Interval, 2>& box,
                                const std::array<std::string, 2>& names, int n_group, const Solve2dofOptions& opt) {
  if (opt.grid < 3) throw ConfigError("solve_2dof grid must have at least 3 nodes per axis");
  Solve2dofResult res;
  auto node = [&](int d, int i) { return box[d].lo + box[d].width() * (i + 0.5) / opt.grid; };

  // compatibility d K^1_12 / d r1 + d K^2_12 / d r2 = 0
  const double h0 = 1e-4 * box[0].width(), h1 = 1e-4 * box[1].width();
  double worst = 0.0;
  std::array<double, 2> worst_at{node(0, 0), node(1, 0)};
  for (int i = 0; i < opt.grid; ++i)
    for (int j = 0; j < opt.grid; ++j) {
      const double a = node(0, i), b = node(1, j);
      const double d1 = (K(a + h0, b)[0] - K(a - h0, b)[0]) / (2 * h0);
      const double d2 = (K(a, b + h1)[1] - K(a, b - h1)[1]) / (2 * h1);
      const double v = std::fabs(d1 + d2) / (1.0 + std::fabs(d1) + std::fabs(d2));
      if (!std::isfinite(v)) throw SingularityError("compatibility check hit a singular point at " + point_text(a, b));
      if (v > worst) worst = v, worst_at = {a, b};
    }
  res.compat_residual = worst;
  if (worst > opt.compat_tol) {
    std::ostringstream os;
    os << "compatibility condition fails: defect " << worst << " at " << names[0] << ", " << names[1] << " = "
       << point_text(worst_at[0], worst_at[1]);
    throw IncompatibleError(os.str());
  }

  auto solver = std::make_shared<LogSolver>();
  solver->K = K;
  solver->box = box;
  solver->base = {box[0].mid(), box[1].mid()};
  solver->panel[0] = box[0].width() / 8.0;
  solver->panel[1] = box[1].width() / 8.0;
  res.base = solver->base;

  // path independence at a few grid points
  double pd = 0.0;
  for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 0}, {opt.grid - 1, opt.grid - 1}, {0, opt.grid - 1},
                                                      {opt.grid - 1, 0}, {opt.grid / 3, 2 * opt.grid / 3}}) {
    const double a = node(0, i), b = node(1, j);
    const double l1 = solver->log_f(a, b), l2 = solver->log_f_other_path(a, b);
    pd = std::max(pd, std::fabs(l1 - l2) / (1.0 + std::fabs(l1)));
  }
  res.path_defect = pd;

  auto field_from = [solver, K](std::function<double(double, double)> logf) {
    return [solver, K, logf](const VectorXd& q) {
      MultiplierValue v;
      v.f = std::exp(logf(q[0], q[1]));
      auto k = K(q[0], q[1]);
      v.dr = VectorXd(2);
      v.dr << -v.f * k[1], v.f * k[0];
      return v;
    };
  };
  std::string desc = "line integral of K from base " + point_text(solver->base[0], solver->base[1]);
  res.quadrature = Multiplier::numeric(field_from([solver](double a, double b) { return solver->log_f(a, b); }), 2,
                                       n_group, "quadrature: " + desc);

  std::vector<std::array<double, 3>> samples;
  for (int i = 0; i < opt.grid; ++i)
    for (int j = 0; j < opt.grid; ++j) {
      const double a = node(0, i), b = node(1, j);
      samples.push_back({a, b, solver->log_f(a, b)});
    }
  res.symbolic = match_symbolic(samples, box, names, opt);
  if (res.symbolic) {
    std::map<std::string, double> none;
    std::vector<std::string> group_names;
    for (int g = 0; g < n_group; ++g) group_names.push_back("__g" + std::to_string(g));
    res.f = Multiplier::symbolic(*res.symbolic, {names[0], names[1]}, group_names, none);
    res.description = "f proportional to " + expr::to_string(*res.symbolic);
    return res;
  }

  // tabulate log f on a Chebyshev grid when that reproduces the quadrature
  UniformStream rng(12345);
  for (int n : {24, 40}) {
    auto cheb = std::make_shared<Chebyshev2>([&](double a, double b) { return solver->log_f(a, b); }, box, n);
    double err = 0.0;
    for (int t = 0; t < 20; ++t) {
      const double a = rng.next(box[0].lo, box[0].hi), b = rng.next(box[1].lo, box[1].hi);
      err = std::max(err, std::fabs((*cheb)(a, b) - solver->log_f(a, b)));
    }
    if (err <= 1e-11) {
      res.f = Multiplier::numeric(field_from([cheb, solver](double a, double b) {
                                    return cheb->contains(a, b) ? (*cheb)(a, b) : solver->log_f(a, b);
                                  }),
                                  2, n_group, "tabulated (Chebyshev " + std::to_string(n) + "x" + std::to_string(n) +
                                                  "): " + desc);
      res.description = "f tabulated numerically, f = 1 at " + point_text(solver->base[0], solver->base[1]);
      return res;
    }
  }
  res.f = res.quadrature;
  res.description = "f by quadrature, f = 1 at " + point_text(solver->base[0], solver->base[1]);
  return res;
}

Solve2dofResult solve_2dof(const Model& model, const Solve2dofOptions& opt) {
  require_kind(model, Kind::Chaplygin, "solve_2dof");
  if (model.m() != 2) throw ConfigError("solve_2dof requires m = 2, got m = " + std::to_string(model.m()));
  KProvider K = [&model](double a, double b) {
    VectorXd r(2);
    r << a, b;
    GeometryAtPoint g = model.derived(model.point(r));
    return std::array<double, 2>{g.Kchap(0, 0, 1), g.Kchap(1, 0, 1)};
  };
  const auto& sb = model.def().shape_box;
  return solve_2dof_core(K, {sb[0], sb[1]}, {model.def().shape[0], model.def().shape[1]}, model.k(), opt);
}

// ---------------------------------------------------------------------------
// ansatz fitting

FitResult fit_ansatz(const Model& model, const std::vector<expr::Expr>& basis, const SampleOptions& opt) {
  require_kind(model, Kind::Chaplygin, "fit_ansatz");
  if (basis.empty()) throw ConfigError("fit_ansatz needs at least one basis function");
  const int m = model.m(), nb = static_cast<int>(basis.size());
  const auto& slot_names = model.slot_names();
  std::set<std::string> known(slot_names.begin(), slot_names.end());
  std::vector<std::vector<expr::Program>> dphi(nb);
  for (int b = 0; b < nb; ++b) {
    for (const auto& v : expr::free_variables(basis[b]))
      if (!known.count(v)) throw ConfigError("basis function uses unknown identifier '" + v + "'");
    for (int al = 0; al < m; ++al)
      dphi[b].emplace_back(expr::fold(expr::differentiate(basis[b], model.def().shape[al])), slot_names);
  }
  auto pts = sample_configurations(model, opt);
  std::vector<double> rows;
  std::vector<double> rhs;
  for (const auto& q : pts) {
    GeometryAtPoint g = model.derived(q);
    auto sl = model.slots(q);
    MatrixXd d(nb, m);
    for (int b = 0; b < nb; ++b)
      for (int al = 0; al < m; ++al) d(b, al) = dphi[b][al](sl);
    const double scale = 1.0 / std::max(1e-300, max_abs(g.G));
    for (int al = 0; al < m; ++al)
      for (int de = 0; de < m; ++de)
        for (int nu = de; nu < m; ++nu) {
          for (int b = 0; b < nb; ++b)
            rows.push_back(scale * (d(b, de) * g.G(al, nu) + d(b, nu) * g.G(al, de) - 2.0 * d(b, al) * g.G(de, nu)));
          double kt = 0.0;
          for (int mu = 0; mu < m; ++mu) kt += g.Kchap(mu, al, de) * g.G(mu, nu) + g.Kchap(mu, al, nu) * g.G(mu, de);
          rhs.push_back(scale * kt);
        }
  }
  const int nr = static_cast<int>(rhs.size());
  MatrixXd X(nr, nb);
  VectorXd y(nr);
  for (int i = 0; i < nr; ++i) {
    for (int b = 0; b < nb; ++b) X(i, b) = rows[static_cast<std::size_t>(i) * nb + b];
    y[i] = rhs[i];
  }
  Eigen::JacobiSVD<MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0 || sv[sv.size() - 1] <= 1e-10 * sv[0])
    throw AmbiguousAnsatzError("ansatz basis is rank deficient on the sample set");
  VectorXd c = svd.solve(y);

  FitResult out;
  expr::Expr logf;
  for (int b = 0; b < nb; ++b) {
    out.coefficients.push_back(c[b]);
    expr::Expr term = expr::mul(expr::constant(c[b]), basis[b]);
    logf = logf ? expr::add(logf, term) : term;
  }
  out.multiplier = expr::fold(expr::apply(expr::Op::Exp, logf));
  out.report = residuals_chaplygin(model, Multiplier::from_expr(out.multiplier, model), opt);
  out.report.operation = "fit_ansatz";
  return out;
}

expr::Expr measure_density(const expr::Expr& f, int m) {
  if (m < 1) throw ConfigError("measure_density requires m >= 1");
  if (m == 1) return expr::constant(1.0);
  if (m == 2) return f;
  return expr::fold(expr::pow(f, expr::constant(static_cast<double>(m - 1))));
}

// ---------------------------------------------------------------------------
// invariant measure and multiplier relations

ResidualReport divergence_test(const Model& model, const Multiplier& density, const SampleOptions& opt) {
  if (model.kind() == Kind::General) throw ConfigError("divergence_test requires a chaplygin or eps system");
  auto states = sample_states(model, opt);
  ResidualReport rep = start_report("divergence_test", opt, states.size());
  VectorField X = lda_flow(model);
  const int m = model.m();
  auto weighted = [&](const VectorXd& x, int I) {
    return density.value(model.point(x.head(m))) * X(x)[I];
  };
  Accumulator acc("divergence");
  for (const auto& x : states) {
    double div = 0.0;
    for (int I = 0; I < x.size(); ++I) {
      const double h = 1e-5 * (1.0 + std::fabs(x[I]));
      VectorXd xp = x, xm = x;
      xp[I] += h;
      xm[I] -= h;
      div += (weighted(xp, I) - weighted(xm, I)) / (2.0 * h);
    }
    acc.add(div, x);
  }
  rep.families = {acc.done()};
  rep.finalize();
  return rep;
}

ResidualReport lambda_f_relation(const Model& model, const Multiplier& f, const SampleOptions& opt) {
  require_kind(model, Kind::Chaplygin, "lambda_f_relation");
  auto states = sample_states(model, opt);
  ResidualReport rep = start_report("lambda_f_relation", opt, states.size());
  const int m = model.m();
  Accumulator acc("lambda_f");
  for (const auto& x : states) {
    auto [r, p, pi] = split_phase(model, x);
    GeometryAtPoint g = model.derived(model.point(r), &f);
    VectorXd mu = constrained_momentum(g, p, pi);
    double worst = 0.0;
    for (int be = 0; be < m; ++be)
      for (int al = 0; al < m; ++al) {
        double lam = 0.0;  // Lambda_{beta alpha} = mu_a B^a_{alpha beta}
        for (int a = 0; a < model.k(); ++a) lam += mu[a] * g.B(a, al, be);
        worst = std::max(worst, std::fabs(lam - (g.df[be] * p[al] - g.df[al] * p[be]) / g.f));
      }
    acc.add(worst, x);
  }
  rep.families = {acc.done()};
  rep.finalize();
  return rep;
}

ResidualReport converse_check(const Model& model, const SampleOptions& opt) {
  require_kind(model, Kind::Chaplygin, "converse_check");
  const int m = model.m();
  if (m <= 2) {
    ResidualReport rep = start_report("converse_check", opt, 0);
    rep.families = {FamilyStat{"converse", 0.0, 0.0, VectorXd()}};
    rep.notes.push_back("vacuous for m <= 2");
    rep.finalize();
    return rep;
  }
  auto pts = sample_configurations(model, opt);
  ResidualReport rep = start_report("converse_check", opt, pts.size());
  Accumulator acc("converse");
  for (const auto& q : pts) {
    GeometryAtPoint g = model.derived(q);
    VectorXd tr = VectorXd::Zero(m);  // K^beta_{alpha beta}
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be) tr[al] += g.Kchap(be, al, be);
    double worst = 0.0;
    for (int al = 0; al < m; ++al)
      for (int de = 0; de < m; ++de)
        for (int nu = 0; nu < m; ++nu) {
          double kt = 0.0;
          for (int mu = 0; mu < m; ++mu) kt += g.Kchap(mu, al, de) * g.G(mu, nu) + g.Kchap(mu, al, nu) * g.G(mu, de);
          double v = 2.0 * g.G(de, nu) * tr[al] - (g.G(al, nu) * tr[de] + g.G(al, de) * tr[nu]) - (m - 1) * kt;
          worst = std::max(worst, std::fabs(v));
        }
    acc.add(worst / std::max(1e-300, max_abs(g.G)), q);
  }
  rep.families = {acc.done()};
  rep.notes.push_back("residual divided by max |G| at each sample");
  rep.finalize();
  return rep;
}

}  // namespace nhk
