#include "nhk/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "nhk/errors.hpp"

namespace nhk {

namespace {

struct Metric {
  MatrixXd Ginv, Gij_inv;
};

Metric metric_at(const Model& model, const VectorXd& r) {
  GeometryAtPoint g = model.derived(model.point(r));
  return {g.Ginv, g.Gij_inv};
}

}  // namespace

double hamiltonian(const Model& model, const VectorXd& x) {
  auto [r, p, pi] = split_phase(model, x);
  Metric g = metric_at(model, r);
  MetricGradient mg = model.metric_gradient(model.point(r));
  double h = 0.5 * p.dot(g.Ginv * p) + mg.V;
  if (pi.size()) h += 0.5 * pi.dot(g.Gij_inv * pi);
  return h;
}

VectorXd hamiltonian_gradient(const Model& model, const VectorXd& x) {
  auto [r, p, pi] = split_phase(model, x);
  const int m = model.m(), s = model.s();
  Metric g = metric_at(model, r);
  MetricGradient mg = model.metric_gradient(model.point(r));
  VectorXd v = g.Ginv * p;
  VectorXd w = s ? VectorXd(g.Gij_inv * pi) : VectorXd();
  VectorXd grad(2 * m + s);
  for (int c = 0; c < m; ++c) {
    double d = -0.5 * v.dot(mg.dG[c] * v) + mg.dV[c];
    if (s) d -= 0.5 * w.dot(mg.dGij[c] * w);
    grad[c] = d;
  }
  grad.segment(m, m) = v;
  if (s) grad.segment(2 * m, s) = w;
  return grad;
}

VectorField lda_flow(const Model& model) {
  return [&model](const VectorXd& x) -> VectorXd {
    return bracket_at(model, x).matrix() * hamiltonian_gradient(model, x);
  };
}

VectorField lda_flow_with_group(const Model& model) {
  return [&model](const VectorXd& xg) -> VectorXd {
    const int m = model.m(), s = model.s(), k = model.k();
    const int n = 2 * m + s;
    VectorXd x = xg.head(n);
    VectorXd gpos = xg.tail(k);
    VectorXd dx = bracket_at(model, x).matrix() * hamiltonian_gradient(model, x);
    VectorXd q(m + k);
    q << x.head(m), gpos;
    GeometryAtPoint geo = model.derived(q);
    VectorXd rdot = dx.head(m);
    VectorXd grad = hamiltonian_gradient(model, x);
    VectorXd Omega = grad.tail(s);
    VectorXd xi = -geo.A * rdot;
    if (s) xi += geo.e * Omega;
    VectorXd out(n + k);
    out << dx, geo.frame * xi;
    return out;
  };
}

VectorXd rescale_momenta(const Model& model, const Multiplier& f, const VectorXd& x) {
  const int m = model.m();
  double fv = f.value(model.point(x.head(m)));
  VectorXd y = x;
  y.tail(x.size() - m) *= fv;
  return y;
}

VectorXd unscale_momenta(const Model& model, const Multiplier& f, const VectorXd& x) {
  const int m = model.m();
  double fv = f.value(model.point(x.head(m)));
  VectorXd y = x;
  y.tail(x.size() - m) /= fv;
  return y;
}

VectorField hamiltonized_flow(const Model& model, const Multiplier& f) {
  return [&model, f](const VectorXd& X) -> VectorXd {
    const int m = model.m(), s = model.s();
    auto [r, P, Pi] = split_phase(model, X);
    GeometryAtPoint g = model.derived(model.point(r), &f);
    TransformedComponents tc = transformed_components(g, model.def());
    const double fv = g.f;
    VectorXd x = join_phase(r, P / fv, Pi / fv);
    VectorXd gh = hamiltonian_gradient(model, x);
    // grad H in (r, P): dH/dP = (dh/dp) / f, dH/dr = dh/dr - (dh/dp . p) df / f
    double contraction = gh.tail(m + s).dot(x.tail(m + s));
    VectorXd gH(2 * m + s);
    gH.head(m) = gh.head(m) - contraction * g.df / fv;
    gH.tail(m + s) = gh.tail(m + s) / fv;
    return fv * (transformed_bracket(tc, P, Pi, true).matrix() * gH);
  };
}

ScalarField hamiltonized_energy(const Model& model, const Multiplier& f) {
  return [&model, f](const VectorXd& X) { return hamiltonian(model, unscale_momenta(model, f, X)); };
}

Trajectory integrate(const VectorField& field, const VectorXd& x0, double t0, double t1, double h,
                     const ScalarField* tau_rate) {
  if (!(h > 0.0)) throw ConfigError("step must be positive");
  if (!(t1 >= t0)) throw ConfigError("end time precedes start time");
  Trajectory tr;
  tr.step = h;
  const long n = std::lround((t1 - t0) / h);
  const double hh = n > 0 ? (t1 - t0) / static_cast<double>(n) : h;
  tr.t.reserve(static_cast<std::size_t>(n + 1));
  tr.x.reserve(static_cast<std::size_t>(n + 1));
  VectorXd x = x0;
  double tau = 0.0;
  tr.t.push_back(t0);
  tr.x.push_back(x);
  if (tau_rate) tr.tau.push_back(0.0);
  try {
    VectorXd k1 = field(x);
    for (long i = 0; i < n; ++i) {
      VectorXd k2 = field(x + 0.5 * hh * k1);
      VectorXd k3 = field(x + 0.5 * hh * k2);
      VectorXd k4 = field(x + hh * k3);
      VectorXd xn = x + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!xn.allFinite()) throw SingularityError("non-finite state");
      VectorXd k1n = field(xn);
      if (tau_rate) {
        VectorXd xm = 0.5 * (x + xn) + (hh / 8.0) * (k1 - k1n);
        tau += hh / 6.0 * ((*tau_rate)(x) + 4.0 * (*tau_rate)(xm) + (*tau_rate)(xn));
        tr.tau.push_back(tau);
      }
      x = xn;
      k1 = k1n;
      tr.t.push_back(t0 + static_cast<double>(i + 1) * hh);
      tr.x.push_back(x);
    }
  } catch (const Error& e) {
    tr.truncated = true;
    tr.message = e.what();
    if (tr.tau.size() > tr.t.size()) tr.tau.resize(tr.t.size());
  }
  return tr;
}

VectorXd sample_at(const Trajectory& tr, double t) {
  const std::size_t n = tr.t.size();
  if (n == 0) throw ConfigError("empty trajectory");
  if (n == 1) return tr.x[0];
  auto it = std::upper_bound(tr.t.begin(), tr.t.end(), t);
  std::size_t i = it == tr.t.begin() ? 0 : static_cast<std::size_t>(it - tr.t.begin()) - 1;
  if (i + 1 >= n) i = n - 2;
  if (t == tr.t[i]) return tr.x[i];
  if (n < 4) {
    double w = (t - tr.t[i]) / (tr.t[i + 1] - tr.t[i]);
    return (1.0 - w) * tr.x[i] + w * tr.x[i + 1];
  }
  std::size_t lo = i == 0 ? 0 : i - 1;
  if (lo + 3 >= n) lo = n - 4;
  VectorXd out = VectorXd::Zero(tr.x[0].size());
  for (std::size_t a = lo; a < lo + 4; ++a) {
    double w = 1.0;
    for (std::size_t b = lo; b < lo + 4; ++b)
      if (a != b) w *= (t - tr.t[b]) / (tr.t[a] - tr.t[b]);
    out += w * tr.x[a];
  }
  return out;
}

double compare(const Trajectory& a, const Trajectory& b, const StateMap& map_b) {
  if (a.t.empty() || b.t.empty()) throw ConfigError("cannot compare empty trajectories");
  const double span_tol = 1e-9 * (1.0 + std::fabs(a.t.back()));
  if (std::fabs(a.t.front() - b.t.front()) > span_tol || std::fabs(a.t.back() - b.t.back()) > span_tol)
    throw ConfigError("trajectories cover different time spans");
  const int d = static_cast<int>(a.x[0].size());
  VectorXd scale = VectorXd::Ones(d);
  for (const auto& x : a.x) scale = scale.cwiseMax(VectorXd::Ones(d) + x.cwiseAbs());
  bool same_grid = a.t.size() == b.t.size();
  for (std::size_t i = 0; same_grid && i < a.t.size(); ++i) same_grid = std::fabs(a.t[i] - b.t[i]) <= span_tol;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    VectorXd xb = same_grid ? b.x[i] : sample_at(b, a.t[i]);
    if (map_b) xb = map_b(xb);
    if (xb.size() != d) throw ConfigError("mapped state has the wrong dimension");
    worst = std::max(worst, ((a.x[i] - xb).cwiseAbs().array() / scale.array()).maxCoeff());
  }
  return worst;
}

StateMap named_map(const std::string& name, const Model& model, const Multiplier& f) {
  if (name == "identity") return [](const VectorXd& x) { return x; };
  if (name == "momenta-scale-by-f")
    return [&model, f](const VectorXd& x) { return unscale_momenta(model, f, x); };
  if (name == "velocity-scale-by-f")
    return [&model, f](const VectorXd& x) {
      const int n = static_cast<int>(x.size()) / 2;
      VectorXd y = x;
      double fv = f.value(model.point(x.head(model.m())));
      y.tail(n) *= fv;
      return y;
    };
  throw ConfigError("unknown state map '" + name + "' (expected identity, momenta-scale-by-f or velocity-scale-by-f)");
}

double energy_drift(const ScalarField& H, const Trajectory& traj) {
  if (traj.x.empty()) return 0.0;
  const double h0 = H(traj.x[0]);
  double worst = 0.0;
  for (const auto& x : traj.x) worst = std::max(worst, std::fabs(H(x) - h0));
  return worst;
}

void write_csv(std::ostream& out, const Trajectory& traj, const std::vector<std::string>& names) {
  out << "t";
  if (traj.has_tau()) out << ",tau";
  for (const auto& n : names) out << "," << n;
  out << "\n";
  char buf[40];
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.t[i]);
    out << buf;
    if (traj.has_tau()) {
      std::snprintf(buf, sizeof buf, "%.17g", traj.tau[i]);
      out << "," << buf;
    }
    for (int k = 0; k < traj.x[i].size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", traj.x[i][k]);
      out << "," << buf;
    }
    out << "\n";
  }
}

std::vector<std::string> phase_names(const Model& model, const std::string& prefix) {
  const SystemDef& d = model.def();
  std::vector<std::string> out = d.shape;
  for (const auto& r : d.shape) out.push_back(prefix + r);
  for (int i = 0; i < d.s; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

}  // namespace nhk
