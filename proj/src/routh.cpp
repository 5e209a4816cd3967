#include "nhk/routh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nhk/errors.hpp"

namespace nhk {

std::vector<std::string> CyclicSplit::cyclic_names(const SystemDef& def) const {
  std::vector<std::string> out;
  for (int c : cyclic) out.push_back(def.shape[c]);
  return out;
}

namespace {

bool expr_matrix_free_of(const ExprMatrix& m, const std::string& name) {
  for (const auto& e : m.data)
    if (e && expr::depends_on(e, name)) return false;
  return true;
}

/// Q(gamma, delta) = sum_a sum_beta (M G^{-1})_{a gamma} B^a_{c beta} G^{beta delta}:
/// the curvature force on p_c is -p^T Q p.
MatrixXd momentum_force_form(const GeometryAtPoint& g, int c) {
  const int m = static_cast<int>(g.G.rows()), k = static_cast<int>(g.M.rows());
  MatrixXd MG = g.M * g.Ginv;
  MatrixXd Bc = MatrixXd::Zero(k, m);
  for (int a = 0; a < k; ++a)
    for (int be = 0; be < m; ++be) Bc(a, be) = g.B(a, c, be);
  return MG.transpose() * Bc * g.Ginv;
}

}  // namespace

CyclicSplit detect_cyclic(const Model& model, int samples, std::uint64_t seed) {
  if (model.kind() != Kind::Chaplygin) throw ConfigError("cyclic detection requires a chaplygin system");
  const SystemDef& d = model.def();
  const int m = model.m();
  SampleOptions opt;
  opt.count = samples;
  opt.seed = seed;
  auto pts = sample_configurations(model, opt);
  std::vector<GeometryAtPoint> geo;
  std::vector<MetricGradient> grads;
  for (const auto& q : pts) {
    geo.push_back(model.derived(q));
    grads.push_back(model.metric_gradient(q));
  }

  CyclicSplit out;
  for (int c = 0; c < m; ++c) {
    CyclicCandidate cand;
    cand.name = d.shape[c];
    cand.by_ast = expr_matrix_free_of(model.G_expr(), cand.name) && !expr::depends_on(d.V, cand.name);
    cand.lagrangian_independent = cand.by_ast;
    if (!cand.by_ast) {
      bool flat = true;
      for (std::size_t s = 0; s < pts.size() && flat; ++s) {
        double scale = 1.0 + max_abs(geo[s].G);
        flat = max_abs(grads[s].dG[c]) <= 1e-10 * scale && std::fabs(grads[s].dV[c]) <= 1e-10 * scale;
      }
      cand.lagrangian_independent = flat;
    }
    if (cand.lagrangian_independent) {
      double worst = 0.0, lam = 0.0;
      for (const auto& g : geo) {
        MatrixXd Q = momentum_force_form(g, c);
        worst = std::max(worst, max_abs(Q + Q.transpose()) / (1.0 + max_abs(g.G)));
        MatrixXd MG = g.M * g.Ginv;
        for (int al = 0; al < m; ++al) {
          if (al == c) continue;
          for (int ga = 0; ga < m; ++ga) {
            double v = 0.0;
            for (int a = 0; a < model.k(); ++a) v += MG(a, ga) * g.B(a, al, c);
            lam = std::max(lam, std::fabs(v));
          }
        }
      }
      cand.force_residual = worst;
      cand.momentum_conserved = worst <= 1e-10;
      cand.strict = lam <= 1e-10;
    }
    if (cand.lagrangian_independent && cand.momentum_conserved) {
      out.cyclic.push_back(c);
    } else {
      out.remaining.push_back(c);
      if (cand.lagrangian_independent) out.excluded.push_back(cand.name);
    }
    out.candidates.push_back(cand);
  }
  return out;
}

ReducedSystem::ReducedSystem(const Model& model, CyclicSplit split, std::vector<double> lambda)
    : model_(&model), split_(std::move(split)), lambda_(std::move(lambda)) {
  v0_ = VectorXd(static_cast<int>(split_.cyclic.size()));
  for (std::size_t i = 0; i < split_.cyclic.size(); ++i) {
    v0_[static_cast<int>(i)] = model.def().shape_box[split_.cyclic[i]].mid();
    const auto& cand = split_.candidates[split_.cyclic[i]];
    if (!cand.strict) strict_ = false;
  }
}

std::vector<std::string> ReducedSystem::names() const {
  std::vector<std::string> out;
  for (int c : split_.remaining) out.push_back(model_->def().shape[c]);
  return out;
}

std::vector<Interval> ReducedSystem::box() const {
  std::vector<Interval> out;
  for (int c : split_.remaining) out.push_back(model_->def().shape_box[c]);
  return out;
}

VectorXd ReducedSystem::lift(const VectorXd& xr) const {
  const int m = model_->m(), n = dim();
  if (xr.size() != 2 * n) throw ConfigError("reduced state has the wrong dimension");
  VectorXd x(2 * m);
  for (int j = 0; j < n; ++j) {
    x[split_.remaining[j]] = xr[j];
    x[m + split_.remaining[j]] = xr[n + j];
  }
  for (std::size_t i = 0; i < split_.cyclic.size(); ++i) {
    x[split_.cyclic[i]] = v0_[static_cast<int>(i)];
    x[m + split_.cyclic[i]] = lambda_[i];
  }
  return x;
}

VectorXd ReducedSystem::project(const VectorXd& x) const {
  const int m = model_->m(), n = dim();
  VectorXd xr(2 * n);
  for (int j = 0; j < n; ++j) {
    xr[j] = x[split_.remaining[j]];
    xr[n + j] = x[m + split_.remaining[j]];
  }
  return xr;
}

double ReducedSystem::hamiltonian(const VectorXd& xr) const { return nhk::hamiltonian(*model_, lift(xr)); }

VectorXd ReducedSystem::hamiltonian_gradient(const VectorXd& xr) const {
  VectorXd g = nhk::hamiltonian_gradient(*model_, lift(xr));
  return project(g);
}

MatrixXd ReducedSystem::cyclic_metric(const VectorXd& w) const {
  VectorXd x = lift(join_phase(w, VectorXd::Zero(dim()), VectorXd()));
  GeometryAtPoint g = model_->derived(model_->point(x.head(model_->m())));
  const int nc = static_cast<int>(split_.cyclic.size());
  MatrixXd out(nc, nc);
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < nc; ++j) out(i, j) = g.G(split_.cyclic[i], split_.cyclic[j]);
  return out;
}

ReducedK ReducedSystem::K(const VectorXd& w) const {
  const int m = model_->m(), n = dim(), nc = static_cast<int>(split_.cyclic.size()), k = model_->k();
  VectorXd x = lift(join_phase(w, VectorXd::Zero(n), VectorXd()));
  GeometryAtPoint g = model_->derived(model_->point(x.head(m)));
  MatrixXd MG = g.M * g.Ginv;
  const auto& rem = split_.remaining;
  const auto& cyc = split_.cyclic;
  ReducedK out;
  out.Keps = Tensor3(n, n, n);
  out.Kcyc = Tensor3(nc, n, n);

  if (strict_) {
    for (int al = 0; al < n; ++al)
      for (int be = 0; be < n; ++be) {
        for (int e = 0; e < n; ++e) {
          double v = 0.0;
          for (int a = 0; a < k; ++a) v += MG(a, rem[e]) * g.B(a, rem[al], rem[be]);
          out.Keps(e, al, be) = v;
        }
        for (int i = 0; i < nc; ++i) {
          double v = 0.0;
          for (int a = 0; a < k; ++a) v += MG(a, cyc[i]) * g.B(a, rem[al], rem[be]);
          out.Kcyc(i, al, be) = v;
        }
      }
    return out;
  }

  // Match the quadratic force -p^T Q^{alpha'} p with -(K^gamma_{alpha' beta'} p_gamma) G^{beta' delta} p_delta,
  // K antisymmetric in (alpha', beta'), over symmetric (gamma, delta) pairs.
  std::vector<std::pair<int, int>> pairs;
  for (int al = 0; al < n; ++al)
    for (int be = al + 1; be < n; ++be) pairs.push_back({al, be});
  const int np = static_cast<int>(pairs.size());
  const int unknowns = m * np;  // gamma over all shape coordinates (w first, then cyclic)
  std::vector<int> order(rem.begin(), rem.end());
  order.insert(order.end(), cyc.begin(), cyc.end());
  const int rows = n * m * (m + 1) / 2;
  MatrixXd A = MatrixXd::Zero(rows, unknowns);
  VectorXd b = VectorXd::Zero(rows);
  int row = 0;
  for (int al = 0; al < n; ++al) {
    MatrixXd Q = momentum_force_form(g, rem[al]);
    for (int ga = 0; ga < m; ++ga)
      for (int de = ga; de < m; ++de, ++row) {
        b[row] = Q(ga, de) + Q(de, ga);
        // coefficient of p_ga p_de in K^gamma_{al be} G^{rem be, delta} p_gamma p_delta, symmetrized
        for (int u = 0; u < m; ++u) {
          const int gam = order[u];
          for (int pi = 0; pi < np; ++pi) {
            auto [x1, x2] = pairs[pi];
            double sign = 0.0;
            int be = -1;
            if (x1 == al) sign = 1.0, be = x2;
            if (x2 == al) sign = -1.0, be = x1;
            if (be < 0) continue;
            double c = 0.0;
            if (gam == ga) c += g.Ginv(rem[be], de);
            if (gam == de) c += g.Ginv(rem[be], ga);
            A(row, u * np + pi) += sign * c;
          }
        }
      }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  VectorXd sol = qr.solve(b);
  out.fit_residual = (A * sol - b).cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
  if (out.fit_residual > 1e-8) {
    std::ostringstream os;
    os << "gyroscopic force is not of the reduced form (residual " << out.fit_residual << ")";
    throw ReductionError(os.str());
  }
  for (int u = 0; u < m; ++u)
    for (int pi = 0; pi < np; ++pi) {
      auto [x1, x2] = pairs[pi];
      const double v = sol[u * np + pi];
      Tensor3& T = u < n ? out.Keps : out.Kcyc;
      const int idx = u < n ? u : u - n;
      T(idx, x1, x2) = v;
      T(idx, x2, x1) = -v;
    }
  return out;
}

VectorField ReducedSystem::flow() const {
  return [this](const VectorXd& xr) -> VectorXd {
    const int n = dim(), nc = static_cast<int>(split_.cyclic.size());
    VectorXd gH = hamiltonian_gradient(xr);
    VectorXd wdot = gH.tail(n);
    VectorXd w = xr.head(n), p = xr.tail(n);
    ReducedK K = this->K(w);
    VectorXd out(2 * n);
    out.head(n) = wdot;
    for (int al = 0; al < n; ++al) {
      double force = 0.0;
      for (int be = 0; be < n; ++be) {
        double c = 0.0;
        for (int e = 0; e < n; ++e) c += K.Keps(e, al, be) * p[e];
        for (int i = 0; i < nc; ++i) c += K.Kcyc(i, al, be) * lambda_[i];
        force -= c * wdot[be];
      }
      out[n + al] = -gH[al] + force;
    }
    return out;
  };
}

ReducedSystem reduce(const Model& model, const std::vector<double>& lambda,
                     const std::optional<std::vector<std::string>>& cyclic) {
  CyclicSplit split = detect_cyclic(model);
  if (cyclic) {
    CyclicSplit chosen;
    chosen.candidates = split.candidates;
    chosen.excluded = split.excluded;
    for (int c = 0; c < model.m(); ++c) {
      const std::string& name = model.def().shape[c];
      bool want = std::find(cyclic->begin(), cyclic->end(), name) != cyclic->end();
      if (want && std::find(split.cyclic.begin(), split.cyclic.end(), c) == split.cyclic.end())
        throw ReductionError("coordinate '" + name + "' is not a nonholonomic cyclic variable");
      (want ? chosen.cyclic : chosen.remaining).push_back(c);
    }
    for (const auto& n : *cyclic)
      if (std::find(model.def().shape.begin(), model.def().shape.end(), n) == model.def().shape.end())
        throw ReductionError("unknown shape coordinate '" + n + "'");
    split = chosen;
  }
  if (split.cyclic.empty()) throw ReductionError("no nonholonomic cyclic coordinate found");
  if (lambda.size() != split.cyclic.size())
    throw ReductionError("expected " + std::to_string(split.cyclic.size()) + " momentum value(s), got " +
                         std::to_string(lambda.size()));
  ReducedSystem rs(model, split, lambda);
  SampleOptions opt;
  opt.count = 50;
  opt.seed = 5;
  for (const auto& q : sample_configurations(model, opt)) {
    VectorXd w(rs.dim());
    for (int j = 0; j < rs.dim(); ++j) w[j] = q[split.remaining[j]];
    Eigen::JacobiSVD<MatrixXd> svd(rs.cyclic_metric(w));
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] <= 1e-12 * std::max(1.0, sv[0]))
      throw ReductionError("cyclic velocity block of the metric is singular");
  }
  return rs;
}

KProvider reduced_k_provider(const ReducedSystem& rs) {
  if (rs.dim() != 2) throw ConfigError("reduced space must be two-dimensional, got " + std::to_string(rs.dim()));
  return [&rs](double a, double b) {
    VectorXd w(2);
    w << a, b;
    ReducedK K = rs.K(w);
    return std::array<double, 2>{K.Keps(0, 0, 1), K.Keps(1, 0, 1)};
  };
}

Solve2dofResult solve_reduced_2dof(const ReducedSystem& rs, const Solve2dofOptions& opt) {
  KProvider K = reduced_k_provider(rs);
  auto box = rs.box();
  auto names = rs.names();
  return solve_2dof_core(K, {box[0], box[1]}, {names[0], names[1]}, 0, opt);
}

VectorXd reduced_rescale(const ReducedSystem& rs, const Multiplier& f, const VectorXd& xr) {
  const int n = rs.dim();
  VectorXd y = xr;
  y.tail(n) *= f.value(xr.head(n));
  return y;
}

VectorXd reduced_unscale(const ReducedSystem& rs, const Multiplier& f, const VectorXd& xr) {
  const int n = rs.dim();
  VectorXd y = xr;
  y.tail(n) /= f.value(xr.head(n));
  return y;
}

namespace {

MatrixXd gyroscopic_matrix(const ReducedSystem& rs, const Multiplier& f, const VectorXd& w) {
  const int n = rs.dim(), nc = static_cast<int>(rs.lambda().size());
  ReducedK K = rs.K(w);
  const double fv = f.value(w);
  MatrixXd S = MatrixXd::Zero(n, n);
  for (int al = 0; al < n; ++al)
    for (int be = 0; be < n; ++be)
      for (int i = 0; i < nc; ++i) S(al, be) -= fv * K.Kcyc(i, al, be) * rs.lambda()[i];
  return S;
}

/// Gradient of H(w, P') = H_R(w, P'/f): (dH/dw, dH/dP').
VectorXd rescaled_gradient(const ReducedSystem& rs, const Multiplier& f, const VectorXd& X) {
  const int n = rs.dim();
  MultiplierValue fv = f.eval(X.head(n));
  VectorXd xr = X;
  xr.tail(n) /= fv.f;
  VectorXd g = rs.hamiltonian_gradient(xr);
  VectorXd out(2 * n);
  const double contraction = g.tail(n).dot(xr.tail(n));
  out.head(n) = g.head(n) - contraction * fv.dr / fv.f;
  out.tail(n) = g.tail(n) / fv.f;
  return out;
}

}  // namespace

ReducedHamiltonization reduced_hamiltonize(const ReducedSystem& rs, const Multiplier& f, const SampleOptions& opt) {
  const int n = rs.dim();
  ReducedHamiltonization out;
  ResidualReport& rep = out.report;
  rep.operation = "reduced_hamiltonize";
  rep.seed = opt.seed;
  rep.tol = opt.tol;
  auto pts = sample_box(rs.box(), opt.count, opt.seed);
  rep.samples = static_cast<int>(pts.size());

  FamilyStat rthm{"reduced_local", 0.0, 0.0, VectorXd()};
  double sum = 0.0;
  for (const auto& w : pts) {
    MultiplierValue fv = f.eval(w);
    ReducedK K = rs.K(w);
    double worst = 0.0;
    for (int e = 0; e < n; ++e)
      for (int al = 0; al < n; ++al)
        for (int be = 0; be < n; ++be) {
          double C = (e == be ? fv.dr[al] : 0.0) - (e == al ? fv.dr[be] : 0.0);
          worst = std::max(worst, std::fabs(fv.f * K.Keps(e, be, al) - C));
        }
    if (!std::isfinite(worst)) throw SingularityError("non-finite reduced residual");
    if (worst >= rthm.max_residual) rthm.max_residual = worst, rthm.worst_point = w;
    sum += worst;
  }
  rthm.mean_residual = pts.empty() ? 0.0 : sum / static_cast<double>(pts.size());

  const ReducedSystem* rsp = &rs;
  out.gyroscopic = [rsp, f](const VectorXd& w) { return gyroscopic_matrix(*rsp, f, w); };
  out.bracket = [rsp, f, n](const VectorXd& X) {
    MatrixXd P = MatrixXd::Zero(2 * n, 2 * n);
    P.block(0, n, n, n) = MatrixXd::Identity(n, n);
    P.block(n, 0, n, n) = -MatrixXd::Identity(n, n);
    P.block(n, n, n, n) = gyroscopic_matrix(*rsp, f, X.head(n));
    return P;
  };
  out.flow = [rsp, f, n](const VectorXd& X) {
    VectorXd gH = rescaled_gradient(*rsp, f, X);
    const double fv = f.value(X.head(n));
    MatrixXd S = gyroscopic_matrix(*rsp, f, X.head(n));
    VectorXd dx(2 * n);
    dx.head(n) = fv * gH.tail(n);
    dx.tail(n) = fv * (-gH.head(n) + S * gH.tail(n));
    return dx;
  };
  out.energy = [rsp, f](const VectorXd& X) { return rsp->hamiltonian(reduced_unscale(*rsp, f, X)); };

  // Jacobiator on a handful of phase points built from the reduced box and momentum box
  std::vector<Interval> pbox = rs.box();
  for (int i = 0; i < n; ++i) pbox.push_back(rs.model().def().momentum_box);
  auto states = sample_box(pbox, std::min(opt.count, 20), opt.seed + 1);
  out.jacobi = jacobiator_scan(out.bracket, states);
  FamilyStat jac{"jacobi", out.jacobi.max_abs, out.jacobi.max_abs, out.jacobi.state};

  rep.families = {rthm, jac};
  if (n == 2) rep.notes.push_back("two-dimensional reduced space: the bracket is Poisson for any gyroscopic term");
  rep.finalize();
  return out;
}

GyroscopicForm gyroscopic_form(const ReducedSystem& rs, const Multiplier& f, const SampleOptions& opt) {
  const int n = rs.dim();
  GyroscopicForm out;
  auto box = rs.box();
  for (const auto& iv : box) out.base.push_back(iv.mid());
  const ReducedSystem* rsp = &rs;
  auto Sbar = [rsp, f](const VectorXd& w) { return gyroscopic_matrix(*rsp, f, w); };

  if (n >= 3) {
    auto pts = sample_box(box, std::min(opt.count, 30), opt.seed);
    for (const auto& w : pts) {
      std::vector<MatrixXd> dS;
      for (int a = 0; a < n; ++a) {
        const double h = 1e-5 * (1.0 + std::fabs(w[a]));
        VectorXd wp = w, wm = w;
        wp[a] += h;
        wm[a] -= h;
        dS.push_back((Sbar(wp) - Sbar(wm)) / (2 * h));
      }
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
          for (int c = b + 1; c < n; ++c)
            out.closedness = std::max(out.closedness, std::fabs(dS[a](b, c) + dS[b](c, a) + dS[c](a, b)));
    }
  }
  out.exact = n <= 2 || out.closedness <= 1e-7;
  if (!out.exact) return out;

  static const double nodes[10] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
                                   -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
                                   0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
                                   0.9739065285171717};
  static const double weights[10] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
                                     0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
                                     0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                                     0.0666713443086881};
  VectorXd base = Eigen::Map<const VectorXd>(out.base.data(), n);
  if (n == 2) {
    // gauge W_1 = 0, W_2 = int_{b1}^{w1} Sbar_12(s, w2) ds
    out.W = [Sbar, base](const VectorXd& w) {
      VectorXd W = VectorXd::Zero(2);
      const double a = base[0], b = w[0];
      const int panels = 2;
      const double h = (b - a) / panels;
      for (int p = 0; p < panels; ++p)
        for (int i = 0; i < 10; ++i) {
          VectorXd pt = w;
          pt[0] = a + (p + 0.5) * h + 0.5 * h * nodes[i];
          W[1] += 0.5 * h * weights[i] * Sbar(pt)(0, 1);
        }
      return W;
    };
  } else {
    // W_alpha(w) = int_0^1 t (w - b)^beta Sbar_{beta alpha}(b + t (w - b)) dt
    out.W = [Sbar, base, n](const VectorXd& w) {
      VectorXd W = VectorXd::Zero(n);
      VectorXd d = w - base;
      for (int p = 0; p < 2; ++p)
        for (int i = 0; i < 10; ++i) {
          const double t = 0.25 + 0.5 * p + 0.25 * nodes[i];
          W += 0.25 * weights[i] * t * (Sbar(base + t * d).transpose() * d);
        }
      return W;
    };
  }
  auto W = out.W;
  out.to_bracket_coordinates = [W, n](const VectorXd& X) {
    VectorXd Y = X;
    Y.tail(n) -= W(X.head(n));
    return Y;
  };
  out.from_bracket_coordinates = [W, n](const VectorXd& X) {
    VectorXd Y = X;
    Y.tail(n) += W(X.head(n));
    return Y;
  };
  out.flow = [rsp, f, W, Sbar, n](const VectorXd& X) {
    VectorXd w = X.head(n);
    VectorXd Y = X;
    Y.tail(n) -= W(w);
    VectorXd gH = rescaled_gradient(*rsp, f, Y);
    // dW(a, b) = d W_b / d w_a
    MatrixXd dW(n, n);
    if (n == 2) {
      const double h = 1e-5 * (1.0 + std::fabs(w[1]));
      VectorXd wp = w, wm = w;
      wp[1] += h;
      wm[1] -= h;
      dW << 0.0, Sbar(w)(0, 1), 0.0, (W(wp)[1] - W(wm)[1]) / (2 * h);
    } else {
      for (int a = 0; a < n; ++a) {
        const double h = 1e-5 * (1.0 + std::fabs(w[a]));
        VectorXd wp = w, wm = w;
        wp[a] += h;
        wm[a] -= h;
        dW.row(a) = ((W(wp) - W(wm)) / (2 * h)).transpose();
      }
    }
    const double fv = f.value(w);
    VectorXd dx(2 * n);
    dx.head(n) = fv * gH.tail(n);
    dx.tail(n) = -fv * (gH.head(n) - dW * gH.tail(n));
    return dx;
  };
  return out;
}

}  // namespace nhk
