#include <doctest.h>

#include <cmath>

#include "mech_oracle.hpp"
#include "nhk/dynamics.hpp"
#include "nhk/errors.hpp"
#include "nhk/hamiltonize.hpp"
#include "nhk/multiplier.hpp"
#include "nhk/systems.hpp"
#include "oracles.hpp"

using namespace nhk;

namespace {

const char* kChaplyginAbelian[] = {"vertical_disk", "free_particle", "chaplygin_sphere", "snakeboard", "iliyev"};

std::vector<VectorXd> configs(const Model& model, int n, std::uint64_t seed) {
  SampleOptions o;
  o.count = n;
  o.seed = seed;
  return sample_configurations(model, o);
}

}  // namespace

TEST_CASE("constrained metric matches the horizontal pullback of the full metric") {
  for (const char* name : kChaplyginAbelian) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    oracle::Mechanics mech(e.def);
    for (const auto& q : configs(model, 30, 2)) {
      MatrixXd G = model.derived(q).G;
      CHECK((G - mech.constrained_metric(q)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("curvature of an abelian connection is its exterior derivative") {
  for (const char* name : kChaplyginAbelian) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    const SystemDef& d = e.def;
    for (const auto& q : configs(model, 10, 3)) {
      Tensor3 B = model.curvature(q);
      auto A_along = [&](int a, int al, int dir) {
        return [&, a, al, dir](double t) {
          std::map<std::string, double> env = d.params;
          for (int i = 0; i < d.m; ++i) env[d.shape[i]] = q[i];
          for (int i = 0; i < d.k; ++i) env[d.group[i]] = q[d.m + i];
          env[d.shape[dir]] = t;
          return d.A(a, al) ? expr::evaluate(d.A(a, al), env) : 0.0;
        };
      };
      for (int a = 0; a < d.k; ++a)
        for (int al = 0; al < d.m; ++al)
          for (int be = 0; be < d.m; ++be) {
            double expected = oracle::derivative(A_along(a, al, be), q[be]) - oracle::derivative(A_along(a, be, al), q[al]);
            CHECK(B(a, al, be) == doctest::Approx(expected).epsilon(1e-7).scale(1.0));
          }
    }
  }
}

TEST_CASE("free particle curvature pairing has the hand-derived closed form") {
  const auto& e = registry_get("free_particle");
  Model model(e.def);
  for (double x : {-1.7, -0.3, 0.0, 0.8, 1.0, 1.9}) {
    VectorXd r(2);
    r << x, 0.4;
    GeometryAtPoint g = model.derived(model.point(r));
    CHECK(g.Kchap(1, 0, 1) == doctest::Approx(x / (1 + x * x)).epsilon(1e-14));
    CHECK(g.Kchap(1, 1, 0) == doctest::Approx(-x / (1 + x * x)).epsilon(1e-14));
    CHECK(std::fabs(g.Kchap(0, 0, 1)) < 1e-15);
    CHECK(g.G(1, 1) == doctest::Approx(1 + x * x));
  }
}

TEST_CASE("vertical disk has vanishing K tensors") {
  const auto& e = registry_get("vertical_disk");
  Model model(e.def);
  double worst = 0.0;
  for (const auto& q : configs(model, 200, 4)) worst = std::max(worst, model.derived(q).Kchap.max_abs());
  CHECK(worst <= 1e-12);
}

TEST_CASE("metric gradient agrees with differences of the constrained metric") {
  const auto& e = registry_get("chaplygin_sphere");
  Model model(e.def);
  for (const auto& q : configs(model, 5, 6)) {
    MetricGradient mg = model.metric_gradient(q);
    for (int c = 0; c < model.m(); ++c)
      for (int i = 0; i < model.m(); ++i)
        for (int j = 0; j < model.m(); ++j) {
          double num = oracle::derivative(
              [&](double t) {
                VectorXd y = q;
                y[c] = t;
                return model.derived(y).G(i, j);
              },
              q[c]);
          CHECK(mg.dG[c](i, j) == doctest::Approx(num).epsilon(1e-8).scale(1.0));
        }
  }
}

TEST_CASE("singular constrained metric is reported") {
  SystemDef d = registry_get("free_particle").def;
  d.g_rr(0, 0) = expr::constant(0.0);
  Model model(d);
  VectorXd r(2);
  r << 0.3, 0.1;
  CHECK_THROWS_AS(model.derived(model.point(r)), DegenerateMetricError);
}

TEST_CASE("symbolic multiplier values and gradients") {
  const auto& e = registry_get("free_particle");
  Model model(e.def);
  Multiplier f = Multiplier::from_expr(*e.multiplier, model);
  for (double x : {-1.5, 0.2, 1.3}) {
    VectorXd r(2);
    r << x, -0.7;
    MultiplierValue v = f.eval(model.point(r));
    CHECK(v.f == doctest::Approx(1 / std::sqrt(1 + x * x)).epsilon(1e-14));
    CHECK(v.dr[0] == doctest::Approx(-x / std::pow(1 + x * x, 1.5)).epsilon(1e-13));
    CHECK(v.dr[1] == 0.0);
  }
  Multiplier z = Multiplier::from_expr(expr::parse("x"), model);
  VectorXd r0 = VectorXd::Zero(2);
  CHECK_THROWS_AS(z.eval(model.point(r0)), MultiplierVanishesError);
}

TEST_CASE("lda flow agrees with the multiplier form of the Lagrange-d'Alembert equations") {
  for (const char* name : kChaplyginAbelian) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    oracle::Mechanics mech(e.def);
    VectorField F = lda_flow(model);
    SampleOptions o;
    o.count = 10;
    o.seed = 8;
    for (const auto& x : sample_states(model, o)) {
      const int m = model.m();
      VectorXd q = model.point(x.head(m));
      MatrixXd G = mech.constrained_metric(q);
      VectorXd rdot = G.ldlt().solve(x.segment(m, m));
      VectorXd qd = mech.horizontal(q) * rdot;
      VectorXd qdd = mech.acceleration(q, qd);
      // p = G(r) r-dot, so p-dot = G-dot r-dot + G r-ddot
      MatrixXd Gdot = MatrixXd::Zero(m, m);
      for (int j = 0; j < m; ++j) {
        MatrixXd dG = (mech.constrained_metric([&] { VectorXd y = q; y[j] += 1e-5; return y; }()) -
                       mech.constrained_metric([&] { VectorXd y = q; y[j] -= 1e-5; return y; }())) / 2e-5;
        Gdot += rdot[j] * dG;
      }
      VectorXd pdot = Gdot * rdot + G * qdd.head(m);
      VectorXd got = F(x);
      CHECK((got.head(m) - rdot).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((got.tail(m) - pdot).cwiseAbs().maxCoeff() < 1e-6 * (1 + pdot.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("sleigh momentum equations match the hand-derived form") {
  const auto& e = registry_get("chaplygin_sleigh");
  Model model(e.def);
  VectorField F = lda_flow(model);
  for (auto [u, w] : std::vector<std::pair<double, double>>{{0.5, 0.4}, {-0.3, 0.9}, {1.0, -0.2}}) {
    VectorXd p(2);
    p << u, w;
    CHECK((F(p) - oracle::sleigh_rhs(p)).cwiseAbs().maxCoeff() < 1e-14);
  }
  VectorXd p(2);
  p << 0.5, 0.4;
  CHECK(F(p)[0] == doctest::Approx(0.04));
  CHECK(F(p)[1] == doctest::Approx(-0.1));
}
