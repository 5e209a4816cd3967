#include <doctest.h>

#include <cmath>

#include "nhk/condvar.hpp"
#include "nhk/errors.hpp"
#include "nhk/systems.hpp"

using namespace nhk;

namespace {

double eval_at(const VariationalLagrangian& lv, const Expr& e, const VectorXd& x) {
  std::map<std::string, double> env = lv.params;
  for (int i = 0; i < lv.n(); ++i) {
    env[lv.coords[i]] = x[i];
    env[lv.omega[i]] = x[lv.n() + i];
  }
  return expr::evaluate(e, env);
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("vertical disk variational Lagrangian has the displayed form") {
  Model disk(registry_get("vertical_disk").def);
  VariationalLagrangian lv = build_variational(disk, expr::constant(1.0));
  CHECK(lv.omega == std::vector<std::string>{"omega_theta", "omega_phi", "omega_x", "omega_y"});
  Expr expected = expr::parse(
      "-mass/2*(omega_x^2 + omega_y^2) + I/2*omega_theta^2 + J/2*omega_phi^2"
      " + mass*R*omega_theta*(omega_x*cos(phi) + omega_y*sin(phi))");
  CHECK(expr::equivalent(lv.LV, expected));
}

TEST_CASE("free particle variational Lagrangian") {
  const auto& e = registry_get("free_particle");
  Model fp(e.def);
  VariationalLagrangian lv = build_variational(fp, *e.multiplier);
  for (const auto& x : {vec({0.3, -1.0, 0.2, 0.5, -0.4, 0.9}), vec({-1.7, 0.4, 0.0, -0.2, 1.1, 0.3}),
                        vec({1.2, 0.0, -0.5, 0.8, 0.7, -0.6})}) {
    const double X = x[0], wx = x[3], wy = x[4], wz = x[5];
    const double expected = (wx * wx + wy * wy - wz * wz - 2 * X * wy * wz) / (2 * (1 + X * X));
    CHECK(eval_at(lv, lv.LV, x) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("variational Lagrangian agrees with the original one on the constraint set") {
  const auto& e = registry_get("chaplygin_sphere");
  Model sphere(e.def);
  VariationalLagrangian lv = build_variational(sphere, expr::constant(1.0));
  for (const auto& x : {vec({1.0, 0.3, -0.4, 0.1, 0.2, 0.5, -0.3, 0.8, 0.3, -0.2}),
                        vec({2.1, -1.2, 2.0, -0.3, 0.7, -0.5, 0.1, 0.2, -0.4, 0.6})}) {
    VectorXd y = project_onto_constraints(lv, x).state;
    CHECK(constraint_values(lv, y).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(eval_at(lv, lv.LV, y) == doctest::Approx(eval_at(lv, lv.L, y)).epsilon(1e-14));
    CHECK(eval_at(lv, lv.LV, x) != doctest::Approx(eval_at(lv, lv.L, x)));
  }
}

TEST_CASE("free particle quasivelocity equations") {
  const auto& e = registry_get("free_particle");
  Model fp(e.def);
  VariationalLagrangian lv = build_variational(fp, *e.multiplier);
  VectorField F = almost_el_flow(lv);
  for (const auto& x0 : {vec({0.6, 0.1, 0.0, 0.4, -0.3, 0}), vec({-1.3, -0.8, 0.5, -0.7, 0.9, 0})}) {
    VectorXd x = project_onto_constraints(lv, x0).state;
    const double X = x[0], wx = x[3];
    VectorXd dx = F(x);
    CHECK(dx[3] == doctest::Approx(X * wx * wx / std::pow(1 + X * X, 1.5)).epsilon(1e-12));
    CHECK(std::fabs(dx[4]) < 1e-13);
  }
}

TEST_CASE("constraints weighted by f are first integrals") {
  const auto& e = registry_get("free_particle");
  Model fp(e.def);
  VariationalLagrangian lv = build_variational(fp, *e.multiplier);
  VectorField F = almost_el_flow(lv);
  VectorXd on = project_onto_constraints(lv, vec({0.4, 0.2, 0.0, 0.6, -0.5, 0})).state;
  Trajectory a = integrate(F, on, 0.0, 10.0, 1e-3);
  REQUIRE_FALSE(a.truncated);
  CHECK(constraint_conservation(lv, a) <= 1e-8);
  double worst = 0.0;
  for (const auto& x : a.x) worst = std::max(worst, std::fabs(constraint_values(lv, x)[0]));
  CHECK(worst <= 1e-8);

  VectorXd off = on;
  off[5] += 0.3;
  const double f0 = 1.0 / std::sqrt(1 + off[0] * off[0]);
  CHECK(constraint_values(lv, off)[0] == doctest::Approx(0.3 * f0));
  Trajectory b = integrate(F, off, 0.0, 10.0, 1e-3);
  REQUIRE_FALSE(b.truncated);
  CHECK(constraint_conservation(lv, b) <= 1e-8);
  for (std::size_t i = 0; i < b.size(); i += 1000) {
    const double f = 1.0 / std::sqrt(1 + b.x[i][0] * b.x[i][0]);
    CHECK(f * constraint_values(lv, b.x[i])[0] == doctest::Approx(f0 * 0.3 * f0).epsilon(1e-8));
  }
}

TEST_CASE("vertical disk: conditionally variational flow follows the rolling solution") {
  const auto& e = registry_get("vertical_disk");
  Model disk(e.def);
  VariationalLagrangian lv = build_variational(disk, expr::constant(1.0));
  VectorXd x0 = project_onto_constraints(lv, vec({0.2, 0.5, 0.1, -0.3, 0.7, 0.4, 0, 0})).state;
  Trajectory tr = integrate(almost_el_flow(lv), x0, 0.0, 10.0, 1e-3);
  REQUIRE_FALSE(tr.truncated);
  CHECK(constraint_conservation(lv, tr) <= 1e-12);
  const double R = 1.0, th0 = 0.2, ph0 = 0.5, wt = 0.7, wp = 0.4;
  double worst = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.t[i], ph = ph0 + wp * t;
    VectorXd ref = vec({th0 + wt * t, ph, 0.1 + R * wt * (std::sin(ph) - std::sin(ph0)) / wp,
                        -0.3 - R * wt * (std::cos(ph) - std::cos(ph0)) / wp, wt, wp, R * wt * std::cos(ph),
                        R * wt * std::sin(ph)});
    worst = std::max(worst, (tr.x[i] - ref).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("conditionally variational flow reproduces the nonholonomic flow") {
  for (const char* name : {"vertical_disk", "free_particle", "iliyev"}) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    VariationalLagrangian lv = build_variational(model, *e.multiplier);
    VectorXd x0(2 * model.m() + model.k());
    x0 << e.initial_state, model.default_group();
    Trajectory lda = integrate(lda_flow_with_group(model), x0, 0.0, 10.0, 1e-3);
    VectorXd y0 = lda_to_quasivelocity(model, lv, x0);
    CHECK(project_onto_constraints(lv, y0).residual < 1e-13);
    Trajectory cv = integrate(almost_el_flow(lv), y0, 0.0, 10.0, 1e-3);
    REQUIRE_FALSE(cv.truncated);
    CHECK(compare(lda, cv, [&](const VectorXd& y) { return quasivelocity_to_lda(model, lv, y); }) <= 1e-8);
  }
}

TEST_CASE("unsupported systems are rejected") {
  Model sleigh(registry_get("chaplygin_sleigh").def);
  CHECK_THROWS_AS(build_variational(sleigh, expr::constant(1.0)), ConfigError);
  SystemDef d = registry_get("free_particle").def;
  d.g_gg(0, 0) = expr::constant(0.0);
  Model bad(d);
  CHECK_THROWS_AS(build_variational(bad, expr::constant(1.0)), NotConditionallyVariationalError);
}
