#include <doctest.h>

#include <cmath>

#include "nhk/errors.hpp"
#include "nhk/routh.hpp"
#include "nhk/systems.hpp"

using namespace nhk;

namespace {

Multiplier reduced_multiplier(const ReducedSystem& rs, const std::string& text) {
  return Multiplier::symbolic(expr::parse(text), rs.names(), {}, rs.model().def().params);
}

double projected_deviation(const ReducedSystem& rs, const Trajectory& full, const Trajectory& reduced) {
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i)
    worst = std::max(worst, (rs.project(full.x[i]) - reduced.x[i]).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace

TEST_CASE("cyclic detection") {
  Model snake(registry_get("snakeboard").def);
  CyclicSplit s = detect_cyclic(snake);
  CHECK(s.cyclic_names(snake.def()) == std::vector<std::string>{"psi"});
  CHECK(s.excluded == std::vector<std::string>{"theta"});
  CHECK(s.candidates[1].by_ast);
  CHECK(s.candidates[1].strict);

  Model sphere(registry_get("chaplygin_sphere").def);
  CyclicSplit t = detect_cyclic(sphere);
  CHECK(t.cyclic_names(sphere.def()) == std::vector<std::string>{"psi"});
  CHECK_FALSE(t.candidates[2].by_ast);
  CHECK_FALSE(t.candidates[2].strict);

  Model fp(registry_get("free_particle").def);
  CyclicSplit u = detect_cyclic(fp);
  CHECK(u.cyclic.empty());
  CHECK(u.excluded == std::vector<std::string>{"y"});
}

TEST_CASE("reduction errors") {
  Model fp(registry_get("free_particle").def);
  CHECK_THROWS_AS(reduce(fp, {1.0}), ReductionError);
  Model snake(registry_get("snakeboard").def);
  CHECK_THROWS_AS(reduce(snake, {1.0, 2.0}), ReductionError);
  CHECK_THROWS_AS(reduce(snake, {1.0}, std::vector<std::string>{"theta"}), ReductionError);
  CHECK_THROWS_AS(reduce(snake, {1.0}, std::vector<std::string>{"nope"}), ReductionError);
}

TEST_CASE("lift and project") {
  Model snake(registry_get("snakeboard").def);
  ReducedSystem rs = reduce(snake, {0.5});
  CHECK(rs.names() == std::vector<std::string>{"theta", "phi"});
  VectorXd xr(4);
  xr << 0.1, 0.7, -0.2, 0.3;
  VectorXd x = rs.lift(xr);
  CHECK(x[4] == 0.5);
  CHECK(rs.project(x) == xr);
}

TEST_CASE("cyclic momentum is conserved along full trajectories") {
  for (const char* name : {"snakeboard", "chaplygin_sphere"}) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    Trajectory tr = integrate(lda_flow(model), e.initial_state, 0.0, 10.0, 1e-3);
    REQUIRE_FALSE(tr.truncated);
    const int m = model.m(), psi = 2;
    const int idx = name == std::string("snakeboard") ? 1 : psi;
    const double lam = e.initial_state[m + idx];
    double worst = 0.0;
    for (const auto& x : tr.x) worst = std::max(worst, std::fabs(x[m + idx] - lam));
    CHECK(worst <= 1e-8 * (1 + std::fabs(lam)));
  }
}

TEST_CASE("reduction commutes with the flow") {
  for (const char* name : {"snakeboard", "chaplygin_sphere"}) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    const int m = model.m();
    const int idx = name == std::string("snakeboard") ? 1 : 2;
    ReducedSystem rs = reduce(model, {e.initial_state[m + idx]});
    Trajectory full = integrate(lda_flow(model), e.initial_state, 0.0, 5.0, 1e-3);
    Trajectory red = integrate(rs.flow(), rs.project(e.initial_state), 0.0, 5.0, 1e-3);
    CHECK(projected_deviation(rs, full, red) <= 1e-6);
  }
}

TEST_CASE("snakeboard: tan(phi) Hamiltonizes the reduced system with term sec^2(phi) lambda") {
  Model snake(registry_get("snakeboard").def);
  ReducedSystem rs = reduce(snake, {0.5});
  CHECK(rs.strict());
  Solve2dofResult sol = solve_reduced_2dof(rs);
  REQUIRE(sol.symbolic.has_value());
  CHECK(expr::to_string(*sol.symbolic) == "tan(phi)");

  Multiplier f = reduced_multiplier(rs, "tan(phi)");
  ReducedHamiltonization rh = reduced_hamiltonize(rs, f);
  CHECK(rh.report.pass);
  CHECK(rh.jacobi.max_abs <= 1e-9);
  auto pts = sample_box(rs.box(), 100, 12);
  for (const auto& w : pts) {
    const double c = std::cos(w[1]);
    CHECK(rh.gyroscopic(w)(0, 1) == doctest::Approx(0.5 / (c * c)).epsilon(1e-10));
  }
  ReducedHamiltonization bad = reduced_hamiltonize(rs, reduced_multiplier(rs, "1"));
  CHECK_FALSE(bad.report.pass);
}

TEST_CASE("snakeboard: Routhian, rescaled and canonical flows agree") {
  const auto& e = registry_get("snakeboard");
  Model snake(e.def);
  ReducedSystem rs = reduce(snake, {0.5});
  Multiplier f = reduced_multiplier(rs, "tan(phi)");
  ReducedHamiltonization rh = reduced_hamiltonize(rs, f);
  VectorXd x0 = rs.project(e.initial_state);
  Trajectory a = integrate(rs.flow(), x0, 0.0, 5.0, 1e-3);
  Trajectory b = integrate(rh.flow, reduced_rescale(rs, f, x0), 0.0, 5.0, 1e-3);
  CHECK(compare(a, b, [&](const VectorXd& X) { return reduced_unscale(rs, f, X); }) <= 1e-8);
  CHECK(energy_drift(rh.energy, b) <= 1e-9);

  GyroscopicForm gf = gyroscopic_form(rs, f);
  REQUIRE(gf.exact);
  // dW = Sbar at a few points
  for (const auto& w : sample_box(rs.box(), 5, 13)) {
    const double h = 1e-5;
    VectorXd w1 = w, w0 = w;
    w1[0] += h;
    w0[0] -= h;
    VectorXd v1 = w, v0 = w;
    v1[1] += h;
    v0[1] -= h;
    double curl = (gf.W(w1)[1] - gf.W(w0)[1]) / (2 * h) - (gf.W(v1)[0] - gf.W(v0)[0]) / (2 * h);
    CHECK(curl == doctest::Approx(rh.gyroscopic(w)(0, 1)).epsilon(1e-7));
  }
  Trajectory c = integrate(gf.flow, gf.from_bracket_coordinates(reduced_rescale(rs, f, x0)), 0.0, 5.0, 1e-3);
  CHECK(compare(b, c, gf.to_bracket_coordinates) <= 1e-8);
}

TEST_CASE("sphere: reduced gyroscopic term has the closed form for the normalized measure") {
  Model sphere(registry_get("chaplygin_sphere").def);
  ReducedSystem rs = reduce(sphere, {1.0});
  CHECK_FALSE(rs.strict());
  Solve2dofResult sol = solve_reduced_2dof(rs);
  VectorXd c(2);
  c << M_PI / 2, 0.0;
  const double norm = sphere_reference_density(sphere.def(), M_PI / 2, 0.0) / sol.f.value(c);
  ReducedHamiltonization rh = reduced_hamiltonize(rs, sol.f);
  CHECK(rh.report.pass);
  const double I1 = 1, I2 = 2, I3 = 3;
  for (const auto& w : sample_box(rs.box(), 40, 14)) {
    const double f = norm * sol.f.value(w), th = w[0], ph = w[1];
    const double expected = -(I3 + 1) * f * f * f * std::sin(th) * (I1 * std::cos(ph) * std::cos(ph) + I2 * std::sin(ph) * std::sin(ph) + 1);
    CHECK(norm * rh.gyroscopic(w)(0, 1) == doctest::Approx(expected).epsilon(1e-8).scale(1.0));
    CHECK(f == doctest::Approx(sphere_reference_density(sphere.def(), th, ph)).epsilon(1e-8));
  }
}
