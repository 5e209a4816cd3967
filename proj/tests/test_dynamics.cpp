#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mech_oracle.hpp"
#include "nhk/dynamics.hpp"
#include "nhk/errors.hpp"
#include "nhk/systems.hpp"

using namespace nhk;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

VectorXd oscillator(const VectorXd& x) { return vec({x[1], -x[0]}); }

double oscillator_error(double h) {
  Trajectory tr = integrate(oscillator, vec({1.0, 0.0}), 0.0, 10.0, h);
  return std::hypot(tr.x.back()[0] - std::cos(10.0), tr.x.back()[1] + std::sin(10.0));
}

}  // namespace

TEST_CASE("RK4 is fourth order") {
  const double e1 = oscillator_error(0.1), e2 = oscillator_error(0.05), e3 = oscillator_error(0.025);
  CHECK(e1 / e2 >= 14.0);
  CHECK(e1 / e2 <= 18.0);
  CHECK(e2 / e3 >= 14.0);
  CHECK(e2 / e3 <= 18.0);
}

TEST_CASE("grid and reparameterized time") {
  ScalarField rate = [](const VectorXd& x) { return 2.0 + std::cos(x[0]); };
  Trajectory tr = integrate([](const VectorXd&) { return vec({1.0}); }, vec({0.0}), 0.0, 3.0, 0.01, &rate);
  REQUIRE(tr.size() == 301);
  CHECK(tr.t.back() == doctest::Approx(3.0));
  CHECK(tr.has_tau());
  for (std::size_t i = 0; i < tr.size(); i += 50)
    CHECK(tr.tau[i] == doctest::Approx(2 * tr.t[i] + std::sin(tr.t[i])).epsilon(1e-11));
}

TEST_CASE("a singular field truncates the run") {
  VectorField F = [](const VectorXd& x) -> VectorXd {
    if (x[0] > 0.5) throw SingularityError("pole");
    return vec({1.0});
  };
  Trajectory tr = integrate(F, vec({0.0}), 0.0, 1.0, 0.01);
  CHECK(tr.truncated);
  CHECK(tr.t.back() < 0.52);
  CHECK(tr.message.find("pole") != std::string::npos);
}

TEST_CASE("interpolation is exact for cubics") {
  Trajectory tr = integrate([](const VectorXd& x) { return vec({1.0, 3 * x[0] * x[0]}); }, vec({0.0, 0.0}), 0.0, 1.0,
                            0.1);
  for (double t : {0.05, 0.33, 0.71, 0.97}) CHECK(sample_at(tr, t)[1] == doctest::Approx(t * t * t).epsilon(1e-9));
}

TEST_CASE("compare rejects mismatched spans") {
  Trajectory a = integrate(oscillator, vec({1.0, 0.0}), 0.0, 1.0, 0.01);
  Trajectory b = integrate(oscillator, vec({1.0, 0.0}), 0.0, 2.0, 0.01);
  CHECK_THROWS_AS(compare(a, b), ConfigError);
  CHECK(compare(a, a) == 0.0);
}

TEST_CASE("CSV rows round-trip at full precision") {
  Trajectory tr = integrate(oscillator, vec({1.0, 0.0}), 0.0, 0.3, 0.1);
  std::ostringstream os;
  write_csv(os, tr, {"x", "v"});
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,x,v");
  std::getline(in, line);
  std::getline(in, line);
  double t = 0, x = 0, v = 0;
  REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &x, &v) == 3);
  CHECK(x == tr.x[1][0]);
  CHECK(v == tr.x[1][1]);
}

TEST_CASE("unknown state maps are configuration errors") {
  const auto& e = registry_get("free_particle");
  Model model(e.def);
  Multiplier f = Multiplier::from_expr(*e.multiplier, model);
  CHECK_THROWS_AS(named_map("sideways", model, f), ConfigError);
}

TEST_CASE("lda flow with group coordinates follows the multiplier-form reference") {
  for (const char* name : {"free_particle", "vertical_disk"}) {
    CAPTURE(name);
    const auto& e = registry_get(name);
    Model model(e.def);
    oracle::Mechanics mech(e.def);
    const int m = model.m(), k = model.k();
    VectorXd x0(2 * m + k);
    x0 << e.initial_state, model.default_group();
    Trajectory tr = integrate(lda_flow_with_group(model), x0, 0.0, 2.0, 0.01);
    VectorXd q0 = model.point(x0.head(m));
    VectorXd rdot = mech.constrained_metric(q0).ldlt().solve(x0.segment(m, m));
    auto ref = mech.integrate(q0, mech.horizontal(q0) * rdot, 2.0, 0.01);
    REQUIRE(ref.size() == tr.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      worst = std::max(worst, (tr.x[i].head(m) - ref[i].head(m)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (tr.x[i].tail(k) - ref[i].segment(m, k)).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("sleigh trajectory follows the hand-derived equations") {
  const auto& e = registry_get("chaplygin_sleigh");
  Model model(e.def);
  Trajectory tr = integrate(lda_flow(model), e.initial_state, 0.0, 10.0, 1e-3);
  Trajectory ref = integrate(oracle::sleigh_rhs, e.initial_state, 0.0, 10.0, 1e-3);
  CHECK(compare(tr, ref) < 1e-12);
}

TEST_CASE("original and Hamiltonized flows agree for every known multiplier") {
  for (const auto& name : registry_names()) {
    const auto& e = registry_get(name);
    if (!e.multiplier) continue;
    CAPTURE(name);
    Model model(e.def);
    Multiplier f = Multiplier::from_expr(*e.multiplier, model);
    Trajectory a = integrate(lda_flow(model), e.initial_state, 0.0, 10.0, 1e-3);
    ScalarField rate = [&](const VectorXd& x) { return f.value(model.point(x.head(model.m()))); };
    Trajectory b =
        integrate(hamiltonized_flow(model, f), rescale_momenta(model, f, e.initial_state), 0.0, 10.0, 1e-3, &rate);
    REQUIRE_FALSE(a.truncated);
    REQUIRE_FALSE(b.truncated);
    CHECK(compare(a, b, named_map("momenta-scale-by-f", model, f)) <= 1e-8);
    CHECK(energy_drift(hamiltonized_energy(model, f), b) <= 1e-9);
    CHECK(energy_drift([&](const VectorXd& x) { return hamiltonian(model, x); }, a) <= 1e-9);
    for (std::size_t i = 1; i < b.size(); ++i) REQUIRE(b.tau[i] > b.tau[i - 1]);
  }
}

TEST_CASE("rescaling momenta is invertible") {
  const auto& e = registry_get("iliyev");
  Model model(e.def);
  Multiplier f = Multiplier::from_expr(*e.multiplier, model);
  VectorXd x = e.initial_state;
  CHECK((unscale_momenta(model, f, rescale_momenta(model, f, x)) - x).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(rescale_momenta(model, f, x)[3] == doctest::Approx(std::cos(0.2) * x[3]));
}
