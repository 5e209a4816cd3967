#include "nhk/systems.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nhk/errors.hpp"

namespace nhk {

namespace {

const char* kVerticalDisk = R"([system]
name = vertical_disk
kind = chaplygin
description = disk rolling upright without slipping on a plane

[dims]
m = 2
k = 2
s = 0

[coords]
shape = theta, phi
group = x, y

[params]
mass = 1
R = 1
I = 0.5
J = 0.25

[domain]
theta = -3, 3
phi = -3, 3
x = -1, 1
y = -1, 1
momentum = -1, 1

[metric.g_alpha_beta]
1,1 = I
2,2 = J

[metric.g_a_alpha]

[metric.g_ab]
1,1 = mass
2,2 = mass

[connection]
1,1 = -R*cos(phi)
2,1 = -R*sin(phi)
)";

const char* kFreeParticle = R"([system]
name = free_particle
kind = chaplygin
description = unit-mass particle with the constraint zdot + x ydot = 0

[dims]
m = 2
k = 1
s = 0

[coords]
shape = x, y
group = z

[domain]
x = -2, 2
y = -2, 2
z = -1, 1
momentum = -1, 1

[metric.g_alpha_beta]
1,1 = 1
2,2 = 1

[metric.g_a_alpha]

[metric.g_ab]
1,1 = 1

[connection]
1,2 = x
)";

const char* kChaplyginSphere = R"([system]
name = chaplygin_sphere
kind = chaplygin
description = unit ball with distinct principal moments rolling on a plane, Euler angles

[dims]
m = 3
k = 2
s = 0

[coords]
shape = theta, phi, psi
group = x, y

[params]
I1 = 1
I2 = 2
I3 = 3

[domain]
theta = 0.4, 2.7
phi = -3, 3
psi = -3, 3
x = -1, 1
y = -1, 1
momentum = -1, 1

[metric.g_alpha_beta]
1,1 = I1*cos(phi)^2 + I2*sin(phi)^2
1,3 = (I1 - I2)*sin(phi)*cos(phi)*sin(theta)
2,2 = I3
2,3 = I3*cos(theta)
3,3 = I1*sin(phi)^2*sin(theta)^2 + I2*cos(phi)^2*sin(theta)^2 + I3*cos(theta)^2

[metric.g_a_alpha]

[metric.g_ab]
1,1 = 1
2,2 = 1

[connection]
1,1 = -sin(psi)
1,2 = cos(psi)*sin(theta)
2,1 = cos(psi)
2,2 = sin(psi)*sin(theta)
)";

const char* kSnakeboard = R"([system]
name = snakeboard
kind = chaplygin
description = board with coupled wheel axles and a rotor, unit parameters, phi1 = -phi2

[dims]
m = 3
k = 2
s = 0

[coords]
shape = theta, psi, phi
group = x, y

[domain]
theta = -3, 3
psi = -3, 3
phi = 0.1, pi/2 - 0.1
x = -1, 1
y = -1, 1
momentum = -1, 1

[metric.g_alpha_beta]
1,1 = 1
1,2 = 1
2,2 = 1
3,3 = 2

[metric.g_a_alpha]

[metric.g_ab]
1,1 = 1
2,2 = 1

[connection]
1,1 = cos(phi)/sin(phi)*cos(theta)
2,1 = cos(phi)/sin(phi)*sin(theta)
)";

const char* kChaplyginSleigh = R"([system]
name = chaplygin_sleigh
kind = eps
description = planar body on a knife edge, left-invariant on SE(2), unit parameters

[dims]
m = 0
k = 3
s = 2

[coords]
group = x, y, theta

[domain]
x = -1, 1
y = -1, 1
theta = -3, 3
momentum = -1, 1

[metric.g_ab]
1,1 = 1
2,2 = 1
2,3 = 1
3,3 = 2

[body_basis]
1,1 = 1
3,2 = 1

[structure_constants]
2,1,3 = -1
1,2,3 = 1

[group_frame]
1,1 = cos(theta)
1,2 = -sin(theta)
2,1 = sin(theta)
2,2 = cos(theta)
3,3 = 1
)";

const char* kIliyev = R"([system]
name = iliyev
kind = chaplygin
description = five-dimensional example with qdot4 = qdot2 tan q1, qdot5 = qdot3 tan q1

[dims]
m = 3
k = 2
s = 0

[coords]
shape = q1, q2, q3
group = q4, q5

[domain]
q1 = -1.2, 1.2
q2 = -2, 2
q3 = -2, 2
q4 = -1, 1
q5 = -1, 1
momentum = -1, 1

[metric.g_alpha_beta]
1,1 = 1
2,2 = 1
3,3 = 1

[metric.g_a_alpha]

[metric.g_ab]
1,1 = 1
2,2 = 1

[connection]
1,2 = -tan(q1)
2,3 = -tan(q1)
)";

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

RegistryEntry make(const char* text) {
  RegistryEntry e;
  e.source_text = text;
  e.def = parse_system(text);
  e.name = e.def.name;
  return e;
}

std::map<std::string, RegistryEntry> build() {
  std::map<std::string, RegistryEntry> reg;
  {
    RegistryEntry e = make(kVerticalDisk);
    e.multiplier = expr::parse("1");
    e.measure = expr::parse("1");
    e.initial_state = vec({0.0, 0.3, 0.7, 0.2});
    e.golden = {{"max |K| (connection curvature pairing)", 0.0, "published"}};
    reg.emplace(e.name, e);
  }
  {
    RegistryEntry e = make(kFreeParticle);
    e.multiplier = expr::parse("(1+x^2)^(-1/2)");
    e.measure = expr::parse("(1+x^2)^(-1/2)");
    e.initial_state = vec({0.5, 0.0, 0.3, 0.4});
    e.golden = {{"Lambda_xy / p_y at x = 1", -0.5, "derived"},
                {"K^2_12 at x = 1", 0.5, "derived"}};
    reg.emplace(e.name, e);
  }
  {
    RegistryEntry e = make(kChaplyginSphere);
    e.initial_state = vec({1.2, 0.3, 0.0, 0.2, 0.1, 1.0});
    e.reduction = ReductionInfo{{"psi"}, {1.0}, std::nullopt};
    e.golden = {{"reference density at theta = pi/2, phi = 0", 0.25, "derived"}};
    reg.emplace(e.name, e);
  }
  {
    RegistryEntry e = make(kSnakeboard);
    e.initial_state = vec({0.0, 0.0, 0.7, 0.3, 0.5, 0.04});
    e.reduction = ReductionInfo{{"psi"}, {0.5}, expr::parse("tan(phi)")};
    e.golden = {{"reduced gyroscopic term / lambda at phi = pi/4", 2.0, "published"}};
    reg.emplace(e.name, e);
  }
  {
    RegistryEntry e = make(kChaplyginSleigh);
    e.multiplier = expr::parse("1");
    e.measureless = true;
    e.initial_state = vec({0.5, 0.4});
    reg.emplace(e.name, e);
  }
  {
    RegistryEntry e = make(kIliyev);
    e.multiplier = expr::parse("cos(q1)");
    e.measure = expr::parse("cos(q1)^2");
    e.initial_state = vec({0.2, 0.0, 0.0, 0.1, 0.1, 0.1});
    reg.emplace(e.name, e);
  }
  return reg;
}

const std::map<std::string, RegistryEntry>& registry() {
  static const std::map<std::string, RegistryEntry> reg = build();
  return reg;
}

}  // namespace

const std::vector<std::string>& registry_names() {
  static const std::vector<std::string> names = {"vertical_disk",   "free_particle",    "chaplygin_sphere",
                                                 "snakeboard",      "chaplygin_sleigh", "iliyev"};
  return names;
}

const RegistryEntry& registry_get(const std::string& name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    std::string list;
    for (const auto& n : registry_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown system '" + name + "'; builtin systems: " + list);
  }
  return it->second;
}

SystemDef load_system(const std::string& name_or_path) {
  if (registry().count(name_or_path)) return registry_get(name_or_path).def;
  std::ifstream in(name_or_path);
  if (!in) registry_get(name_or_path);  // throws with the registry listing
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_system(ss.str());
}

double sphere_reference_density(const SystemDef& def, double theta, double phi) {
  auto param = [&](const char* n) {
    auto it = def.params.find(n);
    if (it == def.params.end()) throw ConfigError(std::string("missing parameter ") + n);
    return it->second;
  };
  const double I[3] = {param("I1"), param("I2"), param("I3")};
  const double gamma[3] = {std::sin(theta) * std::sin(phi), std::sin(theta) * std::cos(phi), std::cos(theta)};
  double det = 1.0, quad = 0.0;
  for (int i = 0; i < 3; ++i) {
    det *= I[i] + 1.0;
    quad += gamma[i] * gamma[i] * I[i] / (I[i] + 1.0);
  }
  return 1.0 / std::sqrt(det * quad);
}

}  // namespace nhk
