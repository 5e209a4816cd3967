#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nhk/geometry.hpp"
#include "nhk/multiplier.hpp"

namespace nhk {

/// A reference value attached to a builtin system.
struct GoldenFact {
  std::string what;
  double value = 0.0;
  std::string source;  // "published" or "derived"
};

/// Second-stage reduction data for systems with a nonholonomic cyclic variable.
struct ReductionInfo {
  std::vector<std::string> cyclic;
  std::vector<double> lambda;
  std::optional<expr::Expr> multiplier;  // closed form on the reduced space, when known
};

struct RegistryEntry {
  std::string name;
  std::string source_text;  // system-definition file text
  SystemDef def;
  std::optional<expr::Expr> multiplier;
  std::optional<expr::Expr> measure;
  bool measureless = false;
  std::optional<ReductionInfo> reduction;
  VectorXd initial_state;  // (r, p_alpha, p_i)
  std::vector<GoldenFact> golden;
};

const std::vector<std::string>& registry_names();
/// Throws ConfigError listing the registry when the name is unknown.
const RegistryEntry& registry_get(const std::string& name);

/// Loads a registry name or, failing that, a system-definition file path.
SystemDef load_system(const std::string& name_or_path);

/// Closed-form density of the rolling ball's invariant measure on the reduced
/// (theta, phi) space, with the principal moments taken from `def`. Used only to
/// fix the normalization of the numerically solved multiplier.
double sphere_reference_density(const SystemDef& def, double theta, double phi);

}  // namespace nhk
