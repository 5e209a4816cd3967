#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "nhk/errors.hpp"
#include "nhk/geometry.hpp"

namespace nhk {

ExprMatrix ExprMatrix::zeros(int r, int c) {
  ExprMatrix m;
  m.rows = r;
  m.cols = c;
  m.data.assign(static_cast<std::size_t>(r) * c, expr::constant(0.0));
  return m;
}

ExprMatrix ExprMatrix::identity(int n) {
  ExprMatrix m = zeros(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = expr::constant(1.0);
  return m;
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Chaplygin: return "chaplygin";
    case Kind::Eps: return "eps";
    default: return "general";
  }
}

Kind kind_from_name(const std::string& s) {
  if (s == "chaplygin") return Kind::Chaplygin;
  if (s == "eps") return Kind::Eps;
  if (s == "general") return Kind::General;
  throw ConfigError("unknown system kind '" + s + "' (expected general, chaplygin or eps)");
}

bool SystemDef::abelian() const {
  return std::all_of(C.begin(), C.end(), [](double c) { return c == 0.0; });
}

std::vector<std::string> SystemDef::coordinate_names() const {
  std::vector<std::string> out = shape;
  out.insert(out.end(), group.begin(), group.end());
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  int line;
};

using Sections = std::map<std::string, std::vector<Entry>>;

const std::set<std::string> kKnownSections = {
    "system",           "dims",       "coords",     "params",          "domain",
    "metric.g_alpha_beta", "metric.g_a_alpha", "metric.g_ab", "connection", "body_basis",
    "structure_constants", "group_frame", "potential"};

Sections read_sections(const std::string& text) {
  Sections out;
  std::istringstream in(text);
  std::string raw;
  std::string current;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::size_t hash = raw.find('#');
    std::string l = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError("line " + std::to_string(line) + ": malformed section header");
      current = trim(l.substr(1, l.size() - 2));
      if (!kKnownSections.count(current))
        throw ConfigError("line " + std::to_string(line) + ": unknown section [" + current + "]");
      if (out.count(current)) throw ConfigError("line " + std::to_string(line) + ": duplicate section [" + current + "]");
      out[current];
      continue;
    }
    if (current.empty()) throw ConfigError("line " + std::to_string(line) + ": entry outside any section");
    std::size_t eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    Entry e{trim(l.substr(0, eq)), trim(l.substr(eq + 1)), line};
    for (const auto& prev : out[current])
      if (prev.key == e.key)
        throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + e.key + "' in [" + current + "]");
    out[current].push_back(e);
  }
  return out;
}

const Entry* find(const Sections& s, const std::string& section, const std::string& key) {
  auto it = s.find(section);
  if (it == s.end()) return nullptr;
  for (const auto& e : it->second)
    if (e.key == key) return &e;
  return nullptr;
}

int parse_int(const Entry& e) {
  try {
    std::size_t used = 0;
    int v = std::stoi(e.value, &used);
    if (used != e.value.size() || v < 0) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e.line) + ": expected a nonnegative integer for '" + e.key + "'");
  }
}

double parse_double(const std::string& s, int line) {
  try {
    Expr e = expr::parse(s);
    return expr::evaluate(e, {});
  } catch (const Error& err) {
    throw ConfigError("line " + std::to_string(line) + ": expected a number: " + err.what());
  }
}

Expr parse_entry_expr(const Entry& e, const std::set<std::string>& declared) {
  try {
    return expr::parse(e.value, &declared);
  } catch (const Error& err) {
    throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
  }
}

std::vector<int> parse_indices(const Entry& e, std::size_t expected, const std::vector<int>& bounds) {
  auto parts = split(e.key, ',');
  if (parts.size() != expected)
    throw ConfigError("line " + std::to_string(e.line) + ": expected " + std::to_string(expected) + " indices");
  std::vector<int> idx;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Entry tmp{parts[i], parts[i], e.line};
    int v = parse_int(tmp);
    if (v < 1 || v > bounds[i])
      throw ConfigError("line " + std::to_string(e.line) + ": index " + parts[i] + " out of range 1.." +
                        std::to_string(bounds[i]));
    idx.push_back(v - 1);
  }
  return idx;
}

ExprMatrix read_matrix(const Sections& s, const std::string& section, int rows, int cols, bool symmetric,
                       const std::set<std::string>& declared) {
  ExprMatrix m = ExprMatrix::zeros(rows, cols);
  auto it = s.find(section);
  if (it == s.end()) return m;
  std::set<std::pair<int, int>> given;
  for (const auto& e : it->second) {
    auto idx = parse_indices(e, 2, {rows, cols});
    m(idx[0], idx[1]) = parse_entry_expr(e, declared);
    given.insert({idx[0], idx[1]});
  }
  if (symmetric) {
    for (const auto& [i, j] : given)
      if (!given.count({j, i})) m(j, i) = m(i, j);
  }
  return m;
}

}  // namespace

SystemDef parse_system(const std::string& text) {
  Sections sec = read_sections(text);
  SystemDef d;
  auto req = [&](const std::string& section, const std::string& key) -> const Entry& {
    const Entry* e = find(sec, section, key);
    if (!e) throw ConfigError("missing '" + key + "' in [" + section + "]");
    return *e;
  };
  d.name = req("system", "name").value;
  d.kind = kind_from_name(req("system", "kind").value);
  if (const Entry* e = find(sec, "system", "description")) d.description = e->value;
  d.m = parse_int(req("dims", "m"));
  d.k = parse_int(req("dims", "k"));
  d.s = parse_int(req("dims", "s"));
  if (d.s > d.k) throw ConfigError("dims: s cannot exceed k");
  if (d.kind == Kind::Chaplygin && d.s != 0) throw ConfigError("chaplygin systems require s = 0");
  if (d.kind == Kind::Eps && d.m != 0) throw ConfigError("eps systems require m = 0");
  if (d.k == 0) throw ConfigError("dims: k must be positive");

  const Entry* sh = find(sec, "coords", "shape");
  const Entry* gr = find(sec, "coords", "group");
  d.shape = sh ? split(sh->value, ',') : std::vector<std::string>{};
  d.group = gr ? split(gr->value, ',') : std::vector<std::string>{};
  if (static_cast<int>(d.shape.size()) != d.m) throw ConfigError("coords: expected m shape coordinate names");
  if (static_cast<int>(d.group.size()) != d.k) throw ConfigError("coords: expected k group coordinate names");

  std::set<std::string> declared;
  for (const auto& n : d.coordinate_names()) {
    if (n.empty() || !declared.insert(n).second) throw ConfigError("coords: empty or duplicate name '" + n + "'");
  }
  if (auto it = sec.find("params"); it != sec.end()) {
    for (const auto& e : it->second) {
      if (declared.count(e.key)) throw ConfigError("params: '" + e.key + "' clashes with a coordinate");
      d.params[e.key] = parse_double(e.value, e.line);
      declared.insert(e.key);
    }
  }

  std::vector<std::string> required;
  switch (d.kind) {
    case Kind::Chaplygin:
      required = {"metric.g_alpha_beta", "metric.g_a_alpha", "metric.g_ab", "connection"};
      break;
    case Kind::Eps:
      required = {"metric.g_ab", "body_basis", "structure_constants"};
      break;
    case Kind::General:
      required = {"metric.g_alpha_beta", "metric.g_a_alpha", "metric.g_ab", "connection", "body_basis"};
      break;
  }
  for (const auto& r : required)
    if (!sec.count(r)) throw ConfigError(std::string("missing section [") + r + "] required for kind " + kind_name(d.kind));

  d.g_rr = read_matrix(sec, "metric.g_alpha_beta", d.m, d.m, true, declared);
  d.g_gr = read_matrix(sec, "metric.g_a_alpha", d.k, d.m, false, declared);
  d.g_gg = read_matrix(sec, "metric.g_ab", d.k, d.k, true, declared);
  d.A = read_matrix(sec, "connection", d.k, d.m, false, declared);
  d.e = read_matrix(sec, "body_basis", d.k, d.s, false, declared);
  if (sec.count("group_frame")) {
    d.frame = read_matrix(sec, "group_frame", d.k, d.k, false, declared);
  } else {
    d.frame = ExprMatrix::identity(d.k);
  }

  d.C.assign(static_cast<std::size_t>(d.k) * d.k * d.k, 0.0);
  if (auto it = sec.find("structure_constants"); it != sec.end()) {
    std::set<std::tuple<int, int, int>> given;
    for (const auto& e : it->second) {
      auto idx = parse_indices(e, 3, {d.k, d.k, d.k});
      double v = parse_double(e.value, e.line);
      int a = idx[0], b = idx[1], c = idx[2];
      if (b == c && v != 0.0) throw ConfigError("line " + std::to_string(e.line) + ": C^a_bb must vanish");
      auto at = [&](int x, int y, int z) -> double& { return d.C[(static_cast<std::size_t>(x) * d.k + y) * d.k + z]; };
      if (given.count({a, c, b}) && at(a, c, b) != -v)
        throw ConfigError("line " + std::to_string(e.line) + ": structure constants are not antisymmetric");
      at(a, b, c) = v;
      at(a, c, b) = -v;
      given.insert({a, b, c});
    }
  }

  d.V = expr::constant(0.0);
  if (const Entry* e = find(sec, "potential", "V")) d.V = parse_entry_expr(*e, declared);

  d.shape_box.assign(d.m, Interval{});
  d.group_box.assign(d.k, Interval{});
  d.momentum_box = Interval{};
  if (auto it = sec.find("domain"); it != sec.end()) {
    for (const auto& e : it->second) {
      auto parts = split(e.value, ',');
      if (parts.size() != 2) throw ConfigError("line " + std::to_string(e.line) + ": domain expects 'lo, hi'");
      Interval iv{parse_double(parts[0], e.line), parse_double(parts[1], e.line)};
      if (!(iv.lo < iv.hi)) throw ConfigError("line " + std::to_string(e.line) + ": empty domain interval");
      bool placed = false;
      for (int a = 0; a < d.m; ++a)
        if (d.shape[a] == e.key) d.shape_box[a] = iv, placed = true;
      for (int a = 0; a < d.k; ++a)
        if (d.group[a] == e.key) d.group_box[a] = iv, placed = true;
      if (e.key == "momentum") d.momentum_box = iv, placed = true;
      if (!placed) throw ConfigError("line " + std::to_string(e.line) + ": unknown domain key '" + e.key + "'");
    }
  }
  return d;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

void write_matrix(std::ostringstream& os, const std::string& section, const ExprMatrix& m, bool symmetric,
                  bool skip_identity = false) {
  if (skip_identity) {
    bool ident = true;
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < m.cols; ++j) ident = ident && expr::is_const(m(i, j), i == j ? 1.0 : 0.0);
    if (ident) return;
  }
  os << "\n[" << section << "]\n";
  for (int i = 0; i < m.rows; ++i)
    for (int j = symmetric ? i : 0; j < m.cols; ++j)
      if (!expr::is_const(m(i, j), 0.0)) os << i + 1 << "," << j + 1 << " = " << expr::to_string(m(i, j)) << "\n";
}

}  // namespace

std::string format_system(const SystemDef& d) {
  std::ostringstream os;
  os << "[system]\nname = " << d.name << "\nkind = " << kind_name(d.kind) << "\n";
  if (!d.description.empty()) os << "description = " << d.description << "\n";
  os << "\n[dims]\nm = " << d.m << "\nk = " << d.k << "\ns = " << d.s << "\n";
  os << "\n[coords]\n";
  if (d.m) os << "shape = " << join(d.shape) << "\n";
  os << "group = " << join(d.group) << "\n";
  if (!d.params.empty()) {
    os << "\n[params]\n";
    for (const auto& [n, v] : d.params) os << n << " = " << expr::format_number(v) << "\n";
  }
  os << "\n[domain]\n";
  for (int a = 0; a < d.m; ++a)
    os << d.shape[a] << " = " << expr::format_number(d.shape_box[a].lo) << ", " << expr::format_number(d.shape_box[a].hi)
       << "\n";
  for (int a = 0; a < d.k; ++a)
    os << d.group[a] << " = " << expr::format_number(d.group_box[a].lo) << ", " << expr::format_number(d.group_box[a].hi)
       << "\n";
  os << "momentum = " << expr::format_number(d.momentum_box.lo) << ", " << expr::format_number(d.momentum_box.hi) << "\n";
  if (d.kind != Kind::Eps) {
    write_matrix(os, "metric.g_alpha_beta", d.g_rr, true);
    write_matrix(os, "metric.g_a_alpha", d.g_gr, false);
  }
  write_matrix(os, "metric.g_ab", d.g_gg, true);
  if (d.kind != Kind::Eps) write_matrix(os, "connection", d.A, false);
  if (d.kind != Kind::Chaplygin) write_matrix(os, "body_basis", d.e, false);
  if (d.kind == Kind::Eps || !d.abelian()) {
    os << "\n[structure_constants]\n";
    for (int a = 0; a < d.k; ++a)
      for (int b = 0; b < d.k; ++b)
        for (int c = b + 1; c < d.k; ++c)
          if (d.structure(a, b, c) != 0.0)
            os << a + 1 << "," << b + 1 << "," << c + 1 << " = " << expr::format_number(d.structure(a, b, c)) << "\n";
  }
  write_matrix(os, "group_frame", d.frame, false, true);
  if (!expr::is_const(d.V, 0.0)) os << "\n[potential]\nV = " << expr::to_string(d.V) << "\n";
  return os.str();
}

}  // namespace nhk
