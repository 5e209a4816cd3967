#include "nhk/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "nhk/errors.hpp"

namespace nhk::expr {

bool is_unary(Op op) {
  switch (op) {
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Tan:
    case Op::Sec:
    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tan: return "tan";
    case Op::Sec: return "sec";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    default: return "";
  }
}

Expr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

Expr make_var(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = std::move(name);
  return n;
}

Expr make_unary(Op op, Expr a) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

Expr make_binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

bool is_const(const Expr& e) { return e->op == Op::Const; }
bool is_const(const Expr& e, double v) { return e->op == Op::Const && e->value == v; }

namespace {

double check(double v, const char* what) {
  if (!std::isfinite(v)) throw SingularityError(std::string("non-finite value in ") + what);
  return v;
}

double apply_unary(Op op, double x) {
  switch (op) {
    case Op::Neg: return -x;
    case Op::Sin: return std::sin(x);
    case Op::Cos: return std::cos(x);
    case Op::Tan: {
      double c = std::cos(x);
      if (c == 0.0) throw SingularityError("tan at a pole");
      return check(std::sin(x) / c, "tan");
    }
    case Op::Sec: {
      double c = std::cos(x);
      if (c == 0.0) throw SingularityError("sec at a pole");
      return check(1.0 / c, "sec");
    }
    case Op::Exp: return check(std::exp(x), "exp");
    case Op::Log:
      if (!(x > 0.0)) throw SingularityError("log of nonpositive value");
      return std::log(x);
    case Op::Sqrt:
      if (x < 0.0) throw SingularityError("sqrt of negative value");
      return std::sqrt(x);
    default:
      throw Error("not a unary operator");
  }
}

double apply_binary(Op op, double x, double y) {
  switch (op) {
    case Op::Add: return x + y;
    case Op::Sub: return x - y;
    case Op::Mul: return x * y;
    case Op::Div:
      if (y == 0.0) throw SingularityError("division by zero");
      return check(x / y, "division");
    case Op::Pow: return check(std::pow(x, y), "pow");
    default:
      throw Error("not a binary operator");
  }
}

bool try_fold_unary(Op op, double x, double& out) {
  try {
    out = apply_unary(op, x);
    return std::isfinite(out);
  } catch (const SingularityError&) {
    return false;
  }
}

bool try_fold_binary(Op op, double x, double y, double& out) {
  try {
    out = apply_binary(op, x, y);
    return std::isfinite(out);
  } catch (const SingularityError&) {
    return false;
  }
}

}  // namespace

Expr constant(double v) { return make_const(v); }
Expr variable(std::string name) { return make_var(std::move(name)); }

Expr neg(Expr a) {
  if (is_const(a)) return make_const(-a->value);
  if (a->op == Op::Neg) return a->a;
  return make_unary(Op::Neg, std::move(a));
}

Expr add(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_binary(Op::Add, std::move(a), std::move(b));
}

Expr sub(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(std::move(b));
  return make_binary(Op::Sub, std::move(a), std::move(b));
}

Expr mul(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return neg(std::move(b));
  if (is_const(b, -1.0)) return neg(std::move(a));
  return make_binary(Op::Mul, std::move(a), std::move(b));
}

Expr div(Expr a, Expr b) {
  double v;
  if (is_const(a) && is_const(b) && try_fold_binary(Op::Div, a->value, b->value, v)) return make_const(v);
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_binary(Op::Div, std::move(a), std::move(b));
}

Expr pow(Expr a, Expr b) {
  double v;
  if (is_const(a) && is_const(b) && try_fold_binary(Op::Pow, a->value, b->value, v)) return make_const(v);
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return make_const(1.0);
  return make_binary(Op::Pow, std::move(a), std::move(b));
}

Expr apply(Op fn, Expr a) {
  if (fn == Op::Neg) return neg(std::move(a));
  double v;
  if (is_const(a) && try_fold_unary(fn, a->value, v)) return make_const(v);
  return make_unary(fn, std::move(a));
}

// ---------------------------------------------------------------- parsing

namespace {

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

class Parser {
 public:
  Parser(std::string_view text, const std::set<std::string>* declared) : s_(text), declared_(declared) {}

  Expr run() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("empty expression", pos_);
    Expr e = parse_expr();
    skip();
    if (pos_ < s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
    return e;
  }

 private:
  std::string_view s_;
  const std::set<std::string>* declared_;
  std::size_t pos_ = 0;

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() {
    skip();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  bool number_ahead() {
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
    return c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1]));
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+' || c == '-') {
        ++pos_;
        Expr rhs = parse_term();
        lhs = make_binary(c == '+' ? Op::Add : Op::Sub, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      char c = peek();
      if (c == '*' || c == '/') {
        ++pos_;
        Expr rhs = parse_unary();
        lhs = make_binary(c == '*' ? Op::Mul : Op::Div, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (peek() == '-') {
      ++pos_;
      bool literal = number_ahead();
      Expr operand = parse_unary();
      if (literal && operand->op == Op::Const) return make_const(-operand->value);
      return make_unary(Op::Neg, operand);
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (peek() == '^') {
      ++pos_;
      Expr exponent = parse_unary();
      return make_binary(Op::Pow, base, exponent);
    }
    return base;
  }

  Expr parse_primary() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      return e;
    }
    if (number_ahead()) return parse_number();
    if (ident_start(static_cast<unsigned char>(c))) return parse_identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    std::string text(s_.substr(start, pos_ - start));
    return make_const(std::strtod(text.c_str(), nullptr));
  }

  Expr parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::string name(s_.substr(start, pos_ - start));
    static const std::map<std::string, Op> functions = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan},   {"sec", Op::Sec},
        {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt},
    };
    bool call = peek() == '(';
    auto it = functions.find(name);
    if (it != functions.end()) {
      if (!call) throw ParseError("expected '(' after function " + name, pos_);
      ++pos_;
      Expr arg = parse_expr();
      if (peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      return make_unary(it->second, arg);
    }
    if (call) throw UnknownIdentifierError(name);
    if (name == "pi") return make_const(std::numbers::pi);
    if (declared_ && !declared_->count(name)) throw UnknownIdentifierError(name);
    return make_var(name);
  }
};

}  // namespace

Expr parse(std::string_view text, const std::set<std::string>* declared) {
  return Parser(text, declared).run();
}

// ---------------------------------------------------------------- printing

std::string format_number(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

int precedence(const Expr& e) {
  switch (e->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
  }
}

std::string print(const Expr& e);

std::string operand(const Expr& e, int min_prec) {
  if (e->op == Op::Neg || precedence(e) < min_prec) return "(" + print(e) + ")";
  return print(e);
}

std::string print(const Expr& e) {
  switch (e->op) {
    case Op::Const:
      if (std::signbit(e->value)) return "(" + format_number(e->value) + ")";
      return format_number(e->value);
    case Op::Var: return e->name;
    case Op::Neg:
      if (e->a->op == Op::Const) return "-(" + print(e->a) + ")";
      return "-" + (precedence(e->a) < 3 ? "(" + print(e->a) + ")" : print(e->a));
    case Op::Add: return operand(e->a, 1) + "+" + operand(e->b, 2);
    case Op::Sub: return operand(e->a, 1) + "-" + operand(e->b, 2);
    case Op::Mul: return operand(e->a, 2) + "*" + operand(e->b, 3);
    case Op::Div: return operand(e->a, 2) + "/" + operand(e->b, 3);
    case Op::Pow: return operand(e->a, 5) + "^" + operand(e->b, 4);
    default: return std::string(function_name(e->op)) + "(" + print(e->a) + ")";
  }
}

}  // namespace

std::string to_string(const Expr& e) { return print(e); }

// ---------------------------------------------------------------- calculus

Expr differentiate(const Expr& e, const std::string& var) {
  switch (e->op) {
    case Op::Const: return constant(0.0);
    case Op::Var: return constant(e->name == var ? 1.0 : 0.0);
    default: break;
  }
  const Expr& a = e->a;
  Expr da = differentiate(a, var);
  switch (e->op) {
    case Op::Neg: return neg(da);
    case Op::Sin: return mul(apply(Op::Cos, a), da);
    case Op::Cos: return neg(mul(apply(Op::Sin, a), da));
    case Op::Tan: return mul(pow(apply(Op::Sec, a), constant(2.0)), da);
    case Op::Sec: return mul(mul(apply(Op::Sec, a), apply(Op::Tan, a)), da);
    case Op::Exp: return mul(apply(Op::Exp, a), da);
    case Op::Log: return div(da, a);
    case Op::Sqrt: return div(da, mul(constant(2.0), apply(Op::Sqrt, a)));
    default: break;
  }
  const Expr& b = e->b;
  Expr db = differentiate(b, var);
  switch (e->op) {
    case Op::Add: return add(da, db);
    case Op::Sub: return sub(da, db);
    case Op::Mul: return add(mul(da, b), mul(a, db));
    case Op::Div: return div(sub(mul(da, b), mul(a, db)), pow(b, constant(2.0)));
    case Op::Pow:
      if (is_const(db, 0.0)) {
        return mul(mul(b, pow(a, sub(b, constant(1.0)))), da);
      }
      return mul(e, add(mul(db, apply(Op::Log, a)), div(mul(b, da), a)));
    default:
      throw Error("differentiate: malformed expression");
  }
}

double evaluate(const Expr& e, const Env& env) {
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::Var: {
      auto it = env.find(e->name);
      if (it == env.end()) throw UnboundVariableError(e->name);
      return it->second;
    }
    default: break;
  }
  if (is_unary(e->op)) return apply_unary(e->op, evaluate(e->a, env));
  double x = evaluate(e->a, env);
  double y = evaluate(e->b, env);
  return apply_binary(e->op, x, y);
}

namespace {
void collect(const Expr& e, std::set<std::string>& out) {
  if (e->op == Op::Var) out.insert(e->name);
  if (e->a) collect(e->a, out);
  if (e->b) collect(e->b, out);
}
}  // namespace

std::set<std::string> free_variables(const Expr& e) {
  std::set<std::string> out;
  collect(e, out);
  return out;
}

bool depends_on(const Expr& e, const std::string& var) {
  if (e->op == Op::Var) return e->name == var;
  return (e->a && depends_on(e->a, var)) || (e->b && depends_on(e->b, var));
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl) {
  switch (e->op) {
    case Op::Const: return e;
    case Op::Var: {
      auto it = repl.find(e->name);
      return it == repl.end() ? e : it->second;
    }
    default: break;
  }
  if (is_unary(e->op)) return apply(e->op, substitute(e->a, repl));
  Expr a = substitute(e->a, repl);
  Expr b = substitute(e->b, repl);
  switch (e->op) {
    case Op::Add: return add(a, b);
    case Op::Sub: return sub(a, b);
    case Op::Mul: return mul(a, b);
    case Op::Div: return div(a, b);
    default: return pow(a, b);
  }
}

Expr fold(const Expr& e) { return substitute(e, {}); }

// ---------------------------------------------------------------- program

void Program::emit(const Expr& e, const std::map<std::string, int>& slot_of, std::size_t depth) {
  max_depth_ = std::max(max_depth_, depth + 1);
  switch (e->op) {
    case Op::Const: code_.push_back({Kind::Push, Op::Const, -1, e->value}); return;
    case Op::Var: {
      auto it = slot_of.find(e->name);
      if (it == slot_of.end()) throw UnboundVariableError(e->name);
      code_.push_back({Kind::Load, Op::Var, it->second, 0.0});
      return;
    }
    default: break;
  }
  emit(e->a, slot_of, depth);
  if (is_unary(e->op)) {
    code_.push_back({Kind::Unary, e->op, -1, 0.0});
    return;
  }
  emit(e->b, slot_of, depth + 1);
  code_.push_back({Kind::Binary, e->op, -1, 0.0});
}

Program::Program(const Expr& e, const std::vector<std::string>& slots) {
  std::map<std::string, int> slot_of;
  for (std::size_t i = 0; i < slots.size(); ++i) slot_of.emplace(slots[i], static_cast<int>(i));
  emit(e, slot_of, 0);
}

double Program::operator()(const double* slots) const {
  double small[64];
  std::vector<double> big;
  double* stack = small;
  if (max_depth_ > 64) {
    big.resize(max_depth_);
    stack = big.data();
  }
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.kind) {
      case Kind::Push: stack[top++] = in.value; break;
      case Kind::Load: stack[top++] = slots[in.slot]; break;
      case Kind::Unary: stack[top - 1] = apply_unary(in.op, stack[top - 1]); break;
      case Kind::Binary:
        --top;
        stack[top - 1] = apply_binary(in.op, stack[top - 1], stack[top]);
        break;
    }
  }
  return stack[0];
}

}  // namespace nhk::expr
