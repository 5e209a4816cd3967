#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace nhk::expr {

enum class Op {
  Const,
  Var,
  Neg,
  Sin,
  Cos,
  Tan,
  Sec,
  Exp,
  Log,
  Sqrt,
  Add,
  Sub,
  Mul,
  Div,
  Pow
};

struct Node;
using Expr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  std::string name;
  Expr a;
  Expr b;
};

bool is_unary(Op op);
bool is_binary(Op op);
const char* function_name(Op op);

// Raw constructors; no simplification.
Expr make_const(double v);
Expr make_var(std::string name);
Expr make_unary(Op op, Expr a);
Expr make_binary(Op op, Expr a, Expr b);

// Builders with light constant folding (identities like 0+x, 1*x, x^1).
Expr constant(double v);
Expr variable(std::string name);
Expr neg(Expr a);
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr pow(Expr a, Expr b);
Expr apply(Op fn, Expr a);

bool is_const(const Expr& e, double v);
bool is_const(const Expr& e);

using Env = std::map<std::string, double>;

/// Parses an expression. When `declared` is given, every identifier must be in
/// it (function names and `pi` are always accepted).
Expr parse(std::string_view text, const std::set<std::string>* declared = nullptr);

std::string to_string(const Expr& e);
std::string format_number(double v);

Expr differentiate(const Expr& e, const std::string& var);
double evaluate(const Expr& e, const Env& env);

std::set<std::string> free_variables(const Expr& e);
bool depends_on(const Expr& e, const std::string& var);
Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl);

/// Bottom-up constant folding and identity removal. Value-preserving.
Expr fold(const Expr& e);

/// Structural equality of the canonical polynomial-over-atoms normal forms.
bool equivalent(const Expr& a, const Expr& b, double tol = 1e-12);

/// Compiled postfix form of an expression over a fixed slot layout.
class Program {
 public:
  Program() = default;
  Program(const Expr& e, const std::vector<std::string>& slots);

  double operator()(const double* slots) const;
  double operator()(const std::vector<double>& slots) const { return (*this)(slots.data()); }
  bool is_constant() const { return code_.size() == 1 && code_[0].kind == Kind::Push; }
  bool empty() const { return code_.empty(); }

 private:
  enum class Kind { Push, Load, Unary, Binary };
  struct Instr {
    Kind kind;
    Op op;
    int slot;
    double value;
  };
  void emit(const Expr& e, const std::map<std::string, int>& slot_of, std::size_t depth);

  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
};

}  // namespace nhk::expr
