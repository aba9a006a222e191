#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace mudich {

enum class Fn { sin, cos, tan, exp, log, sqrt, abs, tanh, sign };

// Immutable expression tree in t and x1..xn.
class Expr {
 public:
  enum class Op { lit, t, var, neg, add, sub, mul, div, pow, call };
  struct Node;

  Expr();  // literal 0
  static Expr parse(std::string_view source);
  static Expr literal(double v);

  double eval(double t, std::span<const double> x = {}) const;
  // value together with the partial derivative in t (forward mode)
  std::pair<double, double> eval_dt(double t, std::span<const double> x = {}) const;

  std::string print() const;      // re-parseable canonical text
  std::string structure() const;  // e.g. "Add(Mul(sin(t), x1), Lit 2)"

  int max_index() const;  // largest k among x<k>, 0 if none
  bool depends_on_t() const;
  bool depends_on_x() const;
  bool is_zero_literal() const;
  void check_bound(int n) const;  // throws ConfigError if an index exceeds n

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
  friend class Parser;
};

}  // namespace mudich
