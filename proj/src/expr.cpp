#include "mudich/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "mudich/errors.hpp"

namespace mudich {

struct Expr::Node {
  Op op = Op::lit;
  double value = 0;  // literal, or exponent for pow
  int index = 0;     // x<index>
  Fn fn = Fn::sin;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;
using Op = Expr::Op;

constexpr std::array<std::pair<std::string_view, Fn>, 9> kFunctions{{
    {"sin", Fn::sin},
    {"cos", Fn::cos},
    {"tan", Fn::tan},
    {"exp", Fn::exp},
    {"log", Fn::log},
    {"sqrt", Fn::sqrt},
    {"abs", Fn::abs},
    {"tanh", Fn::tanh},
    {"sign", Fn::sign},
}};

std::string_view fn_name(Fn f) {
  for (auto& [n, g] : kFunctions)
    if (g == f) return n;
  return "?";
}

NodeP make(Op op, NodeP a = nullptr, NodeP b = nullptr) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodeP make_lit(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->op = Op::lit;
  n->value = v;
  return n;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }

// dual number for the t-derivative
struct Dual {
  double v = 0, d = 0;
};
Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
Dual operator-(Dual a) { return {-a.v, -a.d}; }
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }

double value(double x) { return x; }
double value(Dual x) { return x.v; }
bool finite(double x) { return std::isfinite(x); }
bool finite(Dual x) { return std::isfinite(x.v) && std::isfinite(x.d); }

double sgn(double v) { return (v > 0) - (v < 0); }

double apply(Fn f, double v) {
  switch (f) {
    case Fn::sin: return std::sin(v);
    case Fn::cos: return std::cos(v);
    case Fn::tan: return std::tan(v);
    case Fn::exp: return std::exp(v);
    case Fn::log: return std::log(v);
    case Fn::sqrt: return std::sqrt(v);
    case Fn::abs: return std::abs(v);
    case Fn::tanh: return std::tanh(v);
    case Fn::sign: return sgn(v);
  }
  return 0;
}

Dual apply(Fn f, Dual x) {
  double v = x.v, d = x.d;
  switch (f) {
    case Fn::sin: return {std::sin(v), std::cos(v) * d};
    case Fn::cos: return {std::cos(v), -std::sin(v) * d};
    case Fn::tan: {
      double c = std::cos(v);
      return {std::tan(v), d / (c * c)};
    }
    case Fn::exp: {
      double e = std::exp(v);
      return {e, e * d};
    }
    case Fn::log: return {std::log(v), d / v};
    case Fn::sqrt: {
      double r = std::sqrt(v);
      return {r, d == 0 ? 0.0 : d / (2 * r)};
    }
    case Fn::abs: return {std::abs(v), sgn(v) * d};
    case Fn::tanh: {
      double th = std::tanh(v);
      return {th, (1 - th * th) * d};
    }
    case Fn::sign: return {sgn(v), 0.0};
  }
  return {0, 0};
}

double power(double b, double p) { return std::pow(b, p); }
Dual power(Dual b, double p) {
  if (p == 0) return {1.0, 0.0};
  return {std::pow(b.v, p), b.d == 0 ? 0.0 : p * std::pow(b.v, p - 1) * b.d};
}

template <class T>
T eval_node(const Expr::Node& n, T t, std::span<const double> x) {
  T out{};
  switch (n.op) {
    case Op::lit: out = T{n.value}; break;
    case Op::t: out = t; break;
    case Op::var:
      if (n.index < 1 || static_cast<std::size_t>(n.index) > x.size())
        throw DomainError("x" + std::to_string(n.index) + " is not bound (n = " +
                          std::to_string(x.size()) + ")");
      out = T{x[n.index - 1]};
      break;
    case Op::neg: out = -eval_node(*n.a, t, x); break;
    case Op::add: out = eval_node(*n.a, t, x) + eval_node(*n.b, t, x); break;
    case Op::sub: out = eval_node(*n.a, t, x) - eval_node(*n.b, t, x); break;
    case Op::mul: out = eval_node(*n.a, t, x) * eval_node(*n.b, t, x); break;
    case Op::div: {
      T num = eval_node(*n.a, t, x);
      T den = eval_node(*n.b, t, x);
      if (value(den) == 0) throw DomainError("division by zero");
      out = num / den;
      break;
    }
    case Op::pow: {
      T base = eval_node(*n.a, t, x);
      if (value(base) < 0 && n.value != std::floor(n.value))
        throw DomainError("fractional power of a negative number");
      if (value(base) == 0 && n.value < 0) throw DomainError("zero to a negative power");
      out = power(base, n.value);
      break;
    }
    case Op::call: {
      T arg = eval_node(*n.a, t, x);
      if (n.fn == Fn::log && value(arg) <= 0) throw DomainError("log of a non-positive argument");
      if (n.fn == Fn::sqrt && value(arg) < 0) throw DomainError("sqrt of a negative argument");
      out = apply(n.fn, arg);
      break;
    }
  }
  if (!finite(out)) throw DomainError("non-finite value");
  return out;
}

std::string fmt_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_node(const Expr::Node& n, std::string& s) {
  switch (n.op) {
    case Op::lit: s += fmt_number(n.value); break;
    case Op::t: s += 't'; break;
    case Op::var: s += 'x' + std::to_string(n.index); break;
    case Op::neg:
      s += "-(";
      print_node(*n.a, s);
      s += ')';
      break;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      static constexpr char sym[] = {'+', '-', '*', '/'};
      s += '(';
      print_node(*n.a, s);
      s += ' ';
      s += sym[static_cast<int>(n.op) - static_cast<int>(Op::add)];
      s += ' ';
      print_node(*n.b, s);
      s += ')';
      break;
    }
    case Op::pow:
      s += '(';
      print_node(*n.a, s);
      s += ")^" + fmt_number(n.value);
      break;
    case Op::call:
      s += fn_name(n.fn);
      s += '(';
      print_node(*n.a, s);
      s += ')';
      break;
  }
}

void structure_node(const Expr::Node& n, std::string& s) {
  auto two = [&](const char* tag) {
    s += tag;
    s += '(';
    structure_node(*n.a, s);
    s += ", ";
    structure_node(*n.b, s);
    s += ')';
  };
  char buf[40];
  switch (n.op) {
    case Op::lit:
      std::snprintf(buf, sizeof buf, "Lit %.15g", n.value);
      s += buf;
      break;
    case Op::t: s += 't'; break;
    case Op::var: s += 'x' + std::to_string(n.index); break;
    case Op::neg:
      s += "Neg(";
      structure_node(*n.a, s);
      s += ')';
      break;
    case Op::add: two("Add"); break;
    case Op::sub: two("Sub"); break;
    case Op::mul: two("Mul"); break;
    case Op::div: two("Div"); break;
    case Op::pow:
      s += "Pow(";
      structure_node(*n.a, s);
      std::snprintf(buf, sizeof buf, ", %.15g)", n.value);
      s += buf;
      break;
    case Op::call:
      s += fn_name(n.fn);
      s += '(';
      structure_node(*n.a, s);
      s += ')';
      break;
  }
}

bool same(const Expr::Node* a, const Expr::Node* b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::lit: return a->value == b->value;
    case Op::t: return true;
    case Op::var: return a->index == b->index;
    case Op::pow: return a->value == b->value && same(a->a.get(), b->a.get());
    case Op::call: return a->fn == b->fn && same(a->a.get(), b->a.get());
    default: return same(a->a.get(), b->a.get()) && same(a->b.get(), b->b.get());
  }
}

template <class F>
void visit(const Expr::Node& n, F&& f) {
  f(n);
  if (n.a) visit(*n.a, f);
  if (n.b) visit(*n.b, f);
}

}  // namespace

class Parser {
 public:
  explicit Parser(std::string_view src) : s_(src) {}

  Expr run() {
    skip();
    if (pos_ == s_.size()) throw ParseError("empty expression", pos_);
    NodeP e = expr();
    skip();
    if (pos_ != s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
    return Expr(e);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  void skip() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) {
    if (pos_ >= s_.size()) throw ParseError(msg + " (unexpected end of input)", pos_);
    throw ParseError(msg + " (found '" + std::string(1, s_[pos_]) + "')", pos_);
  }

  NodeP expr() {
    NodeP lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Op::add, lhs, term());
      else if (accept('-')) lhs = make(Op::sub, lhs, term());
      else return lhs;
    }
  }

  NodeP term() {
    NodeP lhs = factor();
    for (;;) {
      if (accept('*')) lhs = make(Op::mul, lhs, factor());
      else if (accept('/')) lhs = make(Op::div, lhs, factor());
      else return lhs;
    }
  }

  NodeP factor() {
    bool neg = accept('-');
    NodeP a = atom();
    if (accept('^')) {
      skip();
      auto p = std::make_shared<Expr::Node>();
      p->op = Op::pow;
      p->a = a;
      p->value = number();
      a = p;
    }
    return neg ? make(Op::neg, a) : a;
  }

  double number() {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
    }
    if (pos_ == start || (pos_ == start + 1 && s_[start] == '.')) {
      pos_ = start;
      fail("expected a number");
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && is_digit(s_[pos_])) {
        while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
      } else {
        pos_ = save;  // "2e" is not an exponent; leave 'e' for the caller to reject
      }
    }
    double v = 0;
    auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || p != s_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return v;
  }

  NodeP atom() {
    skip();
    if (pos_ >= s_.size()) fail("expected an operand");
    char c = s_[pos_];
    if (is_digit(c) || c == '.') return make_lit(number());
    if (c == '(') {
      ++pos_;
      NodeP e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (is_alpha(c)) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (is_alpha(s_[pos_]) || is_digit(s_[pos_]))) ++pos_;
      std::string_view id = s_.substr(start, pos_ - start);
      if (id == "t") return make(Op::t);
      if (id.size() > 1 && id[0] == 'x') {
        bool digits = true;
        for (char d : id.substr(1)) digits = digits && is_digit(d);
        if (digits) {
          int k = 0;
          auto [p, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), k);
          if (ec != std::errc() || k < 1)
            throw ParseError("bad variable '" + std::string(id) + "'", start);
          auto n = std::make_shared<Expr::Node>();
          n->op = Op::var;
          n->index = k;
          return n;
        }
      }
      skip();
      if (pos_ < s_.size() && s_[pos_] == '(') {
        for (auto& [name, fn] : kFunctions) {
          if (name == id) {
            ++pos_;
            auto n = std::make_shared<Expr::Node>();
            n->op = Op::call;
            n->fn = fn;
            n->a = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
          }
        }
        throw ParseError("unknown function '" + std::string(id) + "'", start);
      }
      throw ParseError("unknown identifier '" + std::string(id) + "'", start);
    }
    fail("expected an operand");
  }
};

Expr::Expr() : root_(make_lit(0.0)) {}

Expr Expr::parse(std::string_view source) { return Parser(source).run(); }

Expr Expr::literal(double v) { return Expr(make_lit(v)); }

double Expr::eval(double t, std::span<const double> x) const {
  return eval_node<double>(*root_, t, x);
}

std::pair<double, double> Expr::eval_dt(double t, std::span<const double> x) const {
  Dual r = eval_node<Dual>(*root_, Dual{t, 1.0}, x);
  return {r.v, r.d};
}

std::string Expr::print() const {
  std::string s;
  print_node(*root_, s);
  return s;
}

std::string Expr::structure() const {
  std::string s;
  structure_node(*root_, s);
  return s;
}

int Expr::max_index() const {
  int k = 0;
  visit(*root_, [&](const Node& n) {
    if (n.op == Op::var) k = std::max(k, n.index);
  });
  return k;
}

bool Expr::depends_on_t() const {
  bool d = false;
  visit(*root_, [&](const Node& n) { d = d || n.op == Op::t; });
  return d;
}

bool Expr::depends_on_x() const { return max_index() > 0; }

bool Expr::is_zero_literal() const { return root_->op == Op::lit && root_->value == 0; }

void Expr::check_bound(int n) const {
  int k = max_index();
  if (k > n)
    throw ConfigError("expression '" + print() + "' uses x" + std::to_string(k) +
                      " but the dimension is " + std::to_string(n));
}

bool operator==(const Expr& a, const Expr& b) { return same(a.root_.get(), b.root_.get()); }

}  // namespace mudich
