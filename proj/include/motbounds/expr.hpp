#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/errors.hpp"

namespace motbounds {

/// Arithmetic cost expression in the variables x, y, z.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' unary)?
///   primary := number | x | y | z | abs(expr) | min(expr, expr)
///            | max(expr, expr) | '(' expr ')'
///
/// '^' binds tighter than unary minus and is right-associative.
class Expression {
 public:
  static Expression parse(const std::string& text) {
    Parser p{text, 0};
    Expression e;
    e.text_ = text;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    e.uses_ = collect(*e.root_);
    return e;
  }

  double operator()(double x, double y, double z) const {
    const double v[3] = {x, y, z};
    return eval(*root_, v);
  }

  bool uses(char var) const {
    const int i = var - 'x';
    return i >= 0 && i < 3 && (uses_ & (1u << i)) != 0;
  }

  const std::string& text() const { return text_; }

 private:
  enum class Op { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Abs, Min, Max };

  struct Node {
    Op op;
    double value = 0.0;
    int var = 0;
    std::unique_ptr<Node> a, b;
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& msg) const {
      throw ParseError("expression '" + s + "' column " + std::to_string(pos + 1) + ": " + msg);
    }

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!eat(c)) fail(std::string("expected '") + c + "'");
    }

    static std::unique_ptr<Node> make(Op op, std::unique_ptr<Node> a = nullptr,
                                      std::unique_ptr<Node> b = nullptr) {
      auto n = std::make_unique<Node>();
      n->op = op;
      n->a = std::move(a);
      n->b = std::move(b);
      return n;
    }

    std::unique_ptr<Node> expr() {
      auto lhs = term();
      for (;;) {
        if (eat('+')) {
          lhs = make(Op::Add, std::move(lhs), term());
        } else if (eat('-')) {
          lhs = make(Op::Sub, std::move(lhs), term());
        } else {
          return lhs;
        }
      }
    }

    std::unique_ptr<Node> term() {
      auto lhs = unary();
      for (;;) {
        if (eat('*')) {
          lhs = make(Op::Mul, std::move(lhs), unary());
        } else if (eat('/')) {
          lhs = make(Op::Div, std::move(lhs), unary());
        } else {
          return lhs;
        }
      }
    }

    std::unique_ptr<Node> unary() {
      if (eat('-')) return make(Op::Neg, unary());
      if (eat('+')) return unary();
      return power();
    }

    std::unique_ptr<Node> power() {
      auto base = primary();
      if (eat('^')) return make(Op::Pow, std::move(base), unary());
      return base;
    }

    std::unique_ptr<Node> primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        auto e = expr();
        expect(')');
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const std::size_t start = pos;
        auto digits = [&] {
          const std::size_t from = pos;
          while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
          return pos > from;
        };
        bool any = digits();
        if (pos < s.size() && s[pos] == '.') {
          ++pos;
          any = digits() || any;
        }
        if (!any) fail("malformed number");
        if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
          ++pos;
          if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
          if (!digits()) fail("malformed exponent");
        }
        const double v = std::strtod(s.substr(start, pos - start).c_str(), nullptr);
        auto n = make(Op::Num);
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string name = s.substr(start, pos - start);
        if (name == "x" || name == "y" || name == "z") {
          auto n = make(Op::Var);
          n->var = name[0] - 'x';
          return n;
        }
        if (name == "abs" || name == "min" || name == "max") {
          expect('(');
          auto a = expr();
          if (name == "abs") {
            expect(')');
            return make(Op::Abs, std::move(a));
          }
          expect(',');
          auto b = expr();
          expect(')');
          return make(name == "min" ? Op::Min : Op::Max, std::move(a), std::move(b));
        }
        pos = start;
        fail("unknown identifier '" + name + "'");
      }
      fail("unexpected '" + std::string(1, c) + "'");
    }
  };

  static double eval(const Node& n, const double* v) {
    switch (n.op) {
      case Op::Num: return n.value;
      case Op::Var: return v[n.var];
      case Op::Add: return eval(*n.a, v) + eval(*n.b, v);
      case Op::Sub: return eval(*n.a, v) - eval(*n.b, v);
      case Op::Mul: return eval(*n.a, v) * eval(*n.b, v);
      case Op::Div: return eval(*n.a, v) / eval(*n.b, v);
      case Op::Pow: return std::pow(eval(*n.a, v), eval(*n.b, v));
      case Op::Neg: return -eval(*n.a, v);
      case Op::Abs: return std::abs(eval(*n.a, v));
      case Op::Min: return std::min(eval(*n.a, v), eval(*n.b, v));
      case Op::Max: return std::max(eval(*n.a, v), eval(*n.b, v));
    }
    return 0.0;
  }

  static unsigned collect(const Node& n) {
    unsigned u = n.op == Op::Var ? (1u << n.var) : 0u;
    if (n.a) u |= collect(*n.a);
    if (n.b) u |= collect(*n.b);
    return u;
  }

  std::string text_;
  std::shared_ptr<const Node> root_;
  unsigned uses_ = 0;
};

/// Two-argument cost from an expression over the variables `first` and
/// `second`; any other variable is rejected.
inline std::function<double(double, double)> pair_cost_from(const std::string& text, char first,
                                                            char second) {
  const Expression e = Expression::parse(text);
  for (char v : {'x', 'y', 'z'}) {
    if (v != first && v != second && e.uses(v)) {
      throw ParseError("expression '" + text + "' uses '" + std::string(1, v) + "' but only " +
                       std::string(1, first) + " and " + std::string(1, second) + " are allowed");
    }
  }
  const int i = first - 'x', j = second - 'x';
  return [e, i, j](double a, double b) {
    double v[3] = {0.0, 0.0, 0.0};
    v[i] = a;
    v[j] = b;
    return e(v[0], v[1], v[2]);
  };
}

}  // namespace motbounds
