#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>

#include "perstab/core.hpp"

namespace perstab {

// Minimal arithmetic expression evaluator for coefficient entries given as
// strings, e.g. "0.5 + 0.9*cos(t)^2". Grammar: + - * / ^ (right-assoc),
// unary minus, parentheses, variable t, constants pi and e, functions
// sin cos tan exp log sqrt abs sinh cosh tanh.
class Expr {
 public:
  explicit Expr(std::string source) : source_(std::move(source)) {
    Parser parser(source_);
    root_ = parser.parse();
  }

  double operator()(double t) const { return root_->eval(t); }
  const std::string& source() const { return source_; }

 private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(double t) const = 0;
  };
  using NodePtr = std::unique_ptr<Node>;

  struct Const : Node {
    double v;
    explicit Const(double x) : v(x) {}
    double eval(double) const override { return v; }
  };
  struct Var : Node {
    double eval(double t) const override { return t; }
  };
  struct Unary : Node {
    char op;
    NodePtr arg;
    Unary(char o, NodePtr a) : op(o), arg(std::move(a)) {}
    double eval(double t) const override { return -arg->eval(t); }
  };
  struct Binary : Node {
    char op;
    NodePtr lhs, rhs;
    Binary(char o, NodePtr l, NodePtr r) : op(o), lhs(std::move(l)), rhs(std::move(r)) {}
    double eval(double t) const override {
      double a = lhs->eval(t), b = rhs->eval(t);
      switch (op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return std::pow(a, b);
      }
      return 0.0;
    }
  };
  struct Call : Node {
    double (*fn)(double);
    NodePtr arg;
    Call(double (*f)(double), NodePtr a) : fn(f), arg(std::move(a)) {}
    double eval(double t) const override { return fn(arg->eval(t)); }
  };

  class Parser {
   public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
      NodePtr e = sum();
      skip_ws();
      if (pos_ != s_.size()) fail("trailing input");
      return e;
    }

   private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) {
      throw PerstabError("expr: " + what + " at offset " + std::to_string(pos_) +
                         " in \"" + s_ + "\"");
    }
    void skip_ws() {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == c) {
        ++pos_;
        return true;
      }
      return false;
    }

    NodePtr sum() {
      NodePtr lhs = product();
      for (;;) {
        if (eat('+')) lhs = std::make_unique<Binary>('+', std::move(lhs), product());
        else if (eat('-')) lhs = std::make_unique<Binary>('-', std::move(lhs), product());
        else return lhs;
      }
    }
    NodePtr product() {
      NodePtr lhs = unary();
      for (;;) {
        if (eat('*')) lhs = std::make_unique<Binary>('*', std::move(lhs), unary());
        else if (eat('/')) lhs = std::make_unique<Binary>('/', std::move(lhs), unary());
        else return lhs;
      }
    }
    NodePtr unary() {
      if (eat('-')) return std::make_unique<Unary>('-', unary());
      if (eat('+')) return unary();
      return power();
    }
    NodePtr power() {
      NodePtr base = atom();
      if (eat('^')) return std::make_unique<Binary>('^', std::move(base), unary());
      return base;
    }
    NodePtr atom() {
      skip_ws();
      if (pos_ >= s_.size()) fail("unexpected end");
      char c = s_[pos_];
      if (c == '(') {
        ++pos_;
        NodePtr e = sum();
        if (!eat(')')) fail("missing ')'");
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return name();
      fail("unexpected character");
    }
    NodePtr number() {
      std::size_t end = 0;
      double v = std::stod(s_.substr(pos_), &end);
      pos_ += end;
      return std::make_unique<Const>(v);
    }
    NodePtr name() {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string id = s_.substr(start, pos_ - start);
      if (id == "t") return std::make_unique<Var>();
      if (id == "pi") return std::make_unique<Const>(kPi);
      if (id == "e") return std::make_unique<Const>(std::exp(1.0));
      double (*fn)(double) = nullptr;
      if (id == "sin") fn = std::sin;
      else if (id == "cos") fn = std::cos;
      else if (id == "tan") fn = std::tan;
      else if (id == "exp") fn = std::exp;
      else if (id == "log") fn = std::log;
      else if (id == "sqrt") fn = std::sqrt;
      else if (id == "abs") fn = std::fabs;
      else if (id == "sinh") fn = std::sinh;
      else if (id == "cosh") fn = std::cosh;
      else if (id == "tanh") fn = std::tanh;
      if (!fn) fail("unknown identifier '" + id + "'");
      if (!eat('(')) fail("expected '(' after function name");
      NodePtr arg = sum();
      if (!eat(')')) fail("missing ')'");
      return std::make_unique<Call>(fn, std::move(arg));
    }
  };

  std::string source_;
  std::shared_ptr<Node> root_;
};

}  // namespace perstab
