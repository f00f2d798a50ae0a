#pragma once

// Scalar expressions over chart coordinates x1..xn and fiber coordinates
// y1..yn. Expressions are immutable; evaluation is templated on the scalar
// type so the same tree evaluates on doubles and on nested dual numbers.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sode/dual.hpp"
#include "sode/errors.hpp"

namespace sode {

enum class Op : std::uint8_t {
  Number,
  Constant,  // pi, e
  VarX,
  VarY,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,       // general exponent, base must be positive
  PowConst,  // tape-only: exponent folded to a constant
  Sin,
  Cos,
  Tan,
  Exp,
  Log,
  Sqrt,
  Abs,
  Atan,
  Tanh,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;  // Number / Constant
  int index = 0;       // VarX / VarY, 1-based
  NodePtr lhs;         // unary argument or left operand
  NodePtr rhs;
};

/// A reference to one coordinate: x<k> or y<k>.
struct VarRef {
  enum class Kind { X, Y } kind;
  int index;  // 1-based

  static VarRef parse(std::string_view name);
  std::string name() const;
};

/// Point of TM in induced coordinates used as an evaluation environment.
class Binding {
 public:
  Binding(std::vector<double> x, std::vector<double> y);
  std::size_t dim() const noexcept { return x_.size(); }
  std::span<const double> x() const noexcept { return x_; }
  std::span<const double> y() const noexcept { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

[[noreturn]] void raise_domain_error(const Node* node, const char* what,
                                     std::span<const double> x,
                                     std::span<const double> y);

class Expression {
 public:
  /// Parses `text`. When `dim` is given, variable indices above it are rejected.
  static Expression parse(std::string_view text, std::optional<std::size_t> dim = std::nullopt);

  static Expression number(double c);
  static Expression x(int k);
  static Expression y(int k);

  Expression();  // the constant 0

  friend Expression operator+(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a, const Expression& b);
  friend Expression operator*(const Expression& a, const Expression& b);
  friend Expression operator/(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a);
  Expression pow(const Expression& exponent) const;
  static Expression apply(Op function, const Expression& arg);

  /// Canonical text form; parse(str()) is structurally identical to *this.
  std::string str() const;
  bool structurally_equal(const Expression& other) const;

  int max_x_index() const noexcept { return max_x_; }
  int max_y_index() const noexcept { return max_y_; }
  bool is_zero_literal() const noexcept;

  const Node& root() const noexcept { return *root_; }

  template <typename T>
  T eval(std::span<const T> x, std::span<const T> y) const;

 private:
  struct Instr {
    Op op;
    double value;
    int index;
    const Node* node;
  };
  struct Tape {
    std::vector<Instr> code;
    std::size_t max_stack = 0;
  };

  explicit Expression(NodePtr root);
  void compile();

  NodePtr root_;
  std::shared_ptr<const Tape> tape_;
  int max_x_ = 0;
  int max_y_ = 0;
};

std::string to_string(Op op);

// Free-function surface.
double evaluate(const Expression& e, const Binding& b);
double partial(const Expression& e, std::string_view var, const Binding& b);
double second_partial(const Expression& e, std::string_view var1, std::string_view var2,
                      const Binding& b);

// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
inline std::vector<double> primals(std::span<const T> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = primal(v[i]);
  return out;
}

inline bool is_integer(double c) { return std::floor(c) == c; }

}  // namespace detail

template <typename T>
T Expression::eval(std::span<const T> x, std::span<const T> y) const {
  const Tape& tape = *tape_;
  constexpr std::size_t kInline = 24;
  std::array<T, kInline> small{};
  std::vector<T> large;
  T* stack = small.data();
  if (tape.max_stack > kInline) {
    large.resize(tape.max_stack);
    stack = large.data();
  }
  std::size_t sp = 0;

  auto fail = [&](const Instr& in, const char* what) {
    raise_domain_error(in.node, what, detail::primals(x), detail::primals(y));
  };

  for (const Instr& in : tape.code) {
    switch (in.op) {
      case Op::Number:
      case Op::Constant:
        stack[sp++] = T(in.value);
        break;
      case Op::VarX:
        if (static_cast<std::size_t>(in.index) > x.size()) fail(in, "unbound variable");
        stack[sp++] = x[in.index - 1];
        break;
      case Op::VarY:
        if (static_cast<std::size_t>(in.index) > y.size()) fail(in, "unbound variable");
        stack[sp++] = y[in.index - 1];
        break;
      case Op::Neg:
        stack[sp - 1] = -stack[sp - 1];
        break;
      case Op::Add:
        --sp;
        stack[sp - 1] = stack[sp - 1] + stack[sp];
        break;
      case Op::Sub:
        --sp;
        stack[sp - 1] = stack[sp - 1] - stack[sp];
        break;
      case Op::Mul:
        --sp;
        stack[sp - 1] = stack[sp - 1] * stack[sp];
        break;
      case Op::Div:
        --sp;
        if (primal(stack[sp]) == 0.0) fail(in, "division by zero");
        stack[sp - 1] = stack[sp - 1] / stack[sp];
        break;
      case Op::Pow: {
        --sp;
        if (!(primal(stack[sp - 1]) > 0.0)) fail(in, "nonpositive base with variable exponent");
        using std::exp;
        using std::log;
        stack[sp - 1] = exp(stack[sp] * log(stack[sp - 1]));
        break;
      }
      case Op::PowConst: {
        T& a = stack[sp - 1];
        const double c = in.value;
        const double base = primal(a);
        if (base < 0.0 && !detail::is_integer(c)) fail(in, "negative base with fractional exponent");
        if (base == 0.0 && c < 0.0) fail(in, "division by zero");
        if (c == 2.0) {
          a = a * a;
        } else {
          using std::pow;
          a = pow(a, c);
        }
        break;
      }
      case Op::Sin: {
        using std::sin;
        stack[sp - 1] = sin(stack[sp - 1]);
        break;
      }
      case Op::Cos: {
        using std::cos;
        stack[sp - 1] = cos(stack[sp - 1]);
        break;
      }
      case Op::Tan: {
        using std::tan;
        stack[sp - 1] = tan(stack[sp - 1]);
        break;
      }
      case Op::Exp: {
        using std::exp;
        stack[sp - 1] = exp(stack[sp - 1]);
        break;
      }
      case Op::Log: {
        if (!(primal(stack[sp - 1]) > 0.0)) fail(in, "log of nonpositive argument");
        using std::log;
        stack[sp - 1] = log(stack[sp - 1]);
        break;
      }
      case Op::Sqrt: {
        if (primal(stack[sp - 1]) < 0.0) fail(in, "sqrt of negative argument");
        using std::sqrt;
        stack[sp - 1] = sqrt(stack[sp - 1]);
        break;
      }
      case Op::Abs: {
        using std::abs;
        stack[sp - 1] = abs(stack[sp - 1]);
        break;
      }
      case Op::Atan: {
        using std::atan;
        stack[sp - 1] = atan(stack[sp - 1]);
        break;
      }
      case Op::Tanh: {
        using std::tanh;
        stack[sp - 1] = tanh(stack[sp - 1]);
        break;
      }
    }
    if (!all_finite(stack[sp - 1])) fail(in, "non-finite result");
  }
  return stack[0];
}

}  // namespace sode
