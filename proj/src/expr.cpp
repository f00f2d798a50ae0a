#include "sode/expr.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sode {

namespace {

struct FunctionName {
  std::string_view name;
  Op op;
};

constexpr FunctionName kFunctions[] = {
    {"sin", Op::Sin},   {"cos", Op::Cos},   {"tan", Op::Tan},   {"exp", Op::Exp},  {"log", Op::Log},
    {"sqrt", Op::Sqrt}, {"abs", Op::Abs},   {"atan", Op::Atan}, {"tanh", Op::Tanh},
};

bool is_function(Op op) {
  for (const auto& f : kFunctions)
    if (f.op == op) return true;
  return false;
}

NodePtr make_leaf(Op op, double value = 0.0, int index = 0) {
  return std::make_shared<const Node>(Node{op, value, index, nullptr, nullptr});
}

NodePtr make_node(Op op, NodePtr lhs, NodePtr rhs = nullptr) {
  return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(lhs), std::move(rhs)});
}

bool has_variables(const Node& n) {
  if (n.op == Op::VarX || n.op == Op::VarY) return true;
  if (n.lhs && has_variables(*n.lhs)) return true;
  if (n.rhs && has_variables(*n.rhs)) return true;
  return false;
}

// Recursive-descent parser for
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' power)?
//   atom  := number | ident | ident '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view text, std::optional<std::size_t> dim) : text_(text), dim_(dim) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError("syntax error: " + what, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make_node(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = make_node(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_node(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = make_node(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_node(Op::Neg, unary());
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) {
      skip_ws();
      if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+'))
        fail("unparenthesized sign in exponent");
      return make_node(Op::Pow, base, power());
    }
    return base;
  }

  NodePtr atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) fail("malformed number");
    // Exponent part only when followed by digits, so "2e" is not swallowed.
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        digits();
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_ || !std::isfinite(value)) {
      pos_ = start;
      fail("malformed number");
    }
    return make_leaf(Op::Number, value);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view id = text_.substr(start, pos_ - start);

    for (const auto& f : kFunctions) {
      if (id == f.name) {
        if (!accept('(')) fail("expected '(' after function " + std::string(id));
        NodePtr arg = expr();
        if (!accept(')')) fail("expected ')'");
        return make_node(f.op, arg);
      }
    }
    if (id == "pi") return make_leaf(Op::Constant, std::numbers::pi, 0);
    if (id == "e") return make_leaf(Op::Constant, std::numbers::e, 1);

    if (id.size() >= 2 && (id[0] == 'x' || id[0] == 'y')) {
      const std::string_view digits = id.substr(1);
      int k = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && k >= 1 && digits[0] != '0') {
        if (dim_ && static_cast<std::size_t>(k) > *dim_) {
          pos_ = start;
          throw ParseError("variable " + std::string(id) + " exceeds dimension " + std::to_string(*dim_),
                           start);
        }
        return make_leaf(id[0] == 'x' ? Op::VarX : Op::VarY, 0.0, k);
      }
    }
    pos_ = start;
    fail("unknown identifier '" + std::string(id) + "'");
  }

  std::string_view text_;
  std::optional<std::size_t> dim_;
  std::size_t pos_ = 0;
};

std::string number_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

const char* binary_symbol(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Pow: return "^";
    default: return "?";
  }
}

// Every printed form is an atom in the grammar, so it can be substituted in
// any context without precedence analysis.
void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::Number:
      out += number_text(n.value);
      return;
    case Op::Constant:
      out += n.index == 0 ? "pi" : "e";
      return;
    case Op::VarX:
    case Op::VarY:
      out += n.op == Op::VarX ? 'x' : 'y';
      out += std::to_string(n.index);
      return;
    case Op::Neg:
      out += "(-";
      print(*n.lhs, out);
      out += ')';
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      out += '(';
      print(*n.lhs, out);
      out += ' ';
      out += binary_symbol(n.op);
      out += ' ';
      print(*n.rhs, out);
      out += ')';
      return;
    default:
      out += to_string(n.op);
      out += '(';
      print(*n.lhs, out);
      out += ')';
      return;
  }
}

bool equal(const Node& a, const Node& b) {
  if (a.op != b.op || a.index != b.index) return false;
  if ((a.op == Op::Number || a.op == Op::Constant) && a.value != b.value) return false;
  if (static_cast<bool>(a.lhs) != static_cast<bool>(b.lhs)) return false;
  if (static_cast<bool>(a.rhs) != static_cast<bool>(b.rhs)) return false;
  if (a.lhs && !equal(*a.lhs, *b.lhs)) return false;
  if (a.rhs && !equal(*a.rhs, *b.rhs)) return false;
  return true;
}

void max_indices(const Node& n, int& mx, int& my) {
  if (n.op == Op::VarX) mx = std::max(mx, n.index);
  if (n.op == Op::VarY) my = std::max(my, n.index);
  if (n.lhs) max_indices(*n.lhs, mx, my);
  if (n.rhs) max_indices(*n.rhs, mx, my);
}

}  // namespace

std::string to_string(Op op) {
  for (const auto& f : kFunctions)
    if (f.op == op) return std::string(f.name);
  switch (op) {
    case Op::Number: return "number";
    case Op::Constant: return "constant";
    case Op::VarX: return "x";
    case Op::VarY: return "y";
    case Op::Neg: return "neg";
    case Op::PowConst: return "^";
    default: return binary_symbol(op);
  }
}

VarRef VarRef::parse(std::string_view name) {
  if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'y')) {
    int k = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
    if (ec == std::errc() && ptr == name.data() + name.size() && k >= 1)
      return VarRef{name[0] == 'x' ? Kind::X : Kind::Y, k};
  }
  throw ValidationError("not a coordinate name: '" + std::string(name) + "'");
}

std::string VarRef::name() const { return (kind == Kind::X ? "x" : "y") + std::to_string(index); }

Binding::Binding(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.empty() || x_.size() != y_.size())
    throw ValidationError("binding needs |x| = |y| = n > 0, got |x| = " + std::to_string(x_.size()) +
                          ", |y| = " + std::to_string(y_.size()));
}

void raise_domain_error(const Node* node, const char* what, std::span<const double> x,
                        std::span<const double> y) {
  std::ostringstream os;
  os.precision(17);
  os << "domain error: " << what;
  if (node) {
    std::string sub;
    print(*node, sub);
    os << " in '" << sub << "'";
  }
  os << " at x=(";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "), y=(";
  for (std::size_t i = 0; i < y.size(); ++i) os << (i ? "," : "") << y[i];
  os << ")";
  throw DomainError(os.str());
}

// ---- Expression -----------------------------------------------------------

Expression::Expression() : Expression(make_leaf(Op::Number, 0.0)) {}

Expression::Expression(NodePtr root) : root_(std::move(root)) {
  max_indices(*root_, max_x_, max_y_);
  compile();
}

Expression Expression::parse(std::string_view text, std::optional<std::size_t> dim) {
  return Expression(Parser(text, dim).parse());
}

Expression Expression::number(double c) {
  if (!std::isfinite(c)) throw ValidationError("non-finite literal");
  if (std::signbit(c)) return Expression(make_node(Op::Neg, make_leaf(Op::Number, -c)));
  return Expression(make_leaf(Op::Number, c));
}

Expression Expression::x(int k) {
  if (k < 1) throw ValidationError("coordinate indices start at 1");
  return Expression(make_leaf(Op::VarX, 0.0, k));
}

Expression Expression::y(int k) {
  if (k < 1) throw ValidationError("coordinate indices start at 1");
  return Expression(make_leaf(Op::VarY, 0.0, k));
}

Expression operator+(const Expression& a, const Expression& b) { return Expression(make_node(Op::Add, a.root_, b.root_)); }
Expression operator-(const Expression& a, const Expression& b) { return Expression(make_node(Op::Sub, a.root_, b.root_)); }
Expression operator*(const Expression& a, const Expression& b) { return Expression(make_node(Op::Mul, a.root_, b.root_)); }
Expression operator/(const Expression& a, const Expression& b) { return Expression(make_node(Op::Div, a.root_, b.root_)); }
Expression operator-(const Expression& a) { return Expression(make_node(Op::Neg, a.root_)); }

Expression Expression::pow(const Expression& exponent) const {
  return Expression(make_node(Op::Pow, root_, exponent.root_));
}

Expression Expression::apply(Op function, const Expression& arg) {
  if (!is_function(function)) throw ValidationError("not a function: " + to_string(function));
  return Expression(make_node(function, arg.root_));
}

std::string Expression::str() const {
  std::string out;
  print(*root_, out);
  // Drop one redundant outer pair of parentheses for readability.
  if (out.size() >= 2 && out.front() == '(' && root_->op != Op::Neg) return out.substr(1, out.size() - 2);
  return out;
}

bool Expression::structurally_equal(const Expression& other) const { return equal(*root_, *other.root_); }

bool Expression::is_zero_literal() const noexcept { return root_->op == Op::Number && root_->value == 0.0; }

void Expression::compile() {
  auto tape = std::make_shared<Tape>();
  std::size_t depth = 0;
  auto emit = [&](auto&& self, const Node& n) -> void {
    switch (n.op) {
      case Op::Number:
      case Op::Constant:
        tape->code.push_back({n.op, n.value, 0, &n});
        tape->max_stack = std::max(tape->max_stack, ++depth);
        return;
      case Op::VarX:
      case Op::VarY:
        tape->code.push_back({n.op, 0.0, n.index, &n});
        tape->max_stack = std::max(tape->max_stack, ++depth);
        return;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        self(self, *n.lhs);
        self(self, *n.rhs);
        tape->code.push_back({n.op, 0.0, 0, &n});
        --depth;
        return;
      case Op::Pow:
        self(self, *n.lhs);
        if (!has_variables(*n.rhs)) {
          const double c = Expression(n.rhs).eval<double>({}, {});
          tape->code.push_back({Op::PowConst, c, 0, &n});
        } else {
          self(self, *n.rhs);
          tape->code.push_back({Op::Pow, 0.0, 0, &n});
          --depth;
        }
        return;
      default:  // unary
        self(self, *n.lhs);
        tape->code.push_back({n.op, 0.0, 0, &n});
        return;
    }
  };
  emit(emit, *root_);
  tape_ = std::move(tape);
}

// ---- free functions -------------------------------------------------------

double evaluate(const Expression& e, const Binding& b) { return e.eval<double>(b.x(), b.y()); }

double partial(const Expression& e, std::string_view var, const Binding& b) {
  const VarRef v = VarRef::parse(var);
  if (static_cast<std::size_t>(v.index) > b.dim()) throw ValidationError("variable " + v.name() + " not bound");
  std::vector<D1> x(b.dim()), y(b.dim());
  for (std::size_t i = 0; i < b.dim(); ++i) {
    x[i] = lift(b.x()[i]);
    y[i] = lift(b.y()[i]);
  }
  auto& slot = v.kind == VarRef::Kind::X ? x : y;
  slot[v.index - 1].d = 1.0;
  return e.eval<D1>(x, y).d;
}

double second_partial(const Expression& e, std::string_view var1, std::string_view var2, const Binding& b) {
  const VarRef v1 = VarRef::parse(var1);
  const VarRef v2 = VarRef::parse(var2);
  for (const auto& v : {v1, v2})
    if (static_cast<std::size_t>(v.index) > b.dim()) throw ValidationError("variable " + v.name() + " not bound");
  std::vector<D2> x(b.dim()), y(b.dim());
  for (std::size_t i = 0; i < b.dim(); ++i) {
    x[i] = lift(lift(b.x()[i]));
    y[i] = lift(lift(b.y()[i]));
  }
  auto& s1 = v1.kind == VarRef::Kind::X ? x : y;
  s1[v1.index - 1].v.d = 1.0;  // inner tangent
  auto& s2 = v2.kind == VarRef::Kind::X ? x : y;
  s2[v2.index - 1].d.v = 1.0;  // outer tangent
  return e.eval<D2>(x, y).d.d;
}

}  // namespace sode
