#ifndef MODELFIT_EXPR_HPP
#define MODELFIT_EXPR_HPP

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modelfit/errors.hpp"
#include "modelfit/util.hpp"

namespace modelfit {

// Parametric model expressions f(a, t, x): infix source with parameters
// a1..ap, state components x1..xn, the free time symbol t, binary + - * / ^,
// unary -, and the functions exp, log, sin, cos, sqrt, abs. A vector-valued
// model is a comma-separated list of scalar components.
//
// Grammar (^ binds tightest and is right-associative; unary - sits between
// ^ and * /):
//   model   := expr (',' expr)*
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | 't' | a<k> | x<k> | func '(' expr ')' | '(' expr ')'

enum class NodeOp : std::uint8_t {
  number,
  time_ref,
  param_ref,
  state_ref,
  add,
  sub,
  mul,
  div,
  pow,
  neg,
  fn_exp,
  fn_log,
  fn_sin,
  fn_cos,
  fn_sqrt,
  fn_abs,
};

struct ExprNode {
  NodeOp op;
  double number = 0.0; // NodeOp::number payload
  int index = -1;      // 0-based parameter/state index
  int lhs = -1;        // children; nodes are stored in evaluation (post) order
  int rhs = -1;
};

/// Which leaf symbols carry derivative seeds during evaluation.
enum class DiffMode {
  params, // d/da_k, seed count = param_count
  inputs, // d/d(t, x_1..x_n), seed count = 1 + state_dim
};

/// Reusable evaluation buffers; one per thread of concurrent evaluation.
struct EvalScratch {
  std::vector<double> val;
  std::vector<double> der; // node-major rows of `seeds` entries
};

class ModelExpr {
public:
  static ModelExpr parse(std::string_view text, int param_count, int state_dim);

  int param_count() const { return param_count_; }
  int state_dim() const { return state_dim_; }
  int output_dim() const { return static_cast<int>(roots_.size()); }

  bool references_state() const {
    for (const ExprNode& n : nodes_)
      if (n.op == NodeOp::state_ref) return true;
    return false;
  }

  bool references_time() const {
    for (const ExprNode& n : nodes_)
      if (n.op == NodeOp::time_ref) return true;
    return false;
  }

  /// Serialized form reparses to a structurally identical expression.
  std::string to_string() const {
    std::string out;
    for (std::size_t c = 0; c < roots_.size(); ++c) {
      if (c > 0) out += ", ";
      append_node(out, roots_[c], 0);
    }
    return out;
  }

  bool operator==(const ModelExpr& other) const {
    if (param_count_ != other.param_count_ || state_dim_ != other.state_dim_ ||
        roots_.size() != other.roots_.size())
      return false;
    for (std::size_t c = 0; c < roots_.size(); ++c)
      if (!structurally_equal(roots_[c], other, other.roots_[c])) return false;
    return true;
  }

  /// Value of every component. IEEE semantics: domain errors and overflow
  /// propagate as NaN/Inf in `out`; callers that need finiteness check.
  void eval(std::span<const double> params, double t, std::span<const double> state,
            std::span<double> out, EvalScratch& scratch) const {
    check_dims(params, state, out.size());
    scratch.val.resize(nodes_.size());
    forward_values(params, t, state, scratch.val);
    for (std::size_t c = 0; c < roots_.size(); ++c) out[c] = scratch.val[roots_[c]];
  }

  std::vector<double> eval(std::span<const double> params, double t,
                           std::span<const double> state) const {
    EvalScratch scratch;
    std::vector<double> out(roots_.size());
    eval(params, t, state, out, scratch);
    return out;
  }

  /// Value plus exact forward-mode Jacobian. With DiffMode::params the
  /// Jacobian is output_dim x param_count (row-major in `jac`); with
  /// DiffMode::inputs it is output_dim x (1 + state_dim), the t column first.
  void eval_jacobian(std::span<const double> params, double t, std::span<const double> state,
                     DiffMode mode, std::span<double> out, std::span<double> jac,
                     EvalScratch& scratch) const {
    check_dims(params, state, out.size());
    const std::size_t seeds = seed_count(mode);
    if (jac.size() != out.size() * seeds)
      throw ValidationError("eval_jacobian: jacobian buffer has wrong size");
    scratch.val.resize(nodes_.size());
    scratch.der.assign(nodes_.size() * seeds, 0.0);
    forward_values(params, t, state, scratch.val);
    forward_derivatives(mode, seeds, scratch);
    for (std::size_t c = 0; c < roots_.size(); ++c) {
      out[c] = scratch.val[roots_[c]];
      const double* src = scratch.der.data() + static_cast<std::size_t>(roots_[c]) * seeds;
      double* dst = jac.data() + c * seeds;
      for (std::size_t s = 0; s < seeds; ++s) dst[s] = src[s];
    }
  }

  /// Convenience form of eval_jacobian(DiffMode::params).
  std::pair<std::vector<double>, std::vector<double>>
  eval_with_param_gradient(std::span<const double> params, double t,
                           std::span<const double> state) const {
    EvalScratch scratch;
    std::vector<double> out(roots_.size());
    std::vector<double> jac(roots_.size() * static_cast<std::size_t>(param_count_));
    eval_jacobian(params, t, state, DiffMode::params, out, jac, scratch);
    return {std::move(out), std::move(jac)};
  }

  std::size_t seed_count(DiffMode mode) const {
    return mode == DiffMode::params ? static_cast<std::size_t>(param_count_)
                                    : static_cast<std::size_t>(1 + state_dim_);
  }

  std::size_t node_count() const { return nodes_.size(); }

private:
  std::vector<ExprNode> nodes_;
  std::vector<int> roots_;
  int param_count_ = 0;
  int state_dim_ = 0;

  void check_dims(std::span<const double> params, std::span<const double> state,
                  std::size_t out_size) const {
    if (params.size() != static_cast<std::size_t>(param_count_))
      throw ValidationError("parameter vector has size " + std::to_string(params.size()) +
                            ", model declares " + std::to_string(param_count_));
    if (state.size() != static_cast<std::size_t>(state_dim_))
      throw ValidationError("state vector has size " + std::to_string(state.size()) +
                            ", model declares " + std::to_string(state_dim_));
    if (out_size != roots_.size())
      throw ValidationError("output buffer has size " + std::to_string(out_size) +
                            ", model has " + std::to_string(roots_.size()) + " components");
  }

  void forward_values(std::span<const double> params, double t, std::span<const double> state,
                      std::vector<double>& val) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const ExprNode& n = nodes_[i];
      switch (n.op) {
        case NodeOp::number: val[i] = n.number; break;
        case NodeOp::time_ref: val[i] = t; break;
        case NodeOp::param_ref: val[i] = params[static_cast<std::size_t>(n.index)]; break;
        case NodeOp::state_ref: val[i] = state[static_cast<std::size_t>(n.index)]; break;
        case NodeOp::add: val[i] = val[n.lhs] + val[n.rhs]; break;
        case NodeOp::sub: val[i] = val[n.lhs] - val[n.rhs]; break;
        case NodeOp::mul: val[i] = val[n.lhs] * val[n.rhs]; break;
        case NodeOp::div: val[i] = val[n.lhs] / val[n.rhs]; break;
        case NodeOp::pow: val[i] = std::pow(val[n.lhs], val[n.rhs]); break;
        case NodeOp::neg: val[i] = -val[n.lhs]; break;
        case NodeOp::fn_exp: val[i] = std::exp(val[n.lhs]); break;
        case NodeOp::fn_log: val[i] = std::log(val[n.lhs]); break;
        case NodeOp::fn_sin: val[i] = std::sin(val[n.lhs]); break;
        case NodeOp::fn_cos: val[i] = std::cos(val[n.lhs]); break;
        case NodeOp::fn_sqrt: val[i] = std::sqrt(val[n.lhs]); break;
        case NodeOp::fn_abs: val[i] = std::abs(val[n.lhs]); break;
      }
    }
  }

  void forward_derivatives(DiffMode mode, std::size_t seeds, EvalScratch& scratch) const {
    const std::vector<double>& val = scratch.val;
    std::vector<double>& der = scratch.der;
    auto row = [&](int node) { return der.data() + static_cast<std::size_t>(node) * seeds; };
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const ExprNode& n = nodes_[i];
      double* d = row(static_cast<int>(i));
      switch (n.op) {
        case NodeOp::number:
          break; // rows start zeroed
        case NodeOp::time_ref:
          if (mode == DiffMode::inputs) d[0] = 1.0;
          break;
        case NodeOp::param_ref:
          if (mode == DiffMode::params) d[n.index] = 1.0;
          break;
        case NodeOp::state_ref:
          if (mode == DiffMode::inputs) d[1 + n.index] = 1.0;
          break;
        case NodeOp::add: {
          const double *a = row(n.lhs), *b = row(n.rhs);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = a[s] + b[s];
          break;
        }
        case NodeOp::sub: {
          const double *a = row(n.lhs), *b = row(n.rhs);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = a[s] - b[s];
          break;
        }
        case NodeOp::mul: {
          const double *a = row(n.lhs), *b = row(n.rhs);
          const double va = val[n.lhs], vb = val[n.rhs];
          for (std::size_t s = 0; s < seeds; ++s) d[s] = a[s] * vb + va * b[s];
          break;
        }
        case NodeOp::div: {
          const double *a = row(n.lhs), *b = row(n.rhs);
          const double va = val[n.lhs], vb = val[n.rhs];
          for (std::size_t s = 0; s < seeds; ++s) d[s] = (a[s] - (va / vb) * b[s]) / vb;
          break;
        }
        case NodeOp::pow: {
          const double *a = row(n.lhs), *b = row(n.rhs);
          const double base = val[n.lhs], expo = val[n.rhs], v = val[i];
          if (nodes_[n.rhs].op == NodeOp::number) {
            // Power rule for literal exponents keeps d/dx x^2 finite at x <= 0.
            const double scale = expo * std::pow(base, expo - 1.0);
            for (std::size_t s = 0; s < seeds; ++s) d[s] = scale * a[s];
          } else {
            const double lg = std::log(base);
            for (std::size_t s = 0; s < seeds; ++s)
              d[s] = v * (b[s] * lg + expo * a[s] / base);
          }
          break;
        }
        case NodeOp::neg: {
          const double* a = row(n.lhs);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = -a[s];
          break;
        }
        case NodeOp::fn_exp: {
          const double* a = row(n.lhs);
          const double v = val[i];
          for (std::size_t s = 0; s < seeds; ++s) d[s] = v * a[s];
          break;
        }
        case NodeOp::fn_log: {
          const double* a = row(n.lhs);
          const double va = val[n.lhs];
          for (std::size_t s = 0; s < seeds; ++s) d[s] = a[s] / va;
          break;
        }
        case NodeOp::fn_sin: {
          const double* a = row(n.lhs);
          const double c = std::cos(val[n.lhs]);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = c * a[s];
          break;
        }
        case NodeOp::fn_cos: {
          const double* a = row(n.lhs);
          const double sn = -std::sin(val[n.lhs]);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = sn * a[s];
          break;
        }
        case NodeOp::fn_sqrt: {
          const double* a = row(n.lhs);
          const double inv = 0.5 / val[i];
          for (std::size_t s = 0; s < seeds; ++s) d[s] = inv * a[s];
          break;
        }
        case NodeOp::fn_abs: {
          const double* a = row(n.lhs);
          const double va = val[n.lhs];
          const double sign = va > 0.0 ? 1.0 : (va < 0.0 ? -1.0 : 0.0);
          for (std::size_t s = 0; s < seeds; ++s) d[s] = sign * a[s];
          break;
        }
      }
    }
  }

  // ---- serialization -------------------------------------------------

  static int precedence(NodeOp op) {
    switch (op) {
      case NodeOp::add:
      case NodeOp::sub: return 1;
      case NodeOp::mul:
      case NodeOp::div: return 2;
      case NodeOp::neg: return 3;
      case NodeOp::pow: return 4;
      default: return 5;
    }
  }

  void append_node(std::string& out, int idx, int min_prec) const {
    const ExprNode& n = nodes_[static_cast<std::size_t>(idx)];
    const bool parens = precedence(n.op) < min_prec;
    if (parens) out += '(';
    switch (n.op) {
      case NodeOp::number: out += format_double(n.number); break;
      case NodeOp::time_ref: out += 't'; break;
      case NodeOp::param_ref: out += 'a'; out += std::to_string(n.index + 1); break;
      case NodeOp::state_ref: out += 'x'; out += std::to_string(n.index + 1); break;
      case NodeOp::add:
        append_node(out, n.lhs, 1); out += " + "; append_node(out, n.rhs, 2);
        break;
      case NodeOp::sub:
        append_node(out, n.lhs, 1); out += " - "; append_node(out, n.rhs, 2);
        break;
      case NodeOp::mul:
        append_node(out, n.lhs, 2); out += '*'; append_node(out, n.rhs, 3);
        break;
      case NodeOp::div:
        append_node(out, n.lhs, 2); out += '/'; append_node(out, n.rhs, 3);
        break;
      case NodeOp::pow:
        append_node(out, n.lhs, 5); out += '^'; append_node(out, n.rhs, 3);
        break;
      case NodeOp::neg:
        out += '-'; append_node(out, n.lhs, 3);
        break;
      case NodeOp::fn_exp: out += "exp("; append_node(out, n.lhs, 0); out += ')'; break;
      case NodeOp::fn_log: out += "log("; append_node(out, n.lhs, 0); out += ')'; break;
      case NodeOp::fn_sin: out += "sin("; append_node(out, n.lhs, 0); out += ')'; break;
      case NodeOp::fn_cos: out += "cos("; append_node(out, n.lhs, 0); out += ')'; break;
      case NodeOp::fn_sqrt: out += "sqrt("; append_node(out, n.lhs, 0); out += ')'; break;
      case NodeOp::fn_abs: out += "abs("; append_node(out, n.lhs, 0); out += ')'; break;
    }
    if (parens) out += ')';
  }

  bool structurally_equal(int idx, const ModelExpr& other, int other_idx) const {
    const ExprNode& a = nodes_[static_cast<std::size_t>(idx)];
    const ExprNode& b = other.nodes_[static_cast<std::size_t>(other_idx)];
    if (a.op != b.op || a.index != b.index) return false;
    if (a.op == NodeOp::number &&
        !(a.number == b.number || (std::isnan(a.number) && std::isnan(b.number))))
      return false;
    if ((a.lhs >= 0) != (b.lhs >= 0) || (a.rhs >= 0) != (b.rhs >= 0)) return false;
    if (a.lhs >= 0 && !structurally_equal(a.lhs, other, b.lhs)) return false;
    if (a.rhs >= 0 && !structurally_equal(a.rhs, other, b.rhs)) return false;
    return true;
  }

  friend class ExprParser;
};

class ExprParser {
public:
  ExprParser(std::string_view text, int param_count, int state_dim)
      : text_(text), param_count_(param_count), state_dim_(state_dim) {}

  ModelExpr run() {
    ModelExpr model;
    model.param_count_ = param_count_;
    model.state_dim_ = state_dim_;
    skip_ws();
    if (at_end()) throw ParseError("empty expression", pos_);
    while (true) {
      const std::size_t comp_start = pos_;
      skip_ws();
      if (at_end() || peek() == ',')
        throw ParseError("empty component", comp_start);
      model.roots_.push_back(parse_expr(model));
      skip_ws();
      if (at_end()) break;
      if (peek() != ',')
        throw ParseError(std::string("unexpected character '") + peek() + "'", pos_);
      ++pos_; // consume ','
      skip_ws();
      if (at_end()) throw ParseError("empty component", pos_);
    }
    return model;
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int param_count_;
  int state_dim_;

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  int push(ModelExpr& m, ExprNode n) {
    m.nodes_.push_back(n);
    return static_cast<int>(m.nodes_.size()) - 1;
  }

  int parse_expr(ModelExpr& m) {
    int lhs = parse_term(m);
    while (true) {
      skip_ws();
      if (at_end()) return lhs;
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      const int rhs = parse_term(m);
      lhs = push(m, {c == '+' ? NodeOp::add : NodeOp::sub, 0.0, -1, lhs, rhs});
    }
  }

  int parse_term(ModelExpr& m) {
    int lhs = parse_unary(m);
    while (true) {
      skip_ws();
      if (at_end()) return lhs;
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      const int rhs = parse_unary(m);
      lhs = push(m, {c == '*' ? NodeOp::mul : NodeOp::div, 0.0, -1, lhs, rhs});
    }
  }

  int parse_unary(ModelExpr& m) {
    skip_ws();
    if (at_end()) throw ParseError("unexpected end of expression", pos_);
    if (peek() == '-') {
      ++pos_;
      const int child = parse_unary(m);
      return push(m, {NodeOp::neg, 0.0, -1, child, -1});
    }
    return parse_power(m);
  }

  int parse_power(ModelExpr& m) {
    const int base = parse_primary(m);
    skip_ws();
    if (!at_end() && peek() == '^') {
      ++pos_;
      const int expo = parse_unary(m); // right-associative; allows a^-2
      return push(m, {NodeOp::pow, 0.0, -1, base, expo});
    }
    return base;
  }

  int parse_primary(ModelExpr& m) {
    skip_ws();
    if (at_end()) throw ParseError("unexpected end of expression", pos_);
    const char c = peek();
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr(m);
      skip_ws();
      if (at_end() || peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number(m);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier(m);
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  int parse_number(ModelExpr& m) {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.'))
      ++pos_;
    if (!at_end() && (peek() == 'e' || peek() == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (!at_end() && (peek() == '+' || peek() == '-')) ++pos_;
      if (at_end() || !std::isdigit(static_cast<unsigned char>(peek()))) {
        pos_ = mark; // not an exponent after all (e.g. "2*exp(t)" never hits this)
      } else {
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
      throw ParseError("malformed number '" + std::string(first, last) + "'", start);
    return push(m, {NodeOp::number, value, -1, -1, -1});
  }

  int parse_identifier(ModelExpr& m) {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
      ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    if (name == "t") return push(m, {NodeOp::time_ref, 0.0, -1, -1, -1});
    if (name == "exp" || name == "log" || name == "sin" || name == "cos" ||
        name == "sqrt" || name == "abs") {
      skip_ws();
      if (at_end() || peek() != '(')
        throw ParseError("expected '(' after function '" + std::string(name) + "'", pos_);
      ++pos_;
      const int arg = parse_expr(m);
      skip_ws();
      if (at_end() || peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      NodeOp op = NodeOp::fn_exp;
      if (name == "log") op = NodeOp::fn_log;
      else if (name == "sin") op = NodeOp::fn_sin;
      else if (name == "cos") op = NodeOp::fn_cos;
      else if (name == "sqrt") op = NodeOp::fn_sqrt;
      else if (name == "abs") op = NodeOp::fn_abs;
      return push(m, {op, 0.0, -1, arg, -1});
    }
    if ((name[0] == 'a' || name[0] == 'x') && name.size() > 1) {
      int k = 0;
      const char* first = name.data() + 1;
      const char* last = name.data() + name.size();
      auto [ptr, ec] = std::from_chars(first, last, k);
      if (ec == std::errc{} && ptr == last) {
        const bool is_param = name[0] == 'a';
        const int limit = is_param ? param_count_ : state_dim_;
        if (k < 1 || k > limit)
          throw ParseError("undeclared symbol '" + std::string(name) + "' (" +
                               (is_param ? "param_count" : "state_dim") + " is " +
                               std::to_string(limit) + ")",
                           start);
        return push(m, {is_param ? NodeOp::param_ref : NodeOp::state_ref, 0.0, k - 1, -1, -1});
      }
    }
    throw ParseError("unknown symbol '" + std::string(name) + "'", start);
  }
};

inline ModelExpr ModelExpr::parse(std::string_view text, int param_count, int state_dim) {
  if (param_count < 0) throw ValidationError("param_count must be >= 0");
  if (state_dim < 0) throw ValidationError("state_dim must be >= 0");
  return ExprParser(text, param_count, state_dim).run();
}

inline ModelExpr parse_model(std::string_view text, int param_count, int state_dim) {
  return ModelExpr::parse(text, param_count, state_dim);
}

} // namespace modelfit

#endif // MODELFIT_EXPR_HPP
