#include "gcp/autodiff.hpp"

#include <cmath>
#include <string>

namespace gcp {

Var Graph::variable(double value) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{OpTag::Leaf, 0, {0, 0}, {0.0, 0.0}, value});
  return Var(this, id, value);
}

std::vector<Var> Graph::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Var Graph::unary(OpTag op, const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{op, 1, {a.id(), 0}, {da, 0.0}, value});
  return Var(this, id, value);
}

Var Graph::binary(OpTag op, const Var& a, const Var& b, double value, double da, double db) {
  if (a.is_constant()) return unary(op, b, value, db);
  if (b.is_constant()) return unary(op, a, value, da);
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{op, 2, {a.id(), b.id()}, {da, db}, value});
  return Var(this, id, value);
}

void Graph::backward(const Var& loss) {
  adjoint_.assign(nodes_.size(), 0.0);
  if (loss.is_constant()) return;
  if (loss.graph() != this) throw Error(ErrorCode::ShapeMismatch, "loss belongs to another graph");
  adjoint_[loss.id()] = 1.0;
  for (std::uint32_t i = loss.id() + 1; i-- > 0;) {
    const double g = adjoint_[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    for (std::uint8_t p = 0; p < n.arity; ++p) adjoint_[n.parent[p]] += g * n.partial[p];
  }
}

double Graph::adjoint(const Var& v) const {
  if (v.is_constant()) return 0.0;
  return v.id() < adjoint_.size() ? adjoint_[v.id()] : 0.0;
}

std::vector<double> Graph::adjoints(std::span<const Var> vars) const {
  std::vector<double> out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(adjoint(v));
  return out;
}

void Graph::clear() {
  nodes_.clear();
  adjoint_.clear();
}

Graph* common_graph(const Var& a, const Var& b) {
  if (a.graph() && b.graph() && a.graph() != b.graph()) {
    throw Error(ErrorCode::ShapeMismatch, "operands belong to different graphs");
  }
  return a.graph() ? a.graph() : b.graph();
}

Var operator+(const Var& a, const Var& b) {
  Graph* g = common_graph(a, b);
  const double v = a.value() + b.value();
  return g ? g->binary(OpTag::Add, a, b, v, 1.0, 1.0) : Var(v);
}

Var operator-(const Var& a, const Var& b) {
  Graph* g = common_graph(a, b);
  const double v = a.value() - b.value();
  return g ? g->binary(OpTag::Sub, a, b, v, 1.0, -1.0) : Var(v);
}

Var operator*(const Var& a, const Var& b) {
  Graph* g = common_graph(a, b);
  const double v = a.value() * b.value();
  return g ? g->binary(OpTag::Mul, a, b, v, b.value(), a.value()) : Var(v);
}

Var operator/(const Var& a, const Var& b) {
  if (b.value() == 0.0) throw Error(ErrorCode::DomainError, "division by zero");
  Graph* g = common_graph(a, b);
  const double inv = 1.0 / b.value();
  const double v = a.value() * inv;
  return g ? g->binary(OpTag::Div, a, b, v, inv, -v * inv) : Var(v);
}

Var operator-(const Var& a) {
  return a.is_constant() ? Var(-a.value()) : a.graph()->unary(OpTag::Neg, a, -a.value(), -1.0);
}

Var exp(const Var& a) {
  const double v = std::exp(a.value());
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Exp, a, v, v);
}

Var log(const Var& a) {
  if (!(a.value() > 0.0)) {
    throw Error(ErrorCode::DomainError, "log of non-positive value " + std::to_string(a.value()));
  }
  const double v = std::log(a.value());
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Log, a, v, 1.0 / a.value());
}

Var tanh(const Var& a) {
  const double v = std::tanh(a.value());
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Tanh, a, v, 1.0 - v * v);
}

Var relu(const Var& a) {
  const double v = a.value() > 0.0 ? a.value() : 0.0;
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Relu, a, v, a.value() > 0.0 ? 1.0 : 0.0);
}

Var sin(const Var& a) {
  const double v = std::sin(a.value());
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Sin, a, v, std::cos(a.value()));
}

Var sqrt(const Var& a) {
  if (!(a.value() >= 0.0)) {
    throw Error(ErrorCode::DomainError, "sqrt of negative value " + std::to_string(a.value()));
  }
  const double v = std::sqrt(a.value());
  const double d = v > 0.0 ? 0.5 / v : 0.0;
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Sqrt, a, v, d);
}

Var square(const Var& a) {
  const double v = a.value() * a.value();
  return a.is_constant() ? Var(v) : a.graph()->unary(OpTag::Square, a, v, 2.0 * a.value());
}

Var clamp(const Var& a, double lo, double hi) {
  if (a.value() < lo) return Var(lo);
  if (a.value() > hi) return Var(hi);
  return a.is_constant() ? a : a.graph()->unary(OpTag::Clamp, a, a.value(), 1.0);
}

}  // namespace gcp
