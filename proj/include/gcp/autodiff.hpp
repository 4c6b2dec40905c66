#pragma once

// Scalar-graph reverse-mode differentiation.
//
// A Graph records every operation as a node holding its value and the local
// partial derivatives with respect to at most two parents. Nodes are appended
// in evaluation order, so a single reverse sweep propagates adjoints.
//
// Var is a lightweight handle. A Var without a graph is a constant: arithmetic
// between constants folds immediately and never touches a graph.

#include <cstdint>
#include <span>
#include <vector>

#include "gcp/error.hpp"

namespace gcp {

enum class OpTag : std::uint8_t {
  Leaf, Add, Sub, Mul, Div, Neg, Exp, Log, Tanh, Relu, Sin, Sqrt, Square, Clamp,
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT: implicit constants keep expressions readable

  double value() const noexcept { return value_; }
  bool is_constant() const noexcept { return graph_ == nullptr; }
  Graph* graph() const noexcept { return graph_; }
  std::uint32_t id() const noexcept { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id, double value) : graph_(g), id_(id), value_(value) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
  double value_ = 0.0;
};

inline double value_of(const Var& v) { return v.value(); }

class Graph {
 public:
  struct Node {
    OpTag op;
    std::uint8_t arity;
    std::uint32_t parent[2];
    double partial[2];
    double value;
  };

  /// New differentiable leaf.
  Var variable(double value);
  std::vector<Var> variables(std::span<const double> values);

  /// Records a node with one or two parents; constants are dropped from the
  /// parent list.
  Var unary(OpTag op, const Var& a, double value, double da);
  Var binary(OpTag op, const Var& a, const Var& b, double value, double da, double db);

  /// Reverse sweep from a scalar node. Afterwards adjoint(v) is d loss / d v.
  void backward(const Var& loss);

  double adjoint(const Var& v) const;
  std::vector<double> adjoints(std::span<const Var> vars) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_.at(id); }

  /// Drops all nodes but keeps capacity; outstanding Vars become invalid.
  void clear();

 private:
  std::vector<Node> nodes_;
  std::vector<double> adjoint_;
};

Graph* common_graph(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var exp(const Var& a);
/// Throws DomainError for non-positive input.
Var log(const Var& a);
Var tanh(const Var& a);
/// relu'(0) = 0.
Var relu(const Var& a);
Var sin(const Var& a);
/// Throws DomainError for negative input; the derivative at 0 is taken as 0.
Var sqrt(const Var& a);
Var square(const Var& a);
/// min(max(a, lo), hi); the derivative is zero outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);

}  // namespace gcp
