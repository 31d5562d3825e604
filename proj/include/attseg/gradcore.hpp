#pragma once

// Dense rank-2 matrices and a tape-based reverse-mode differentiation engine.
//
// A Graph records nodes in creation order; that order is a valid topological
// order, so backward() walks the tape in reverse and gradient accumulation is
// bit-reproducible. Trainable parameters live in a ParameterStore and enter a
// graph through Graph::param(), which returns one leaf per parameter per graph.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace attseg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Constant added under the square root of the differentiable absolute value.
inline constexpr double kSmoothAbsEps = 1e-3;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Named trainable tensors. Entries keep stable addresses and insertion order.
class ParameterStore {
public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

private:
  std::deque<Parameter> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class Op : std::uint8_t {
  constant,
  param,
  matmul,
  add,
  sub,
  mul,
  scale,
  shift,
  tanh,
  sigmoid,
  masked_softmax,
  row_normalize,
  concat_cols,
  column,
  row_dot,
  sum,
  mean,
  gather_rows,
  dropout,
  where_rows,
  smooth_abs,
  cross_entropy,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::constant;
  std::vector<int> inputs;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  Parameter* param = nullptr;
  // Op-specific payload: masks, dropout keep-scales, softmax probabilities,
  // per-row weights, gathered indices, scalar factors.
  Matrix aux;
  Matrix aux2;
  std::vector<int> indices;
  double scalar = 0.0;
};

class Graph;

// Lightweight handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return graph != nullptr && id >= 0; }
};

class Graph {
public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar_constant(double value);
  // One leaf per parameter per graph; gradients flow back into Parameter::grad.
  Var param(Parameter& p);

  // Accumulates d(root)/d(param) into every parameter reached from root.
  // root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  Var push(Node n);

private:
  std::deque<Node> nodes_;
  std::map<const Parameter*, int> param_nodes_;
};

// Primitives. Shape violations throw NumericError naming the op and shapes.

Var matmul(Var a, Var b);
// b may be the same shape as a, a 1xC row (broadcast down rows) or an Rx1
// column (broadcast across columns).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
Var shift(Var a, double k);
Var tanh(Var a);
Var sigmoid(Var a);
// Row softmax over entries where mask is 1; masked entries get exactly 0 and
// are left out of the normalizer. A row with no unmasked entry is rejected.
Var masked_softmax(Var logits, const Matrix& mask);
// x / rowsum(x); every row sum must be positive.
Var row_normalize(Var a);
Var concat_cols(std::span<const Var> parts);
Var column(Var a, Eigen::Index j);
// Rx1 column of per-row inner products.
Var row_dot(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
// Rows of table selected by indices, one output row per index.
Var gather_rows(Var table, std::span<const int> indices);
// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity when
// rate is 0.
Var dropout(Var a, double rate, Rng& rng);
// Row-wise select: row r of a where mask(r) is 1, row r of b otherwise.
Var where_rows(const Matrix& mask, Var a, Var b);
// Elementwise sqrt(x^2 + kSmoothAbsEps).
Var smooth_abs(Var a);
// 1x1 sum over rows r of weights(r) * -log softmax(logits.row(r))[targets[r]].
Var cross_entropy(Var logits, std::span<const int> targets, const Matrix& weights);

// Finite-difference verification of Graph::backward.

using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

// Central differences over every scalar of every parameter in store;
// relative error is |a-n| / max(1e-8, |a|+|n|). loss must be deterministic.
GradCheckReport finite_diff_check(const LossBuilder& loss, ParameterStore& store,
                                  double step = 1e-5);

}  // namespace attseg
