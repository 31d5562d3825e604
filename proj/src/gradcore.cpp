#include "attseg/gradcore.hpp"

#include "attseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace attseg {

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (index_.count(name) != 0) {
    throw UsageError("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  Parameter p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  entries_.push_back(std::move(p));
  return entries_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : entries_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---------------------------------------------------------------------------
// Var / Graph

const Matrix& Var::value() const { return graph->node(id).value; }
const Matrix& Var::grad() const { return graph->node(id).grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    std::ostringstream os;
    os << "scalar(): node has shape " << v.rows() << "x" << v.cols();
    throw NumericError(os.str());
  }
  return v(0, 0);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::param: return "param";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::masked_softmax: return "masked_softmax";
    case Op::row_normalize: return "row_normalize";
    case Op::concat_cols: return "concat_cols";
    case Op::column: return "column";
    case Op::row_dot: return "row_dot";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::gather_rows: return "gather_rows";
    case Op::dropout: return "dropout";
    case Op::where_rows: return "where_rows";
    case Op::smooth_abs: return "smooth_abs";
    case Op::cross_entropy: return "cross_entropy";
  }
  return "?";
}

Var Graph::push(Node n) {
  for (int in : n.inputs) {
    if (nodes_[static_cast<std::size_t>(in)].requires_grad) n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.op = Op::param;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

namespace {

enum class Broadcast { same, row, col };

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b) {
  std::ostringstream os;
  os << op_name(op) << ": incompatible shapes " << a.rows() << "x" << a.cols() << " and "
     << b.rows() << "x" << b.cols();
  throw NumericError(os.str());
}

Broadcast broadcast_kind(Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
  shape_error(op, a, b);
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw NumericError("operation on an invalid Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.graph != b.graph) {
    throw NumericError("operands belong to different graphs");
  }
  return *a.graph;
}

Var unary(Op op, Var a, Matrix value) {
  Node n;
  n.op = op;
  n.inputs = {a.id};
  n.value = std::move(value);
  return graph_of(a).push(std::move(n));
}

Var binary(Op op, Var a, Var b, Matrix value) {
  Node n;
  n.op = op;
  n.inputs = {a.id, b.id};
  n.value = std::move(value);
  return graph_of(a, b).push(std::move(n));
}

Matrix broadcast_binary(Op op, const Matrix& a, const Matrix& b) {
  switch (broadcast_kind(op, a, b)) {
    case Broadcast::same:
      if (op == Op::add) return a + b;
      if (op == Op::sub) return a - b;
      return a.cwiseProduct(b);
    case Broadcast::row:
      if (op == Op::add) return a.rowwise() + b.row(0);
      if (op == Op::sub) return a.rowwise() - b.row(0);
      return (a.array().rowwise() * b.row(0).array()).matrix();
    case Broadcast::col:
      if (op == Op::add) return a.colwise() + b.col(0);
      if (op == Op::sub) return a.colwise() - b.col(0);
      return (a.array().colwise() * b.col(0).array()).matrix();
  }
  return {};
}

// Sum g down to the shape of a broadcast operand.
void accumulate_reduced(Matrix& target, const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::same: target += g; break;
    case Broadcast::row: target += g.colwise().sum(); break;
    case Broadcast::col: target += g.rowwise().sum(); break;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error(Op::matmul, av, bv);
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  return binary(Op::matmul, a, b, std::move(out));
}

Var add(Var a, Var b) {
  graph_of(a, b);
  return binary(Op::add, a, b, broadcast_binary(Op::add, a.value(), b.value()));
}

Var sub(Var a, Var b) {
  graph_of(a, b);
  return binary(Op::sub, a, b, broadcast_binary(Op::sub, a.value(), b.value()));
}

Var mul(Var a, Var b) {
  graph_of(a, b);
  return binary(Op::mul, a, b, broadcast_binary(Op::mul, a.value(), b.value()));
}

Var scale(Var a, double k) {
  Var out = unary(Op::scale, a, a.value() * k);
  a.graph->node(out.id).scalar = k;
  return out;
}

Var shift(Var a, double k) {
  Var out = unary(Op::shift, a, (a.value().array() + k).matrix());
  a.graph->node(out.id).scalar = k;
  return out;
}

Var tanh(Var a) { return unary(Op::tanh, a, a.value().array().tanh().matrix()); }

Var sigmoid(Var a) {
  Matrix y = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return unary(Op::sigmoid, a, std::move(y));
}

Var masked_softmax(Var logits, const Matrix& mask) {
  const Matrix& x = graph_of(logits).node(logits.id).value;
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    shape_error(Op::masked_softmax, x, mask);
  }
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c) != 0.0) {
        mx = std::max(mx, x(r, c));
        any = true;
      }
    }
    if (!any) {
      throw NumericError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c) != 0.0) {
        y(r, c) = std::exp(x(r, c) - mx);
        z += y(r, c);
      }
    }
    y.row(r) /= z;
  }
  Var out = unary(Op::masked_softmax, logits, std::move(y));
  logits.graph->node(out.id).aux = mask;
  return out;
}

Var row_normalize(Var a) {
  const Matrix& x = graph_of(a).node(a.id).value;
  Matrix sums = x.rowwise().sum();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!(sums(r, 0) > 0.0)) {
      throw NumericError("row_normalize: row " + std::to_string(r) + " has non-positive sum");
    }
  }
  Matrix y = (x.array().colwise() / sums.col(0).array()).matrix();
  Var out = unary(Op::row_normalize, a, std::move(y));
  a.graph->node(out.id).aux = std::move(sums);
  return out;
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat_cols: no operands");
  Graph& g = graph_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.rows() != rows) shape_error(Op::concat_cols, parts[0].value(), p.value());
    cols += p.cols();
  }
  Node n;
  n.op = Op::concat_cols;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    n.value.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    n.inputs.push_back(p.id);
  }
  return g.push(std::move(n));
}

Var column(Var a, Eigen::Index j) {
  const Matrix& x = graph_of(a).node(a.id).value;
  if (j < 0 || j >= x.cols()) {
    throw NumericError("column: index " + std::to_string(j) + " out of range for " +
                       std::to_string(x.cols()) + " columns");
  }
  Var out = unary(Op::column, a, x.col(j));
  a.graph->node(out.id).indices = {static_cast<int>(j)};
  return out;
}

Var row_dot(Var a, Var b) {
  graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error(Op::row_dot, av, bv);
  return binary(Op::row_dot, a, b, av.cwiseProduct(bv).rowwise().sum());
}

Var sum(Var a) { return unary(Op::sum, a, Matrix::Constant(1, 1, graph_of(a).node(a.id).value.sum())); }

Var mean(Var a) {
  const Matrix& x = graph_of(a).node(a.id).value;
  if (x.size() == 0) throw NumericError("mean: empty operand");
  return unary(Op::mean, a, Matrix::Constant(1, 1, x.mean()));
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& t = graph_of(table).node(table.id).value;
  Matrix out(static_cast<Eigen::Index>(indices.size()), t.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || idx >= t.rows()) {
      throw NumericError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                         std::to_string(t.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(r)) = t.row(idx);
  }
  Var v = unary(Op::gather_rows, table, std::move(out));
  v.graph->node(v.id).indices.assign(indices.begin(), indices.end());
  return v;
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw NumericError("dropout: rate must be below 1");
  const Matrix& x = graph_of(a).node(a.id).value;
  std::bernoulli_distribution keep(1.0 - rate);
  const double kept = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept : 0.0;
  Var out = unary(Op::dropout, a, x.cwiseProduct(mask));
  a.graph->node(out.id).aux = std::move(mask);
  return out;
}

Var where_rows(const Matrix& mask, Var a, Var b) {
  graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error(Op::where_rows, av, bv);
  if (mask.rows() != av.rows() || mask.cols() != 1) shape_error(Op::where_rows, av, mask);
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    out.row(r) = mask(r, 0) != 0.0 ? av.row(r) : bv.row(r);
  }
  Var v = binary(Op::where_rows, a, b, std::move(out));
  v.graph->node(v.id).aux = mask;
  return v;
}

Var smooth_abs(Var a) {
  const Matrix& x = graph_of(a).node(a.id).value;
  return unary(Op::smooth_abs, a,
               (x.array().square() + kSmoothAbsEps).sqrt().matrix());
}

Var cross_entropy(Var logits, std::span<const int> targets, const Matrix& weights) {
  const Matrix& x = graph_of(logits).node(logits.id).value;
  if (static_cast<Eigen::Index>(targets.size()) != x.rows() || weights.rows() != x.rows() ||
      weights.cols() != 1) {
    shape_error(Op::cross_entropy, x, weights);
  }
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= x.cols()) {
      throw NumericError("cross_entropy: target " + std::to_string(t) + " out of range");
    }
    const double mx = x.row(r).maxCoeff();
    probs.row(r) = (x.row(r).array() - mx).exp().matrix();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    if (weights(r, 0) != 0.0) total += weights(r, 0) * (std::log(z) + mx - x(r, t));
  }
  Var out = unary(Op::cross_entropy, logits, Matrix::Constant(1, 1, total));
  Node& n = logits.graph->node(out.id);
  n.aux = std::move(probs);
  n.aux2 = weights;
  n.indices.assign(targets.begin(), targets.end());
  return out;
}

// ---------------------------------------------------------------------------
// Backward

void Graph::backward(Var root) {
  if (root.graph != this) throw NumericError("backward: root belongs to another graph");
  const Node& r = node(root.id);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    std::ostringstream os;
    os << "backward: root must be scalar, got " << r.value.rows() << "x" << r.value.cols();
    throw NumericError(os.str());
  }
  for (std::size_t i = 0; i <= static_cast<std::size_t>(root.id); ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!r.requires_grad) return;
  node(root.id).grad(0, 0) = 1.0;

  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad) continue;
    const Matrix& g = n.grad;
    auto in = [&](std::size_t k) -> Node& { return node(n.inputs[k]); };
    auto wants = [&](std::size_t k) { return in(k).requires_grad; };

    switch (n.op) {
      case Op::constant:
      case Op::param:
        break;
      case Op::matmul: {
        if (wants(0)) in(0).grad.noalias() += g * in(1).value.transpose();
        if (wants(1)) in(1).grad.noalias() += in(0).value.transpose() * g;
        break;
      }
      case Op::add:
      case Op::sub: {
        const Broadcast kind = broadcast_kind(n.op, in(0).value, in(1).value);
        if (wants(0)) in(0).grad += g;
        if (wants(1)) {
          if (n.op == Op::add) {
            accumulate_reduced(in(1).grad, g, kind);
          } else {
            accumulate_reduced(in(1).grad, -g, kind);
          }
        }
        break;
      }
      case Op::mul: {
        const Matrix& a = in(0).value;
        const Matrix& b = in(1).value;
        const Broadcast kind = broadcast_kind(n.op, a, b);
        if (wants(0)) in(0).grad += broadcast_binary(Op::mul, g, b);
        if (wants(1)) accumulate_reduced(in(1).grad, g.cwiseProduct(a), kind);
        break;
      }
      case Op::scale:
        in(0).grad += g * n.scalar;
        break;
      case Op::shift:
        in(0).grad += g;
        break;
      case Op::tanh:
        in(0).grad.array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::sigmoid:
        in(0).grad.array() += g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      case Op::masked_softmax: {
        const Matrix& y = n.value;
        Matrix dots = g.cwiseProduct(y).rowwise().sum();
        in(0).grad.array() += y.array() * (g.colwise() - dots.col(0)).array();
        break;
      }
      case Op::row_normalize: {
        const Matrix& y = n.value;
        Matrix dots = g.cwiseProduct(y).rowwise().sum();
        in(0).grad.array() +=
            (g.colwise() - dots.col(0)).array().colwise() / n.aux.col(0).array();
        break;
      }
      case Op::concat_cols: {
        Eigen::Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Node& part = in(k);
          const Eigen::Index c = part.value.cols();
          if (part.requires_grad) part.grad += g.middleCols(at, c);
          at += c;
        }
        break;
      }
      case Op::column:
        in(0).grad.col(n.indices[0]) += g.col(0);
        break;
      case Op::row_dot: {
        if (wants(0)) in(0).grad += broadcast_binary(Op::mul, in(1).value, g);
        if (wants(1)) in(1).grad += broadcast_binary(Op::mul, in(0).value, g);
        break;
      }
      case Op::sum:
        in(0).grad.array() += g(0, 0);
        break;
      case Op::mean:
        in(0).grad.array() += g(0, 0) / static_cast<double>(in(0).value.size());
        break;
      case Op::gather_rows: {
        Matrix& tg = in(0).grad;
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          tg.row(n.indices[r]) += g.row(static_cast<Eigen::Index>(r));
        }
        break;
      }
      case Op::dropout:
        in(0).grad += g.cwiseProduct(n.aux);
        break;
      case Op::where_rows: {
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const std::size_t k = n.aux(r, 0) != 0.0 ? 0 : 1;
          if (wants(k)) in(k).grad.row(r) += g.row(r);
        }
        break;
      }
      case Op::smooth_abs:
        in(0).grad.array() += g.array() * in(0).value.array() / n.value.array();
        break;
      case Op::cross_entropy: {
        Matrix& lg = in(0).grad;
        const double up = g(0, 0);
        for (Eigen::Index r = 0; r < lg.rows(); ++r) {
          const double w = n.aux2(r, 0);
          if (w == 0.0) continue;
          lg.row(r) += (up * w) * n.aux.row(r);
          lg(r, n.indices[static_cast<std::size_t>(r)]) -= up * w;
        }
        break;
      }
    }
  }

  for (auto& [p, id] : param_nodes_) {
    Parameter* param = const_cast<Parameter*>(p);
    const Node& n = node(id);
    if (n.grad.size() == 0) continue;
    if (param->grad.rows() != n.grad.rows() || param->grad.cols() != n.grad.cols()) {
      param->grad.setZero(n.grad.rows(), n.grad.cols());
    }
    param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Finite differences

GradCheckReport finite_diff_check(const LossBuilder& loss, ParameterStore& store, double step) {
  if (!(step > 0.0)) throw UsageError("finite_diff_check: step must be positive");

  store.zero_grad();
  {
    Graph g;
    Var root = loss(g);
    g.backward(root);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(store.size());
  for (const auto& p : store) analytic.push_back(p.grad);

  auto evaluate = [&](const std::string& name) {
    Graph g;
    const double f = loss(g).scalar();
    if (!std::isfinite(f)) {
      throw NumericError("finite_diff_check: non-finite loss while perturbing '" + name + "'");
    }
    return f;
  };

  GradCheckReport report;
  std::size_t k = 0;
  for (auto& p : store) {
    GradCheckEntry entry;
    entry.name = p.name;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& v = p.value.data()[i];
      const double saved = v;
      v = saved + step;
      const double up = evaluate(p.name);
      v = saved - step;
      const double down = evaluate(p.name);
      v = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
      ++entry.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
    ++k;
  }
  return report;
}

}  // namespace attseg
