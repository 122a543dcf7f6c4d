#include "arks/tape.hpp"

#include <algorithm>
#include <cmath>

#include "arks/errors.hpp"

namespace arks {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::neg: return "neg";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::elu: return "elu";
    case Op::relu: return "relu";
    case Op::softmax_xent: return "softmax_xent";
    case Op::sq_norm: return "sq_norm";
    case Op::l1_norm: return "l1_norm";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape construction

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(NodeId id) const {
  if (id.index >= nodes_.size()) throw ShapeError("node id " + std::to_string(id.index) + " is not on this tape");
}

NodeId Tape::leaf(std::string name, Shape shape, LeafKind kind) {
  if (find_leaf(name)) throw ConfigError("duplicate leaf name '" + name + "'");
  Node n;
  n.op = Op::leaf;
  n.shape = std::move(shape);
  n.leaf_kind = kind;
  n.name = std::move(name);
  NodeId id = push(std::move(n));
  leaves_.push_back(id);
  return id;
}

NodeId Tape::parameter(std::string name, Shape shape) { return leaf(std::move(name), std::move(shape), LeafKind::parameter); }

NodeId Tape::input(std::string name, Shape shape) { return leaf(std::move(name), std::move(shape), LeafKind::input); }

NodeId Tape::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.shape = value.shape();
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::elementwise(Op op, NodeId a, NodeId b) {
  check(a);
  check(b);
  const Shape& sa = nodes_[a.index].shape;
  const Shape& sb = nodes_[b.index].shape;
  Shape out;
  if (sa == sb) {
    out = sa;
  } else if (sa.empty()) {
    out = sb;
  } else if (sb.empty()) {
    out = sa;
  } else {
    throw ShapeError(std::string(op_name(op)) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     " are incompatible");
  }
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.shape = std::move(out);
  return push(std::move(n));
}

NodeId Tape::unary(Op op, NodeId a) {
  check(a);
  Node n;
  n.op = op;
  n.a = a;
  n.shape = nodes_[a.index].shape;
  return push(std::move(n));
}

NodeId Tape::reduce(Op op, NodeId a) {
  check(a);
  Node n;
  n.op = op;
  n.a = a;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) { return elementwise(Op::add, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return elementwise(Op::sub, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return elementwise(Op::mul, a, b); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Shape& sa = nodes_[a.index].shape;
  const Shape& sb = nodes_[b.index].shape;
  if (sa.size() != 2 || (sb.size() != 1 && sb.size() != 2) || sa[1] != sb[0]) {
    throw ShapeError("matmul: shapes " + shape_str(sa) + " and " + shape_str(sb) + " are incompatible");
  }
  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.shape = sb.size() == 1 ? Shape{sa[0]} : Shape{sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) { return unary(Op::exp, a); }
NodeId Tape::log(NodeId a) { return unary(Op::log, a); }
NodeId Tape::neg(NodeId a) { return unary(Op::neg, a); }
NodeId Tape::elu(NodeId a) { return unary(Op::elu, a); }
NodeId Tape::relu(NodeId a) { return unary(Op::relu, a); }
NodeId Tape::sum(NodeId a) { return reduce(Op::sum, a); }
NodeId Tape::mean(NodeId a) { return reduce(Op::mean, a); }
NodeId Tape::sq_norm(NodeId a) { return reduce(Op::sq_norm, a); }
NodeId Tape::l1_norm(NodeId a) { return reduce(Op::l1_norm, a); }

NodeId Tape::softmax_xent(NodeId logits, NodeId label) {
  check(logits);
  check(label);
  if (nodes_[logits.index].shape.size() != 1 || nodes_[logits.index].shape[0] < 2) {
    throw ShapeError("softmax_xent: logits must be a vector of at least 2 classes, got " +
                     shape_str(nodes_[logits.index].shape));
  }
  if (!nodes_[label.index].shape.empty()) {
    throw ShapeError("softmax_xent: label must be rank 0, got " + shape_str(nodes_[label.index].shape));
  }
  Node n;
  n.op = Op::softmax_xent;
  n.a = logits;
  n.b = label;
  return push(std::move(n));
}

void Tape::set_output(NodeId id) {
  check(id);
  if (!nodes_[id.index].shape.empty()) {
    throw ShapeError("tape output must be rank 0, got " + shape_str(nodes_[id.index].shape));
  }
  output_ = id;
}

NodeId Tape::output() const {
  if (output_) return *output_;
  if (nodes_.empty()) throw ShapeError("empty tape has no output");
  NodeId last{static_cast<std::uint32_t>(nodes_.size() - 1)};
  if (!nodes_.back().shape.empty()) {
    throw ShapeError("tape output must be rank 0, got " + shape_str(nodes_.back().shape));
  }
  return last;
}

std::optional<NodeId> Tape::find_leaf(const std::string& name) const {
  for (NodeId id : leaves_) {
    if (nodes_[id.index].name == name) return id;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Bindings / Gradients

Bindings& Bindings::set(NodeId leaf, Tensor value) {
  if (values_.size() <= leaf.index) values_.resize(leaf.index + 1);
  values_[leaf.index] = std::move(value);
  return *this;
}

const Tensor* Bindings::find(NodeId leaf) const {
  if (leaf.index >= values_.size() || !values_[leaf.index]) return nullptr;
  return &*values_[leaf.index];
}

void Gradients::insert(NodeId leaf, Tensor grad) { entries_.emplace_back(leaf, std::move(grad)); }

const Tensor* Gradients::find(NodeId leaf) const {
  for (const auto& [id, g] : entries_) {
    if (id == leaf) return &g;
  }
  return nullptr;
}

const Tensor& Gradients::at(NodeId leaf) const {
  const Tensor* g = find(leaf);
  if (!g) throw ConfigError("no gradient recorded for leaf " + std::to_string(leaf.index));
  return *g;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(const Tape& tape)
    : tape_(&tape), values_(tape.size()), adjoints_(tape.size()), bound_(tape.size(), false) {
  const auto& nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::size_t n = shape_size(nodes[i].shape);
    values_[i].assign(n, 0.0);
    adjoints_[i].assign(n, 0.0);
    if (nodes[i].op == Op::constant) {
      std::copy(nodes[i].value.values().begin(), nodes[i].value.values().end(), values_[i].begin());
    }
  }
}

void Workspace::bind(NodeId leaf, std::span<const double> values) {
  const auto& node = tape_->node(leaf);
  if (node.op != Op::leaf) throw ConfigError("bind: node " + std::to_string(leaf.index) + " is not a leaf");
  if (values.size() != values_[leaf.index].size()) {
    throw ShapeError("bind: leaf '" + node.name + "' expects shape " + shape_str(node.shape) + " but got " +
                     std::to_string(values.size()) + " values");
  }
  std::copy(values.begin(), values.end(), values_[leaf.index].begin());
  bound_[leaf.index] = true;
  evaluated_ = false;
}

void Workspace::bind(NodeId leaf, double value) { bind(leaf, std::span<const double>(&value, 1)); }

namespace {

inline std::size_t bidx(const Vector& v, std::size_t i) { return v.size() == 1 ? 0 : i; }

std::size_t label_index(double raw, std::size_t classes) {
  if (!(raw >= 0.0) || raw != std::floor(raw) || raw >= static_cast<double>(classes)) {
    throw DomainError("softmax_xent: label " + std::to_string(raw) + " is not a class index below " +
                      std::to_string(classes));
  }
  return static_cast<std::size_t>(raw);
}

}  // namespace

double Workspace::forward() {
  const auto& nodes = tape_->nodes();
  const NodeId out = tape_->output();
  for (std::size_t i = 0; i <= out.index; ++i) {
    const auto& n = nodes[i];
    Vector& v = values_[i];
    switch (n.op) {
      case Op::leaf:
        if (!bound_[i]) throw ConfigError("leaf '" + n.name + "' is not bound");
        break;
      case Op::constant:
        break;
      case Op::add: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[bidx(a, k)] + b[bidx(b, k)];
        break;
      }
      case Op::sub: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[bidx(a, k)] - b[bidx(b, k)];
        break;
      }
      case Op::mul: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[bidx(a, k)] * b[bidx(b, k)];
        break;
      }
      case Op::matmul: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        const std::size_t m = nodes[n.a.index].shape[0];
        const std::size_t kk = nodes[n.a.index].shape[1];
        const std::size_t cols = v.size() / m;
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < kk; ++j) s += a[r * kk + j] * b[j * cols + c];
            v[r * cols + c] = s;
          }
        }
        break;
      }
      case Op::exp: {
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::exp(a[k]);
        break;
      }
      case Op::log: {
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < v.size(); ++k) {
          if (!(a[k] > 0.0)) throw DomainError("log of non-positive value " + std::to_string(a[k]));
          v[k] = std::log(a[k]);
        }
        break;
      }
      case Op::neg: {
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = -a[k];
        break;
      }
      case Op::elu: {
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[k] > 0.0 ? a[k] : std::expm1(a[k]);
        break;
      }
      case Op::relu: {
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[k] > 0.0 ? a[k] : 0.0;
        break;
      }
      case Op::sum:
      case Op::mean: {
        const Vector& a = values_[n.a.index];
        double s = 0.0;
        for (double x : a) s += x;
        v[0] = n.op == Op::mean ? s / static_cast<double>(a.size()) : s;
        break;
      }
      case Op::sq_norm: {
        double s = 0.0;
        for (double x : values_[n.a.index]) s += x * x;
        v[0] = s;
        break;
      }
      case Op::l1_norm: {
        double s = 0.0;
        for (double x : values_[n.a.index]) s += std::abs(x);
        v[0] = s;
        break;
      }
      case Op::softmax_xent: {
        const Vector& z = values_[n.a.index];
        const std::size_t y = label_index(values_[n.b.index][0], z.size());
        const double zmax = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double x : z) s += std::exp(x - zmax);
        v[0] = zmax + std::log(s) - z[y];
        break;
      }
    }
  }
  evaluated_ = true;
  return values_[out.index][0];
}

void Workspace::backward() {
  if (!evaluated_) throw ConfigError("backward() requires a preceding forward()");
  const auto& nodes = tape_->nodes();
  const NodeId out = tape_->output();
  for (auto& g : adjoints_) std::fill(g.begin(), g.end(), 0.0);
  adjoints_[out.index][0] = 1.0;

  for (std::size_t i = out.index + 1; i-- > 0;) {
    const auto& n = nodes[i];
    const Vector& g = adjoints_[i];
    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::add:
      case Op::sub: {
        Vector& ga = adjoints_[n.a.index];
        Vector& gb = adjoints_[n.b.index];
        const double sign = n.op == Op::sub ? -1.0 : 1.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[bidx(ga, k)] += g[k];
          gb[bidx(gb, k)] += sign * g[k];
        }
        break;
      }
      case Op::mul: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        Vector& ga = adjoints_[n.a.index];
        Vector& gb = adjoints_[n.b.index];
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[bidx(ga, k)] += g[k] * b[bidx(b, k)];
          gb[bidx(gb, k)] += g[k] * a[bidx(a, k)];
        }
        break;
      }
      case Op::matmul: {
        const Vector& a = values_[n.a.index];
        const Vector& b = values_[n.b.index];
        Vector& ga = adjoints_[n.a.index];
        Vector& gb = adjoints_[n.b.index];
        const std::size_t m = nodes[n.a.index].shape[0];
        const std::size_t kk = nodes[n.a.index].shape[1];
        const std::size_t cols = g.size() / m;
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const double gv = g[r * cols + c];
            if (gv == 0.0) continue;
            for (std::size_t j = 0; j < kk; ++j) {
              ga[r * kk + j] += gv * b[j * cols + c];
              gb[j * cols + c] += gv * a[r * kk + j];
            }
          }
        }
        break;
      }
      case Op::exp: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& v = values_[i];
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * v[k];
        break;
      }
      case Op::log: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / a[k];
        break;
      }
      case Op::neg: {
        Vector& ga = adjoints_[n.a.index];
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] -= g[k];
        break;
      }
      case Op::elu: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * (a[k] > 0.0 ? 1.0 : std::exp(a[k]));
        break;
      }
      case Op::relu: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += a[k] > 0.0 ? g[k] : 0.0;
        break;
      }
      case Op::sum:
      case Op::mean: {
        Vector& ga = adjoints_[n.a.index];
        const double scale = n.op == Op::mean ? g[0] / static_cast<double>(ga.size()) : g[0];
        for (double& x : ga) x += scale;
        break;
      }
      case Op::sq_norm: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += 2.0 * a[k] * g[0];
        break;
      }
      case Op::l1_norm: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& a = values_[n.a.index];
        for (std::size_t k = 0; k < ga.size(); ++k) {
          ga[k] += g[0] * static_cast<double>((a[k] > 0.0) - (a[k] < 0.0));
        }
        break;
      }
      case Op::softmax_xent: {
        Vector& ga = adjoints_[n.a.index];
        const Vector& z = values_[n.a.index];
        const std::size_t y = static_cast<std::size_t>(values_[n.b.index][0]);
        const double zmax = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double x : z) s += std::exp(x - zmax);
        for (std::size_t k = 0; k < z.size(); ++k) {
          ga[k] += g[0] * (std::exp(z[k] - zmax) / s - (k == y ? 1.0 : 0.0));
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Free functions

namespace {

void bind_all(Workspace& ws, const Tape& tape, const Bindings& bindings) {
  for (NodeId leaf : tape.leaves()) {
    const Tensor* t = bindings.find(leaf);
    if (!t) throw ConfigError("leaf '" + tape.node(leaf).name + "' is not bound");
    if (t->shape() != tape.node(leaf).shape) {
      throw ShapeError("leaf '" + tape.node(leaf).name + "' expects shape " + shape_str(tape.node(leaf).shape) +
                       " but was bound to " + shape_str(t->shape()));
    }
    ws.bind(leaf, t->data());
  }
}

std::vector<bool> reachable_from_output(const Tape& tape) {
  const NodeId out = tape.output();
  std::vector<bool> live(tape.size(), false);
  live[out.index] = true;
  for (std::size_t i = out.index + 1; i-- > 0;) {
    if (!live[i]) continue;
    const auto& n = tape.nodes()[i];
    if (n.op == Op::leaf || n.op == Op::constant) continue;
    live[n.a.index] = true;
    const bool binary = n.op == Op::add || n.op == Op::sub || n.op == Op::mul || n.op == Op::matmul;
    if (binary) live[n.b.index] = true;
  }
  return live;
}

}  // namespace

double forward(const Tape& tape, const Bindings& bindings) {
  Workspace ws(tape);
  bind_all(ws, tape, bindings);
  return ws.forward();
}

Gradients backward(const Tape& tape, const Bindings& bindings, std::span<const NodeId> wrt) {
  Workspace ws(tape);
  bind_all(ws, tape, bindings);
  ws.forward();
  ws.backward();
  const auto live = reachable_from_output(tape);
  Gradients out;
  for (NodeId leaf : wrt) {
    if (tape.node(leaf).op != Op::leaf) throw ConfigError("backward: node " + std::to_string(leaf.index) + " is not a leaf");
    if (!live[leaf.index] || out.contains(leaf)) continue;
    auto g = ws.grad(leaf);
    out.insert(leaf, Tensor(tape.node(leaf).shape, Vector(g.begin(), g.end())));
  }
  return out;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& fn, std::span<const double> point,
                        double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: step h must be positive");
  Vector x(point.begin(), point.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = fn(x);
    x[i] = orig - h;
    const double fm = fn(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace arks
