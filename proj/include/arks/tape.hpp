#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arks/tensor.hpp"

namespace arks {

// Handle to a node recorded on a Tape.
struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
  friend auto operator<=>(NodeId, NodeId) = default;
};

enum class LeafKind : std::uint8_t { parameter, input };

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  matmul,
  exp,
  log,
  neg,
  sum,
  mean,
  elu,
  relu,
  softmax_xent,
  sq_norm,
  l1_norm,
};

const char* op_name(Op op);

// Recorded scalar-valued expression over tensor leaves. Nodes are appended
// in construction order, so operands always precede their consumers. The
// graph carries shapes only; values live in a Workspace, so one tape can be
// evaluated many times with different bindings.
class Tape {
 public:
  struct Node {
    Op op = Op::leaf;
    NodeId a{};
    NodeId b{};
    Shape shape;
    LeafKind leaf_kind = LeafKind::input;
    std::string name;  // leaves only
    Tensor value;      // constants only
  };

  NodeId parameter(std::string name, Shape shape);
  NodeId input(std::string name, Shape shape);
  NodeId constant(Tensor value);
  NodeId constant(double value) { return constant(Tensor::scalar(value)); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId neg(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId elu(NodeId a);
  NodeId relu(NodeId a);
  // Cross-entropy of `logits` (rank 1) against the class index stored in the
  // rank-0 `label` node. The label is never differentiated.
  NodeId softmax_xent(NodeId logits, NodeId label);
  NodeId sq_norm(NodeId a);
  NodeId l1_norm(NodeId a);

  // The output defaults to the most recently recorded node and must be rank 0.
  void set_output(NodeId id);
  NodeId output() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  const std::vector<NodeId>& leaves() const { return leaves_; }
  std::optional<NodeId> find_leaf(const std::string& name) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  NodeId push(Node node);
  NodeId leaf(std::string name, Shape shape, LeafKind kind);
  NodeId elementwise(Op op, NodeId a, NodeId b);
  NodeId unary(Op op, NodeId a);
  NodeId reduce(Op op, NodeId a);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
  std::optional<NodeId> output_;
};

// Leaf values for one evaluation.
class Bindings {
 public:
  Bindings& set(NodeId leaf, Tensor value);
  const Tensor* find(NodeId leaf) const;

 private:
  std::vector<std::optional<Tensor>> values_;
};

// Gradients of the tape output with respect to a set of leaves.
class Gradients {
 public:
  void insert(NodeId leaf, Tensor grad);
  bool contains(NodeId leaf) const { return find(leaf) != nullptr; }
  const Tensor& at(NodeId leaf) const;
  const Tensor* find(NodeId leaf) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<NodeId, Tensor>> entries_;
};

// Reusable evaluation buffers for one tape. Not thread-safe; use one
// workspace per thread. The tape must outlive the workspace.
class Workspace {
 public:
  explicit Workspace(const Tape& tape);

  // Copies `values` into the leaf buffer; the length must match the leaf shape.
  void bind(NodeId leaf, std::span<const double> values);
  void bind(NodeId leaf, double value);

  double forward();
  // Reverse sweep from the output. Requires a preceding forward().
  void backward();

  std::span<const double> value(NodeId id) const { return values_[id.index]; }
  std::span<const double> grad(NodeId id) const { return adjoints_[id.index]; }
  const Tape& tape() const { return *tape_; }

 private:
  const Tape* tape_;
  std::vector<Vector> values_;
  std::vector<Vector> adjoints_;
  std::vector<bool> bound_;
  bool evaluated_ = false;
};

double forward(const Tape& tape, const Bindings& bindings);

// Only the requested leaves that the output depends on appear in the result.
Gradients backward(const Tape& tape, const Bindings& bindings, std::span<const NodeId> wrt);

// Central-difference gradient of `fn` at `point`. Throws NumericalError naming
// the coordinate when an evaluation is not finite.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                        std::span<const double> point, double h);

}  // namespace arks
