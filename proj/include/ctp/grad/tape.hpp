#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctp/grad/array.hpp"

namespace ctp {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape it points into is alive and not truncated below it.
template <typename Scalar>
class Var {
 public:
  using Mat = Matrix<Scalar>;

  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Mat& value() const;
  const Shape& shape() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

  /// Value of a 1x1 node.
  Scalar item() const { return value()(0, 0); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of executed primitives. Nodes are appended in execution
/// order, so every node's inputs have smaller ids and a single reverse sweep
/// is a valid backward pass.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

  struct Node {
    const char* op = "";
    Shape shape;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<Scalar> leaf(const Array<Scalar>& array) { return leaf(array.shape, array.values, array.requires_grad); }

  Var<Scalar> leaf(Shape shape, Mat value, bool requires_grad) {
    Node node;
    node.op = "leaf";
    node.shape = std::move(shape);
    node.value = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    return push(std::move(node));
  }

  Var<Scalar> constant(Shape shape, Mat value) { return leaf(std::move(shape), std::move(value), false); }

  Var<Scalar> constant(Mat value) {
    Shape shape{value.rows(), value.cols()};
    return constant(std::move(shape), std::move(value));
  }

  /// Appends the output of a primitive. The backward closure is kept only if
  /// some input requires a gradient.
  Var<Scalar> record(const char* op, Shape shape, Mat value, std::vector<std::size_t> inputs,
                     BackwardFn backward) {
    Node node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(value);
    bool needs = false;
    if (grad_enabled_) {
      for (std::size_t id : inputs) needs = needs || nodes_[id].requires_grad;
    }
    if (needs) {
      node.requires_grad = true;
      node.inputs = std::move(inputs);
      node.backward = std::move(backward);
    }
    return push(std::move(node));
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a scalar node. Gradients accumulate, so call
  /// zero_grad() first when reusing a tape for a second loss.
  void backward(const Var<Scalar>& loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
    const Node& root = nodes_[loss.id()];
    if (root.value.size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + shape_string(root.shape));
    }
    if (!root.requires_grad) return;
    accumulate(loss.id(), Mat::Ones(1, 1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.resize(0, 0);
  }

  /// Gradient of a node, or an exact zero block if nothing reached it.
  Mat grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Mat grad(const Var<Scalar>& v) const { return grad(v.id()); }

  /// Drops every node recorded at or after `mark`. Lets inference loops reuse
  /// the parameter leaves bound at the start of the tape.
  void truncate(std::size_t mark) {
    if (mark < nodes_.size()) nodes_.resize(mark);
  }

 private:
  Var<Scalar> push(Node node) {
    if (!node.value.allFinite()) {
      throw NumericError(std::string("non-finite value produced by primitive '") + node.op + "'");
    }
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

template <typename Scalar>
const typename Var<Scalar>::Mat& Var<Scalar>::value() const {
  return tape_->value(id_);
}

template <typename Scalar>
const Shape& Var<Scalar>::shape() const {
  return tape_->node(id_).shape;
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return tape_->requires_grad(id_);
}

}  // namespace ctp
