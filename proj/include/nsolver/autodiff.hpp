#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nsolver/error.hpp"
#include "nsolver/tensor.hpp"

namespace nsolver {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
  const Tensor<T>& grad() const { return tape->grad(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Define-by-run record of differentiable operations. Nodes are appended in
/// execution order, so operands always precede their consumers and a single
/// reverse sweep visits every node once. A tape is owned by one thread.
template <class T>
class Tape {
 public:
  /// Receives the node's accumulated output gradient and adds contributions
  /// into the gradients of its operands.
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Untracked leaf referring to a tensor owned elsewhere; it must outlive
  /// the tape.
  Var<T> borrow(const Tensor<T>& value) {
    nodes_.push_back(Node{Tensor<T>(), Tensor<T>(), false, Backward{}, &value});
    return Var<T>{this, nodes_.size() - 1};
  }

  /// Appends the result of an operation. The backward rule is kept only if
  /// some operand is tracked.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> operands, Backward backward) {
    bool tracked = false;
    for (const auto& v : operands) {
      if (v.tape != this) throw std::invalid_argument("operand recorded on a different tape");
      tracked = tracked || nodes_[v.id].requires_grad;
    }
    if (!value.all_finite()) throw NumericError("operation produced a non-finite value");
    return push(std::move(value), tracked, tracked ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).get(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() target w.r.t. this node; zeros if the
  /// node did not influence it.
  const Tensor<T>& grad(std::size_t id) {
    return grad_buffer(id);
  }

  /// Mutable gradient accumulator, allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    auto& node = nodes_.at(id);
    const Tensor<T>& v = node.get();
    if (node.grad.size() != v.size() || node.grad.shape() != v.shape()) node.grad = Tensor<T>(v.shape());
    return node.grad;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("loss recorded on a different tape");
    if (value(loss.id).size() != 1) {
      throw ShapeError("backward() requires a scalar loss, got shape " + to_string(value(loss.id).shape()));
    }
    for (auto& node : nodes_) node.grad = Tensor<T>();
    grad_buffer(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      // Rules only touch operands, which precede i, so this reference stays valid.
      node.backward(*this, node.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    const Tensor<T>* borrowed = nullptr;

    const Tensor<T>& get() const { return borrowed ? *borrowed : value; }
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, std::move(backward)});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable addresses: values stay referenceable while recording
};

}  // namespace nsolver
