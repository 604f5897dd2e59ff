// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape owns every node created while building one loss. Nodes are appended
// in creation order, which is already a topological order, so backward() is a
// single reverse sweep. Gradients from multiple paths are summed.
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cds/numerics/tensor.hpp"

namespace cds {

template <typename T>
class Tape;

// Lightweight handle to a node on a tape. Copyable; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Tensor<T>& grad() const { return tape_->grad(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  // Receives the tape and the id of the node whose grad is being propagated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) {
    return push("constant", std::move(value), {}, nullptr, false, false);
  }

  Var<T> parameter(Tensor<T> value) {
    return push("parameter", std::move(value), {}, nullptr, true, false);
  }

  // Value copy that never passes gradient back to `x`.
  Var<T> stop_grad(Var<T> x) {
    return push("stop_grad", x.value(), {}, nullptr, false, true);
  }

  // Appends an op node. The node requires grad iff any parent does; otherwise
  // the backward rule is dropped.
  Var<T> record(std::string op, Tensor<T> value, std::vector<std::size_t> parents,
                BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
    if (!value.all_finite()) {
      throw NumericError(op + ": produced a non-finite value");
    }
    return push(std::move(op), std::move(value), std::move(parents),
                needs ? std::move(fn) : BackwardFn{}, needs, false);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }

  // Gradient of the last backward() w.r.t. node `id`; zeros if unreached.
  const Tensor<T>& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Tensor<T>(n.value.shape(), T(0));
    }
    return n.grad;
  }

  // Mutable accumulator used by backward rules.
  Tensor<T>& grad_acc(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool is_stop_grad(std::size_t id) const { return nodes_[id].stop_grad; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var<T> loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " +
                       shape_str(loss.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad_acc(loss.id())[0] = T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      if (fault_ && n.op == fault_->first) {
        for (auto& g : n.grad.data()) g *= fault_->second;
      }
      n.backward(*this, i);
    }
  }

  // Test hook: scales the upstream gradient of every node with this op tag by
  // `factor` before its backward rule runs, i.e. a deliberately wrong rule.
  void inject_fault(std::string op, T factor) {
    fault_ = std::make_pair(std::move(op), factor);
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    mutable Tensor<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool stop_grad = false;
  };

  Var<T> push(std::string op, Tensor<T> value, std::vector<std::size_t> parents,
              BackwardFn fn, bool requires_grad, bool stop_grad) {
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor<T>(),
                          std::move(parents), std::move(fn), requires_grad,
                          stop_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::optional<std::pair<std::string, T>> fault_;
};

}  // namespace cds
