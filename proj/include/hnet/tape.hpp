#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hnet/tensor.hpp"

namespace hnet {

/// Reverse-mode tape over tensor-valued nodes. Each recorded op keeps its
/// output value and a closure that pulls the output cotangent back into the
/// cotangents of its inputs. Nodes are replayed in exact reverse order of
/// recording and every contribution is added, so fan-out accumulates.
template <class T>
class Tape {
 public:
  using Id = std::size_t;
  using Backward = std::function<void(Tape&, Id)>;

  Id input(Tensor<T> value, bool requires_grad = false) {
    nodes_.push_back({std::move(value), {}, {}, nullptr, requires_grad});
    return nodes_.size() - 1;
  }

  /// The output requires a gradient iff any input does; the closure is
  /// dropped otherwise.
  Id record(Tensor<T> value, std::vector<Id> inputs, Backward backward) {
    bool needs = false;
    for (Id i : inputs) {
      if (i >= nodes_.size()) throw std::out_of_range("tape: input id out of range");
      needs = needs || nodes_[i].requires_grad;
    }
    nodes_.push_back({std::move(value), {}, std::move(inputs), needs ? std::move(backward) : nullptr, needs});
    return nodes_.size() - 1;
  }

  const Tensor<T>& value(Id id) const { return nodes_.at(id).value; }
  bool requires_grad(Id id) const { return nodes_.at(id).requires_grad; }
  const std::vector<Id>& inputs(Id id) const { return nodes_.at(id).inputs; }

  /// Cotangent of a node, zero-initialized on first access.
  Tensor<T>& grad(Id id) {
    auto& n = nodes_.at(id);
    if (n.grad.shape != n.value.shape || n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }
  bool has_grad(Id id) const { return !nodes_.at(id).grad.empty(); }

  /// Seeds d root = 1 (root must hold one scalar) and runs the reverse sweep.
  void backward(Id root) {
    if (nodes_.empty() || root >= nodes_.size()) {
      throw std::logic_error("tape: backward called without a recorded forward pass");
    }
    if (nodes_[root].value.size() != 1) throw std::invalid_argument("tape: backward root must be a scalar");
    grad(root).data[0] = T(1);
    for (Id i = root + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<Id> inputs;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace hnet
