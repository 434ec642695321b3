#pragma once

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// the node list is already topologically sorted and backward is a single
// reverse sweep.

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "sgrs/error.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Dims& dims() const { return tape_->node(id_).dims; }
  std::span<const T> values() const { return tape_->node(id_).value; }
  Tensor<T> value() const { return Tensor<T>(dims(), tape_->node(id_).value); }
  T item() const { return value().item(); }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }
  Tensor<T> grad() const { return tape_->grad(*this); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
  static_assert(std::is_floating_point_v<T>, "tapes are defined over f32/f64");

 public:
  using Values = std::vector<T>;
  // Recomputes a node's value from its inputs' saved values.
  using Forward = std::function<Values(const Tape&)>;
  // Reads the node's accumulated grad and adds into its inputs' grads.
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    std::string_view op;
    Dims dims;
    Values value;
    Values grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Forward forward;
    Backward backward;
  };

  // A tape built with grad disabled records values only; used for teacher
  // inference and evaluation.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }

  Var<T> leaf(const Tensor<T>& value, bool requires_grad = false) {
    if (requires_grad && !grad_enabled_) throw ContractError("leaf requires grad on a no-grad tape");
    if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
    Node n;
    n.op = "leaf";
    n.dims = value.dims();
    n.value = value.storage();
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(const Tensor<T>& value) { return leaf(value, false); }

  Var<T> record(std::string_view op, Dims dims, std::vector<std::size_t> inputs, Forward forward,
                Backward backward) {
    Node n;
    n.op = op;
    n.dims = std::move(dims);
    n.value = forward(*this);
    if (n.value.size() != product(n.dims)) {
      throw ContractError(std::string(op) + ": forward produced wrong element count");
    }
    for (T v : n.value) {
      if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
    }
    for (auto in : inputs) {
      if (in >= nodes_.size()) throw ContractError("input node does not precede its consumer");
      n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    n.inputs = std::move(inputs);
    if (grad_enabled_) {
      n.forward = std::move(forward);
      if (n.requires_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  // Reverse sweep from a scalar loss. Every requires_grad node, leaves
  // included, ends with a grad buffer (zero when it did not influence loss).
  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw ContractError("backward needs a scalar loss, got dims " + to_string(root.dims));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad.assign(n.value.size(), T{0});
      else n.grad.clear();
    }
    if (!root.requires_grad) return;
    nodes_[loss.id()].grad[0] = T{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.requires_grad && n.backward) n.backward(*this, id);
    }
  }

  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    if (!n.requires_grad) throw ContractError("node does not require grad");
    if (n.grad.empty()) return Tensor<T>(n.dims, T{0});
    return Tensor<T>(n.dims, n.grad);
  }

  // Recomputes every recorded node from the saved leaf values and reports
  // whether all saved activations were reproduced bit-for-bit.
  bool replay() const {
    if (!grad_enabled_) throw ContractError("replay needs a recording tape");
    for (const auto& n : nodes_) {
      if (!n.forward) continue;
      if (n.forward(*this) != n.value) return false;
    }
    return true;
  }

  // Input grad buffer for accumulation inside Backward callbacks; empty when
  // that input does not require grad.
  Values* grad_sink(std::size_t input_id) {
    Node& n = nodes_[input_id];
    return n.requires_grad ? &n.grad : nullptr;
  }

 private:
  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace sgrs
