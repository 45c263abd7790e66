#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/error.hpp"

namespace s2bt::grad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline constexpr std::size_t kLeafId = static_cast<std::size_t>(-1);

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> value;
  // Empty unless requires_grad. Leaves keep their accumulator across tapes;
  // tape-recorded nodes get a fresh zeroed one at the start of every backward.
  std::vector<T> grad;
  bool requires_grad = false;
  std::size_t id = kLeafId;
  // Pushes this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;
};

// Shared handle to a node. Copies alias the same storage; parameters are
// Tensors that outlive any single tape.
template <std::floating_point T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape.empty()) shape = {1};
    for (std::size_t d : shape)
      if (d == 0) throw DimensionError("zero-sized dimension in " + shape_string(shape));
    if (shape_size(shape) != values.size())
      throw DimensionError("shape " + shape_string(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), T{0});
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape.empty() ? Shape{1} : shape);
    return leaf(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return leaf({1}, {v}, requires_grad);
  }

  static Tensor vector(std::vector<T> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return leaf({n}, std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_scalar() const { return node_->value.size() == 1; }
  std::size_t id() const { return node_->id; }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  T item() const { return node_->value.at(0); }
  T operator[](std::size_t i) const { return node_->value[i]; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T{0}); }

  // Deep copy with a fresh (zeroed) accumulator.
  Tensor clone() const { return leaf(node_->shape, node_->value, node_->requires_grad); }

  Node<T>& node() { return *node_; }
  const Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Records the operations of one forward pass in execution order, which is a
// topological order by construction. backward() replays them in reverse.
template <std::floating_point T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When disabled, no operation is recorded and results never require grad.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  void record(const std::shared_ptr<Node<T>>& n) {
    n->id = ops_.size();
    ops_.push_back(n);
  }

  // Accumulates d(loss)/d(leaf) into every gradient-requiring leaf. Calling it
  // twice adds the gradients twice; intermediate accumulators are reset first.
  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || !loss.is_scalar())
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;
    const std::size_t loss_id = loss.id();
    if (loss_id == kLeafId) {
      const_cast<Tensor<T>&>(loss).node().grad[0] += T{1};
      return;
    }
    if (loss_id >= ops_.size() || ops_[loss_id] != loss.ptr())
      throw ContractError("loss was not produced on this tape");
    for (std::size_t i = 0; i <= loss_id; ++i) ops_[i]->grad.assign(ops_[i]->value.size(), T{0});
    ops_[loss_id]->grad[0] = T{1};
    visits_ = 0;
    for (std::size_t i = loss_id + 1; i-- > 0;) {
      Node<T>& n = *ops_[i];
      ++visits_;
      if (n.backward) n.backward(n);
    }
  }

  // Number of operations visited by the most recent backward().
  std::size_t last_backward_visits() const { return visits_; }

 private:
  std::vector<std::shared_ptr<Node<T>>> ops_;
  bool grad_enabled_ = true;
  std::size_t visits_ = 0;
};

}  // namespace s2bt::grad
