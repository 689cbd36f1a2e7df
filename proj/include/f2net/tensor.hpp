#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace f2net {

using Shape = std::vector<std::size_t>;

/// Shape mismatch between operands of an op.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Convolution / pooling geometry that yields a non-positive output size.
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the recorded graph (non-scalar loss, double backward, missing grad).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

// Creation counter. Ops run single-threaded per model instance, and each
// thread owns its own counter, so execution order within a graph is total.
inline std::uint64_t next_sequence() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t seq = next_sequence();
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents.
  std::function<void(const Node&)> backward_fn;

  bool is_leaf() const { return parents.empty() && !backward_fn; }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with an optional gradient slot. Copies share the
/// underlying storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> data(shape_numel(shape), value);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (data.size() != shape_numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Leaves only: parameters are updated in place by the optimizer and by tests.
  std::span<T> mutable_data() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  T item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar " + shape_string(shape()));
    return node_->data[0];
  }
  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t y, std::size_t x, std::size_t c) const {
    return node_->data[(y * dim(1) + x) * dim(2) + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on) node_->ensure_grad();
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  Tensor clone(bool requires_grad = false) const {
    return from(shape(), node_->data, requires_grad);
  }
  Tensor detach() const { return clone(false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

/// Wraps freshly computed output data into a tensor and, when any input is
/// tracked, records the backward closure on it.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(const Node<T>&)> backward_fn) {
  auto out = std::make_shared<Node<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  for (const Tensor<T>* in : inputs) {
    if (in->defined() && in->requires_grad()) {
      out->requires_grad = true;
      out->parents.push_back(in->node());
    }
  }
  if (out->requires_grad) out->backward_fn = std::move(backward_fn);
  return Tensor<T>(std::move(out));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(const Node<T>&)> backward_fn) {
  auto out = std::make_shared<Node<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      out->requires_grad = true;
      out->parents.push_back(in.node());
    }
  }
  if (out->requires_grad) out->backward_fn = std::move(backward_fn);
  return Tensor<T>(std::move(out));
}

// Grad buffer of an input, or nullptr when the input is not tracked.
template <typename T>
std::vector<T>* grad_of(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return &t.node()->ensure_grad();
}

}  // namespace detail

/// Reverse-mode accumulation from a scalar loss. Visits every tracked node
/// reachable from the loss once, in reverse creation order, then releases
/// the recorded closures. A second call on the same graph is an error.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw GraphError("backward requires a scalar loss, got " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw GraphError("loss does not depend on any tracked tensor");
  if (loss.node()->consumed) {
    throw GraphError("backward already ran on this graph; run a fresh forward pass first");
  }

  std::vector<std::shared_ptr<detail::Node<T>>> order;
  std::vector<std::shared_ptr<detail::Node<T>>> stack{loss.node()};
  std::unordered_set<const detail::Node<T>*> seen;
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (auto& p : n->parents) stack.push_back(p);
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

  loss.node()->ensure_grad()[0] += T(1);
  for (auto& n : order) {
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
  for (auto& n : order) {
    if (!n->is_leaf()) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->consumed = true;
    }
  }
}

}  // namespace f2net
