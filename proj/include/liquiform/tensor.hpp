#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace liquiform {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index element_count(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Mode { train, eval };

namespace detail {

// One vertex of the recorded computation. Leaves are created by the user
// (inputs, parameters); interior nodes are created by operators and carry the
// closure that pushes their gradient into their inputs.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

bool grad_mode_enabled();

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// N-dimensional row-major array with optional gradient tracking.
//
// Tensor is a handle: copies share storage and graph position, like the
// parameters of a network shared between a module and its optimizer. Use
// clone() for an independent deep copy and detach() to cut the graph.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  Index dim(std::size_t axis) const;
  Index numel() const { return static_cast<Index>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  // Writable view of the storage; intended for leaves (parameter updates,
  // input filling). Mutating a tensor already consumed by a recorded
  // operation invalidates that operation's gradient.
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T operator[](Index i) const { return node_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }
  const std::string& op() const { return node_->op; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  // Reverse-mode sweep from this scalar. Returns the number of recorded
  // operations visited. The graph is released afterwards; a second call
  // without a fresh forward pass throws GraphError.
  std::size_t backward() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

// Builds the output of an operator and, when recording is on and an input
// requires grad, links it into the graph.
template <typename T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace liquiform
