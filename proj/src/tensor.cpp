#include "liquiform/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "liquiform/error.hpp"

namespace liquiform {

namespace {
thread_local bool g_grad_enabled = true;
}

Index element_count(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {
bool grad_mode_enabled() { return g_grad_enabled; }
}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {

void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) {
  check_shape(shape);
  node_ = std::make_shared<detail::Node<T>>();
  node_->data.assign(static_cast<std::size_t>(element_count(shape)), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  check_shape(shape);
  if (element_count(shape) != static_cast<Index>(values.size())) {
    throw DimensionError("shape " + to_string(shape) + " needs " +
                         std::to_string(element_count(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw GraphError("use of an undefined tensor");
  return node_->shape;
}

template <typename T>
Index Tensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->leaf) throw GraphError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto copy = std::make_shared<detail::Node<T>>();
  copy->shape = node_->shape;
  copy->data = node_->data;
  return from_node(std::move(copy));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.node_->requires_grad = node_->requires_grad && node_->leaf;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
std::size_t Tensor<T>::backward() const {
  using NodeT = detail::Node<T>;
  if (!node_) throw GraphError("backward on an undefined tensor");
  if (node_->data.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + to_string(node_->shape));
  }
  if (node_->released) {
    throw GraphError("backward called twice without a new forward pass");
  }
  if (!node_->requires_grad) {
    throw GraphError("loss does not depend on any tensor that requires grad");
  }

  // Iterative post-order DFS: every node is emitted after all of its inputs.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    NodeT* current = stack.back().first;
    const std::size_t next = stack.back().second;
    if (next < current->inputs.size()) {
      ++stack.back().second;
      NodeT* child = current->inputs[next].get();
      if (!child->requires_grad || seen.count(child)) continue;
      if (child->released) {
        throw GraphError("backward reached a graph already consumed by an earlier backward (op '" +
                         child->op + "')");
      }
      seen.insert(child);
      stack.emplace_back(child, 0);
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  if (node_->leaf) {
    node_->ensure_grad()[0] += T{1};
  } else {
    node_->grad.assign(1, T{1});
  }

  std::size_t visited = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->leaf || !n->backward) continue;
    n->ensure_grad();
    n->backward(*n);
    ++visited;
  }

  for (NodeT* n : order) {
    if (n->leaf) continue;
    n->backward = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
  return visited;
}

namespace detail {

template <typename T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = std::move(op);
  bool needs_grad = false;
  if (grad_mode_enabled()) {
    for (const Tensor<T>* in : inputs) {
      if (in && in->defined() && in->requires_grad()) needs_grad = true;
    }
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    for (const Tensor<T>* in : inputs) {
      if (in && in->defined()) node->inputs.push_back(in->node());
    }
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template Tensor<float> make_result(std::string, Shape, std::vector<float>,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(std::string, Shape, std::vector<double>,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace liquiform
