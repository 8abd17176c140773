#include "ccnet/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace ccnet {

namespace {
thread_local bool g_grad_enabled = true;
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> values, bool requires_grad) {
  for (Index d : shape) {
    if (d < 1) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, Buffer<T>::Zero(numel(shape)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return Tensor(shape, Buffer<T>::Constant(numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::initializer_list<T> values) {
  return from(shape, std::vector<T>(values));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, const std::vector<T>& values) {
  Buffer<T> buf(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) buf[static_cast<Index>(i)] = values[i];
  return Tensor(shape, std::move(buf));
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

template <typename T>
Buffer<T>& Tensor<T>::mutable_values() {
  if (!node_->is_leaf) throw GraphError("only leaf tensors may be modified in place");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() needs a single element, got " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<Index> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw DimensionError("index rank does not match " + shape_str(shape()));
  }
  Index flat = 0;
  std::size_t a = 0;
  for (Index i : idx) {
    const Index extent = shape()[a++];
    if (i < 0 || i >= extent) throw DimensionError("index out of range for " + shape_str(shape()));
    flat = flat * extent + i;
  }
  return node_->value[flat];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), values(), false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), values(), requires_grad());
}

template <typename T>
Tape<T> record_tape(const Tensor<T>& root) {
  Tape<T> tape;
  if (!root.defined()) return tape;
  std::unordered_set<const Node<T>*> seen;
  // Iterative post-order DFS; recursion depth would follow graph depth.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      tape.nodes.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename T>
void backward(const Tensor<T>& root) {
  if (!root.defined()) throw GraphError("backward on an undefined tensor");
  if (root.size() != 1) {
    throw GraphError("backward needs a scalar root, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) throw GraphError("backward on a root detached from any tape");
  Tape<T> tape = record_tape(root);
  root.node()->grad_buffer() += T(1);
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf || node->grad.size() == 0) continue;
    node->backward(*node);
    node->grad.resize(0);
  }
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_rule) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward_rule);
  }
  return Tensor<T>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template Tape<float> record_tape(const Tensor<float>&);
template Tape<double> record_tape(const Tensor<double>&);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template Tensor<float> make_result(const char*, Shape, Buffer<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const char*, Shape, Buffer<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace ccnet
