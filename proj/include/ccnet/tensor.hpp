#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ccnet {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for any shape or divisibility violation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when backward() is asked to differentiate something it cannot.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
using Buffer = Eigen::Array<T, Eigen::Dynamic, 1>;

/// One recorded value in the computation graph. `inputs` holds the operands the
/// value was computed from; `backward` reads `grad` and accumulates into them.
template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Buffer<T>& grad_buffer() {
    if (grad.size() == 0) grad = Buffer<T>::Zero(value.size());
    return grad;
  }
};

/// Dense row-major tensor. Copies share the underlying node; values are never
/// mutated after construction except through `mutable_values()` on leaves.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  Tensor(Shape shape, Buffer<T> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::initializer_list<T> values);
  static Tensor from(const Shape& shape, const std::vector<T>& values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  const Buffer<T>& values() const { return node_->value; }
  Buffer<T>& mutable_values();
  T item() const;
  T at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.size() != 0; }
  const Buffer<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  Tensor detach() const;
  Tensor clone() const;
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Topologically ordered list of the nodes reachable from a root. Inputs always
/// precede the operations that consume them.
template <typename T>
struct Tape {
  std::vector<Node<T>*> nodes;
};

template <typename T>
Tape<T> record_tape(const Tensor<T>& root);

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across calls
/// until cleared with zero_grad().
template <typename T>
void backward(const Tensor<T>& root);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. The backward rule is kept only when grad mode is on and
/// at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_rule);

}  // namespace ccnet
