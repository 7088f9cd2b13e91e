#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mtfcdd/tensor.hpp"

namespace mtfcdd {

// One vertex of the dynamic reverse-mode graph. `backward` reads `grad` and
// accumulates into the parents' grads.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;

  bool is_leaf() const noexcept { return parents.empty(); }
  // Allocates a zero grad on first use.
  Tensor<T>& grad_buffer();
};

// Shared handle to a graph node. Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false, std::string name = {});

  static Var make_result(Tensor<T> value, std::string name, std::vector<Var> parents,
                         std::function<void(Node<T>&)> backward);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const Shape& shape() const { return node_->value.shape(); }
  const std::string& name() const { return node_->name; }
  void zero_grad();

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 for every element of root and propagates to all
// ancestors. Leaf grads accumulate across calls; interior grads are reset
// first so a repeated call adds exactly one more copy of each gradient.
template <typename T>
void backward(const Var<T>& root);

// Throws NumericError naming `what` if any element is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Var<float>;
extern template class Var<double>;

}  // namespace mtfcdd
