#include "mtfcdd/autodiff.hpp"

#include <unordered_set>
#include <utility>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad, std::string name) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->name = std::move(name);
}

template <typename T>
Var<T> Var<T>::make_result(Tensor<T> value, std::string name, std::vector<Var> parents,
                           std::function<void(Node<T>&)> backward) {
  require_finite(value, name);
  Var out(std::move(value), false, std::move(name));
  bool any = false;
  for (auto& p : parents) {
    any = any || p.requires_grad();
    out.node_->parents.push_back(p.node_);
  }
  out.node_->requires_grad = any;
  if (any) out.node_->backward = std::move(backward);
  return out;
}

template <typename T>
void Var<T>::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(T{0});
}

template <typename T>
void backward(const Var<T>& root) {
  using NodePtr = Node<T>*;
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  if (root.node()->is_leaf()) {
    for (auto& g : root.node()->grad_buffer().values()) g += T{1};
    return;
  }

  // Leaves collect this pass into a fresh buffer that is added to their
  // previous grad in one step at the end.
  std::vector<std::pair<NodePtr, Tensor<T>>> stashed;
  for (NodePtr n : order) {
    if (n->is_leaf()) {
      if (!n->grad.empty()) stashed.emplace_back(n, std::exchange(n->grad, Tensor<T>{}));
    } else {
      n->grad_buffer().fill(T{0});
    }
  }
  root.node()->grad_buffer().fill(T{1});

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr n = *it;
    if (n->is_leaf() || !n->backward) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->grad_buffer();
    }
    n->backward(*n);
  }
  for (auto& [n, previous] : stashed) {
    Tensor<T>& g = n->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = previous[i] + g[i];
  }
  for (NodePtr n : order) {
    if (!n->grad.all_finite()) throw NumericError("non-finite gradient at '" + n->name + "'");
  }
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite values produced by '" + what + "'");
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template void require_finite(const Tensor<float>&, const std::string&);
template void require_finite(const Tensor<double>&, const std::string&);

}  // namespace mtfcdd
