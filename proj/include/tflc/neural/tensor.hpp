#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "tflc/common/error.hpp"

namespace tflc::neural {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// When set, every op checks its output for NaN/Inf.
inline bool& nan_check() {
  static bool on = false;
  return on;
}

template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  S* g() {
    if (grad.empty()) grad.assign(value.size(), S(0));
    return grad.data();
  }
};

template <class S>
class Tensor {
 public:
  using NodeP = std::shared_ptr<Node<S>>;

  Tensor() = default;
  explicit Tensor(NodeP n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value.assign(numel(shape), S(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
    require_dims(values.size() == numel(shape), "Tensor: value count does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor scalar(S v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t size() const { return n_->value.size(); }
  S* data() { return n_->value.data(); }
  const S* data() const { return n_->value.data(); }
  std::vector<S>& values() { return n_->value; }
  const std::vector<S>& values() const { return n_->value; }
  std::vector<S>& grad() { return n_->grad; }
  const std::vector<S>& grad() const { return n_->grad; }
  S item() const { return n_->value.at(0); }
  bool requires_grad() const { return n_->requires_grad; }
  Node<S>* node() const { return n_.get(); }
  const NodeP& ptr() const { return n_; }

  void zero_grad() { n_->grad.clear(); }

  /// Same values, cut from the graph.
  Tensor detach() const { return from(shape(), values()); }

 private:
  NodeP n_;
};

/// Creates an op output. The parents are retained (and a backward closure is
/// expected) only when one of them needs gradients, so inference graphs free
/// intermediates as soon as they go out of scope.
template <class S>
Tensor<S> make_output(Shape shape, std::initializer_list<Tensor<S>> parents) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (const auto& p : parents)
    if (p.requires_grad()) t.node()->requires_grad = true;
  if (t.requires_grad())
    for (const auto& p : parents) t.node()->parents.push_back(p.ptr());
  return t;
}

template <class S>
void check_finite(const Tensor<S>& t, const char* op) {
  if (!nan_check()) return;
  for (S v : t.values())
    if (!std::isfinite(v)) throw Error(std::string("non-finite value after ") + op);
}

/// Reverse-mode sweep from a scalar; gradients accumulate into leaves.
template <class S>
void backward(const Tensor<S>& loss) {
  require(loss.size() == 1, "backward: loss must be a scalar");
  if (!loss.requires_grad()) return;
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->g()[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward();
}

// ---- elementwise / reduction ops ----------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require_dims(a.shape() == b.shape(), "add: shape mismatch");
  auto out = make_output<S>(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = a.ptr(), bn = b.ptr();
    o->backward = [o, an, bn] {
      for (auto* p : {an.get(), bn.get()})
        if (p->requires_grad) {
          S* g = p->g();
          for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
        }
    };
  }
  check_finite(out, "add");
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto out = make_output<S>(a.shape(), {a});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = a.ptr();
    o->backward = [o, an, c] {
      S* g = an->g();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += c * o->grad[i];
    };
  }
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  auto out = make_output<S>({1}, {a});
  S s = 0;
  for (S v : a.values()) s += v;
  out.data()[0] = s;
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = a.ptr();
    o->backward = [o, an] {
      S* g = an->g();
      for (std::size_t i = 0; i < an->value.size(); ++i) g[i] += o->grad[0];
    };
  }
  return out;
}

}  // namespace tflc::neural
