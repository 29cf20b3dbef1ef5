// Dense tensor with reverse-mode differentiation.
//
// The graph is dynamic: every operation allocates a fresh node holding the
// result buffer, the parent links and a backward closure. backward() walks
// the nodes reachable from a root in reverse topological order and
// accumulates gradients additively, so shared subexpressions are handled
// naturally. Templated on the scalar type; float is the training dtype,
// double backs the oracle and gradient-check suites.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "c4g/error.hpp"

namespace c4g {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables tape recording in a scope (inference paths).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from_values(shape, std::vector<T>(shape_numel(shape), T(0)));
  }

  static Tensor full(Shape shape, T v) {
    return from_values(shape, std::vector<T>(shape_numel(shape), v));
  }

  static Tensor scalar(T v) { return from_values({}, {v}); }

  static Tensor from_values(Shape shape, std::vector<T> values) {
    C4G_CHECK_SHAPE(static_cast<int64_t>(values.size()) == shape_numel(shape),
                    "buffer length " << values.size() << " does not match shape " << shape_str(shape));
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(values);
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }
  int64_t dim(int i) const { return n_->shape.at(i); }
  int rank() const { return static_cast<int>(n_->shape.size()); }

  const std::vector<T>& values() const { return n_->value; }
  const T* data() const { return n_->value.data(); }
  // Mutating values of a node that already has consumers invalidates their
  // saved state; only leaves (parameters, inputs) may be written.
  T* mutable_data() {
    C4G_CHECK(n_->parents.empty(), ErrorKind::kState, "cannot mutate a non-leaf tensor");
    return n_->value.data();
  }

  T item() const {
    C4G_CHECK_SHAPE(numel() == 1, "item() on tensor with " << numel() << " elements");
    return n_->value[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    n_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    C4G_CHECK(has_grad(), ErrorKind::kState, "gradient not populated; run backward() first");
    return n_->grad;
  }
  void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }
  void drop_grad() { n_->grad.clear(); }

  // Reverse-mode sweep from a scalar root.
  void backward() {
    C4G_CHECK_SHAPE(numel() == 1, "backward() requires a scalar root");
    backward_with_seed(std::vector<T>{T(1)});
  }

  // Seeded sweep (full-Jacobian tests seed one output element at a time).
  void backward_with_seed(const std::vector<T>& seed) {
    C4G_CHECK_SHAPE(static_cast<int64_t>(seed.size()) == numel(), "seed shape mismatch");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    topo_sort(n_.get(), order, seen);
    n_->ensure_grad();
    for (size_t i = 0; i < seed.size(); ++i) n_->grad[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backward_fn && node->requires_grad && !node->grad.empty()) {
        node->backward_fn(*node);
      }
    }
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Wires an op result into the graph. The backward closure runs only when
  // recording was enabled and some parent needs gradients.
  static Tensor make_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn) {
    Tensor t = from_values(std::move(shape), std::move(values));
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs && grad_mode_flag()) {
      t.n_->requires_grad = true;
      for (const auto& p : parents) t.n_->parents.push_back(p.n_);
      t.n_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  // Detached copy sharing no graph history.
  Tensor detach() const { return from_values(n_->shape, n_->value); }

 private:
  static void topo_sort(Node* root, std::vector<Node*>& order, std::unordered_set<Node*>& seen) {
    // Iterative DFS; graphs from long training loops exceed stack limits
    // with recursion.
    struct Frame {
      Node* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    if (seen.insert(root).second) stack.push_back({root, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> n_;
};

// Named trainable tensor. Names are unique within a model; the checkpoint
// container is keyed by them.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
  }
};

// Registry that owns parameter handles and enforces unique names.
template <typename T>
class ParamRegistry {
 public:
  Tensor<T> create(const std::string& name, Shape shape, std::vector<T> values) {
    for (const auto& p : params_)
      C4G_CHECK(p.name != name, ErrorKind::kState, "duplicate parameter name '" << name << "'");
    Tensor<T> t = Tensor<T>::from_values(std::move(shape), std::move(values));
    params_.emplace_back(name, t);
    return params_.back().tensor;
  }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

 private:
  std::vector<Parameter<T>> params_;
};

}  // namespace c4g
