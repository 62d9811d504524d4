#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "pulseclust/random.hpp"

namespace pulseclust {

using Shape = std::vector<Eigen::Index>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline Eigen::Index shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Eigen::Index{1}, std::multiplies<>());
}

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thread-local switch that stops ops from recording backward closures.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

[[noreturn]] inline void throw_shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

/// Dense row-major tensor participating in a reverse-mode autodiff graph.
/// Copies share the underlying node (shared_ptr semantics); ops build fresh
/// nodes whose backward closures accumulate into parent gradients.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  struct Node {
    Shape shape;
    Storage value;
    Storage grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Storage& ensure_grad() {
      if (grad.size() != value.size()) grad = Storage::Zero(value.size());
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Scalar(0), requires_grad);
  }

  static Tensor filled(Shape shape, Scalar fill, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = Storage::Constant(shape_numel(t.node_->shape), fill);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_flat(Shape shape, Storage values, bool requires_grad = false) {
    if (values.size() != shape_numel(shape))
      throw ShapeError("Tensor: value count does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(Scalar v) { return filled({1}, v); }

  static Tensor randn(Shape shape, Scalar stddev, RandomSource& rng, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      t.node_->value[i] = stddev * static_cast<Scalar>(rng.normal());
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t ndim() const { return node_->shape.size(); }
  Eigen::Index numel() const { return node_->value.size(); }

  Storage& value() { return node_->value; }
  const Storage& value() const { return node_->value; }
  Storage& grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  Scalar item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not a scalar, shape " + shape_str(shape()));
    return node_->value[0];
  }

  /// Same value, cut out of the graph.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  void zero_grad() {
    if (node_->grad.size() > 0) node_->grad.setZero();
  }

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1.
  void backward() {
    if (!node_->requires_grad)
      throw std::logic_error("backward: tensor does not require gradients");
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    topo_visit(node_.get(), visited, order);
    node_->ensure_grad().setOnes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Builds an op-result tensor. The backward closure receives the result
  /// node and must accumulate into the parents' ensure_grad() arrays.
  static Tensor make_op(Shape shape, Storage value, std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backward) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    bool rg = false;
    if (GradMode::enabled())
      for (const auto& p : parents) rg = rg || p->requires_grad;
    t.node_->requires_grad = rg;
    if (rg) {
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward);
    }
    return t;
  }

 private:
  static void topo_visit(Node* n, std::unordered_set<Node*>& visited, std::vector<Node*>& order) {
    if (!n->requires_grad || visited.count(n)) return;
    visited.insert(n);
    for (const auto& p : n->parents) topo_visit(p.get(), visited, order);
    order.push_back(n);
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace pulseclust
