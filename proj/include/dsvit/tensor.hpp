#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dsvit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t id = 0;
  std::vector<NodePtr> parents;
  // Reads self.grad and accumulates into the parents' grads.
  BackwardFn backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 array with an optional place in a reverse-mode
/// gradient graph. Copies are shallow: two Tensor handles may share a node.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return node_->data; }
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of the values into a fresh leaf.
  Tensor clone(bool requires_grad) const;

  std::uint64_t id() const { return node_->id; }
  const detail::NodePtr& node() const { return node_; }

  static Tensor from_node(detail::NodePtr node);

 private:
  detail::NodePtr node_;
};

/// Creates the output of a differentiable operation. When any input requires
/// grad, the result is attached to the graph with `backward` as its rule.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   detail::BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs, detail::BackwardFn backward);

/// Graph nodes reachable from a loss, in topological order (inputs first).
class GradientTape {
 public:
  static GradientTape record(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  const std::vector<detail::Node*>& entries() const { return entries_; }
  /// Runs every local gradient rule from the loss back to the leaves.
  void replay() const;

 private:
  std::vector<detail::Node*> entries_;
};

/// Reverse-mode accumulation from a single-element loss. Leaf gradients add
/// up across calls; intermediate gradients are recomputed each time.
void backward(const Tensor& loss);

}  // namespace dsvit
