#include "dsvit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <unordered_set>

#include "dsvit/errors.hpp"

namespace dsvit {

namespace {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

detail::NodePtr new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " given " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = next_node_id();
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : node_(new_node({}, {0.0}, false)) {}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_string(shape));
  }
  std::vector<double> data(shape_numel(shape), fill);
  node_ = new_node(std::move(shape), std::move(data), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from_node(detail::NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return node_->shape[axis];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw DimensionError("index rank " + std::to_string(index.size()) +
                         " does not match shape " + shape_string(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) {
      throw DimensionError("index out of range for shape " + shape_string(shape()));
    }
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

namespace {

Tensor attach(Shape shape, std::vector<double> data, std::vector<detail::NodePtr> parents,
              detail::BackwardFn backward) {
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const detail::NodePtr& p) { return p->requires_grad; });
  auto node = new_node(std::move(shape), std::move(data), any);
  if (any) {
    node->is_leaf = false;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, detail::BackwardFn backward) {
  std::vector<detail::NodePtr> parents;
  parents.reserve(inputs.size());
  for (const Tensor* t : inputs) parents.push_back(t->node());
  return attach(std::move(shape), std::move(data), std::move(parents), std::move(backward));
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   detail::BackwardFn backward) {
  std::vector<detail::NodePtr> parents;
  parents.reserve(inputs.size());
  for (const Tensor& t : inputs) parents.push_back(t.node());
  return attach(std::move(shape), std::move(data), std::move(parents), std::move(backward));
}

GradientTape GradientTape::record(const Tensor& loss) {
  GradientTape tape;
  detail::Node* root = loss.node().get();
  if (!root->requires_grad) return tape;

  // Iterative post-order DFS; a node is emitted after all of its parents.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.entries_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void GradientTape::replay() const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a single-element loss, got shape " +
                        shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  GradientTape tape = GradientTape::record(loss);
  for (detail::Node* node : tape.entries()) {
    if (!node->is_leaf && !node->grad.empty()) {
      std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
  }
  detail::Node* root = loss.node().get();
  auto& g = root->ensure_grad();
  if (root->is_leaf) {
    g[0] += 1.0;
  } else {
    g[0] = 1.0;
  }
  tape.replay();
}

}  // namespace dsvit
