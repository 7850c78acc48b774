#include "coper/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tensor_node.hpp"

namespace coper {

namespace {
thread_local bool tl_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

namespace detail {

Node::~Node() {
  // Long solver chains would otherwise recurse once per node on release.
  std::vector<std::shared_ptr<Node>> pending = std::move(parents);
  while (!pending.empty()) {
    std::shared_ptr<Node> next = std::move(pending.back());
    pending.pop_back();
    if (next && next.use_count() == 1) {
      for (auto& p : next->parents) pending.push_back(std::move(p));
      next->parents.clear();
      next->backward = nullptr;
    }
  }
}

}  // namespace detail

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!node_->parents.empty() || node_->backward) {
    throw std::logic_error("mutable_data() is only available on leaf tensors");
  }
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for shape " + shape_str(s));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw std::out_of_range("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

std::vector<double> Tensor::to_vector() const { return node_->data; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::is_leaf() const { return node_->parents.empty(); }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

void Tensor::backward() const {
  if (!defined()) throw std::logic_error("backward() on an undefined tensor");
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");
  GradTape::record(*this).run_backward();
}

// ---- BackwardContext -------------------------------------------------------

std::span<const double> BackwardContext::grad_output() const { return node_.grad; }

std::span<const double> BackwardContext::output() const { return node_.data; }

std::size_t BackwardContext::parent_count() const { return node_.parents.size(); }

bool BackwardContext::needs_grad(std::size_t parent) const {
  return node_.parents[parent]->requires_grad;
}

std::span<const double> BackwardContext::parent_data(std::size_t parent) const {
  return node_.parents[parent]->data;
}

const Shape& BackwardContext::parent_shape(std::size_t parent) const {
  return node_.parents[parent]->shape;
}

std::span<double> BackwardContext::parent_grad(std::size_t parent) {
  detail::Node& p = *node_.parents[parent];
  if (p.grad.empty()) p.grad.assign(p.data.size(), 0.0);
  return p.grad;
}

// ---- graph construction ----------------------------------------------------

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                   BackwardFn backward) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("operation produced " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  if (tl_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.node_->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const Tensor& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

GradTape GradTape::record(const Tensor& root) {
  GradTape tape;
  if (!root.defined() || !root.node_->requires_grad) return tape;
  std::unordered_set<const detail::Node*> visited;
  // Iterative post-order DFS: a node is emitted once all its parents are.
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node_, 0);
  visited.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      const std::shared_ptr<detail::Node>& p = node->parents[next_parent++];
      if (p->requires_grad && visited.insert(p.get()).second) stack.emplace_back(p, 0);
      continue;
    }
    tape.order_.push_back(std::move(node));
    stack.pop_back();
  }
  return tape;
}

std::vector<const void*> GradTape::node_ids() const {
  std::vector<const void*> ids;
  ids.reserve(order_.size());
  for (const auto& n : order_) ids.push_back(n.get());
  return ids;
}

std::vector<std::vector<const void*>> GradTape::parent_ids() const {
  std::vector<std::vector<const void*>> ids;
  ids.reserve(order_.size());
  for (const auto& n : order_) {
    std::vector<const void*> row;
    for (const auto& p : n->parents) {
      if (p->requires_grad) row.push_back(p.get());
    }
    ids.push_back(std::move(row));
  }
  return ids;
}

void GradTape::run_backward() const {
  if (order_.empty()) return;
  // Interior gradients are per-pass; leaves accumulate across passes.
  for (const auto& n : order_) {
    if (!n->parents.empty()) n->grad.clear();
  }
  detail::Node& root = *order_.back();
  if (root.grad.empty()) root.grad.assign(root.data.size(), 0.0);
  for (double& g : root.grad) g += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.parents.empty() || !n.backward || n.grad.empty()) continue;
    BackwardContext ctx(n);
    n.backward(ctx);
  }
}

bool grad_enabled() { return tl_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tl_grad_enabled) { tl_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { tl_grad_enabled = previous_; }

BoolMask BoolMask::negated() const {
  BoolMask out{shape, bits};
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

}  // namespace coper
