#pragma once

// Dense row-major float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared node. Nodes produced by an operation
// keep their parents alive and carry a backward rule whenever at least one
// parent requires a gradient and grad mode is enabled. Data is immutable after
// creation except through Tensor::mutable_data() on leaves, which is how
// optimizers update parameters between passes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coper {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Leaves only. Throws std::logic_error on operation results.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no history, no gradient.
  Tensor detach() const;

  // Reverse pass from a scalar. Gradients accumulate into leaves across calls.
  void backward() const;

  // Identity of the underlying node, for tape inspection.
  const void* id() const { return node_.get(); }

  friend bool same_node(const Tensor& a, const Tensor& b) { return a.node_ == b.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend class BackwardContext;
  friend class GradTape;
  friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&, BackwardFn);
};

// What a backward rule sees: the upstream gradient plus access to its
// parents' values and (lazily zero-initialised) gradient buffers.
class BackwardContext {
 public:
  std::span<const double> grad_output() const;
  std::span<const double> output() const;
  std::size_t parent_count() const;
  bool needs_grad(std::size_t parent) const;
  std::span<const double> parent_data(std::size_t parent) const;
  const Shape& parent_shape(std::size_t parent) const;
  std::span<double> parent_grad(std::size_t parent);

 private:
  explicit BackwardContext(detail::Node& node) : node_(node) {}
  detail::Node& node_;
  friend class GradTape;
};

// Builds an operation result. The backward rule is attached only when grad
// mode is on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                   BackwardFn backward);

// Topologically ordered record of the differentiable operations reachable
// from a root. Every node appears after the producers of its inputs.
class GradTape {
 public:
  static GradTape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::vector<const void*> node_ids() const;
  std::vector<std::vector<const void*>> parent_ids() const;

  // Seeds the root with ones and runs every backward rule in reverse order.
  void run_backward() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

bool grad_enabled();

// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Row-major boolean array with its own shape, broadcast over the leading
// dimensions of whatever it is applied to.
struct BoolMask {
  Shape shape;
  std::vector<std::uint8_t> bits;

  bool at(std::size_t flat) const { return bits[flat] != 0; }
  BoolMask negated() const;
};

// ---- operations ----------------------------------------------------------

// [..., m, k] x [..., k, p]. Batch dimensions must match, or one side may be
// a plain matrix shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);
// [..., m, k] x [..., p, k]^T
Tensor matmul_bt(const Tensor& a, const Tensor& b);

// Elementwise with broadcasting of the lower-rank operand over leading dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor exp(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
// Prepends leading dimensions by repetition: [s...] -> [lead..., s...].
Tensor expand(const Tensor& x, const Shape& leading);

// Sets positions where the mask is true to `value`; gradient there is zero.
Tensor masked_fill(const Tensor& x, const BoolMask& mask, double value);

// Numerically stable softmax. NaN or +inf input throws NumericError, as does
// a slice that is entirely -inf.
Tensor softmax(const Tensor& x, int axis);

// Row selection on [rows, ...]: out[r] = take_a[r] ? a[r] : b[r].
Tensor select_rows(const std::vector<std::uint8_t>& take_a, const Tensor& a, const Tensor& b);

// x: [n, t, ...], steps[r] < t  ->  [n, ...] with out[r] = x[r, steps[r]].
Tensor take_steps(const Tensor& x, const std::vector<std::size_t>& steps);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }
inline Tensor operator*(const Tensor& x, double s) { return scale(x, s); }

}  // namespace coper
