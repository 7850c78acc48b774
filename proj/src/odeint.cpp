#include "coper/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coper {
namespace {

// Relative slack when deciding whether a time lands on a solver node.
constexpr double kNodeSlack = 1e-9;

std::size_t full_steps(double span, double h) {
  return static_cast<std::size_t>(std::floor(span / h + kNodeSlack));
}

bool lands_on_node(double span, double h, std::size_t n) {
  return std::abs(span - static_cast<double>(n) * h) <= kNodeSlack * h;
}

}  // namespace

OdeDynamics::OdeDynamics(std::size_t state_dim, std::size_t hidden, std::size_t hidden_layers,
                         double dropout_rate, Rng& rng)
    : state_dim_(state_dim) {
  std::vector<std::size_t> dims{state_dim + 1};
  for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden);
  dims.push_back(state_dim);
  net_ = Mlp(dims, dropout_rate, rng);
}

Tensor OdeDynamics::evaluate(const Tensor& z, double t, const ForwardContext& ctx) const {
  if (z.rank() != 2 || z.dim(1) != state_dim_) {
    throw ShapeError("ode dynamics: state " + shape_str(z.shape()) + " is not [batch, " +
                     std::to_string(state_dim_) + "]");
  }
  Tensor time_col = Tensor::full({z.dim(0), 1}, t);
  return net_.forward(concat({z, time_col}, 1), ctx);
}

void OdeDynamics::zero_output() {
  Linear& last = net_.layers().back();
  for (double& v : last.weight().mutable_data()) v = 0.0;
  for (double& v : last.bias().mutable_data()) v = 0.0;
}

void OdeDynamics::collect(const std::string& prefix, ParameterList& out) const {
  net_.collect(prefix + "net.", out);
}

Tensor RowMaskedDynamics::evaluate(const Tensor& z, double t, const ForwardContext& ctx) const {
  Tensor d = inner_.evaluate(z, t, ctx);
  if (std::all_of(active_.begin(), active_.end(), [](std::uint8_t a) { return a != 0; })) return d;
  return select_rows(active_, d, Tensor::zeros(d.shape()));
}

Tensor ode_step(const Dynamics& f, const Tensor& z, double t, double h, OdeMethod method,
                const ForwardContext& ctx) {
  if (method == OdeMethod::euler) return add(z, scale(f.evaluate(z, t, ctx), h));
  const double half = 0.5 * h;
  Tensor k1 = f.evaluate(z, t, ctx);
  Tensor k2 = f.evaluate(add(z, scale(k1, half)), t + half, ctx);
  Tensor k3 = f.evaluate(add(z, scale(k2, half)), t + half, ctx);
  Tensor k4 = f.evaluate(add(z, scale(k3, h)), t + h, ctx);
  Tensor weighted = add(add(k1, scale(add(k2, k3), 2.0)), k4);
  return add(z, scale(weighted, h / 6.0));
}

Tensor integrate(const Dynamics& f, const Tensor& z, double t_from, double t_to, OdeMethod method,
                 double h, const ForwardContext& ctx) {
  if (!(h > 0.0)) throw std::invalid_argument("ode step size must be positive");
  const double span = std::abs(t_to - t_from);
  if (span == 0.0) return z;
  const double dir = t_to > t_from ? 1.0 : -1.0;
  const std::size_t n = full_steps(span, h);
  const bool exact = lands_on_node(span, h, n);
  Tensor state = z;
  double t = t_from;
  for (std::size_t k = 0; k < n; ++k) {
    const double t_next = (exact && k + 1 == n) ? t_to : t_from + dir * static_cast<double>(k + 1) * h;
    state = ode_step(f, state, t, t_next - t, method, ctx);
    t = t_next;
  }
  if (!exact) state = ode_step(f, state, t, t_to - t, method, ctx);
  return state;
}

Tensor ode_solve(const Dynamics& f, const Tensor& z0, double t0, const SolveSpec& spec,
                 const ForwardContext& ctx) {
  if (spec.query_times.empty()) throw std::invalid_argument("ode_solve: empty query_times");
  if (!(spec.step_size > 0.0)) throw std::invalid_argument("ode_solve: step_size must be positive");
  if (z0.rank() != 2) throw ShapeError("ode_solve: z0 must be [batch, dim], got " + shape_str(z0.shape()));
  double prev = t0;
  for (double q : spec.query_times) {
    if (!std::isfinite(q)) throw std::invalid_argument("ode_solve: non-finite query time");
    if (q < prev) {
      throw std::invalid_argument(q < t0 ? "ode_solve: query time before t0"
                                         : "ode_solve: query_times must be nondecreasing");
    }
    prev = q;
  }
  const double h = spec.step_size;
  const std::size_t batch = z0.dim(0);
  const std::size_t dim = z0.dim(1);
  Tensor state = z0;
  std::size_t node = 0;
  auto node_time = [&](std::size_t k) { return t0 + static_cast<double>(k) * h; };
  std::vector<Tensor> readouts;
  readouts.reserve(spec.query_times.size());
  for (double q : spec.query_times) {
    const double span = q - t0;
    std::size_t target = full_steps(span, h);
    const bool on_node = lands_on_node(span, h, target);
    while (node < target) {
      state = ode_step(f, state, node_time(node), node_time(node + 1) - node_time(node),
                       spec.method, ctx);
      ++node;
    }
    Tensor value = on_node ? state
                           : ode_step(f, state, node_time(node), q - node_time(node), spec.method, ctx);
    readouts.push_back(reshape(value, {batch, 1, dim}));
  }
  return readouts.size() == 1 ? readouts.front() : concat(readouts, 1);
}

ConvergenceResult convergence_order(const Dynamics& f, const Tensor& z0, double t0, double t1,
                                    OdeMethod method, double h,
                                    const std::function<std::vector<double>(double)>& exact) {
  const std::vector<double> truth = exact(t1);
  auto max_error = [&](double step) {
    NoGradGuard no_grad;
    const Tensor z = integrate(f, z0, t0, t1, method, step);
    double err = 0.0;
    const auto d = z.data();
    for (std::size_t i = 0; i < d.size(); ++i) err = std::max(err, std::abs(d[i] - truth[i]));
    return err;
  };
  ConvergenceResult r;
  r.error_h = max_error(h);
  r.error_half = max_error(0.5 * h);
  r.order = (r.error_h == 0.0 && r.error_half == 0.0)
                ? std::numeric_limits<double>::quiet_NaN()
                : std::log2(r.error_h / r.error_half);
  return r;
}

}  // namespace coper
