#pragma once

// Fixed-step differentiable ODE integration. Every solver step is built from
// tensor operations, so gradients flow through the whole trajectory
// (discretize-then-optimize).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "coper/layers.hpp"
#include "coper/tensor.hpp"

namespace coper {

enum class OdeMethod { euler, rk4 };

// dz/dt = f(z, t) for a batch of states z [batch, dim].
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Tensor evaluate(const Tensor& z, double t, const ForwardContext& ctx) const = 0;
};

// Learned dynamics: an MLP over the state concatenated with the scalar time,
// [state_dim + 1] -> [state_dim].
class OdeDynamics final : public Dynamics {
 public:
  OdeDynamics() = default;
  OdeDynamics(std::size_t state_dim, std::size_t hidden, std::size_t hidden_layers,
              double dropout_rate, Rng& rng);

  Tensor evaluate(const Tensor& z, double t, const ForwardContext& ctx) const override;

  std::size_t state_dim() const { return state_dim_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  // Zeroes the output layer so the vector field is identically 0.
  void zero_output();

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t state_dim_ = 0;
  Mlp net_;
};

// Adapter for closed-form vector fields (tests, convergence studies).
class FunctionDynamics final : public Dynamics {
 public:
  using Fn = std::function<Tensor(const Tensor& z, double t)>;
  explicit FunctionDynamics(Fn fn) : fn_(std::move(fn)) {}
  Tensor evaluate(const Tensor& z, double t, const ForwardContext&) const override {
    return fn_(z, t);
  }

 private:
  Fn fn_;
};

// Freezes selected batch rows: their derivative is exactly zero.
class RowMaskedDynamics final : public Dynamics {
 public:
  RowMaskedDynamics(const Dynamics& inner, std::vector<std::uint8_t> active)
      : inner_(inner), active_(std::move(active)) {}
  Tensor evaluate(const Tensor& z, double t, const ForwardContext& ctx) const override;

 private:
  const Dynamics& inner_;
  std::vector<std::uint8_t> active_;
};

struct SolveSpec {
  OdeMethod method = OdeMethod::rk4;
  double step_size = 0.0;
  std::vector<double> query_times;
};

// One explicit step of size h from (z, t).
Tensor ode_step(const Dynamics& f, const Tensor& z, double t, double h, OdeMethod method,
                const ForwardContext& ctx = {});

// Advances z from t_from to t_to (either direction) with steps of magnitude h
// anchored at t_from; the final step is shortened to land exactly on t_to.
Tensor integrate(const Dynamics& f, const Tensor& z, double t_from, double t_to, OdeMethod method,
                 double h, const ForwardContext& ctx = {});

// Reads the trajectory from (t0, z0) out at each query time -> [batch, Q, dim].
// The trajectory advances on the nodes t0 + k*h; a query between nodes is
// served by a separate partial step from the preceding node, so readouts
// never perturb the trajectory.
Tensor ode_solve(const Dynamics& f, const Tensor& z0, double t0, const SolveSpec& spec,
                 const ForwardContext& ctx = {});

// Empirical order log2(e_h / e_{h/2}) at time t1 against a known solution.
// Returns NaN when both errors are exactly zero (order undefined).
struct ConvergenceResult {
  double error_h = 0.0;
  double error_half = 0.0;
  double order = 0.0;
};
ConvergenceResult convergence_order(const Dynamics& f, const Tensor& z0, double t0, double t1,
                                    OdeMethod method, double h,
                                    const std::function<std::vector<double>(double)>& exact);

}  // namespace coper
