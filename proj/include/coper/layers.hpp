#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "coper/tensor.hpp"

namespace coper {

using Rng = std::mt19937_64;

// Mode flags threaded through every forward pass. Dropout needs an RNG in
// training mode; inference never touches it.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate). Identity outside training or when rate == 0.
Tensor dropout(const Tensor& x, double rate, const ForwardContext& ctx);

// y = x W^T + b over the trailing axis.
class Linear {
 public:
  Linear() = default;
  // Weights and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_;  // [out, in]
  Tensor bias_;    // [out]
};

// Linear stack with tanh between layers and optional dropout after each
// hidden activation.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& dims, double dropout_rate, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<Linear>& layers() { return layers_; }
  std::size_t in_features() const { return layers_.front().in_features(); }
  std::size_t out_features() const { return layers_.back().out_features(); }
  double dropout_rate() const { return dropout_rate_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::vector<Linear> layers_;
  double dropout_rate_ = 0.0;
};

struct LstmState {
  Tensor hidden;  // [batch, hidden_size]
  Tensor cell;    // [batch, hidden_size]
};

// Gate rows are stacked in the fixed order input, forget, cell, output.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input_size, std::size_t hidden_size, Rng& rng);

  // One step: x [batch, input_size].
  LstmState step(const Tensor& x, const LstmState& state) const;
  // Same step with the input projection x W_ih^T + b already applied.
  LstmState step_projected(const Tensor& x_proj, const LstmState& state) const;
  // x [batch, t, input] -> x W_ih^T + b, [batch, t, 4 * hidden].
  Tensor project_inputs(const Tensor& x) const;

  std::size_t input_size() const { return w_ih_.dim(1); }
  std::size_t hidden_size() const { return w_hh_.dim(1); }
  Tensor& w_ih() { return w_ih_; }
  Tensor& w_hh() { return w_hh_; }
  Tensor& bias() { return bias_; }
  const Tensor& w_ih() const { return w_ih_; }
  const Tensor& w_hh() const { return w_hh_; }
  const Tensor& bias() const { return bias_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor w_ih_;  // [4H, in]
  Tensor w_hh_;  // [4H, H]
  Tensor bias_;  // [4H]
};

class LstmStack {
 public:
  LstmStack() = default;
  // Dropout is applied to the outputs of every layer except the last.
  LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t num_layers,
            double dropout_rate, Rng& rng);

  // x [batch, t, input] -> top-layer hidden sequence [batch, t, hidden].
  // States start at zero.
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  std::size_t hidden_size() const { return cells_.front().hidden_size(); }
  std::size_t num_layers() const { return cells_.size(); }
  std::vector<LstmCell>& cells() { return cells_; }
  const std::vector<LstmCell>& cells() const { return cells_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::vector<LstmCell> cells_;
  double dropout_rate_ = 0.0;
};

}  // namespace coper
