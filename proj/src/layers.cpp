#include "coper/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace coper {
namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

Tensor dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!ctx.training || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw std::invalid_argument("dropout in training mode needs an rng");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> factor(x.numel());
  for (double& f : factor) f = unit(*ctx.rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor[i];
  return make_result(x.shape(), std::move(out), {x},
                     [factor = std::move(factor)](BackwardContext& bctx) {
    const auto g = bctx.grad_output();
    auto gx = bctx.parent_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor[i];
  });
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = uniform_param({out, in}, bound, rng);
  bias_ = uniform_param({out}, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != in_features()) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not end in " +
                     std::to_string(in_features()));
  }
  const std::size_t rows = x.numel() / in_features();
  Tensor flat = x.rank() == 2 ? x : reshape(x, {rows, in_features()});
  Tensor y = add(matmul_bt(flat, weight_), bias_);
  if (x.rank() == 2) return y;
  Shape out_shape = x.shape();
  out_shape.back() = out_features();
  return reshape(y, std::move(out_shape));
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "weight", weight_});
  out.push_back({prefix + "bias", bias_});
}

// ---- Mlp -------------------------------------------------------------------

Mlp::Mlp(const std::vector<std::size_t>& dims, double dropout_rate, Rng& rng)
    : dropout_rate_(dropout_rate) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1], rng);
}

Tensor Mlp::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = dropout(tanh(h), dropout_rate_, ctx);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(prefix + "layers." + std::to_string(i) + ".", out);
  }
}

// ---- LSTM ------------------------------------------------------------------

LstmCell::LstmCell(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_size));
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  w_ih_ = uniform_param({4 * hidden_size, input_size}, in_bound, rng);
  w_hh_ = uniform_param({4 * hidden_size, hidden_size}, hidden_bound, rng);
  bias_ = uniform_param({4 * hidden_size}, in_bound, rng);
}

Tensor LstmCell::project_inputs(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != input_size()) {
    throw ShapeError("lstm: input " + shape_str(x.shape()) + " does not match input size " +
                     std::to_string(input_size()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t t = x.dim(1);
  Tensor flat = reshape(x, {b * t, input_size()});
  return reshape(add(matmul_bt(flat, w_ih_), bias_), {b, t, 4 * hidden_size()});
}

LstmState LstmCell::step_projected(const Tensor& x_proj, const LstmState& state) const {
  const std::size_t h = hidden_size();
  Tensor gates = add(x_proj, matmul_bt(state.hidden, w_hh_));
  Tensor in_gate = sigmoid(slice(gates, 1, 0, h));
  Tensor forget_gate = sigmoid(slice(gates, 1, h, 2 * h));
  Tensor candidate = tanh(slice(gates, 1, 2 * h, 3 * h));
  Tensor out_gate = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  Tensor cell = add(mul(forget_gate, state.cell), mul(in_gate, candidate));
  Tensor hidden = mul(out_gate, tanh(cell));
  return {hidden, cell};
}

LstmState LstmCell::step(const Tensor& x, const LstmState& state) const {
  if (x.rank() != 2 || x.dim(1) != input_size()) {
    throw ShapeError("lstm: step input " + shape_str(x.shape()) + " does not match input size " +
                     std::to_string(input_size()));
  }
  return step_projected(add(matmul_bt(x, w_ih_), bias_), state);
}

void LstmCell::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "w_ih", w_ih_});
  out.push_back({prefix + "w_hh", w_hh_});
  out.push_back({prefix + "bias", bias_});
}

LstmStack::LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t num_layers,
                     double dropout_rate, Rng& rng)
    : dropout_rate_(dropout_rate) {
  if (num_layers == 0) throw std::invalid_argument("lstm needs at least one layer");
  for (std::size_t l = 0; l < num_layers; ++l) {
    cells_.emplace_back(l == 0 ? input_size : hidden_size, hidden_size, rng);
  }
}

Tensor LstmStack::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 3) throw ShapeError("lstm: expected [batch, t, in], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0);
  const std::size_t t = x.dim(1);
  const std::size_t h = hidden_size();
  Tensor seq = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    if (l > 0) seq = dropout(seq, dropout_rate_, ctx);
    Tensor proj = cells_[l].project_inputs(seq);
    LstmState state{Tensor::zeros({b, h}), Tensor::zeros({b, h})};
    std::vector<Tensor> outputs;
    outputs.reserve(t);
    for (std::size_t k = 0; k < t; ++k) {
      Tensor xk = reshape(slice(proj, 1, k, k + 1), {b, 4 * h});
      state = cells_[l].step_projected(xk, state);
      outputs.push_back(reshape(state.hidden, {b, 1, h}));
    }
    seq = concat(outputs, 1);
  }
  return seq;
}

void LstmStack::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    cells_[l].collect(prefix + "layers." + std::to_string(l) + ".", out);
  }
}

}  // namespace coper
