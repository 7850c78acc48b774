#include "coper/optim.hpp"

#include <cmath>

namespace coper {

Adam::Adam(ParameterList params, const AdamOptions& options)
    : params_(std::move(params)), options_(options) {
  if (!(options.learning_rate > 0.0) || !(options.epsilon > 0.0) || options.beta1 < 0.0 ||
      options.beta1 >= 1.0 || options.beta2 < 0.0 || options.beta2 >= 1.0) {
    throw std::invalid_argument("adam: invalid hyperparameters");
  }
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
      throw std::invalid_argument("adam: parameter " + p.name + " is not a trainable leaf");
    }
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in parameter " + p.name + " at step " +
                           std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i].tensor;
    auto values = w.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has = w.has_grad();
    std::span<const double> grad = has ? w.grad() : std::span<const double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? grad[j] : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace coper
