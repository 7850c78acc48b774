#pragma once

#include <cstddef>
#include <vector>

#include "coper/layers.hpp"

namespace coper {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected moment estimates. Moments start at zero.
class Adam {
 public:
  Adam(ParameterList params, const AdamOptions& options = {});

  // Applies one update from the accumulated gradients. A parameter without a
  // gradient is treated as having a zero gradient. Throws NumericError naming
  // the parameter when a gradient is not finite; no parameter is modified
  // in that case.
  void step();
  void zero_grad();

  std::size_t steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace coper
