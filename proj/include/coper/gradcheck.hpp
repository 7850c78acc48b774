#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coper/tensor.hpp"

namespace coper {

// Compares reverse-mode gradients of a scalar loss against central finite
// differences for every element of `inputs` (leaf tensors that require
// grad). Per input the error is ||analytic - numeric|| / max(||analytic||,
// ||numeric||), or the absolute difference when both norms are below 1e-7.
// Returns the largest error over the inputs.
double gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                      double eps = 1e-6);

struct GradcheckCase {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string failure;  // exception text when the case could not run
};

// Primitive ops and layers at tolerance 1e-4; attention, ODE paths and the
// full models at the small sizes n=2, t=6, i=3 with tolerance 1e-3 for the
// end-to-end graphs.
std::vector<GradcheckCase> run_gradient_suite(std::uint64_t seed = 7);

}  // namespace coper
