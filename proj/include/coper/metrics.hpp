#pragma once

#include <span>
#include <vector>

#include "coper/tensor.hpp"

namespace coper {

// Mean binary cross-entropy on raw logits [n, 1] (or [n]):
//   mean_k log(1 + exp(-(2 y_k - 1) * logit_k))
// evaluated in a form that cannot overflow. Labels must be 0 or 1.
Tensor bce_with_logits(const Tensor& logits, std::span<const int> labels);

// Area under the ROC curve as the fraction of (positive, negative) pairs
// ranked correctly, ties counted one half. Throws std::invalid_argument
// unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

}  // namespace coper
