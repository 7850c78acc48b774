#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coper/tensor.hpp"

namespace coper {

// One patient record on a fixed step grid. Rows with present == 0 keep their
// stored values but carry no observation.
struct Sample {
  std::string id;
  int label = 0;
  std::vector<double> times;          // [steps], hours, nondecreasing
  std::vector<std::uint8_t> present;  // [steps]
  std::vector<double> values;         // [steps * features], row-major
};

// A batch of irregular series: values [n, t, i], per-sample timestamps in
// hours within [0, window_hours] and a step-presence mask [n, t].
struct IrregularSeriesBatch {
  Tensor values;
  std::vector<std::vector<double>> times;
  std::vector<std::uint8_t> present;
  std::vector<int> labels;
  double window_hours = 48.0;

  std::size_t size() const { return values.dim(0); }
  std::size_t steps() const { return values.dim(1); }
  std::size_t features() const { return values.dim(2); }
  bool is_present(std::size_t sample, std::size_t step) const {
    return present[sample * steps() + step] != 0;
  }

  // Throws std::invalid_argument when an invariant is broken: times outside
  // the window or decreasing, a sample with no present step, ragged sizes.
  void validate() const;
};

IrregularSeriesBatch make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                std::size_t steps, std::size_t features, double window_hours);
IrregularSeriesBatch make_batch(std::span<const Sample> samples, std::size_t steps,
                                std::size_t features, double window_hours);

}  // namespace coper
