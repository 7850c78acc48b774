#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coper/series.hpp"

namespace coper {

struct DatasetSplit {
  std::size_t features = 0;
  std::size_t steps = 0;
  double window_hours = 0.0;
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;

  std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

// Fraction of label-1 samples in a split.
double prevalence(const std::vector<Sample>& samples);

// ---- synthetic generation ----------------------------------------------------

struct SyntheticOptions {
  std::size_t samples = 1000;
  std::size_t steps = 48;
  std::size_t features = 76;
  std::uint64_t seed = 0;
  // Discriminative features (even indices) sit at +class_offset for label 1
  // and -class_offset for label 0.
  double class_offset = 1.0;
  // Per-sample, per-feature level shift drawn from U(-level_jitter, level_jitter).
  double level_jitter = 0.5;
  // Std-dev of i.i.d. Gaussian observation noise.
  double noise = 0.0;
};

// Two classes of smooth trajectories: per feature a sinusoid with an integer
// number of cycles over the window plus a level. Discriminative features
// carry a class-dependent level and phase. Balanced labels, stratified
// 70/15/15 split, every step present. A pure function of the options.
DatasetSplit generate_synthetic(const SyntheticOptions& options);

// ---- chunk removal -------------------------------------------------------------

struct Chunk {
  std::size_t begin = 0;  // first removed step
  std::size_t end = 0;    // one past the last removed step
  std::size_t length() const { return end - begin; }
};

// Three contiguous chunks: starting right after the first step, centred on
// steps/2, and ending at the final step. round(fraction * steps) steps are
// removed in total, split as evenly as possible with the remainder going to
// the earlier chunks.
struct RemovalPlan {
  double fraction = 0.0;
  std::size_t steps = 0;
  std::vector<Chunk> chunks;

  std::size_t removed() const;
  bool removes(std::size_t step) const;
};

RemovalPlan make_removal_plan(double fraction, std::size_t steps);

// Clears the presence flag of every planned step; stored values are kept.
// Throws if a sample is not fully regular.
void apply_removal(std::vector<Sample>& samples, const RemovalPlan& plan);
IrregularSeriesBatch apply_removal(const IrregularSeriesBatch& batch, const RemovalPlan& plan);
DatasetSplit apply_removal(const DatasetSplit& data, const RemovalPlan& plan);

// ---- carry-forward imputation -------------------------------------------------

// [n, t, i] with every absent step replaced by the latest present step.
// Throws std::invalid_argument when step 0 is absent.
Tensor carry_forward(const IrregularSeriesBatch& batch);

// ---- external files --------------------------------------------------------------

class DataFormatError : public std::runtime_error {
 public:
  DataFormatError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadOptions {
  // When set, the file's declared feature count must match.
  std::optional<std::size_t> expected_features;
  // Seed for the stratified 70/15/15 split used when records carry no split tag.
  std::uint64_t split_seed = 0;
};

// Line-oriented text format (see docs/data-format.md):
//
//   coper-its 1
//   features <i>
//   steps <t>
//   window <hours>                       (optional, defaults to <t>)
//   sample <id> <label> [train|validation|test]
//   <hour>,<present>,<v1>,...,<vi>       (exactly <t> rows per sample)
//
// Blank lines and lines starting with '#' are ignored. Absent rows may omit
// their values, which are then stored as zeros.
DatasetSplit load_external(std::istream& in, const LoadOptions& options = {});
DatasetSplit load_external(const std::filesystem::path& path, const LoadOptions& options = {});
void save_external(std::ostream& out, const DatasetSplit& data);
void save_external(const std::filesystem::path& path, const DatasetSplit& data);

}  // namespace coper
