#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "coper/data.hpp"
#include "coper/models.hpp"

namespace coper {

// Everything needed to reproduce one training run.
struct ExperimentConfig {
  std::string model = "coper";
  double removal_fraction = 0.0;
  std::uint64_t seed = 1;
  double learning_rate = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 64;
  double dropout = 0.5;
  // "synthetic" or a path to a dataset file.
  std::string data = "synthetic";
  // Synthetic generator settings; the dataset is shared by every seed.
  std::size_t synthetic_samples = 1000;
  std::size_t synthetic_features = 76;
  std::size_t synthetic_steps = 48;
  double synthetic_noise = 0.0;
  std::uint64_t data_seed = 0;

  // Throws std::invalid_argument on any out-of-range field.
  void validate() const;
};

// Removal fractions accepted by the experiment protocol.
const std::vector<double>& allowed_removal_fractions();

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_auroc = 0.0;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_auroc = 0.0;
  double test_auroc = 0.0;
  // (reference - test) / reference * 100 against the same model and seed at
  // 0% removal; empty when no such reference exists.
  std::optional<double> drop_percent;
  double wall_seconds = 0.0;
  bool failed = false;
  std::string error;
};

void to_json(nlohmann::json& j, const RunReport& r);

// Patience-based stopping on a metric where larger is better. A value must
// strictly exceed the best so far to count as an improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Records the metric for `epoch` (1-based). Returns true on improvement.
  bool observe(std::size_t epoch, double value);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_value_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_value_ = 0.0;
  std::size_t since_best_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

// Loads or generates the configured dataset (before removal).
DatasetSplit load_dataset(const ExperimentConfig& config);

// Logits for every sample of `samples`, evaluated in inference mode.
std::vector<double> predict(const SequenceClassifier& model, const std::vector<Sample>& samples,
                            std::size_t steps, std::size_t features, double window_hours,
                            std::size_t batch_size);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minibatch Adam on BCE with early stopping on validation AUROC; the best
// validation parameters are restored before the test evaluation. `data` is
// the complete dataset; the configured removal is applied here. Throws
// TrainingError on a non-finite loss or gradient. With `checkpoint` set, the
// restored parameters are saved there (see docs/checkpoint-format.md).
RunReport train(const ExperimentConfig& config, const DatasetSplit& data,
                const EpochCallback& on_epoch = {},
                const std::optional<std::filesystem::path>& checkpoint = {});
RunReport train(const ExperimentConfig& config, const EpochCallback& on_epoch = {},
                const std::optional<std::filesystem::path>& checkpoint = {});

// ---- comparison grid -----------------------------------------------------------

struct GridSpec {
  ExperimentConfig base;
  std::vector<std::string> models;
  std::vector<double> removals;
  std::vector<std::uint64_t> seeds;
};

struct GridCell {
  std::string model;
  double removal_fraction = 0.0;
  std::vector<RunReport> runs;
  std::size_t failures = 0;
  // Over successful runs. sd is the sample standard deviation (0 for one run).
  double mean_auroc = 0.0;
  double sd_auroc = 0.0;
  // Against the same model's 0% cell mean; empty without that reference.
  std::optional<double> drop_percent;

  bool failed() const { return failures > 0; }
};

struct GridResult {
  std::vector<GridCell> cells;  // models outer, removals inner

  bool any_failed() const;
  const GridCell* find(const std::string& model, double removal) const;
  std::string to_csv() const;
  std::string to_text_table() const;
};

using RunCallback = std::function<void(const RunReport&)>;

// Runs every model x removal x seed combination. A failed run is recorded in
// its cell and the grid continues. With `out_dir` set, each run's report
// goes to <out_dir>/runs/<model>-r<pct>-s<seed>/report.json and the tables
// to <out_dir>/table.csv and <out_dir>/table.txt.
GridResult run_grid(const GridSpec& spec, const std::optional<std::filesystem::path>& out_dir = {},
                    const RunCallback& on_run = {});

// Fills drop_percent of each report from the 0% run with the same model and seed.
void assign_run_drops(std::vector<RunReport>& reports);
// Aggregates reports into cells in spec order.
GridResult aggregate(const GridSpec& spec, const std::vector<RunReport>& reports);

void write_report(const std::filesystem::path& path, const RunReport& report);

}  // namespace coper
