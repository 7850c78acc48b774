#include "coper/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "coper/checkpoint.hpp"
#include "coper/metrics.hpp"
#include "coper/optim.hpp"

namespace coper {

using nlohmann::json;

// ---- config ---------------------------------------------------------------------

const std::vector<double>& allowed_removal_fractions() {
  static const std::vector<double> fractions{0.0, 0.25, 0.5, 0.75};
  return fractions;
}

void ExperimentConfig::validate() const {
  parse_model_kind(model);
  const auto& allowed = allowed_removal_fractions();
  if (std::find(allowed.begin(), allowed.end(), removal_fraction) == allowed.end()) {
    throw std::invalid_argument("removal fraction " + std::to_string(removal_fraction) +
                                " is not one of 0, 0.25, 0.5, 0.75");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (data.empty()) throw std::invalid_argument("data source is empty");
  if (data == "synthetic") {
    if (synthetic_samples < 10 || synthetic_features < 2 || synthetic_steps < 3) {
      throw std::invalid_argument("synthetic data needs >= 10 samples, >= 2 features, >= 3 steps");
    }
    if (!(synthetic_noise >= 0.0)) throw std::invalid_argument("synthetic noise must be >= 0");
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"model", c.model},
           {"removal_fraction", c.removal_fraction},
           {"seed", c.seed},
           {"learning_rate", c.learning_rate},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"batch_size", c.batch_size},
           {"dropout", c.dropout},
           {"data", c.data},
           {"synthetic_samples", c.synthetic_samples},
           {"synthetic_features", c.synthetic_features},
           {"synthetic_steps", c.synthetic_steps},
           {"synthetic_noise", c.synthetic_noise},
           {"data_seed", c.data_seed}};
}

void from_json(const json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{
      "model",      "removal_fraction", "seed", "learning_rate",    "max_epochs",
      "patience",   "batch_size",       "dropout", "data",          "synthetic_samples",
      "synthetic_features", "synthetic_steps", "synthetic_noise", "data_seed"};
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("model", c.model);
  read("removal_fraction", c.removal_fraction);
  read("seed", c.seed);
  read("learning_rate", c.learning_rate);
  read("max_epochs", c.max_epochs);
  read("patience", c.patience);
  read("batch_size", c.batch_size);
  read("dropout", c.dropout);
  read("data", c.data);
  read("synthetic_samples", c.synthetic_samples);
  read("synthetic_features", c.synthetic_features);
  read("synthetic_steps", c.synthetic_steps);
  read("synthetic_noise", c.synthetic_noise);
  read("data_seed", c.data_seed);
}

void to_json(json& j, const RunReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_auroc", e.validation_auroc}});
  }
  j = json{{"config", r.config},
           {"status", r.failed ? "failed" : "ok"},
           {"epochs", epochs},
           {"best_epoch", r.best_epoch},
           {"best_validation_auroc", r.best_validation_auroc},
           {"test_auroc", r.test_auroc},
           {"drop_percent", r.drop_percent ? json(*r.drop_percent) : json(nullptr)},
           {"wall_seconds", r.wall_seconds}};
  if (r.failed) j["error"] = r.error;
}

void write_report(const std::filesystem::path& path, const RunReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json(report).dump(2) << '\n';
}

// ---- early stopping ------------------------------------------------------------------

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw std::invalid_argument("patience must be positive");
}

bool EarlyStopping::observe(std::size_t epoch, double value) {
  if (best_epoch_ == 0 || value > best_value_) {
    best_epoch_ = epoch;
    best_value_ = value;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

// ---- training -------------------------------------------------------------------------

DatasetSplit load_dataset(const ExperimentConfig& config) {
  if (config.data == "synthetic") {
    SyntheticOptions o;
    o.samples = config.synthetic_samples;
    o.features = config.synthetic_features;
    o.steps = config.synthetic_steps;
    o.noise = config.synthetic_noise;
    o.seed = config.data_seed;
    return generate_synthetic(o);
  }
  LoadOptions o;
  o.split_seed = config.data_seed;
  return load_external(std::filesystem::path(config.data), o);
}

std::vector<double> predict(const SequenceClassifier& model, const std::vector<Sample>& samples,
                            std::size_t steps, std::size_t features, double window_hours,
                            std::size_t batch_size) {
  NoGradGuard no_grad;
  const ForwardContext ctx{false, nullptr};
  std::vector<double> scores;
  scores.reserve(samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    const IrregularSeriesBatch batch =
        make_batch(samples, std::span(order).subspan(begin, end - begin), steps, features,
                   window_hours);
    const Tensor logits = model.forward(batch, ctx);
    for (double v : logits.data()) scores.push_back(v);
  }
  return scores;
}

namespace {

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

double checked_auroc(const std::vector<double>& scores, const std::vector<int>& labels,
                     std::size_t epoch, const char* split) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw TrainingError(epoch, std::string("non-finite ") + split + " logit");
  }
  return auroc(scores, labels);
}

}  // namespace

RunReport train(const ExperimentConfig& config, const DatasetSplit& data,
                const EpochCallback& on_epoch,
                const std::optional<std::filesystem::path>& checkpoint) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  RunReport report;
  report.config = config;

  const DatasetSplit split =
      config.removal_fraction > 0.0
          ? apply_removal(data, make_removal_plan(config.removal_fraction, data.steps))
          : data;
  if (split.train.empty() || split.validation.empty() || split.test.empty()) {
    throw std::invalid_argument("dataset needs non-empty train, validation and test splits");
  }

  Rng rng(config.seed);
  const ModelDims dims{split.features, split.steps, config.dropout};
  const auto model = make_model(parse_model_kind(config.model), dims, rng);
  ParameterList params = model->parameters();
  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  Adam optimizer(params, adam_options);
  EarlyStopping stopping(config.patience);
  std::vector<std::vector<double>> best = snapshot_values(params);

  const std::vector<int> validation_labels = labels_of(split.validation);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const IrregularSeriesBatch batch =
          make_batch(split.train, std::span(order).subspan(begin, end - begin), split.steps,
                     split.features, split.window_hours);
      optimizer.zero_grad();
      const ForwardContext ctx{true, &rng};
      const Tensor loss = bce_with_logits(model->forward(batch, ctx), batch.labels);
      const double value = loss.item();
      if (!std::isfinite(value)) throw TrainingError(epoch, "training loss is not finite");
      loss.backward();
      try {
        optimizer.step();
      } catch (const NumericError& e) {
        throw TrainingError(epoch, e.what());
      }
      loss_sum += value * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.validation_auroc =
        checked_auroc(predict(*model, split.validation, split.steps, split.features,
                              split.window_hours, config.batch_size),
                      validation_labels, epoch, "validation");
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stopping.observe(epoch, record.validation_auroc)) best = snapshot_values(params);
    if (stopping.should_stop()) break;
  }

  restore_values(params, best);
  if (checkpoint) save_parameters(*checkpoint, params);
  report.best_epoch = stopping.best_epoch();
  report.best_validation_auroc = stopping.best_value();
  report.test_auroc = checked_auroc(predict(*model, split.test, split.steps, split.features,
                                            split.window_hours, config.batch_size),
                                    labels_of(split.test), report.epochs.size(), "test");
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

RunReport train(const ExperimentConfig& config, const EpochCallback& on_epoch,
                const std::optional<std::filesystem::path>& checkpoint) {
  config.validate();
  return train(config, load_dataset(config), on_epoch, checkpoint);
}

// ---- grid ---------------------------------------------------------------------------------

namespace {

std::string percent_label(double fraction) {
  return std::to_string(static_cast<int>(std::lround(fraction * 100.0)));
}

std::string run_dir_name(const ExperimentConfig& c) {
  return c.model + "-r" + percent_label(c.removal_fraction) + "-s" + std::to_string(c.seed);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

void assign_run_drops(std::vector<RunReport>& reports) {
  for (auto& r : reports) {
    r.drop_percent.reset();
    if (r.failed) continue;
    for (const auto& ref : reports) {
      if (!ref.failed && ref.config.removal_fraction == 0.0 && ref.config.model == r.config.model &&
          ref.config.seed == r.config.seed && ref.test_auroc > 0.0) {
        r.drop_percent = (ref.test_auroc - r.test_auroc) / ref.test_auroc * 100.0;
        break;
      }
    }
  }
}

GridResult aggregate(const GridSpec& spec, const std::vector<RunReport>& reports) {
  GridResult result;
  for (const auto& model : spec.models) {
    for (double removal : spec.removals) {
      GridCell cell;
      cell.model = model;
      cell.removal_fraction = removal;
      std::vector<double> values;
      for (const auto& r : reports) {
        if (r.config.model != model || r.config.removal_fraction != removal) continue;
        cell.runs.push_back(r);
        if (r.failed) {
          ++cell.failures;
        } else {
          values.push_back(r.test_auroc);
        }
      }
      if (!values.empty()) {
        double total = 0.0;
        for (double v : values) total += v;
        cell.mean_auroc = total / static_cast<double>(values.size());
        if (values.size() > 1) {
          double ss = 0.0;
          for (double v : values) ss += (v - cell.mean_auroc) * (v - cell.mean_auroc);
          cell.sd_auroc = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
      }
      result.cells.push_back(std::move(cell));
    }
  }
  for (auto& cell : result.cells) {
    if (cell.failed() || cell.runs.empty()) continue;
    const GridCell* ref = result.find(cell.model, 0.0);
    if (ref == nullptr || ref->failed() || ref->runs.empty() || !(ref->mean_auroc > 0.0)) continue;
    cell.drop_percent = (ref->mean_auroc - cell.mean_auroc) / ref->mean_auroc * 100.0;
  }
  return result;
}

bool GridResult::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const GridCell& c) { return c.failed(); });
}

const GridCell* GridResult::find(const std::string& model, double removal) const {
  for (const auto& c : cells) {
    if (c.model == model && c.removal_fraction == removal) return &c;
  }
  return nullptr;
}

std::string GridResult::to_csv() const {
  std::ostringstream out;
  out << "model,removal_percent,mean_auroc,sd_auroc,drop_percent,runs,failed_runs,status\n";
  out << std::setprecision(17);
  for (const auto& c : cells) {
    out << c.model << ',' << percent_label(c.removal_fraction) << ',';
    const bool has_value = c.runs.size() > c.failures;
    if (has_value) out << c.mean_auroc;
    out << ',';
    if (has_value) out << c.sd_auroc;
    out << ',';
    if (c.drop_percent) out << *c.drop_percent;
    out << ',' << c.runs.size() << ',' << c.failures << ',' << (c.failed() ? "failed" : "ok")
        << '\n';
  }
  return out.str();
}

std::string GridResult::to_text_table() const {
  std::vector<std::string> models;
  std::vector<double> removals;
  for (const auto& c : cells) {
    if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
    if (std::find(removals.begin(), removals.end(), c.removal_fraction) == removals.end()) {
      removals.push_back(c.removal_fraction);
    }
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"model", "metric"};
  for (double r : removals) header.push_back(percent_label(r) + "% removed");
  rows.push_back(header);
  for (const auto& m : models) {
    std::vector<std::string> auc{m, "AUROC mean +- sd"};
    std::vector<std::string> drop{"", "drop %"};
    for (double r : removals) {
      const GridCell* c = find(m, r);
      if (c == nullptr) {
        auc.push_back("-");
        drop.push_back("-");
        continue;
      }
      std::string cell = c->runs.size() > c->failures
                             ? fixed(c->mean_auroc, 4) + " +- " + fixed(c->sd_auroc, 4)
                             : std::string("n/a");
      if (c->failed()) cell += " (" + std::to_string(c->failures) + " failed)";
      auc.push_back(cell);
      drop.push_back(c->drop_percent ? fixed(*c->drop_percent, 2) : "-");
    }
    rows.push_back(auc);
    rows.push_back(drop);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      if (k > 0) out << "  ";
      out << std::left << std::setw(static_cast<int>(width[k])) << rows[i][k];
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

GridResult run_grid(const GridSpec& spec, const std::optional<std::filesystem::path>& out_dir,
                    const RunCallback& on_run) {
  if (spec.models.empty() || spec.removals.empty() || spec.seeds.empty()) {
    throw std::invalid_argument("grid needs at least one model, removal fraction and seed");
  }
  for (const auto& m : spec.models) {
    ExperimentConfig c = spec.base;
    c.model = m;
    for (double r : spec.removals) {
      c.removal_fraction = r;
      c.validate();
    }
  }
  const DatasetSplit data = load_dataset(spec.base);

  std::vector<RunReport> reports;
  for (const auto& model : spec.models) {
    for (double removal : spec.removals) {
      for (std::uint64_t seed : spec.seeds) {
        ExperimentConfig c = spec.base;
        c.model = model;
        c.removal_fraction = removal;
        c.seed = seed;
        RunReport report;
        try {
          report = train(c, data);
        } catch (const std::exception& e) {
          report = RunReport{};
          report.config = c;
          report.failed = true;
          report.error = e.what();
        }
        if (on_run) on_run(report);
        reports.push_back(std::move(report));
      }
    }
  }
  assign_run_drops(reports);
  GridResult result = aggregate(spec, reports);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    for (const auto& r : reports) {
      write_report(*out_dir / "runs" / run_dir_name(r.config) / "report.json", r);
    }
    std::ofstream csv(*out_dir / "table.csv");
    csv << result.to_csv();
    std::ofstream txt(*out_dir / "table.txt");
    txt << result.to_text_table();
    if (!csv || !txt) throw std::runtime_error("cannot write grid tables to " + out_dir->string());
  }
  return result;
}

}  // namespace coper
