// Command-line driver: train one configuration, run the comparison grid, or
// run the gradient-check suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "coper/experiment.hpp"
#include "coper/gradcheck.hpp"
#include "coper/simd/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void add_common_options(CLI::App& cmd, coper::ExperimentConfig& c) {
  cmd.add_option("--seed", c.seed, "Seed for initialisation, shuffling and dropout");
  cmd.add_option("--data", c.data, "'synthetic' or a dataset file")->capture_default_str();
  cmd.add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  cmd.add_option("--patience", c.patience, "Early-stopping patience in epochs")
      ->capture_default_str();
  cmd.add_option("--batch-size", c.batch_size)->capture_default_str();
  cmd.add_option("--max-epochs", c.max_epochs)->capture_default_str();
  cmd.add_option("--dropout", c.dropout)->capture_default_str();
  cmd.add_option("--samples", c.synthetic_samples, "Synthetic dataset size")
      ->capture_default_str();
  cmd.add_option("--features", c.synthetic_features, "Synthetic feature count")
      ->capture_default_str();
  cmd.add_option("--steps", c.synthetic_steps, "Synthetic steps per sample")
      ->capture_default_str();
  cmd.add_option("--noise", c.synthetic_noise, "Synthetic observation noise sd")
      ->capture_default_str();
  cmd.add_option("--data-seed", c.data_seed, "Seed for synthetic generation or file splits")
      ->capture_default_str();
}

std::string command_line(int argc, char** argv) {
  std::ostringstream s;
  for (int i = 0; i < argc; ++i) s << (i ? " " : "") << argv[i];
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_config_echo(const fs::path& dir, const json& config, const std::string& command) {
  fs::create_directories(dir);
  json echo{{"command", command}, {"kernels", coper::simd::isa_name(coper::simd::active_isa())},
            {"config", config}};
  write_text(dir / "config.json", echo.dump(2) + "\n");
}

int run_train(const coper::ExperimentConfig& config, const std::string& out, bool quiet,
              const std::string& command) {
  config.validate();
  const fs::path dir(out);
  write_config_echo(dir, json(config), command);
  coper::RunReport report;
  try {
    report = coper::train(config, [&](const coper::EpochRecord& e) {
      if (!quiet) {
        std::printf("epoch %3zu  loss %.5f  val_auroc %.4f\n", e.epoch, e.train_loss,
                    e.validation_auroc);
        std::fflush(stdout);
      }
    }, dir / "model.params");
  } catch (const std::exception& e) {
    report.config = config;
    report.failed = true;
    report.error = e.what();
  }
  coper::write_report(dir / "report.json", report);
  if (report.failed) {
    std::fprintf(stderr, "run failed: %s\n", report.error.c_str());
    return 1;
  }
  std::printf("best epoch %zu  val_auroc %.4f  test_auroc %.4f  (%.1fs)\n", report.best_epoch,
              report.best_validation_auroc, report.test_auroc, report.wall_seconds);
  return 0;
}

int run_grid(const coper::GridSpec& spec, const std::string& out, bool quiet,
             const std::string& command) {
  const fs::path dir(out);
  json models = spec.models;
  json echo_config = json(spec.base);
  echo_config.erase("model");
  echo_config.erase("removal_fraction");
  echo_config.erase("seed");
  echo_config["models"] = models;
  echo_config["removals"] = spec.removals;
  echo_config["seeds"] = spec.seeds;
  write_config_echo(dir, echo_config, command);
  const auto result = coper::run_grid(spec, dir, [&](const coper::RunReport& r) {
    if (quiet) return;
    if (r.failed) {
      std::printf("%-9s removal %.2f seed %llu  FAILED: %s\n", r.config.model.c_str(),
                  r.config.removal_fraction, static_cast<unsigned long long>(r.config.seed),
                  r.error.c_str());
    } else {
      std::printf("%-9s removal %.2f seed %llu  test_auroc %.4f  epochs %zu  (%.1fs)\n",
                  r.config.model.c_str(), r.config.removal_fraction,
                  static_cast<unsigned long long>(r.config.seed), r.test_auroc, r.epochs.size(),
                  r.wall_seconds);
    }
    std::fflush(stdout);
  });
  std::printf("\n%s", result.to_text_table().c_str());
  return result.any_failed() ? 1 : 0;
}

int run_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : coper::run_gradient_suite(seed)) {
    ok = ok && c.passed;
    if (c.failure.empty()) {
      std::printf("%-4s %-40s err %.3e  tol %.0e\n", c.passed ? "ok" : "FAIL", c.name.c_str(),
                  c.error, c.tolerance);
    } else {
      std::printf("FAIL %-40s %s\n", c.name.c_str(), c.failure.c_str());
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time sequence classifiers on irregular series"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print the final summary");

  coper::ExperimentConfig train_config;
  std::string train_out = "run";
  auto* train = app.add_subcommand("train", "Train and evaluate one configuration");
  train->add_option("--model", train_config.model, "coper, lstm or perceiver")
      ->capture_default_str();
  train->add_option("--removal", train_config.removal_fraction, "0, 0.25, 0.5 or 0.75")
      ->capture_default_str();
  add_common_options(*train, train_config);
  train->add_option("--out", train_out, "Output directory")->capture_default_str();
  std::string config_file;
  train->add_option("--config", config_file, "JSON config; command-line flags are ignored");

  coper::GridSpec grid_spec;
  grid_spec.models = {"coper", "lstm", "perceiver"};
  grid_spec.removals = coper::allowed_removal_fractions();
  grid_spec.seeds = {1, 2, 3};
  std::string grid_out = "grid";
  auto* grid = app.add_subcommand("grid", "Run models x removal fractions x seeds");
  grid->add_option("--models", grid_spec.models)->delimiter(',')->capture_default_str();
  grid->add_option("--removals", grid_spec.removals)->delimiter(',')->capture_default_str();
  grid->add_option("--seeds", grid_spec.seeds)->delimiter(',')->capture_default_str();
  add_common_options(*grid, grid_spec.base);
  grid->add_option("--out", grid_out, "Output directory")->capture_default_str();

  std::uint64_t gradcheck_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", gradcheck_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  const std::string command = command_line(argc, argv);
  try {
    if (*train) {
      if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw std::runtime_error("cannot read " + config_file);
        train_config = json::parse(in).get<coper::ExperimentConfig>();
      }
      return run_train(train_config, train_out, quiet, command);
    }
    if (*grid) return run_grid(grid_spec, grid_out, quiet, command);
    if (*gradcheck) return run_gradcheck(gradcheck_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
