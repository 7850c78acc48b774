#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "coper/checkpoint.hpp"
#include "coper/experiment.hpp"
#include "coper/gradcheck.hpp"
#include "coper/metrics.hpp"
#include "coper/optim.hpp"

using namespace coper;

namespace {

double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  return wins / pairs;
}

ExperimentConfig tiny_config(const std::string& model) {
  ExperimentConfig c;
  c.model = model;
  c.synthetic_samples = 40;
  c.synthetic_features = 3;
  c.synthetic_steps = 6;
  c.max_epochs = 3;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor w = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  Adam opt({{"w", w}});
  sum(scale(w, 0.0)).backward();
  opt.step();
  EXPECT_EQ(w.to_vector(), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, MatchesHandRolledRecurrences) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor w = Tensor::from({1}, {0.7}, true);
  Adam opt({{"w", w}}, {lr, b1, b2, eps});
  double x = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    opt.zero_grad();
    // loss = x^3 so the gradient changes every step.
    sum(mul(mul(w, w), w)).backward();
    opt.step();
    const double g = 3.0 * x * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    EXPECT_NEAR(w.data()[0], x, 1e-15) << "step " << t;
  }
  // First step moves by lr * g / (|g| + eps').
  Tensor u = Tensor::from({1}, {1.0}, true);
  Adam first({{"u", u}}, {lr, b1, b2, eps});
  sum(scale(u, 4.0)).backward();
  first.step();
  EXPECT_NEAR(u.data()[0], 1.0 - lr * 4.0 / (4.0 + eps), 1e-15);
}

TEST(Adam, QuadraticBowlLossDecreases) {
  Tensor w = Tensor::from({1}, {3.0}, true);
  Adam opt({{"w", w}}, {0.01, 0.9, 0.999, 1e-8});
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 100; ++step) {
    opt.zero_grad();
    Tensor loss = sum(mul(add_scalar(w, -1.0), add_scalar(w, -1.0)));
    EXPECT_LT(loss.item(), previous) << "step " << step;
    previous = loss.item();
    loss.backward();
    opt.step();
  }
  EXPECT_LT(previous, 2.0);
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdating) {
  Tensor a = Tensor::from({1}, {1.0}, true), b = Tensor::from({1}, {0.0}, true);
  Adam opt({{"a", a}, {"bad", b}});
  sum(add(a, mul(b, Tensor::from({1}, {std::nan("")})))).backward();
  try {
    opt.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.0);
  EXPECT_EQ(opt.steps_taken(), 0u);
}

TEST(Bce, Values) {
  const std::vector<int> one{1}, zero{0};
  EXPECT_NEAR(bce_with_logits(Tensor::from({1, 1}, {0.0}), one).item(), std::log(2.0), 1e-15);
  const double pos = bce_with_logits(Tensor::from({1, 1}, {50.0}), one).item();
  EXPECT_TRUE(std::isfinite(pos));
  EXPECT_NEAR(pos, 0.0, 1e-20);
  EXPECT_NEAR(bce_with_logits(Tensor::from({1, 1}, {-50.0}), one).item(), 50.0, 1e-12);
  EXPECT_NEAR(bce_with_logits(Tensor::from({1, 1}, {50.0}), zero).item(), 50.0, 1e-12);
  EXPECT_THROW(bce_with_logits(Tensor::from({1, 1}, {0.0}), std::vector<int>{2}),
               std::invalid_argument);
  EXPECT_THROW(bce_with_logits(Tensor::from({2, 1}, {0.0, 0.0}), one), ShapeError);
}

TEST(Bce, GradientIsSigmoidMinusLabel) {
  Tensor x = Tensor::from({4, 1}, {-3.0, 0.2, 1.5, 50.0}, true);
  const std::vector<int> y{0, 1, 0, 1};
  bce_with_logits(x, y).backward();
  for (std::size_t k = 0; k < 4; ++k) {
    const double s = 1.0 / (1.0 + std::exp(-x.data()[k]));
    EXPECT_NEAR(x.grad()[k], (s - y[k]) / 4.0, 1e-15);
  }
  EXPECT_LT(gradient_error([&] { return bce_with_logits(x, y); }, {x}), 1e-6);
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1}), 0.5);
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
               std::invalid_argument);
  EXPECT_THROW(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST(Auroc, MatchesPairCountingExactly) {
  Rng rng(3);
  std::uniform_int_distribution<int> size(2, 50), level(0, 6);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) * 0.25;  // coarse levels force ties
      y[i] = coin(rng) ? 1 : 0;
    }
    y[0] = 0;
    y[1] = 1;
    ASSERT_EQ(auroc(s, y), brute_auroc(s, y)) << "trial " << trial;
  }
}

TEST(EarlyStopping, MonotoneImprovementRunsToEnd) {
  EarlyStopping stop(10);
  for (std::size_t e = 1; e <= 100; ++e) {
    EXPECT_TRUE(stop.observe(e, 0.5 + e * 1e-3));
    EXPECT_FALSE(stop.should_stop());
  }
  EXPECT_EQ(stop.best_epoch(), 100u);
}

TEST(EarlyStopping, FrozenMetricStopsAtEpochEleven) {
  EarlyStopping stop(10);
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= 100 && stopped == 0; ++e) {
    stop.observe(e, 0.7);
    if (stop.should_stop()) stopped = e;
  }
  EXPECT_EQ(stopped, 11u);
  EXPECT_EQ(stop.best_epoch(), 1u);
  EXPECT_THROW(EarlyStopping(0), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndValidation) {
  ExperimentConfig c = tiny_config("lstm");
  c.removal_fraction = 0.5;
  c.seed = 42;
  const nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW(nlohmann::json::parse(R"({"modle": "lstm"})").get<ExperimentConfig>(),
               std::invalid_argument);
  ExperimentConfig bad = c;
  bad.removal_fraction = 0.3;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.model = "gru";
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Train, ReportIsConsistentAndDeterministic) {
  for (const std::string model : {"coper", "lstm", "perceiver"}) {
    ExperimentConfig c = tiny_config(model);
    c.removal_fraction = 0.25;
    const RunReport a = train(c);
    const RunReport b = train(c);
    ASSERT_FALSE(a.epochs.empty());
    double best = -1.0;
    for (const auto& e : a.epochs) {
      EXPECT_GE(e.validation_auroc, 0.0);
      EXPECT_LE(e.validation_auroc, 1.0);
      EXPECT_TRUE(std::isfinite(e.train_loss));
      best = std::max(best, e.validation_auroc);
    }
    EXPECT_EQ(a.best_validation_auroc, best);
    EXPECT_EQ(a.epochs[a.best_epoch - 1].validation_auroc, best);
    EXPECT_GE(a.test_auroc, 0.0);
    EXPECT_LE(a.test_auroc, 1.0);
    EXPECT_FALSE(a.drop_percent.has_value());
    ASSERT_EQ(a.epochs.size(), b.epochs.size());
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
      EXPECT_EQ(a.epochs[e].train_loss, b.epochs[e].train_loss);
      EXPECT_EQ(a.epochs[e].validation_auroc, b.epochs[e].validation_auroc);
    }
    EXPECT_EQ(a.test_auroc, b.test_auroc) << model;
  }
}

TEST(Train, RestoredWeightsReproduceBestValidation) {
  ExperimentConfig c = tiny_config("perceiver");
  c.max_epochs = 6;
  c.patience = 2;
  const DatasetSplit data = load_dataset(c);
  const RunReport r = train(c, data);
  EXPECT_LE(r.epochs.size(), 6u);
  EXPECT_GE(r.best_validation_auroc, r.epochs.back().validation_auroc);
}

TEST(Grid, AggregatesSeedsAndDrops) {
  GridSpec spec;
  spec.base = tiny_config("coper");
  spec.base.max_epochs = 2;
  spec.models = {"coper"};
  spec.removals = {0.0};
  spec.seeds = {1, 2, 3};
  const GridResult result = run_grid(spec);
  ASSERT_EQ(result.cells.size(), 1u);
  const GridCell& cell = result.cells[0];
  ASSERT_EQ(cell.runs.size(), 3u);
  double mean = 0.0;
  for (const auto& r : cell.runs) mean += r.test_auroc / 3.0;
  EXPECT_NEAR(cell.mean_auroc, mean, 1e-15);
  ASSERT_TRUE(cell.drop_percent.has_value());
  EXPECT_EQ(*cell.drop_percent, 0.0);
  for (const auto& r : cell.runs) {
    ASSERT_TRUE(r.drop_percent.has_value());
    EXPECT_EQ(*r.drop_percent, 0.0);
  }
}

TEST(Grid, TableShapeAndFailedCells) {
  GridSpec spec;
  spec.models = {"coper", "lstm"};
  spec.removals = {0.0, 0.5};
  spec.seeds = {1, 2};
  std::vector<RunReport> reports;
  double value = 0.9;
  for (const auto& m : spec.models)
    for (double f : spec.removals)
      for (auto s : spec.seeds) {
        RunReport r;
        r.config.model = m;
        r.config.removal_fraction = f;
        r.config.seed = s;
        r.test_auroc = value;
        value -= 0.01;
        reports.push_back(r);
      }
  reports[7].failed = true;  // lstm, 0.5, seed 2
  reports[7].error = "epoch 3: training loss is not finite";
  assign_run_drops(reports);
  const GridResult g = aggregate(spec, reports);
  ASSERT_EQ(g.cells.size(), spec.models.size() * spec.removals.size());
  const GridCell* c = g.find("coper", 0.5);
  ASSERT_NE(c, nullptr);
  EXPECT_NEAR(c->mean_auroc, 0.875, 1e-12);
  EXPECT_NEAR(c->sd_auroc, std::sqrt(0.00005), 1e-12);
  EXPECT_NEAR(*c->drop_percent, (0.895 - 0.875) / 0.895 * 100.0, 1e-10);
  EXPECT_NEAR(*reports[2].drop_percent, (0.9 - 0.88) / 0.9 * 100.0, 1e-10);
  const GridCell* bad = g.find("lstm", 0.5);
  EXPECT_TRUE(bad->failed());
  EXPECT_FALSE(bad->drop_percent.has_value());
  EXPECT_TRUE(g.any_failed());
  const std::string csv = g.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,removal_percent,mean_auroc,sd_auroc,drop_percent,runs,failed_runs,status");
  EXPECT_NE(csv.find("lstm,50,"), std::string::npos);
  EXPECT_NE(csv.find(",failed\n"), std::string::npos);
  const std::string text = g.to_text_table();
  EXPECT_NE(text.find("50% removed"), std::string::npos);
  EXPECT_NE(text.find("drop %"), std::string::npos);
}

TEST(Grid, WritesReportsAndTables) {
  const auto dir = std::filesystem::temp_directory_path() / "coper_grid_test";
  std::filesystem::remove_all(dir);
  GridSpec spec;
  spec.base = tiny_config("lstm");
  spec.base.max_epochs = 1;
  spec.models = {"lstm"};
  spec.removals = {0.0, 0.25};
  spec.seeds = {5};
  run_grid(spec, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "table.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "table.txt"));
  std::ifstream in(dir / "runs" / "lstm-r25-s5" / "report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("status"), "ok");
  EXPECT_EQ(j.at("config").at("removal_fraction"), 0.25);
  EXPECT_TRUE(j.at("drop_percent").is_number());
  std::filesystem::remove_all(dir);
}

TEST(Gradcheck, SuitePasses) {
  for (const auto& c : run_gradient_suite()) {
    EXPECT_TRUE(c.passed) << c.name << " err " << c.error << " " << c.failure;
  }
}

TEST(Train, CheckpointHoldsRestoredParameters) {
  const auto path = std::filesystem::temp_directory_path() / "coper_train_checkpoint.params";
  ExperimentConfig c = tiny_config("lstm");
  c.max_epochs = 2;
  const RunReport r = train(c, {}, path);
  ASSERT_TRUE(std::filesystem::exists(path));
  // Reloading into a fresh model reproduces the reported test AUROC.
  const DatasetSplit data = load_dataset(c);
  Rng rng(99);
  auto model = make_model(ModelKind::lstm, {data.features, data.steps, c.dropout}, rng);
  ParameterList params = model->parameters();
  load_parameters(path, params);
  std::vector<int> labels;
  for (const auto& s : data.test) labels.push_back(s.label);
  const auto scores = predict(*model, data.test, data.steps, data.features, data.window_hours,
                              c.batch_size);
  EXPECT_EQ(auroc(scores, labels), r.test_auroc);
  std::filesystem::remove(path);
}
