#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "mrb/training.hpp"

namespace mrb {
namespace {

using testing::small_synthetic;
using testing::tiny_model;

TEST(Loss, CrossEntropyAndClip) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  EXPECT_NEAR(cross_entropy<double>(p, 1), -std::log(0.5), 1e-15);
  const std::vector<double> zero{1.0, 0.0};
  EXPECT_NEAR(cross_entropy<double>(zero, 1), -std::log(1e-12), 1e-9);
  EXPECT_THROW(cross_entropy<double>(p, 3), DataError);
}

TEST(Loss, LogitGradientIsProbsMinusOnehotOverBatch) {
  const TensorD probs({2, 3}, {0.2, 0.5, 0.3, 0.1, 0.1, 0.8});
  const std::vector<std::size_t> y{1, 2};
  const TensorD g = cross_entropy_logit_grad(probs, y);
  const std::vector<double> expected{0.1, -0.25, 0.15, 0.05, 0.05, -0.1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g[i], expected[i], 1e-15);
  EXPECT_NEAR(mean_cross_entropy(probs, y), -(std::log(0.5) + std::log(0.8)) / 2, 1e-15);
}

TEST(Optimizer, AdamMatchesTextbookUpdate) {
  TensorD p({3}, {0.5, -1.0, 2.0});
  std::vector<double> ref(p.values()), m(3, 0.0), v(3, 0.0);
  AdamState<double> state;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 5; ++t) {
    const TensorD g({3}, {0.1 * t, -0.3, 0.05 / t});
    adam_step<double>(state, {&p}, {&g}, lr);
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], ref[i], 1e-12);
  }
  EXPECT_EQ(state.step, 5u);
  const TensorD wrong({2});
  EXPECT_THROW(adam_step<double>(state, {&p}, {&wrong}, lr), DimensionError);
}

TEST(Optimizer, SgdStep) {
  TensorD p({2}, {1.0, 2.0});
  const TensorD g({2}, {0.5, -1.0});
  sgd_step<double>({&p}, {&g}, 0.1);
  EXPECT_NEAR(p[0], 0.95, 1e-15);
  EXPECT_NEAR(p[1], 2.1, 1e-15);
}

TEST(Split, StratifiedPartitionProperties) {
  SeededRng gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + gen.below(6);
    std::vector<std::size_t> labels;
    std::vector<std::size_t> per(k);
    for (std::size_t c = 0; c < k; ++c) {
      per[c] = 3 + gen.below(60);
      labels.insert(labels.end(), per[c], c);
    }
    SeededRng rng(trial);
    const SplitIndices s = stratified_split(labels, rng);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);  // disjoint cover

    for (std::size_t c = 0; c < k; ++c) {
      auto count = [&](const std::vector<std::size_t>& part) {
        return std::count_if(part.begin(), part.end(), [&](auto i) { return labels[i] == c; });
      };
      const double n = static_cast<double>(per[c]);
      EXPECT_EQ(count(s.validation), std::max<long>(1, std::lround(0.16 * n)));
      EXPECT_EQ(count(s.test), std::max<long>(1, std::lround(0.2 * n)));
      EXPECT_GE(count(s.train), 1);
    }
  }
}

TEST(Split, DeterministicPerSeedAndRejectsTinyClasses) {
  const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1, 1};
  SeededRng a(3), b(3);
  EXPECT_EQ(stratified_split(labels, a).test, stratified_split(labels, b).test);
  SeededRng c(3);
  EXPECT_THROW(stratified_split({0, 0, 1, 1, 1}, c), DataError);
}

TEST(EarlyStop, PlateauFromEpochThreeStopsAtEight) {
  EarlyStopping es(5);
  const std::vector<double> schedule{5, 4, 3, 3, 3, 3, 3, 3, 3, 3};
  int stopped_at = 0;
  for (std::size_t e = 0; e < schedule.size(); ++e) {
    if (es.update(schedule[e])) {
      stopped_at = static_cast<int>(e) + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 8);
  EXPECT_EQ(es.best_epoch(), 3);
  EXPECT_DOUBLE_EQ(es.best_loss(), 3.0);
}

TEST(EarlyStop, ImprovementResetsPatience) {
  EarlyStopping es(2);
  EXPECT_FALSE(es.update(1.0));
  EXPECT_FALSE(es.update(1.0));
  EXPECT_FALSE(es.update(0.5));
  EXPECT_TRUE(es.last_improved());
  EXPECT_FALSE(es.update(0.6));
  EXPECT_TRUE(es.update(0.5));
  EXPECT_EQ(es.best_epoch(), 3);
}

TrainConfig quick_config(std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.threads = 1;
  return cfg;
}

TEST(Train, FrozenWeightsStopAfterPatience) {
  // Updates far below float resolution leave the weights, and hence the
  // validation loss, exactly constant: epoch 1 is the best, patience ends at 6.
  const auto data = small_synthetic(1);
  SeededRng rng(0);
  const auto split = stratified_split(data.labels, rng);
  TrainConfig cfg = quick_config();
  cfg.optimizer = Optimizer::sgd;
  cfg.learning_rate = 1e-30;
  cfg.max_epochs = 20;
  const auto result = train(cfg, tiny_model(), data, split);
  EXPECT_TRUE(result.stopped_early);
  EXPECT_EQ(result.history.size(), 6u);
  EXPECT_EQ(result.best_epoch, 1);
  for (const auto& rec : result.history) EXPECT_EQ(rec.val_loss, result.history[0].val_loss);
}

TEST(Train, RestoresBestValidationWeights) {
  const auto data = small_synthetic(2);
  SeededRng rng(0);
  const auto split = stratified_split(data.labels, rng);
  TrainConfig cfg = quick_config(4);
  cfg.max_epochs = 8;
  const auto result = train(cfg, tiny_model(), data, split);
  const auto best = std::min_element(result.history.begin(), result.history.end(),
                                     [](auto& a, auto& b) { return a.val_loss < b.val_loss; });
  EXPECT_EQ(result.best_epoch, best->epoch);
  EXPECT_NEAR(evaluate_loss(result.model, data, split.validation), best->val_loss, 1e-6);
}

TEST(Train, IsDeterministicPerSeed) {
  const auto data = small_synthetic(3);
  SeededRng rng(0);
  const auto split = stratified_split(data.labels, rng);
  TrainConfig cfg = quick_config(9);
  cfg.max_epochs = 3;
  const auto a = train(cfg, tiny_model(), data, split);
  const auto b = train(cfg, tiny_model(), data, split);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  EXPECT_EQ(a.model.weights(), b.model.weights());
}

TEST(Train, FirstStepDecreasesFirstBatchLoss) {
  const auto data = small_synthetic(5, 3, 30, 4.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng init(seed);
    Model<float> model(tiny_model(), init);
    std::vector<std::size_t> idx(16);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Tensor bart({16, 8}), roberta({16, 6});
    std::vector<std::size_t> y;
    for (auto i : idx) {
      std::copy_n(data.bart.row(i).data(), 8, bart.ptr() + i * 8);
      std::copy_n(data.roberta.row(i).data(), 6, roberta.ptr() + i * 6);
      y.push_back(data.labels[i]);
    }
    ModelCache<float> cache;
    const Tensor probs = model.forward(bart, roberta, Mode::eval, nullptr, &cache);
    const double before = mean_cross_entropy(probs, y);
    const auto grads = model.backward(cache, cross_entropy_logit_grad(probs, y));
    AdamState<float> adam;
    adam_step(adam, tensor_ptrs(model.params()), tensor_ptrs(grads), 1e-3);
    const double after = mean_cross_entropy(model.forward(bart, roberta, Mode::eval), y);
    EXPECT_LT(after, before) << "seed " << seed;
  }
}

TEST(Train, RejectsMismatchedDimensions) {
  const auto data = small_synthetic(1, 3, 30, 4.0, 10, 6);
  SeededRng rng(0);
  const auto split = stratified_split(data.labels, rng);
  try {
    train(quick_config(), tiny_model(), data, split);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos);
  }
  EXPECT_THROW(train(quick_config(), tiny_model(), small_synthetic(1), SplitIndices{}), DataError);
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.max_epochs = 7;
  cfg.learning_rate = 5e-4;
  cfg.optimizer = Optimizer::sgd;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(back.max_epochs, 7);
  EXPECT_DOUBLE_EQ(back.learning_rate, 5e-4);
  EXPECT_EQ(back.optimizer, Optimizer::sgd);

  TrainConfig bad;
  bad.batch_size = 0;
  bad.patience = 0;
  EXPECT_EQ(validate(bad).size(), 2u);
  EXPECT_THROW(check(bad), ConfigError);
  std::vector<std::string> errors;
  train_config_from_json(nlohmann::json{{"max_epochs", "ten"}, {"optimizer", "rmsprop"}}, &errors);
  EXPECT_EQ(errors.size(), 2u);
}

TEST(Rounds, StatsUseSampleStd) {
  const Stats s = summarize({0.90, 0.92, 0.94});
  EXPECT_NEAR(s.mean, 0.92, 1e-12);
  EXPECT_NEAR(s.std, 0.02, 1e-12);
  EXPECT_EQ(summarize({0.5}).std, 0.0);
}

TEST(Rounds, TimingChargesSlowerEmbeddingPass) {
  const TimingBreakdown t{3.5, 2.0, 1.25};
  EXPECT_DOUBLE_EQ(t.total_hours(), 4.75);
}

TEST(Rounds, SingleRoundHasZeroStd) {
  TrainConfig cfg = quick_config(2);
  cfg.rounds = 1;
  cfg.max_epochs = 2;
  const auto report = run_rounds(cfg, tiny_model(), small_synthetic(4));
  ASSERT_EQ(report.rounds.size(), 1u);
  for (const Stats& s : report.metrics) EXPECT_EQ(s.std, 0.0);
  EXPECT_NE(format_rounds_report(report).find("± 0.00"), std::string::npos);
}

TEST(Rounds, ThreadCountDoesNotChangeResults) {
  TrainConfig cfg = quick_config(1);
  cfg.rounds = 3;
  cfg.max_epochs = 2;
  const auto data = small_synthetic(6);
  cfg.threads = 1;
  const auto serial = run_rounds(cfg, tiny_model(), data);
  cfg.threads = 3;
  const auto parallel = run_rounds(cfg, tiny_model(), data);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(serial.rounds[r].seed, 1 + r);
    EXPECT_EQ(metric_values(serial.rounds[r].metrics), metric_values(parallel.rounds[r].metrics));
  }
  cfg.same_seed_every_round = true;
  const auto same = run_rounds(cfg, tiny_model(), data);
  EXPECT_EQ(metric_values(same.rounds[0].metrics), metric_values(same.rounds[2].metrics));
}

TEST(Rounds, RoundFailurePropagates) {
  TrainConfig cfg = quick_config();
  cfg.rounds = 2;
  EXPECT_THROW(run_rounds(cfg, tiny_model(9), small_synthetic(1)), DimensionError);
}

TEST(Ablation, FullGridHas162DistinctConfigsInOrder) {
  const auto grid = ablation_grid();
  ASSERT_EQ(grid.size(), 162u);
  std::set<std::tuple<std::size_t, int, int, int, int>> seen;
  for (const auto& c : grid) {
    seen.insert({c.bart.units, c.bart.depth, c.roberta.depth, c.ensemble.depth,
                 static_cast<int>(c.bart.cell)});
    EXPECT_TRUE(validate(c).empty());
    EXPECT_EQ(c.bart.units, c.roberta.units);
    EXPECT_EQ(c.bart.cell, c.ensemble.cell);
  }
  EXPECT_EQ(seen.size(), 162u);
  EXPECT_EQ(grid.front().bart.units, 32u);
  EXPECT_EQ(grid.front().bart.cell, CellType::lstm);
  EXPECT_EQ(grid[1].bart.cell, CellType::bilstm);
  EXPECT_EQ(grid.back().bart.units, 128u);
  EXPECT_EQ(grid.back().ensemble.depth, 3);
  // The default kernel fits every 128-unit BiLSTM branch unchanged.
  EXPECT_EQ(grid.back().bart.conv_kernel, 128u);
  EXPECT_EQ(grid.front().bart.conv_kernel, 16u);
}

TEST(Ablation, SmokeGridRunsAndFormats) {
  const auto grid = smoke_grid(tiny_model());
  ASSERT_EQ(grid.size(), 6u);
  TrainConfig cfg = quick_config();
  cfg.rounds = 1;
  cfg.max_epochs = 1;
  const auto rows = run_ablation(grid, cfg, small_synthetic(1));
  ASSERT_EQ(rows.size(), 6u);
  const std::string table = format_ablation_report(rows);
  EXPECT_NE(table.find("LSTM"), std::string::npos);
  EXPECT_NE(table.find("BiLSTM"), std::string::npos);
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

}  // namespace
}  // namespace mrb
