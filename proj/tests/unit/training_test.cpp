#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dynaware/checkpoint.hpp"
#include "dynaware/rng.hpp"
#include "dynaware/task_io.hpp"
#include "dynaware/tasks.hpp"
#include "dynaware/training.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dynaware;

namespace {

const std::vector<Task>& tasks() {
  static const std::vector<Task> t = load_tasks(dwtest::fixture("census_tasks.json"));
  return t;
}

const ActionCache& cache() {
  static const ActionCache c = ActionCache::build(tasks(), 200, 7);
  return c;
}

std::vector<std::size_t> all_tasks() {
  std::vector<std::size_t> v(tasks().size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<std::size_t> pool(std::size_t n) {
  auto all = all_tasks();
  return cache().eligible(all, n);
}

BatchOptions options(std::size_t t, std::size_t n, LossMode mode = LossMode::kHandcrafted) {
  BatchOptions o;
  o.tasks = t;
  o.per_class = n;
  o.mode = mode;
  return o;
}

TrainConfig small_train(std::size_t batches) {
  TrainConfig c;
  c.batches = batches;
  c.tasks_per_batch = 2;
  c.per_class = 2;
  c.lr = 3e-3;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(ActionCache, LabelsMatchFreshSimulation) {
  ASSERT_EQ(cache().size(), tasks().size());
  const auto& e = cache().entry(3);
  ASSERT_EQ(e.actions.size(), 200u);
  EXPECT_EQ(e.positives.size() + e.negatives.size(), 200u);
  EXPECT_EQ(label_actions(tasks()[3], e.actions), e.solved);
  for (auto i : e.positives) EXPECT_TRUE(e.solved[i]);
  for (auto i : e.negatives) EXPECT_FALSE(e.solved[i]);
}

TEST(ActionCache, RebuildIsIdentical) {
  const auto again = ActionCache::build(tasks(), 200, 7);
  for (std::size_t t = 0; t < tasks().size(); ++t) {
    EXPECT_EQ(again.entry(t).actions, cache().entry(t).actions);
    EXPECT_EQ(again.entry(t).solved, cache().entry(t).solved);
  }
}

TEST(ActionCache, EnoughTasksHavePositives) { EXPECT_GE(pool(4).size(), 5u); }

TEST(Batch, SingleTaskSinglePair) {
  const auto p = pool(1);
  const Batch b = compose_batch(tasks(), p, cache(), options(1, 1), 3);
  EXPECT_EQ(b.samples(), 2u);
  EXPECT_EQ(b.pairs.size(), 4u);
  EXPECT_EQ(b.targets.size(), 4u);
  EXPECT_TRUE(b.labels[0]);
  EXPECT_FALSE(b.labels[1]);
}

TEST(Batch, DefaultShape) {
  const auto p = pool(4);
  const Batch b = compose_batch(tasks(), p, cache(), options(64, 4), 5);
  EXPECT_EQ(b.samples(), 512u);
  EXPECT_EQ(std::count(b.labels.begin(), b.labels.end(), true), 256);
  EXPECT_EQ(b.pairs.size(), 4u * 64 * 16);
}

TEST(Batch, BalanceAndPairCountProperty) {
  Rng rng(42);
  const auto p = pool(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t t = 1 + rng.below(6), n = 1 + rng.below(3);
    const Batch b = compose_batch(tasks(), p, cache(), options(t, n), rng.bits());
    ASSERT_EQ(b.tasks.size(), t);
    ASSERT_EQ(b.samples(), 2 * t * n);
    EXPECT_EQ(b.pairs.size(), 4 * t * n * n);
    for (std::size_t s = 0; s < t; ++s) {
      std::set<std::size_t> pos, neg;
      for (std::size_t k = 0; k < 2 * n; ++k) {
        const std::size_t i = s * 2 * n + k;
        EXPECT_EQ(b.slot[i], s);
        EXPECT_EQ(b.labels[i], k < n);
        EXPECT_EQ(cache().entry(b.tasks[s]).solved[b.action_index[i]], b.labels[i]);
        (k < n ? pos : neg).insert(b.action_index[i]);
      }
      EXPECT_EQ(pos.size(), n);
      EXPECT_EQ(neg.size(), n);
    }
    for (auto [i, j] : b.pairs) EXPECT_EQ(b.slot[i], b.slot[j]);
  }
}

TEST(Batch, DistinctTasksWhenPoolAllows) {
  const auto p = pool(2);
  const Batch b = compose_batch(tasks(), p, cache(), options(p.size(), 2), 9);
  EXPECT_EQ(std::set<std::size_t>(b.tasks.begin(), b.tasks.end()).size(), p.size());
}

TEST(Batch, Deterministic) {
  const auto p = pool(2);
  const Batch a = compose_batch(tasks(), p, cache(), options(4, 2), 77);
  const Batch b = compose_batch(tasks(), p, cache(), options(4, 2), 77);
  EXPECT_EQ(a.tasks, b.tasks);
  EXPECT_EQ(a.action_index, b.action_index);
  ASSERT_EQ(a.targets.size(), b.targets.size());
  for (std::size_t i = 0; i < a.targets.size(); ++i) {
    EXPECT_EQ(a.targets[i].v, b.targets[i].v);
    EXPECT_EQ(a.targets[i].bin, b.targets[i].bin);
  }
}

TEST(Batch, SelfPairHasFullSimilarity) {
  const auto p = pool(2);
  const Batch b = compose_batch(tasks(), p, cache(), options(3, 2), 1);
  for (std::size_t k = 0; k < b.pairs.size(); ++k) {
    if (b.pairs[k].first == b.pairs[k].second) {
      EXPECT_NEAR(b.targets[k].v, 1.0, 1e-12);
    }
  }
}

TEST(Batch, RejectsThinTasks) {
  std::vector<std::size_t> all = all_tasks();
  std::size_t thin = all.size();
  for (auto t : all) {
    if (cache().entry(t).positives.size() < 100) thin = t;
  }
  ASSERT_LT(thin, all.size());
  const std::vector<std::size_t> p{thin};
  EXPECT_THROW(compose_batch(tasks(), p, cache(), options(1, 100), 0), TrainingError);
  EXPECT_THROW(compose_batch(tasks(), p, cache(), options(0, 1), 0), TrainingError);
}

TEST(Batch, SelfsupFramesInsideRollout) {
  const auto p = pool(2);
  auto o = options(3, 2, LossMode::kSelfSupervised);
  const Batch b = compose_batch(tasks(), p, cache(), o, 4);
  ASSERT_EQ(b.frame_start.size(), b.samples());
  for (std::size_t k = 0; k < b.samples(); ++k) EXPECT_LE(b.frame_start[k] + o.frames, b.rollouts[k].length());
}

TEST(Train, LossDecreasesOnSmallSet) {
  const auto p = pool(2);
  const std::vector<std::size_t> five(p.begin(), p.begin() + 5);
  Model<float> model(dwtest::micro_config(LossMode::kHandcrafted), 1);
  auto cfg = small_train(200);
  const auto rows = train(cfg, model, tasks(), five, cache());
  ASSERT_EQ(rows.size(), 200u);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += rows[i].loss_solved + rows[i].loss_aux;
    last += rows[rows.size() - 1 - i].loss_solved + rows[rows.size() - 1 - i].loss_aux;
  }
  EXPECT_LT(last, first);
}

TEST(Train, CheckpointBytesReproducible) {
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = dwtest::scratch_dir("train_repro_" + std::to_string(run));
    Model<float> model(dwtest::micro_config(LossMode::kHandcrafted), 5);
    TrainOptions o;
    o.out_dir = dir;
    train(small_train(15), model, tasks(), pool(2), cache(), o);
    bytes[run] = dwtest::slurp(dir / "model.ckpt") + dwtest::slurp(dir / "metrics.csv");
  }
  EXPECT_FALSE(bytes[0].empty());
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(Train, ZeroAuxWeightMatchesBaselineEncoder) {
  Model<float> base(dwtest::micro_config(LossMode::kBaseline), 3);
  auto hc_cfg = dwtest::micro_config(LossMode::kHandcrafted);
  hc_cfg.aux_weight = 0.0;
  Model<float> hc(hc_cfg, 3);
  train(small_train(10), base, tasks(), pool(2), cache());
  train(small_train(10), hc, tasks(), pool(2), cache());
  std::size_t shared = 0;
  for (const auto& p : base.parameters()) {
    ASSERT_TRUE(hc.has_parameter(p.name)) << p.name;
    EXPECT_EQ(hc.parameter(p.name).value.data, p.value.data) << p.name;
    ++shared;
  }
  EXPECT_GT(shared, 0u);
  EXPECT_GT(hc.parameters().size(), base.parameters().size());
}

TEST(Train, MetricsCsvColumns) {
  const auto dir = dwtest::scratch_dir("train_metrics");
  Model<float> model(dwtest::micro_config(LossMode::kBaseline), 2);
  TrainOptions o;
  o.out_dir = dir;
  auto cfg = small_train(6);
  cfg.checkpoint_every = 3;
  train(cfg, model, tasks(), pool(2), cache(), o);
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,lr,loss_solved,loss_aux,mode");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_NE(line.find(",baseline"), std::string::npos);
    EXPECT_NE(line.find("nan"), std::string::npos);
  }
  EXPECT_EQ(rows, 6);
  EXPECT_TRUE(std::filesystem::exists(dir / "model_3.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "model_6.ckpt"));
  const auto ckpt = load_checkpoint(dir / "model.ckpt");
  EXPECT_EQ(ckpt, checkpoint_of(model));
  auto restored = model_from_checkpoint(ckpt);
  EXPECT_EQ(restored.config(), model.config());
}

TEST(Train, LearningRateFollowsCosine) {
  Model<float> model(dwtest::micro_config(LossMode::kBaseline), 2);
  auto cfg = small_train(8);
  const auto rows = train(cfg, model, tasks(), pool(2), cache());
  EXPECT_DOUBLE_EQ(rows.front().lr, cfg.lr);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].lr, rows[i - 1].lr);
}

TEST(Train, NonFiniteLossWritesDiagnostic) {
  const auto dir = dwtest::scratch_dir("train_nonfinite");
  Model<float> model(dwtest::micro_config(LossMode::kBaseline), 2);
  for (auto& p : model.parameters()) std::fill(p.value.data.begin(), p.value.data.end(), std::nanf(""));
  TrainOptions o;
  o.out_dir = dir;
  EXPECT_THROW(train(small_train(3), model, tasks(), pool(2), cache(), o), TrainingError);
  EXPECT_TRUE(std::filesystem::exists(dir / "diagnostic.ckpt"));
}

TEST(Train, RejectsBadConfig) {
  Model<float> model(dwtest::micro_config(LossMode::kBaseline), 2);
  auto cfg = small_train(0);
  EXPECT_THROW(train(cfg, model, tasks(), pool(2), cache()), TrainingError);
  cfg = small_train(2);
  cfg.per_class = 1000;
  EXPECT_THROW(train(cfg, model, tasks(), all_tasks(), cache()), TrainingError);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  Model<float> a(dwtest::micro_config(LossMode::kBaseline), 2);
  auto cfg = dwtest::micro_config(LossMode::kBaseline);
  cfg.embed_dim = 7;
  Model<float> b(cfg, 2);
  EXPECT_THROW(load_parameters(b, checkpoint_of(a)), FormatError);
}
