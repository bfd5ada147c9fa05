#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dynaware/autodiff.hpp"
#include "dynaware/rng.hpp"
#include "dynaware/similarity.hpp"
#include "dynaware/tasks.hpp"
#include "dynaware/training.hpp"

using namespace dynaware;

namespace {

const std::vector<Task>& bench_tasks() {
  static const std::vector<Task> t = [] {
    const std::vector<std::string> ids{"ramp", "relay"};
    return generate_tasks(ids, 2, 1);
  }();
  return t;
}

const ActionCache& bench_cache() {
  static const ActionCache c = ActionCache::build(bench_tasks(), 200, 3);
  return c;
}

void BM_Rollout(benchmark::State& state) {
  const Task& task = bench_tasks()[static_cast<std::size_t>(state.range(0))];
  const auto actions = sample_actions(task, 64, 5);
  std::size_t i = 0;
  for (auto _ : state) {
    auto r = rollout(task.scene, actions[i++ % actions.size()]);
    benchmark::DoNotOptimize(r);
  }
  state.SetLabel(task.id);
}
BENCHMARK(BM_Rollout)->Arg(0)->Arg(2);

void BM_PairMatrix(benchmark::State& state) {
  const Task& task = bench_tasks()[0];
  const auto actions = sample_actions(task, 8, 9);
  std::vector<Rollout> rolls;
  for (const auto& a : actions) rolls.push_back(rollout(task.scene, a));
  for (auto _ : state) {
    auto m = pair_matrix(rolls, SimilarityConfig{});
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_PairMatrix);

void BM_Bilinear(benchmark::State& state) {
  namespace ad = dynaware::ad;
  const std::size_t n = static_cast<std::size_t>(state.range(0)), d = 256, k = 20;
  Rng rng(1);
  auto fill = [&](ad::Shape s) {
    ad::Tensor<float> t(std::move(s));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
  };
  const auto x = fill({n, d}), w = fill({k, d * d}), b = fill({k});
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < n / 8; ++s) {
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 8; ++j) pairs.emplace_back(s * 8 + i, s * 8 + j);
    }
  }
  for (auto _ : state) {
    ad::Tape<float> tape;
    auto vx = tape.variable(x);
    auto out = ad::bilinear(vx, vx, tape.variable(w), tape.variable(b), pairs);
    tape.backward(ad::sum(out));
    benchmark::DoNotOptimize(tape.grad(vx));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * pairs.size()));
}
BENCHMARK(BM_Bilinear)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig mc;
  mc.loss = static_cast<LossMode>(state.range(0));
  Model<float> model(mc, 1);
  std::vector<std::size_t> all(bench_tasks().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto pool = bench_cache().eligible(all, 4);
  if (pool.empty()) {
    state.SkipWithError("no task with 4 positives");
    return;
  }
  TrainConfig tc;
  tc.batches = 1;
  for (auto _ : state) train(tc, model, bench_tasks(), pool, bench_cache());
  state.SetLabel(to_string(mc.loss));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
BENCHMARK_MAIN();
