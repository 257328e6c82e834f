#include <benchmark/benchmark.h>

#include "mghft/config.hpp"
#include "mghft/fusion.hpp"
#include "mghft/model.hpp"
#include "mghft/ops.hpp"
#include "mghft/synthetic.hpp"

namespace mghft {
namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, bool grad = false) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({rows, cols}, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_SoftFusionBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor v = random_matrix(rng, 8, 128, true), t = random_matrix(rng, 32, 128, true);
  for (auto _ : state) {
    v.zero_grad();
    t.zero_grad();
    sum(soft_fusion(v, t)).backward();
  }
}
BENCHMARK(BM_SoftFusionBackward);

void BM_AlignmentLoss(benchmark::State& state) {
  Rng rng(3);
  const auto b = static_cast<std::size_t>(state.range(0));
  std::vector<StagePair> stages;
  for (std::size_t s = 0; s < kNumStages; ++s) stages.push_back({random_matrix(rng, b, 64), random_matrix(rng, b, 64)});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(alignment_loss(stages, {}));
}
BENCHMARK(BM_AlignmentLoss)->Arg(16)->Arg(64);

std::vector<Example> toy_batch(const ModelConfig& c) {
  SyntheticSpec spec;
  spec.count = 16;
  spec.num_classes = c.num_classes;
  spec.image_size = c.backbone.image_size;
  spec.text_dim = c.text_dim;
  return make_synthetic_examples(spec);
}

void BM_ToyModelForward(benchmark::State& state) {
  const ModelConfig c = toy_model_config();
  MghftModel model(c, 0);
  const auto batch = toy_batch(c);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(batch).logits);
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}
BENCHMARK(BM_ToyModelForward)->Unit(benchmark::kMillisecond);

void BM_ToyModelTrainStep(benchmark::State& state) {
  const ModelConfig c = toy_model_config();
  MghftModel model(c, 0);
  const auto batch = toy_batch(c);
  std::vector<std::size_t> labels;
  for (const auto& ex : batch) labels.push_back(ex.label);
  for (auto _ : state) {
    model.params().zero_grad();
    model.loss(model.forward(batch), labels).total.backward();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}
BENCHMARK(BM_ToyModelTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mghft

BENCHMARK_MAIN();
