#include <benchmark/benchmark.h>

#include "endocss/corruption.hpp"
#include "endocss/loss.hpp"
#include "endocss/replay.hpp"
#include "endocss/rng.hpp"
#include "endocss/sampler.hpp"
#include "endocss/segmodel.hpp"
#include "endocss/tensor.hpp"

namespace {

using namespace endocss;

Tensor random_tensor(const std::vector<long>& shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (long i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

TensorI random_targets(long b, long h, long w, int n_classes, std::uint64_t seed) {
  TensorI t({b, h, w});
  Rng rng(seed);
  for (long i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<std::int32_t>(rng.uniform_index(static_cast<std::uint64_t>(n_classes)));
  return t;
}

SegModel bench_model(int n_classes) {
  ModelConfig cfg;
  cfg.n_classes = n_classes;
  Rng rng(7);
  return SegModel::create(cfg, rng);
}

void BM_ModelForward(benchmark::State& state) {
  const SegModel model = bench_model(5);
  const Tensor images = random_tensor({state.range(0), 64, 64, 3}, 11);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(images));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ModelBackward(benchmark::State& state) {
  const SegModel model = bench_model(5);
  const Tensor images = random_tensor({state.range(0), 64, 64, 3}, 11);
  const TensorI targets = random_targets(state.range(0), 64, 64, 5, 13);
  for (auto _ : state) {
    ForwardTrace trace;
    const Tensor logits = model.forward(images, trace);
    Tensor grad(logits.shape());
    ce_loss(logits, targets, kDefaultIgnoreIndex, &grad);
    std::vector<Tensor> grads = model.zero_grads();
    benchmark::DoNotOptimize(model.backward(trace, grad, grads));
  }
}
BENCHMARK(BM_ModelBackward)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_CeLoss(benchmark::State& state) {
  const Tensor logits = random_tensor({8, 64, 64, 5}, 17);
  const TensorI targets = random_targets(8, 64, 64, 5, 19);
  for (auto _ : state) {
    Tensor grad(logits.shape());
    benchmark::DoNotOptimize(ce_loss(logits, targets, kDefaultIgnoreIndex, &grad));
  }
}
BENCHMARK(BM_CeLoss)->Unit(benchmark::kMillisecond);

void BM_SanCeLoss(benchmark::State& state) {
  const Tensor logits = random_tensor({8, 64, 64, 5}, 17);
  const TensorI targets = random_targets(8, 64, 64, 5, 19);
  SanCEConfig cfg;
  cfg.cur_step = 2;
  Rng rng(23);
  for (auto _ : state) {
    Tensor grad(logits.shape());
    benchmark::DoNotOptimize(sance_loss(logits, targets, cfg, rng, &grad));
  }
}
BENCHMARK(BM_SanCeLoss)->Unit(benchmark::kMillisecond);

void BM_EntropyMap(benchmark::State& state) {
  TensorD probs({64, 64, 5});
  Rng rng(29);
  for (long p = 0; p < 64 * 64; ++p) {
    double sum = 0.0;
    for (long c = 0; c < 5; ++c) {
      const double v = rng.uniform() + 1e-3;
      probs.data()[p * 5 + c] = v;
      sum += v;
    }
    for (long c = 0; c < 5; ++c) probs.data()[p * 5 + c] /= sum;
  }
  for (auto _ : state) benchmark::DoNotOptimize(entropy_map(probs));
}
BENCHMARK(BM_EntropyMap)->Unit(benchmark::kMicrosecond);

void BM_Corruption(benchmark::State& state, const std::string& name) {
  Image image(64, 64);
  Rng fill(31);
  for (auto& v : image.px) v = static_cast<float>(fill.uniform());
  const CorruptionSpec spec{name, 3};
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(derive_seed(37, name, i++));
    benchmark::DoNotOptimize(corrupt(image, spec, rng));
  }
}
BENCHMARK_CAPTURE(BM_Corruption, gaussian_noise, "gaussian_noise")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Corruption, gaussian_blur, "gaussian_blur")->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Corruption, jpeg_compression, "jpeg_compression")
    ->Unit(benchmark::kMicrosecond);

void BM_SamplerEpoch(benchmark::State& state) {
  const BatchPlan plan = compute_ratio(400, 40, 16);
  for (auto _ : state) {
    BatchSampler sampler(400, 40, plan, 41);
    long batches = 0;
    while (sampler.next()) ++batches;
    benchmark::DoNotOptimize(batches);
  }
}
BENCHMARK(BM_SamplerEpoch)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
