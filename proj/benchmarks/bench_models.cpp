#include <random>

#include <benchmark/benchmark.h>

#include "vmsgan/memgan.hpp"
#include "vmsgan/vms_predictor.hpp"

namespace {

using namespace vmsgan;

GanConfig gan_config(int resolution) {
  GanConfig c;
  c.resolution = resolution;
  c.base_channels = 16;
  c.latent_dim = 64;
  return c;
}

Tensor<double> noise_images(int n, int resolution, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> t({n, 3, resolution, resolution});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void BM_GeneratorForward(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  const GanConfig c = gan_config(res);
  const Generator g(c, rng);
  const auto latents = sample_latent(batch, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(g.generate(latents));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GeneratorForward)->Args({32, 64})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_CriticLossWithPenalty(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  std::mt19937_64 rng(2);
  const GanConfig c = gan_config(res);
  const Critic critic(c, rng);
  const auto real = noise_images(batch, res, rng);
  const auto fake = noise_images(batch, res, rng);
  const auto eps = draw_interpolation_weights(batch, rng);
  std::vector<double> grad(critic.parameters().size());
  for (auto _ : state) benchmark::DoNotOptimize(critic_loss(critic, real, fake, eps, 10.0, grad));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_CriticLossWithPenalty)->Args({32, 64})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_GeneratorLoss(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  std::mt19937_64 rng(3);
  GanConfig c = gan_config(res);
  c.spatial = state.range(2) != 0;
  PredictorConfig pc;
  pc.image_resolution = res;
  pc.vms_resolution = res;
  pc.latent_dim = 32;
  const Generator g(c, rng);
  const Critic critic(c, rng);
  const VmsPredictor predictor(pc, rng);
  const auto latents = sample_latent(batch, c, rng);
  std::vector<double> grad(g.parameters().size());
  for (auto _ : state) benchmark::DoNotOptimize(generator_loss(g, critic, predictor, latents, 10.0, grad));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GeneratorLoss)->Args({32, 64, 0})->Args({32, 64, 1})->Unit(benchmark::kMillisecond);

void BM_PredictorLoss(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  std::mt19937_64 rng(4);
  PredictorConfig pc;
  pc.image_resolution = res;
  pc.vms_resolution = res;
  pc.latent_dim = 32;
  const VmsPredictor p(pc, rng);
  const auto images = noise_images(batch, res, rng);
  const std::vector<VmsMap> targets(static_cast<std::size_t>(batch), VmsMap(res, res));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(batch * pc.latent_dim));
  for (auto& v : noise) v = n(rng);
  std::vector<double> grad(p.parameters().size());
  for (auto _ : state) benchmark::DoNotOptimize(p.loss(images, targets, noise, grad));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PredictorLoss)->Args({32, 32})->Args({64, 32})->Unit(benchmark::kMillisecond);

}  // namespace
