#include <random>

#include <benchmark/benchmark.h>

#include "vmsgan/dataset.hpp"
#include "vmsgan/evaluation.hpp"
#include "vmsgan/psychometrics.hpp"

namespace {

using namespace vmsgan;

std::vector<std::vector<double>> gaussian_rows(int n, int d, double shift, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(shift, 1.0);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& r : rows)
    for (auto& v : r) v = normal(rng);
  return rows;
}

void BM_Fid(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const auto a = gaussian_stats(gaussian_rows(2 * d, d, 0.0, rng));
  const auto b = gaussian_stats(gaussian_rows(2 * d, d, 0.5, rng));
  for (auto _ : state) benchmark::DoNotOptimize(fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(48)->Arg(192)->Arg(768)->Unit(benchmark::kMillisecond);

void BM_GaussianStats(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const auto rows = gaussian_rows(1000, d, 0.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_stats(rows));
}
BENCHMARK(BM_GaussianStats)->Arg(48)->Arg(192)->Unit(benchmark::kMillisecond);

void BM_SplitHalfConsistency(benchmark::State& state) {
  const int images = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.3);
  std::vector<AnnotationSet> sets;
  for (int i = 0; i < images; ++i) {
    AnnotationSet a{32, 32, SchemaChannel::True, {}};
    for (int o = 0; o < 10; ++o) {
      std::vector<std::uint8_t> m(32 * 32);
      for (auto& v : m) v = coin(rng) ? 1 : 0;
      a.masks.push_back(std::move(m));
    }
    sets.push_back(std::move(a));
  }
  for (auto _ : state) {
    std::mt19937_64 split_rng(4);
    benchmark::DoNotOptimize(split_half_consistency(sets, 25, split_rng));
  }
}
BENCHMARK(BM_SplitHalfConsistency)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_NormalQuantile(benchmark::State& state) {
  double p = 1e-6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(normal_quantile(p));
    p = p < 0.999 ? p + 1e-3 : 1e-6;
  }
}
BENCHMARK(BM_NormalQuantile);

}  // namespace
