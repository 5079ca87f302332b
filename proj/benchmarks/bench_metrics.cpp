#include <benchmark/benchmark.h>

#include <random>

#include "ckl/metrics.hpp"

namespace {

ckl::Corpus random_corpus(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> word(0, 499), len(5, 25);
  ckl::Corpus out(n);
  for (auto& s : out) {
    for (int i = len(rng); i > 0; --i) s.push_back("w" + std::to_string(word(rng)));
  }
  return out;
}

void BM_Bleu4(benchmark::State& state) {
  std::mt19937_64 rng(1);
  auto c = random_corpus(static_cast<std::size_t>(state.range(0)), rng);
  auto r = random_corpus(c.size(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ckl::bleu(c, r, 4));
}
BENCHMARK(BM_Bleu4)->Arg(100)->Arg(1000);

void BM_RougeL(benchmark::State& state) {
  std::mt19937_64 rng(2);
  auto c = random_corpus(static_cast<std::size_t>(state.range(0)), rng);
  auto r = random_corpus(c.size(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ckl::rouge_l(c, r));
}
BENCHMARK(BM_RougeL)->Arg(100)->Arg(1000);

void BM_MeanSpearman(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> xs(1000), ys(1000);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int j = 0; j < 8; ++j) {
      xs[i].push_back(u(rng));
      ys[i].push_back(j == 0 ? 1.0 : 0.0);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(ckl::mean_spearman(xs, ys));
}
BENCHMARK(BM_MeanSpearman);

}  // namespace
