#include <benchmark/benchmark.h>

#include <random>

#include "ckl/model.hpp"
#include "ckl/ops.hpp"

namespace {

ckl::Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return ckl::Tensor::matrix(r, c, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  auto a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ckl::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  auto a = random_matrix(n, n, rng, true), b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    ckl::Tape tape;
    ckl::TapeScope scope(tape);
    tape.backward(ckl::sum(ckl::matmul(a, b)));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64);

void BM_LweAttention(benchmark::State& state) {
  const auto segments = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  auto q = random_matrix(16, 64, rng);
  std::vector<ckl::KeyValue> kv;
  for (std::size_t i = 0; i < segments; ++i) kv.push_back({random_matrix(20, 64, rng), random_matrix(20, 64, rng)});
  const std::vector<double> w(segments, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(ckl::lwe_attention(q, kv, w));
}
BENCHMARK(BM_LweAttention)->Arg(1)->Arg(4)->Arg(16);

}  // namespace
