#include <benchmark/benchmark.h>

#include "ckl/synthetic.hpp"
#include "ckl/training.hpp"

namespace {

struct Fixture {
  ckl::ModelConfig config;
  std::vector<ckl::TrainingExample> examples;
};

Fixture make_fixture(std::size_t d_model) {
  auto corpus = ckl::make_synthetic_corpus({8, 2, 3, 24, 1});
  auto vocab = ckl::Vocabulary::build(corpus.samples, 1, 0);
  Fixture f;
  f.config.vocab_size = vocab.size();
  f.config.d_model = d_model;
  f.config.d_ff = 4 * d_model;
  f.config.max_source_len = 128;
  f.config.max_target_len = 16;
  f.examples = ckl::prepare_examples(corpus.samples, vocab, f.config);
  return f;
}

void BM_ForwardBackward(benchmark::State& state) {
  auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  ckl::CklModel model(f.config, 1);
  auto awl = ckl::AwlParams::zeros();
  for (auto _ : state) {
    ckl::Tape tape;
    ckl::TapeScope scope(tape);
    tape.backward(ckl::awl(ckl::sample_losses(model, f.examples[0]), awl, ckl::LossFlags{}));
    for (auto& [name, t] : model.named_parameters()) t.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  auto f = make_fixture(64);
  ckl::CklModel model(f.config, 1);
  ckl::DecodeOptions opt;
  opt.max_len = 16;
  for (auto _ : state) benchmark::DoNotOptimize(model.generate(f.examples[0].sample, opt));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

void BM_BeamDecode(benchmark::State& state) {
  auto f = make_fixture(64);
  ckl::CklModel model(f.config, 1);
  ckl::DecodeOptions opt{ckl::DecodeOptions::Mode::kBeam, 4, 16};
  for (auto _ : state) benchmark::DoNotOptimize(model.generate(f.examples[0].sample, opt));
}
BENCHMARK(BM_BeamDecode)->Unit(benchmark::kMillisecond);

}  // namespace
