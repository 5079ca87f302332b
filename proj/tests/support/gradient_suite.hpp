#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ckl/losses.hpp"
#include "ckl/model.hpp"
#include "ckl/ops.hpp"
#include "ckl/synthetic.hpp"
#include "ckl/training.hpp"
#include "gradcheck.hpp"

namespace ckl::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

// Reduces any output to a scalar through a fixed random projection so every
// output element gets a distinct upstream gradient.
inline Tensor project(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor r = random_tensor(y.shape(), rng, false);
  return sum(mul(y, r));
}

using GradCheckCase = std::pair<std::string, GradCheckResult>;

inline std::vector<GradCheckCase> op_gradchecks(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> out;
  auto check = [&](const std::string& name, auto fn, std::vector<Tensor> params) {
    auto f = [&] { return project(fn(), 99); };
    out.emplace_back(name, gradcheck(f, params));
  };
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({3, 4}, rng);
  Tensor d = random_tensor({5, 4}, rng), row = random_tensor({4}, rng), s = random_tensor({1}, rng);
  Tensor sq = random_tensor({4, 4}, rng), t3 = random_tensor({2, 3, 4}, rng);
  Tensor gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng), table = random_tensor({6, 3}, rng);

  check("matmul", [&] { return matmul(a, b); }, {a, b});
  check("matmul_nt", [&] { return matmul_nt(a, d); }, {a, d});
  check("transpose", [&] { return transpose(a); }, {a});
  check("add", [&] { return add(a, c); }, {a, c});
  check("sub", [&] { return sub(a, c); }, {a, c});
  check("mul", [&] { return mul(a, c); }, {a, c});
  check("scale", [&] { return scale(a, -1.7); }, {a});
  check("add_scalar", [&] { return add_scalar(a, 0.3); }, {a});
  check("mul_scalar", [&] { return mul_scalar(a, s); }, {a, s});
  check("add_row", [&] { return add_row(t3, row); }, {t3, row});
  check("softmax_lastdim", [&] { return softmax_lastdim(t3); }, {t3});
  check("causal_softmax", [&] { return causal_softmax(sq); }, {sq});
  check("sigmoid", [&] { return sigmoid(a); }, {a});
  check("relu", [&] { return relu(a); }, {a});
  check("gelu", [&] { return gelu(a); }, {a});
  check("exp", [&] { return exp(a); }, {a});
  check("layer_norm", [&] { return layer_norm(t3, gamma, beta); }, {t3, gamma, beta});
  const std::vector<int> ids = {2, 0, 5, 2};
  check("embedding_lookup", [&] { return embedding_lookup(table, ids); }, {table});
  check("reshape", [&] { return reshape(a, {2, 6}); }, {a});
  check("slice_rows", [&] { return slice_rows(t3, 1, 1); }, {t3});
  check("slice_cols", [&] { return slice_cols(a, 1, 2); }, {a});
  check("concat_rows", [&] { return concat_rows(std::vector<Tensor>{a, c, a}); }, {a, c});
  check("concat_cols", [&] { return concat_cols(std::vector<Tensor>{a, c}); }, {a, c});
  check("element", [&] { return element(a, 5); }, {a});
  check("sum", [&] { return sum(t3); }, {t3});
  check("mean", [&] { return mean(t3); }, {t3});

  Tensor q = random_tensor({2, 4}, rng), k1 = random_tensor({3, 4}, rng), v1 = random_tensor({3, 4}, rng);
  Tensor k2 = random_tensor({2, 4}, rng), v2 = random_tensor({2, 4}, rng);
  Tensor w1 = random_tensor({1}, rng), w2 = random_tensor({1}, rng);
  check("attention", [&] { return attention(q, k1, v1); }, {q, k1, v1});
  check("lwe_attention",
        [&] {
          std::vector<KeyValue> segs{{k1, v1}, {k2, v2}};
          std::vector<Tensor> w{w1, w2};
          return lwe_attention(q, segs, w);
        },
        {q, k1, v1, k2, v2, w1, w2});

  Tensor pred = random_tensor({5}, rng);
  const std::vector<double> gt = {1, 0, 0, 1, 0};
  check("mse", [&] { return mse(pred, gt); }, {pred});
  Tensor logits = random_tensor({3, 6}, rng);
  const std::vector<int> targets = {1, 5, 1};
  check("nll", [&] { return nll(logits, targets); }, {logits});

  AwlParams awl = AwlParams::zeros();
  std::vector<Tensor> losses_in;
  for (std::size_t i = 0; i < kNumLosses; ++i) {
    awl.s[i].mutable_data()[0] = 0.2 * static_cast<double>(i) - 0.3;
    losses_in.push_back(Tensor::scalar(0.5 + static_cast<double>(i), true));
  }
  std::vector<Tensor> awl_params(awl.s.begin(), awl.s.end());
  awl_params.insert(awl_params.end(), losses_in.begin(), losses_in.end());
  check("awl",
        [&] {
          std::array<Tensor, kNumLosses> l{losses_in[0], losses_in[1], losses_in[2], losses_in[3]};
          return ckl::awl(l, awl, LossFlags{});
        },
        awl_params);
  return out;
}

/// d_model 8, one encoder and one decoder layer, m = l = 2; the loss is the
/// AWL total of all four losses so every parameter is exercised.
inline GradCheckResult model_gradcheck(std::uint64_t seed = 5) {
  auto corpus = make_synthetic_corpus({2, 2, 2, 8, seed});
  auto vocab = Vocabulary::build(corpus.samples, 1, 0);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.d_model = 8;
  mc.n_heads = 2;
  mc.d_ff = 16;
  mc.n_encoder_layers = 1;
  mc.n_decoder_layers = 1;
  mc.max_source_len = 64;
  mc.max_target_len = 16;
  auto examples = prepare_examples(corpus.samples, vocab, mc);
  CklModel model(mc, seed);
  AwlParams awl = AwlParams::zeros();
  for (std::size_t i = 0; i < kNumLosses; ++i) awl.s[i].mutable_data()[0] = 0.1 * static_cast<double>(i);
  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  for (auto& s : awl.s) params.push_back(s);
  auto f = [&] { return ckl::awl(sample_losses(model, examples[0]), awl, LossFlags{}); };
  return gradcheck(f, params);
}

}  // namespace ckl::testing
