#include "ckl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ckl/ops.hpp"

namespace ckl {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be at least 1");
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_encoder_layers, "n_encoder_layers");
  positive(n_decoder_layers, "n_decoder_layers");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_source_len, "max_source_len");
  positive(max_target_len, "max_target_len");
  positive(m_max, "m_max");
  positive(top_n, "top_n");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                                std::to_string(n_heads) + ")");
  }
  if (max_source_len < 3) throw std::invalid_argument("max_source_len must be at least 3");
  if (max_target_len < 3) throw std::invalid_argument("max_target_len must be at least 3");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"d_model", std::to_string(d_model)},
      {"n_heads", std::to_string(n_heads)},
      {"n_encoder_layers", std::to_string(n_encoder_layers)},
      {"n_decoder_layers", std::to_string(n_decoder_layers)},
      {"d_ff", std::to_string(d_ff)},
      {"vocab_size", std::to_string(vocab_size)},
      {"max_source_len", std::to_string(max_source_len)},
      {"max_target_len", std::to_string(max_target_len)},
      {"m_max", std::to_string(m_max)},
      {"top_n", std::to_string(top_n)},
      {"use_loss_klw", b(use_loss_klw)},
      {"use_loss_clwr", b(use_loss_clwr)},
      {"use_loss_clwk", b(use_loss_clwk)},
      {"use_ck_dep", b(use_ck_dep)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& values) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string& {
    auto it = values.find(key);
    if (it == values.end()) throw std::invalid_argument(std::string("model config is missing \"") + key + "\"");
    return it->second;
  };
  auto size = [&](const char* key) {
    const auto& s = get(key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty() || s[0] == '-') {
      throw std::invalid_argument(std::string("model config \"") + key + "\" is not a non-negative integer: " + s);
    }
    return static_cast<std::size_t>(v);
  };
  auto flag = [&](const char* key) {
    const auto& s = get(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument(std::string("model config \"") + key + "\" must be true or false: " + s);
  };
  c.d_model = size("d_model");
  c.n_heads = size("n_heads");
  c.n_encoder_layers = size("n_encoder_layers");
  c.n_decoder_layers = size("n_decoder_layers");
  c.d_ff = size("d_ff");
  c.vocab_size = size("vocab_size");
  c.max_source_len = size("max_source_len");
  c.max_target_len = size("max_target_len");
  c.m_max = size("m_max");
  c.top_n = size("top_n");
  c.use_loss_klw = flag("use_loss_klw");
  c.use_loss_clwr = flag("use_loss_clwr");
  c.use_loss_clwk = flag("use_loss_clwk");
  c.use_ck_dep = flag("use_ck_dep");
  return c;
}

// ---------------------------------------------------------------------------
// Attention primitives

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) throw ShapeError("attention: q, k, v must be matrices");
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeError("attention: incompatible shapes q" + shape_to_string(q.shape()) + " k" +
                     shape_to_string(k.shape()) + " v" + shape_to_string(v.shape()));
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(softmax_lastdim(scale(matmul_nt(q, k), s)), v);
}

Tensor lwe_attention(const Tensor& q, std::span<const KeyValue> segments, std::span<const Tensor> weights) {
  if (segments.empty()) throw ShapeError("lwe_attention: no segments");
  if (segments.size() != weights.size()) {
    throw ShapeError("lwe_attention: " + std::to_string(segments.size()) + " segments but " +
                     std::to_string(weights.size()) + " weights");
  }
  Tensor total;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    Tensor term = mul_scalar(attention(q, segments[i].keys, segments[i].values), weights[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor lwe_attention(const Tensor& q, std::span<const KeyValue> segments, std::span<const double> weights) {
  std::vector<Tensor> w;
  w.reserve(weights.size());
  for (double x : weights) w.push_back(Tensor::scalar(x));
  return lwe_attention(q, segments, std::span<const Tensor>(w));
}

// ---------------------------------------------------------------------------
// Parameter initialization

namespace {

constexpr double kEmbeddingStd = 0.02;

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = dist(rng_);
    return Tensor(std::move(shape), std::move(data), true);
  }

  // Glorot/Xavier uniform for a [fan_in x fan_out] matrix.
  Tensor xavier(std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> data(fan_in * fan_out);
    for (auto& v : data) v = dist(rng_);
    return Tensor({fan_in, fan_out}, std::move(data), true);
  }

  LinearParams linear(std::size_t in, std::size_t out) { return {xavier(in, out), Tensor::zeros({out}, true)}; }

  LayerNormParams norm(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

  AttentionParams attention(std::size_t d) { return {xavier(d, d), xavier(d, d), xavier(d, d), xavier(d, d)}; }

  FeedForwardParams ffn(std::size_t d, std::size_t d_ff) { return {linear(d, d_ff), linear(d_ff, d)}; }

  LatentBlockParams latent_block(std::size_t d, std::size_t d_ff) {
    LatentBlockParams b;
    b.attn = attention(d);
    b.attn_norm = norm(d);
    b.ffn = ffn(d, d_ff);
    b.ffn_norm = norm(d);
    return b;
  }

 private:
  std::mt19937_64 rng_;
};

void push_linear(std::vector<NamedTensor>& out, const std::string& name, const LinearParams& p) {
  out.emplace_back(name + ".weight", p.weight);
  out.emplace_back(name + ".bias", p.bias);
}

void push_norm(std::vector<NamedTensor>& out, const std::string& name, const LayerNormParams& p) {
  out.emplace_back(name + ".gamma", p.gamma);
  out.emplace_back(name + ".beta", p.beta);
}

void push_attention(std::vector<NamedTensor>& out, const std::string& name, const AttentionParams& p) {
  out.emplace_back(name + ".wq", p.wq);
  out.emplace_back(name + ".wk", p.wk);
  out.emplace_back(name + ".wv", p.wv);
  out.emplace_back(name + ".wo", p.wo);
}

void push_ffn(std::vector<NamedTensor>& out, const std::string& name, const FeedForwardParams& p) {
  push_linear(out, name + ".in", p.in);
  push_linear(out, name + ".out", p.out);
}

void push_latent_block(std::vector<NamedTensor>& out, const std::string& name, const LatentBlockParams& p) {
  push_attention(out, name + ".attn", p.attn);
  push_norm(out, name + ".attn_norm", p.attn_norm);
  push_ffn(out, name + ".ffn", p.ffn);
  push_norm(out, name + ".ffn_norm", p.ffn_norm);
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  std::vector<Tensor> parts(n, row);
  return concat_rows(parts);
}

}  // namespace

CklModel::CklModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto d = config_.d_model, d_ff = config_.d_ff, vocab = config_.vocab_size;
  Initializer init(seed);
  params_.token_embedding = init.normal({vocab, d}, kEmbeddingStd);
  params_.source_positions = init.normal({config_.max_source_len, d}, kEmbeddingStd);
  params_.target_positions = init.normal({config_.max_target_len, d}, kEmbeddingStd);
  params_.source_embed_norm = init.norm(d);
  params_.target_embed_norm = init.norm(d);
  for (std::size_t i = 0; i < config_.n_encoder_layers; ++i) {
    EncoderLayerParams layer;
    layer.self_attn = init.attention(d);
    layer.self_attn_norm = init.norm(d);
    layer.ffn = init.ffn(d, d_ff);
    layer.ffn_norm = init.norm(d);
    params_.encoder.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.n_decoder_layers; ++i) {
    DecoderLayerParams layer;
    layer.self_attn = init.attention(d);
    layer.self_attn_norm = init.norm(d);
    layer.cross_attn = init.attention(d);
    layer.cross_attn_norm = init.norm(d);
    layer.ffn = init.ffn(d, d_ff);
    layer.ffn_norm = init.norm(d);
    params_.decoder.push_back(std::move(layer));
  }
  params_.latent.context_latent = init.normal({1, d}, kEmbeddingStd);
  params_.latent.knowledge_latent = init.normal({1, d}, kEmbeddingStd);
  params_.latent.clwr_head = init.linear(d, 1);
  params_.latent.clwk_head = init.linear(d, 1);
  params_.latent.klw_head = init.linear(d, 1);
  params_.clw_block = init.latent_block(d, d_ff);
  params_.ck_dep_block = init.latent_block(d, d_ff);
  params_.klw_block = init.latent_block(d, d_ff);
  params_.output_projection = init.linear(d, vocab);
}

std::vector<NamedTensor> CklModel::named_parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("token_embedding", params_.token_embedding);
  out.emplace_back("source_positions", params_.source_positions);
  out.emplace_back("target_positions", params_.target_positions);
  push_norm(out, "source_embed_norm", params_.source_embed_norm);
  push_norm(out, "target_embed_norm", params_.target_embed_norm);
  for (std::size_t i = 0; i < params_.encoder.size(); ++i) {
    const auto prefix = "encoder." + std::to_string(i);
    const auto& layer = params_.encoder[i];
    push_attention(out, prefix + ".self_attn", layer.self_attn);
    push_norm(out, prefix + ".self_attn_norm", layer.self_attn_norm);
    push_ffn(out, prefix + ".ffn", layer.ffn);
    push_norm(out, prefix + ".ffn_norm", layer.ffn_norm);
  }
  for (std::size_t i = 0; i < params_.decoder.size(); ++i) {
    const auto prefix = "decoder." + std::to_string(i);
    const auto& layer = params_.decoder[i];
    push_attention(out, prefix + ".self_attn", layer.self_attn);
    push_norm(out, prefix + ".self_attn_norm", layer.self_attn_norm);
    push_attention(out, prefix + ".cross_attn", layer.cross_attn);
    push_norm(out, prefix + ".cross_attn_norm", layer.cross_attn_norm);
    push_ffn(out, prefix + ".ffn", layer.ffn);
    push_norm(out, prefix + ".ffn_norm", layer.ffn_norm);
  }
  out.emplace_back("latent.context", params_.latent.context_latent);
  out.emplace_back("latent.knowledge", params_.latent.knowledge_latent);
  push_linear(out, "latent.clwr_head", params_.latent.clwr_head);
  push_linear(out, "latent.clwk_head", params_.latent.clwk_head);
  push_linear(out, "latent.klw_head", params_.latent.klw_head);
  push_latent_block(out, "clw_block", params_.clw_block);
  push_latent_block(out, "ck_dep_block", params_.ck_dep_block);
  push_latent_block(out, "klw_block", params_.klw_block);
  push_linear(out, "output_projection", params_.output_projection);
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor SegmentedEncoding::context(std::size_t i) const {
  const auto& v = context_segments.at(i);
  return slice_rows(full_rep, v.offset, v.length);
}

Tensor SegmentedEncoding::knowledge(std::size_t j) const {
  const auto& v = knowledge_segments.at(j);
  return slice_rows(full_rep, v.offset, v.length);
}

Tensor CklModel::embed(std::span<const int> ids, const Tensor& positions, const LayerNormParams& norm) const {
  Tensor tokens = embedding_lookup(params_.token_embedding, ids);
  Tensor pos = slice_rows(positions, 0, ids.size());
  return layer_norm(add(tokens, pos), norm.gamma, norm.beta);
}

Tensor CklModel::feed_forward(const FeedForwardParams& ffn, const Tensor& x) const {
  Tensor hidden = gelu(add_row(matmul(x, ffn.in.weight), ffn.in.bias));
  return add_row(matmul(hidden, ffn.out.weight), ffn.out.bias);
}

Tensor CklModel::self_attention(const AttentionParams& attn, const Tensor& x, bool causal) const {
  const auto heads = config_.n_heads, dh = config_.d_model / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(x, attn.wq), k = matmul(x, attn.wk), v = matmul(x, attn.wv);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh), kh = slice_cols(k, h * dh, dh), vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), s);
    Tensor probs = causal ? causal_softmax(scores) : softmax_lastdim(scores);
    outputs.push_back(matmul(probs, vh));
  }
  return matmul(heads == 1 ? outputs[0] : concat_cols(outputs), attn.wo);
}

Tensor CklModel::lwe_cross_attention(const AttentionParams& attn, const Tensor& x, const SegmentedEncoding& enc,
                                     const Tensor& clwr, const Tensor& klw) const {
  const auto heads = config_.n_heads, dh = config_.d_model / heads;
  const auto m = enc.context_segments.size(), l = enc.knowledge_segments.size();
  Tensor q = matmul(x, attn.wq);
  Tensor k = matmul(enc.full_rep, attn.wk);
  Tensor v = matmul(enc.full_rep, attn.wv);

  std::vector<SegmentView> views(enc.context_segments);
  views.insert(views.end(), enc.knowledge_segments.begin(), enc.knowledge_segments.end());
  std::vector<Tensor> weights;
  weights.reserve(m + l);
  for (std::size_t i = 0; i < m; ++i) weights.push_back(element(clwr, i));
  for (std::size_t j = 0; j < l; ++j) weights.push_back(element(klw, j));

  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor kh = slice_cols(k, h * dh, dh), vh = slice_cols(v, h * dh, dh);
    std::vector<KeyValue> segments;
    segments.reserve(views.size());
    for (const auto& view : views) {
      segments.push_back({slice_rows(kh, view.offset, view.length), slice_rows(vh, view.offset, view.length)});
    }
    outputs.push_back(lwe_attention(slice_cols(q, h * dh, dh), segments, weights));
  }
  return matmul(heads == 1 ? outputs[0] : concat_cols(outputs), attn.wo);
}

Tensor CklModel::latent_block(const LatentBlockParams& block, const Tensor& query, const Tensor& attn_out) const {
  Tensor u = layer_norm(add(query, attn_out), block.attn_norm.gamma, block.attn_norm.beta);
  return layer_norm(add(u, feed_forward(block.ffn, u)), block.ffn_norm.gamma, block.ffn_norm.beta);
}

// Per-segment single-head attention outputs of a [1 x d] latent query, each
// already through the output projection. Returns one [1 x d] row per segment.
std::vector<Tensor> CklModel::segment_scores(const LatentBlockParams& block, const Tensor& query,
                                             const Tensor& memory, std::span<const SegmentView> segments) const {
  Tensor q = matmul(query, block.attn.wq);
  Tensor k = matmul(memory, block.attn.wk);
  Tensor v = matmul(memory, block.attn.wv);
  std::vector<Tensor> rows;
  rows.reserve(segments.size());
  for (const auto& view : segments) {
    rows.push_back(attention(q, slice_rows(k, view.offset, view.length), slice_rows(v, view.offset, view.length)));
  }
  return rows;
}

// One sigmoid score per segment: the latent query attends to each segment on
// its own, goes through the block, and the head maps the d-vector to a scalar.
Tensor CklModel::latent_scores(const LatentBlockParams& block, const LinearParams& head, const Tensor& query,
                               const Tensor& memory, std::span<const SegmentView> segments) const {
  auto rows = segment_scores(block, query, memory, segments);
  Tensor attn_out = matmul(concat_rows(rows), block.attn.wo);
  Tensor h = latent_block(block, repeat_rows(query, segments.size()), attn_out);
  return reshape(sigmoid(add_row(matmul(h, head.weight), head.bias)), {segments.size()});
}

Tensor CklModel::latent_attention(const AttentionParams& attn, const Tensor& query, const Tensor& memory,
                                  std::span<const SegmentView> segments, const Tensor* weights) const {
  Tensor q = matmul(query, attn.wq);
  Tensor k = matmul(memory, attn.wk);
  Tensor v = matmul(memory, attn.wv);
  std::vector<KeyValue> kv;
  std::vector<Tensor> w;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    kv.push_back({slice_rows(k, segments[i].offset, segments[i].length),
                  slice_rows(v, segments[i].offset, segments[i].length)});
    w.push_back(weights ? element(*weights, i) : Tensor::scalar(1.0));
  }
  return matmul(lwe_attention(q, kv, w), attn.wo);
}

// ---------------------------------------------------------------------------
// Forward passes

SegmentedEncoding CklModel::encode(const EncodedSample& sample) const {
  if (sample.context_ids.empty() || sample.knowledge_ids.empty()) {
    throw std::invalid_argument("encode: sample needs at least one context and one knowledge segment");
  }
  const IdList source = sample.source_ids();
  if (source.size() > config_.max_source_len) {
    throw std::invalid_argument("encode: source length " + std::to_string(source.size()) + " exceeds max_source_len " +
                                std::to_string(config_.max_source_len));
  }
  SegmentedEncoding enc;
  Tensor x = embed(source, params_.source_positions, params_.source_embed_norm);
  for (const auto& layer : params_.encoder) {
    x = layer_norm(add(x, self_attention(layer.self_attn, x, false)), layer.self_attn_norm.gamma,
                   layer.self_attn_norm.beta);
    x = layer_norm(add(x, feed_forward(layer.ffn, x)), layer.ffn_norm.gamma, layer.ffn_norm.beta);
  }
  enc.full_rep = x;
  std::size_t offset = 0;
  for (const auto& seg : sample.context_ids) {
    enc.context_segments.push_back({offset, seg.size()});
    offset += seg.size() + 1;
  }
  for (const auto& seg : sample.knowledge_ids) {
    enc.knowledge_segments.push_back({offset, seg.size()});
    offset += seg.size() + 1;
  }
  return enc;
}

std::pair<Tensor, Tensor> CklModel::clw_generate(const SegmentedEncoding& enc) const {
  const auto& block = params_.clw_block;
  const auto& latent = params_.latent;
  const auto m = enc.context_segments.size();
  if (m == 0) throw std::invalid_argument("clw_generate: no context segments");
  auto rows = segment_scores(block, latent.context_latent, enc.full_rep, enc.context_segments);
  Tensor attn_out = matmul(concat_rows(rows), block.attn.wo);
  Tensor h = latent_block(block, repeat_rows(latent.context_latent, m), attn_out);
  Tensor clwr = reshape(sigmoid(add_row(matmul(h, latent.clwr_head.weight), latent.clwr_head.bias)), {m});
  Tensor clwk = reshape(sigmoid(add_row(matmul(h, latent.clwk_head.weight), latent.clwk_head.bias)), {m});
  return {clwr, clwk};
}

Tensor CklModel::ck_dep(const Tensor& latent, const SegmentedEncoding& enc, const Tensor& clwk) const {
  if (clwk.numel() != enc.context_segments.size()) {
    throw ShapeError("ck_dep: " + std::to_string(clwk.numel()) + " weights for " +
                     std::to_string(enc.context_segments.size()) + " context segments");
  }
  const auto& block = params_.ck_dep_block;
  Tensor attn_out = latent_attention(block.attn, latent, enc.full_rep, enc.context_segments, &clwk);
  return latent_block(block, latent, attn_out);
}

Tensor CklModel::klw_generate(const SegmentedEncoding& enc, const Tensor& clwk, bool use_ck_dep) const {
  if (enc.knowledge_segments.empty()) throw std::invalid_argument("klw_generate: no knowledge segments");
  Tensor z = params_.latent.knowledge_latent;
  if (use_ck_dep) z = ck_dep(z, enc, clwk);
  return latent_scores(params_.klw_block, params_.latent.klw_head, z, enc.full_rep, enc.knowledge_segments);
}

Tensor CklModel::decoder_forward(std::span<const int> prefix, const SegmentedEncoding& enc, const Tensor& clwr,
                                 const Tensor& klw, bool use_cross_attention) const {
  if (prefix.empty()) throw std::invalid_argument("decoder_forward: empty prefix");
  if (prefix.size() > config_.max_target_len) {
    throw std::invalid_argument("decoder_forward: prefix length " + std::to_string(prefix.size()) +
                                " exceeds max_target_len " + std::to_string(config_.max_target_len));
  }
  if (clwr.numel() != enc.context_segments.size() || klw.numel() != enc.knowledge_segments.size()) {
    throw ShapeError("decoder_forward: latent weight lengths do not match the segment counts");
  }
  Tensor x = embed(prefix, params_.target_positions, params_.target_embed_norm);
  for (const auto& layer : params_.decoder) {
    x = layer_norm(add(x, self_attention(layer.self_attn, x, true)), layer.self_attn_norm.gamma,
                   layer.self_attn_norm.beta);
    if (use_cross_attention) {
      x = layer_norm(add(x, lwe_cross_attention(layer.cross_attn, x, enc, clwr, klw)), layer.cross_attn_norm.gamma,
                     layer.cross_attn_norm.beta);
    } else {
      x = layer_norm(x, layer.cross_attn_norm.gamma, layer.cross_attn_norm.beta);
    }
    x = layer_norm(add(x, feed_forward(layer.ffn, x)), layer.ffn_norm.gamma, layer.ffn_norm.beta);
  }
  return add_row(matmul(x, params_.output_projection.weight), params_.output_projection.bias);
}

LatentWeights CklModel::latent_weights(const EncodedSample& sample) const {
  SegmentedEncoding enc = encode(sample);
  auto [clwr, clwk] = clw_generate(enc);
  Tensor klw = klw_generate(enc, clwk, config_.use_ck_dep);
  return {clwr, clwk, klw};
}

ForwardResult CklModel::forward(const EncodedSample& sample) const {
  if (sample.response_ids.size() < 2) throw std::invalid_argument("forward: response needs BOS and at least one token");
  ForwardResult result;
  result.encoding = encode(sample);
  auto [clwr, clwk] = clw_generate(result.encoding);
  Tensor klw = klw_generate(result.encoding, clwk, config_.use_ck_dep);
  std::span<const int> prefix(sample.response_ids.data(), sample.response_ids.size() - 1);
  result.logits = decoder_forward(prefix, result.encoding, clwr, klw);
  result.weights = {clwr, clwk, klw};
  return result;
}

namespace {

std::vector<double> last_row_log_softmax(const Tensor& logits) {
  const auto t = logits.rows(), v = logits.cols();
  auto row = logits.data().subspan((t - 1) * v, v);
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double x : row) total += std::exp(x - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(v);
  for (std::size_t i = 0; i < v; ++i) out[i] = row[i] - lse;
  return out;
}

struct Hypothesis {
  IdList tokens;  // generated tokens, excluding BOS
  double log_prob = 0.0;
  bool finished = false;

  double normalized() const { return log_prob / static_cast<double>(std::max<std::size_t>(1, tokens.size())); }
};

}  // namespace

IdList CklModel::generate(const EncodedSample& sample, const DecodeOptions& options) const {
  NoGradScope no_grad;
  const std::size_t max_len = std::min(options.max_len, config_.max_target_len);
  if (max_len == 0) return {};
  SegmentedEncoding enc = encode(sample);
  auto [clwr, clwk] = clw_generate(enc);
  Tensor klw = klw_generate(enc, clwk, config_.use_ck_dep);

  auto step = [&](const IdList& generated) {
    IdList prefix{Vocabulary::kBos};
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    return last_row_log_softmax(decoder_forward(prefix, enc, clwr, klw));
  };

  if (options.mode == DecodeOptions::Mode::kGreedy) {
    IdList out;
    while (out.size() < max_len) {
      auto logp = step(out);
      const int next = static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
      out.push_back(next);
      if (next == Vocabulary::kEos) break;
    }
    return out;
  }

  const std::size_t k = std::max<std::size_t>(1, options.beam_size);
  std::vector<Hypothesis> beams{Hypothesis{}};
  std::vector<Hypothesis> finished;
  while (!beams.empty()) {
    struct Candidate {
      double log_prob;
      std::size_t beam;
      int token;
    };
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      auto logp = step(beams[b].tokens);
      for (std::size_t t = 0; t < logp.size(); ++t) {
        candidates.push_back({beams[b].log_prob + logp[t], b, static_cast<int>(t)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      if (next.size() + finished.size() >= k) break;
      Hypothesis h = beams[c.beam];
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.finished = c.token == Vocabulary::kEos || h.tokens.size() >= max_len;
      (h.finished ? finished : next).push_back(std::move(h));
    }
    beams = std::move(next);
  }
  const auto best = std::max_element(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.normalized() < b.normalized();
  });
  return best->tokens;
}

}  // namespace ckl
