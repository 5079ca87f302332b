#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckl/corpus.hpp"
#include "ckl/tensor.hpp"

namespace ckl {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 2;
  std::size_t n_decoder_layers = 2;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t max_source_len = 1024;
  std::size_t max_target_len = 64;
  std::size_t m_max = 10;
  std::size_t top_n = 1;
  bool use_loss_klw = true;
  bool use_loss_clwr = true;
  bool use_loss_clwk = true;
  bool use_ck_dep = true;

  /// Throws std::invalid_argument when a dimension is zero or d_model is not
  /// divisible by n_heads.
  void validate() const;
  EncodeConfig encode_config() const { return {m_max, max_target_len, max_source_len}; }

  /// Flat key/value view used by checkpoints and config echoes.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& values);
};

// ---------------------------------------------------------------------------
// Attention primitives

/// softmax(q k^T / sqrt(d)) v with d = q.cols(). Single head, no projections.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct KeyValue {
  Tensor keys;
  Tensor values;
};

/// Latent-weight-enhanced attention: sum_i w_i * softmax(q K_i^T / sqrt(d)) V_i.
/// The softmax is taken within each segment; there is no renormalization
/// across segments. Each weight is a one-element tensor.
Tensor lwe_attention(const Tensor& q, std::span<const KeyValue> segments, std::span<const Tensor> weights);
Tensor lwe_attention(const Tensor& q, std::span<const KeyValue> segments, std::span<const double> weights);

// ---------------------------------------------------------------------------
// Parameters

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

/// Bias-free projections, so a zero-weighted segment contributes exactly zero.
struct AttentionParams {
  Tensor wq, wk, wv, wo;  // [d x d]
};

struct FeedForwardParams {
  LinearParams in;   // d -> d_ff
  LinearParams out;  // d_ff -> d
};

struct EncoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams self_attn_norm;
  FeedForwardParams ffn;
  LayerNormParams ffn_norm;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams self_attn_norm;
  AttentionParams cross_attn;  // Context & Knowledge LWE cross-attention
  LayerNormParams cross_attn_norm;
  FeedForwardParams ffn;
  LayerNormParams ffn_norm;
};

/// Single-head cross-attention from a latent query plus FFN, both post-norm residual.
struct LatentBlockParams {
  AttentionParams attn;
  LayerNormParams attn_norm;
  FeedForwardParams ffn;
  LayerNormParams ffn_norm;
};

struct LatentVectorParams {
  Tensor context_latent;    // [1 x d]
  Tensor knowledge_latent;  // [1 x d]
  LinearParams clwr_head;   // d -> 1
  LinearParams clwk_head;   // d -> 1
  LinearParams klw_head;    // d -> 1
};

struct CklParams {
  Tensor token_embedding;   // [V x d]
  Tensor source_positions;  // [max_source_len x d]
  Tensor target_positions;  // [max_target_len x d]
  LayerNormParams source_embed_norm;
  LayerNormParams target_embed_norm;
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  LatentVectorParams latent;
  LatentBlockParams clw_block;     // context latent vector vs each context segment
  LatentBlockParams ck_dep_block;  // knowledge latent vector vs context (LWE, weighted by CLWK)
  LatentBlockParams klw_block;     // knowledge latent vector vs each knowledge segment
  LinearParams output_projection;  // d -> V
};

using NamedTensor = std::pair<std::string, Tensor>;

// ---------------------------------------------------------------------------
// Forward types

struct SegmentView {
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct SegmentedEncoding {
  Tensor full_rep;  // [T x d], T = source length including separators
  std::vector<SegmentView> context_segments;
  std::vector<SegmentView> knowledge_segments;

  Tensor context(std::size_t i) const;
  Tensor knowledge(std::size_t j) const;
};

struct LatentWeights {
  Tensor clwr;  // [m]
  Tensor clwk;  // [m]
  Tensor klw;   // [l]
};

struct ForwardResult {
  Tensor logits;  // [(|R| - 1) x V], predicting response_ids[1..]
  LatentWeights weights;
  SegmentedEncoding encoding;
};

struct DecodeOptions {
  enum class Mode { kGreedy, kBeam };
  Mode mode = Mode::kGreedy;
  std::size_t beam_size = 1;
  std::size_t max_len = 64;
};

/// The CKL encoder / latent-weight generators / LWE decoder.
///
/// Forward passes are const: they record on the calling thread's active tape
/// (if any) and never mutate parameters, so a trained model can serve
/// concurrent decodes.
class CklModel {
 public:
  CklModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  CklParams& params() { return params_; }
  const CklParams& params() const { return params_; }

  /// Every trainable tensor with a stable hierarchical name.
  std::vector<NamedTensor> named_parameters() const;

  SegmentedEncoding encode(const EncodedSample& sample) const;

  /// (CLWR, CLWK), one score per context segment.
  std::pair<Tensor, Tensor> clw_generate(const SegmentedEncoding& enc) const;

  /// CK-Dep step: the knowledge latent vector after context LWE cross-attention.
  Tensor ck_dep(const Tensor& latent, const SegmentedEncoding& enc, const Tensor& clwk) const;

  Tensor klw_generate(const SegmentedEncoding& enc, const Tensor& clwk, bool use_ck_dep) const;

  /// Logits for every prefix position. `use_cross_attention=false` runs the
  /// decoder with the LWE cross-attention sublayer removed.
  Tensor decoder_forward(std::span<const int> prefix, const SegmentedEncoding& enc, const Tensor& clwr,
                         const Tensor& klw, bool use_cross_attention = true) const;

  /// Teacher-forced pass over the sample's response.
  ForwardResult forward(const EncodedSample& sample) const;

  /// Latent weights only (no decoder pass).
  LatentWeights latent_weights(const EncodedSample& sample) const;

  /// Autoregressive decode from BOS. Output excludes BOS and ends with EOS
  /// unless `max_len` tokens were produced first.
  IdList generate(const EncodedSample& sample, const DecodeOptions& options) const;

  /// Single-head latent block: LN(u + FFN(u)) with u = LN(query + attn_out).
  Tensor latent_block(const LatentBlockParams& block, const Tensor& query, const Tensor& attn_out) const;

 private:
  Tensor embed(std::span<const int> ids, const Tensor& positions, const LayerNormParams& norm) const;
  Tensor feed_forward(const FeedForwardParams& ffn, const Tensor& x) const;
  Tensor self_attention(const AttentionParams& attn, const Tensor& x, bool causal) const;
  Tensor lwe_cross_attention(const AttentionParams& attn, const Tensor& x, const SegmentedEncoding& enc,
                             const Tensor& clwr, const Tensor& klw) const;
  Tensor latent_attention(const AttentionParams& attn, const Tensor& query, const Tensor& memory,
                          std::span<const SegmentView> segments, const Tensor* weights) const;
  Tensor latent_scores(const LatentBlockParams& block, const LinearParams& head, const Tensor& query,
                       const Tensor& memory, std::span<const SegmentView> segments) const;
  std::vector<Tensor> segment_scores(const LatentBlockParams& block, const Tensor& query, const Tensor& memory,
                                     std::span<const SegmentView> segments) const;

  ModelConfig config_;
  CklParams params_;
};

}  // namespace ckl
