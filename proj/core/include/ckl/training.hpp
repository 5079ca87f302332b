#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ckl/corpus.hpp"
#include "ckl/losses.hpp"
#include "ckl/model.hpp"
#include "ckl/weak_supervision.hpp"

namespace ckl {

struct TrainingConfig {
  double learning_rate = 5e-5;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double data_fraction = 1.0;
  std::size_t max_steps = 0;  // 0: no limit
  double grad_clip = 1.0;     // global L2 norm; 0 disables clipping

  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient (an empty gradient counts as zero). Moments are
/// allocated on the first call.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

/// Global L2 norm of all gradients; rescales them in place when it exceeds `max_norm`.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct TrainingExample {
  EncodedSample sample;
  PseudoGroundTruth labels;
};

/// Encodes every sample and builds its pseudo ground truth against a TF-IDF
/// index over the kept knowledge sentences of the whole set.
std::vector<TrainingExample> prepare_examples(const std::vector<DialogueSample>& samples, const Vocabulary& vocab,
                                              const ModelConfig& config);

/// Number of samples used at `fraction`: ceil(fraction * n).
std::size_t effective_sample_count(std::size_t n, double fraction);

/// The four per-sample losses in LossIndex order (all computed, flags ignored).
std::array<Tensor, kNumLosses> sample_losses(const CklModel& model, const TrainingExample& example);

struct LossTraceRow {
  std::size_t step = 0;
  std::array<double, kNumLosses> losses{};
  double total = 0.0;
  std::array<double, kNumLosses> s{};
};

void write_trace_header(std::ostream& out, std::size_t effective_samples);
void write_trace_row(std::ostream& out, const LossTraceRow& row);

struct TrainResult {
  std::size_t effective_samples = 0;
  std::size_t steps = 0;
  std::vector<LossTraceRow> trace;
};

LossFlags loss_flags(const ModelConfig& config);

/// Mini-batch training of `model` and `awl` with Adam. Batch losses are the
/// mean of per-sample losses. When `trace` is set, the CSV trace is streamed
/// to it. Throws TrainingAborted when a loss or gradient becomes non-finite.
TrainResult train(CklModel& model, AwlParams& awl, std::span<const TrainingExample> examples,
                  const TrainingConfig& config, std::ostream* trace = nullptr,
                  const std::function<void(const LossTraceRow&)>& on_step = {});

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
};

/// Writes "CKL1", the model config and every named tensor (model and, when
/// given, AWL parameters) as little-endian binary.
void save_checkpoint(const std::filesystem::path& path, const CklModel& model, const AwlParams* awl = nullptr);

/// Parses a checkpoint file. Throws CheckpointError on bad magic or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

enum class ConfigMatch {
  kStrict,        // every config key must match
  kArchitecture,  // the use_* flags may differ; sizes must match
};

/// Copies checkpoint tensors into `model` (and `awl` when given and present).
/// Nothing is modified unless the whole file validates against the model's
/// config and parameter shapes.
void load_checkpoint(const std::filesystem::path& path, CklModel& model, AwlParams* awl = nullptr,
                     ConfigMatch match = ConfigMatch::kStrict);

/// Describes every config key that differs, or an empty string.
std::string config_mismatch(const ModelConfig& expected, const ModelConfig& actual,
                            ConfigMatch match = ConfigMatch::kStrict);

}  // namespace ckl
