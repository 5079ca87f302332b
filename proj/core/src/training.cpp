#include "ckl/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "ckl/errors.hpp"
#include "ckl/ops.hpp"

namespace ckl {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive, got " + std::to_string(learning_rate));
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw std::invalid_argument("data_fraction must be in (0, 1], got " + std::to_string(data_fraction));
  }
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw std::invalid_argument("grad_clip must be >= 0");
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel()) throw ShapeError("adam_step: moment shape mismatch at tensor " + std::to_string(i));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has_grad = params[i].has_grad();
    auto grad = has_grad ? params[i].mutable_grad() : std::span<double>{};
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = has_grad ? grad[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.mutable_grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

std::vector<TrainingExample> prepare_examples(const std::vector<DialogueSample>& samples, const Vocabulary& vocab,
                                              const ModelConfig& config) {
  const auto enc_config = config.encode_config();
  std::vector<TrainingExample> out;
  out.reserve(samples.size());
  std::vector<TokenizedSample> tokenized;
  tokenized.reserve(samples.size());
  for (const auto& s : samples) {
    TrainingExample ex;
    ex.sample = encode_sample(s, vocab, enc_config);
    tokenized.push_back(ex.sample.tokens);
    out.push_back(std::move(ex));
  }
  const auto index = TfIdfIndex::from_samples(tokenized);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].labels = build_pseudo_gt(tokenized[i], index, config.top_n);
  return out;
}

std::size_t effective_sample_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("data fraction must be in (0, 1]");
  // The tolerance keeps products like 0.7 * 10 = 7.000000000000001 at 7.
  const double k = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, k)));
}

namespace {

std::vector<double> as_doubles(const std::vector<int>& bits) { return {bits.begin(), bits.end()}; }

}  // namespace

std::array<Tensor, kNumLosses> sample_losses(const CklModel& model, const TrainingExample& example) {
  const auto result = model.forward(example.sample);
  std::array<Tensor, kNumLosses> losses;
  losses[kLossClwr] = mse(result.weights.clwr, as_doubles(example.labels.gt_clwr));
  losses[kLossClwk] = mse(result.weights.clwk, as_doubles(example.labels.gt_clwk));
  losses[kLossKlw] = mse(result.weights.klw, as_doubles(example.labels.gt_klw));
  const auto& r = example.sample.response_ids;
  losses[kLossNll] = nll(result.logits, std::span<const int>(r.data() + 1, r.size() - 1));
  return losses;
}

void write_trace_header(std::ostream& out, std::size_t effective_samples) {
  out << "# effective_samples=" << effective_samples << '\n';
  out << "step,l_clwr,l_clwk,l_klw,l_nll,awl_total,s1,s2,s3,s4\n";
}

void write_trace_row(std::ostream& out, const LossTraceRow& row) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17) << row.step;
  for (double l : row.losses) out << ',' << l;
  out << ',' << row.total;
  for (double s : row.s) out << ',' << s;
  out << '\n';
  out.flags(flags);
  out.precision(precision);
}

LossFlags loss_flags(const ModelConfig& config) {
  return {config.use_loss_clwr, config.use_loss_clwk, config.use_loss_klw};
}

TrainResult train(CklModel& model, AwlParams& awl, std::span<const TrainingExample> examples,
                  const TrainingConfig& config, std::ostream* trace,
                  const std::function<void(const LossTraceRow&)>& on_step) {
  config.validate();
  if (examples.empty()) throw std::invalid_argument("train: no training examples");
  TrainResult result;
  result.effective_samples = effective_sample_count(examples.size(), config.data_fraction);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(result.effective_samples);

  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  for (auto& s : awl.s) params.push_back(s);
  for (auto& p : params) p.zero_grad();

  if (trace) write_trace_header(*trace, result.effective_samples);
  const auto flags = loss_flags(model.config());
  AdamState adam;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (config.max_steps > 0 && step >= config.max_steps) return result;
      ++step;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      LossTraceRow row;
      row.step = step;
      try {
        Tape tape;
        TapeScope scope(tape);
        std::array<Tensor, kNumLosses> sums;
        for (std::size_t b = start; b < end; ++b) {
          auto losses = sample_losses(model, examples[order[b]]);
          for (std::size_t i = 0; i < kNumLosses; ++i) sums[i] = sums[i].defined() ? add(sums[i], losses[i]) : losses[i];
        }
        std::array<Tensor, kNumLosses> means;
        for (std::size_t i = 0; i < kNumLosses; ++i) {
          means[i] = scale(sums[i], inv_batch);
          row.losses[i] = means[i].item();
        }
        Tensor total = ckl::awl(means, awl, flags);
        row.total = total.item();
        if (!std::isfinite(row.total)) throw NumericError("non-finite total loss");
        tape.backward(total);
      } catch (const NumericError& e) {
        throw TrainingAborted(step, e.what());
      }
      const double norm = clip_grad_norm(params, config.grad_clip);
      if (!std::isfinite(norm)) throw TrainingAborted(step, "non-finite gradient norm");
      adam_step(params, adam, config.learning_rate);
      for (auto& p : params) p.zero_grad();
      for (std::size_t i = 0; i < kNumLosses; ++i) row.s[i] = awl.s[i].item();
      if (trace) write_trace_row(*trace, row);
      if (on_step) on_step(row);
      result.trace.push_back(row);
      result.steps = step;
    }
  }
  return result;
}

}  // namespace ckl
