#pragma once

#include <array>
#include <span>

#include "ckl/tensor.hpp"

namespace ckl {

/// Mean squared error over elements. `gt` is a constant target.
Tensor mse(const Tensor& pred, std::span<const double> gt);

/// Summed negative log-likelihood of `targets` under row-wise softmax of
/// `logits` ([T x V]), evaluated with log-sum-exp.
Tensor nll(const Tensor& logits, std::span<const int> targets);

enum LossIndex : std::size_t { kLossClwr = 0, kLossClwk = 1, kLossKlw = 2, kLossNll = 3, kNumLosses = 4 };

/// Log-variance parameters s_i = ln(delta_i^2), one [1] tensor per loss.
struct AwlParams {
  std::array<Tensor, kNumLosses> s;

  static AwlParams zeros();
};

struct LossFlags {
  bool clwr = true;
  bool clwk = true;
  bool klw = true;

  bool enabled(std::size_t i) const;
};

/// sum_{i enabled} exp(-s_i) / 2 * L_i + s_i / 2. The NLL term is always on.
Tensor awl(const std::array<Tensor, kNumLosses>& losses, const AwlParams& params, const LossFlags& flags);

}  // namespace ckl
