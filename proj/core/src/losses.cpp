#include "ckl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ckl/ops.hpp"

namespace ckl {

Tensor mse(const Tensor& pred, std::span<const double> gt) {
  if (!pred.defined() || pred.numel() == 0) throw ShapeError("mse: empty prediction");
  if (pred.numel() != gt.size()) {
    throw ShapeError("mse: prediction has " + std::to_string(pred.numel()) + " elements, target has " +
                     std::to_string(gt.size()));
  }
  Tensor target(pred.shape(), std::vector<double>(gt.begin(), gt.end()));
  Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

Tensor nll(const Tensor& logits, std::span<const int> targets) {
  if (!logits.defined() || logits.ndim() != 2) throw ShapeError("nll: logits must be a [T x V] matrix");
  const auto t = logits.rows(), v = logits.cols();
  if (t == 0 || targets.size() != t) {
    throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for " + std::to_string(t) + " rows");
  }
  for (int id : targets) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::out_of_range("nll: target id " + std::to_string(id) + " outside vocabulary of " + std::to_string(v));
    }
  }
  auto x = logits.data();
  std::vector<double> probs(t * v);
  double total = 0.0;
  for (std::size_t r = 0; r < t; ++r) {
    auto row = x.subspan(r * v, v);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < v; ++c) probs[r * v + c] = std::exp(row[c] - lse);
    total += lse - row[static_cast<std::size_t>(targets[r])];
  }
  if (!std::isfinite(total)) throw NumericError("nll: non-finite loss");
  Tensor result = Tensor::scalar(total);
  if (active_tape() != nullptr && logits.requires_grad()) {
    auto li = logits.impl(), ri = result.impl();
    std::vector<int> ids(targets.begin(), targets.end());
    active_tape()->record("nll", {logits}, result, [li, ri, ids = std::move(ids), probs = std::move(probs), v] {
      li->accumulate_grad_storage();
      const double g = ri->grad[0];
      for (std::size_t r = 0; r < ids.size(); ++r) {
        double* gx = li->grad.data() + r * v;
        const double* p = probs.data() + r * v;
        for (std::size_t c = 0; c < v; ++c) gx[c] += g * p[c];
        gx[static_cast<std::size_t>(ids[r])] -= g;
      }
    });
  }
  return result;
}

AwlParams AwlParams::zeros() {
  AwlParams p;
  for (auto& s : p.s) s = Tensor::zeros({1}, true);
  return p;
}

bool LossFlags::enabled(std::size_t i) const {
  switch (i) {
    case kLossClwr: return clwr;
    case kLossClwk: return clwk;
    case kLossKlw: return klw;
    case kLossNll: return true;
    default: throw std::out_of_range("loss index " + std::to_string(i));
  }
}

Tensor awl(const std::array<Tensor, kNumLosses>& losses, const AwlParams& params, const LossFlags& flags) {
  Tensor total;
  for (std::size_t i = 0; i < kNumLosses; ++i) {
    if (!flags.enabled(i)) continue;
    const Tensor& s = params.s[i];
    if (!losses[i].defined() || losses[i].numel() != 1) throw ShapeError("awl: each loss must be a scalar");
    Tensor weighted = mul(scale(exp(scale(s, -1.0)), 0.5), losses[i]);
    Tensor term = add(weighted, scale(s, 0.5));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

}  // namespace ckl
