#pragma once

#include <span>
#include <vector>

#include "ckl/tensor.hpp"

// Differentiable tensor ops. Every op records itself on the active tape when
// at least one input requires a gradient. Broadcasting is limited to the
// explicit scalar and row-bias forms below; any other mismatch is a
// ShapeError.
namespace ckl {

inline constexpr double kLayerNormEps = 1e-5;

// Matrix products on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] . [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k] . [n x k]^T
Tensor transpose(const Tensor& a);

// Elementwise, shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// Multiplies every element of `a` by the single element of `s`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// Adds `row` (shape [d]) to each last-dimension slice of `x`.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor softmax_lastdim(const Tensor& x);
/// Row-wise softmax of a square score matrix where row i only sees columns <= i.
Tensor causal_softmax(const Tensor& scores);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

/// Gathers rows of `table` ([V x d]); backward scatters (and sums repeats).
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t offset, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
/// Single element `index` of a flat view, as a [1] tensor.
Tensor element(const Tensor& x, std::size_t index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace ckl
