#include "ckl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ckl {
namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Gradient buffer of an input, or nullptr when the input is a constant.
double* grad_sink(TensorImpl* t) {
  if (!t->requires_grad) return nullptr;
  t->accumulate_grad_storage();
  return t->grad.data();
}

void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

void require_matrix(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// C[m x n] += A[m x k] . B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T . B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  check_finite(out, "matmul");
  Tensor result({m, n}, std::move(out));
  if (should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), ri = result.impl();
    active_tape()->record("matmul", {a, b}, result, [ai, bi, ri, m, k, n] {
      if (double* ga = grad_sink(ai.get())) gemm_nt(ri->grad.data(), bi->data.data(), ga, m, n, k);
      if (double* gb = grad_sink(bi.get())) gemm_tn(ai->data.data(), ri->grad.data(), gb, m, k, n);
    });
  }
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  check_finite(out, "matmul_nt");
  Tensor result({m, n}, std::move(out));
  if (should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), ri = result.impl();
    active_tape()->record("matmul_nt", {a, b}, result, [ai, bi, ri, m, k, n] {
      if (double* ga = grad_sink(ai.get())) gemm_nn(ri->grad.data(), bi->data.data(), ga, m, n, k);
      if (double* gb = grad_sink(bi.get())) gemm_tn(ri->grad.data(), ai->data.data(), gb, m, n, k);
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  Tensor result({n, m}, std::move(out));
  if (should_record({&a})) {
    auto ai = a.impl(), ri = result.impl();
    active_tape()->record("transpose", {a}, result, [ai, ri, m, n] {
      double* ga = grad_sink(ai.get());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += ri->grad[j * m + i];
    });
  }
  return result;
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  require_same_shape(a, b, name);
  const auto n = a.numel();
  auto x = a.data(), y = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::kAdd: out[i] = x[i] + y[i]; break;
      case Binary::kSub: out[i] = x[i] - y[i]; break;
      case Binary::kMul: out[i] = x[i] * y[i]; break;
    }
  }
  check_finite(out, name);
  Tensor result(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), ri = result.impl();
    active_tape()->record(name, {a, b}, result, [ai, bi, ri, kind, n] {
      const double* g = ri->grad.data();
      if (double* ga = grad_sink(ai.get())) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += kind == Binary::kMul ? g[i] * bi->data[i] : g[i];
      }
      if (double* gb = grad_sink(bi.get())) {
        for (std::size_t i = 0; i < n; ++i) {
          switch (kind) {
            case Binary::kAdd: gb[i] += g[i]; break;
            case Binary::kSub: gb[i] -= g[i]; break;
            case Binary::kMul: gb[i] += g[i] * ai->data[i]; break;
          }
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  check_finite(out, "scale");
  Tensor result(a.shape(), std::move(out));
  if (should_record({&a})) {
    auto ai = a.impl(), ri = result.impl();
    active_tape()->record("scale", {a}, result, [ai, ri, factor] {
      double* ga = grad_sink(ai.get());
      for (std::size_t i = 0; i < ri->grad.size(); ++i) ga[i] += factor * ri->grad[i];
    });
  }
  return result;
}

Tensor add_scalar(const Tensor& a, double value) {
  require_defined(a, "add_scalar");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  check_finite(out, "add_scalar");
  Tensor result(a.shape(), std::move(out));
  if (should_record({&a})) {
    auto ai = a.impl(), ri = result.impl();
    active_tape()->record("add_scalar", {a}, result, [ai, ri] {
      double* ga = grad_sink(ai.get());
      for (std::size_t i = 0; i < ri->grad.size(); ++i) ga[i] += ri->grad[i];
    });
  }
  return result;
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_defined(a, "mul_scalar");
  require_defined(s, "mul_scalar");
  if (s.numel() != 1) throw ShapeError("mul_scalar: scale must have one element, got " + shape_to_string(s.shape()));
  const double factor = s[0];
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  check_finite(out, "mul_scalar");
  Tensor result(a.shape(), std::move(out));
  if (should_record({&a, &s})) {
    auto ai = a.impl(), si = s.impl(), ri = result.impl();
    active_tape()->record("mul_scalar", {a, s}, result, [ai, si, ri] {
      const double f = si->data[0];
      const auto& g = ri->grad;
      if (double* ga = grad_sink(ai.get())) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += f * g[i];
      }
      if (double* gs = grad_sink(si.get())) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * ai->data[i];
        gs[0] += acc;
      }
    });
  }
  return result;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_defined(x, "add_row");
  require_defined(row, "add_row");
  const auto d = last_dim(x);
  if (row.ndim() != 1 || row.numel() != d) {
    throw ShapeError("add_row: row " + shape_to_string(row.shape()) + " does not match last dimension of " +
                     shape_to_string(x.shape()));
  }
  const auto n = x.numel() / d;
  std::vector<double> out(x.data().begin(), x.data().end());
  auto r = row.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += r[j];
  check_finite(out, "add_row");
  Tensor result(x.shape(), std::move(out));
  if (should_record({&x, &row})) {
    auto xi = x.impl(), bi = row.impl(), ri = result.impl();
    active_tape()->record("add_row", {x, row}, result, [xi, bi, ri, n, d] {
      const auto& g = ri->grad;
      if (double* gx = grad_sink(xi.get())) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (double* gb = grad_sink(bi.get())) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
      }
    });
  }
  return result;
}

namespace {

// Softmax over each last-dimension slice; `visible(row, col)` masks entries.
template <typename Visible>
std::vector<double> softmax_rows(std::span<const double> x, std::size_t rows, std::size_t d, Visible visible) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * d;
    double* o = out.data() + r * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j)
      if (visible(r, j)) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (!visible(r, j)) continue;
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return out;
}

void softmax_backward(const std::vector<double>& y, const std::vector<double>& gy, double* gx, std::size_t rows,
                      std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * d;
    const double* gr = gy.data() + r * d;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += yr[j] * gr[j];
    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += yr[j] * (gr[j] - dot);
  }
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
  require_defined(x, "softmax_lastdim");
  const auto d = last_dim(x);
  const auto rows = x.numel() / d;
  auto out = softmax_rows(x.data(), rows, d, [](std::size_t, std::size_t) { return true; });
  check_finite(out, "softmax_lastdim");
  Tensor result(x.shape(), std::move(out));
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("softmax", {x}, result, [xi, ri, rows, d] {
      softmax_backward(ri->data, ri->grad, grad_sink(xi.get()), rows, d);
    });
  }
  return result;
}

Tensor causal_softmax(const Tensor& scores) {
  require_matrix(scores, "causal_softmax");
  const auto t = scores.rows();
  if (scores.cols() != t) throw ShapeError("causal_softmax: expected a square matrix, got " + shape_to_string(scores.shape()));
  auto out = softmax_rows(scores.data(), t, t, [](std::size_t r, std::size_t c) { return c <= r; });
  check_finite(out, "causal_softmax");
  Tensor result(scores.shape(), std::move(out));
  if (should_record({&scores})) {
    auto xi = scores.impl(), ri = result.impl();
    active_tape()->record("causal_softmax", {scores}, result, [xi, ri, t] {
      softmax_backward(ri->data, ri->grad, grad_sink(xi.get()), t, t);
    });
  }
  return result;
}

namespace {

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(x, name);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  check_finite(out, name);
  Tensor result(x.shape(), std::move(out));
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record(name, {x}, result, [xi, ri, deriv] {
      double* gx = grad_sink(xi.get());
      for (std::size_t i = 0; i < ri->grad.size(); ++i) gx[i] += ri->grad[i] * deriv(xi->data[i], ri->data[i]);
    });
  }
  return result;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  const auto d = last_dim(x);
  if (gamma.ndim() != 1 || gamma.numel() != d || beta.ndim() != 1 || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                     shape_to_string(gamma.shape()) + " and " + shape_to_string(beta.shape()));
  }
  if (eps < 0.0) throw std::invalid_argument("layer_norm: eps must be non-negative");
  const auto rows = x.numel() / d;
  auto in = x.data();
  auto g = gamma.data(), b = beta.data();
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * g[j] + b[j];
    }
  }
  check_finite(out, "layer_norm");
  Tensor result(x.shape(), std::move(out));
  if (should_record({&x, &gamma, &beta})) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), ri = result.impl();
    active_tape()->record("layer_norm", {x, gamma, beta}, result,
                          [xi, gi, bi, ri, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                            const auto& gy = ri->grad;
                            if (double* gg = grad_sink(gi.get())) {
                              for (std::size_t i = 0; i < gy.size(); ++i) gg[i % d] += gy[i] * xhat[i];
                            }
                            if (double* gb = grad_sink(bi.get())) {
                              for (std::size_t i = 0; i < gy.size(); ++i) gb[i % d] += gy[i];
                            }
                            if (double* gx = grad_sink(xi.get())) {
                              const double dd = static_cast<double>(d);
                              for (std::size_t r = 0; r < rows; ++r) {
                                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                                for (std::size_t j = 0; j < d; ++j) {
                                  const double dxh = gy[r * d + j] * gi->data[j];
                                  sum_dxhat += dxh;
                                  sum_dxhat_xhat += dxh * xhat[r * d + j];
                                }
                                for (std::size_t j = 0; j < d; ++j) {
                                  const double dxh = gy[r * d + j] * gi->data[j];
                                  gx[r * d + j] += inv_std[r] / dd *
                                                   (dd * dxh - sum_dxhat - xhat[r * d + j] * sum_dxhat_xhat);
                                }
                              }
                            }
                          });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding_lookup");
  if (ids.empty()) throw ShapeError("embedding_lookup: empty id list");
  const auto vocab = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) + " outside [0, " +
                              std::to_string(vocab) + ")");
    }
  }
  std::vector<double> out(ids.size() * d);
  auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Tensor result({ids.size(), d}, std::move(out));
  if (should_record({&table})) {
    auto ti = table.impl(), ri = result.impl();
    std::vector<int> rows(ids.begin(), ids.end());
    active_tape()->record("embedding_lookup", {table}, result, [ti, ri, rows = std::move(rows), d] {
      double* gt = grad_sink(ti.get());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t base = static_cast<std::size_t>(rows[i]) * d;
        for (std::size_t j = 0; j < d; ++j) gt[base + j] += ri->grad[i * d + j];
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("reshape", {x}, result, [xi, ri] {
      double* gx = grad_sink(xi.get());
      for (std::size_t i = 0; i < ri->grad.size(); ++i) gx[i] += ri->grad[i];
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t offset, std::size_t count) {
  require_defined(x, "slice_rows");
  const auto n = x.dim(0);
  if (count == 0 || offset + count > n) {
    throw ShapeError("slice_rows: rows [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                     ") outside " + shape_to_string(x.shape()));
  }
  const auto stride = x.numel() / n;
  Shape shape = x.shape();
  shape[0] = count;
  auto src = x.data().subspan(offset * stride, count * stride);
  Tensor result(std::move(shape), std::vector<double>(src.begin(), src.end()));
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("slice_rows", {x}, result, [xi, ri, offset, stride] {
      double* gx = grad_sink(xi.get()) + offset * stride;
      for (std::size_t i = 0; i < ri->grad.size(); ++i) gx[i] += ri->grad[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t count) {
  require_matrix(x, "slice_cols");
  const auto m = x.rows(), n = x.cols();
  if (count == 0 || offset + count > n) {
    throw ShapeError("slice_cols: cols [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                     ") outside " + shape_to_string(x.shape()));
  }
  std::vector<double> out(m * count);
  auto src = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = src[i * n + offset + j];
  Tensor result({m, count}, std::move(out));
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("slice_cols", {x}, result, [xi, ri, m, n, offset, count] {
      double* gx = grad_sink(xi.get());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) gx[i * n + offset + j] += ri->grad[i * count + j];
    });
  }
  return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  for (const auto& p : parts) require_defined(p, "concat_rows");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total_rows = 0;
  std::vector<double> out;
  bool record = false;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat_rows: trailing shape mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total_rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    record = record || p.requires_grad();
  }
  Shape shape = parts[0].shape();
  shape[0] = total_rows;
  Tensor result(std::move(shape), std::move(out));
  if (record && active_tape() != nullptr) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto ri = result.impl();
    active_tape()->record("concat_rows", inputs, result, [impls, ri] {
      std::size_t offset = 0;
      for (const auto& pi : impls) {
        if (double* g = grad_sink(pi.get())) {
          for (std::size_t i = 0; i < pi->data.size(); ++i) g[i] += ri->grad[offset + i];
        }
        offset += pi->data.size();
      }
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  for (const auto& p : parts) require_matrix(p, "concat_cols");
  const auto m = parts[0].rows();
  std::size_t total_cols = 0;
  bool record = false;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total_cols += p.cols();
    record = record || p.requires_grad();
  }
  std::vector<double> out(m * total_cols);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto c = p.cols();
    auto src = p.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total_cols + col + j] = src[i * c + j];
    col += c;
  }
  Tensor result({m, total_cols}, std::move(out));
  if (record && active_tape() != nullptr) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto ri = result.impl();
    active_tape()->record("concat_cols", inputs, result, [impls, ri, m, total_cols] {
      std::size_t col = 0;
      for (const auto& pi : impls) {
        const auto c = pi->shape[1];
        if (double* g = grad_sink(pi.get())) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += ri->grad[i * total_cols + col + j];
        }
        col += c;
      }
    });
  }
  return result;
}

Tensor element(const Tensor& x, std::size_t index) {
  require_defined(x, "element");
  if (index >= x.numel()) {
    throw ShapeError("element: index " + std::to_string(index) + " outside " + shape_to_string(x.shape()));
  }
  Tensor result = Tensor::scalar(x[index]);
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("element", {x}, result, [xi, ri, index] { grad_sink(xi.get())[index] += ri->grad[0]; });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  if (!std::isfinite(acc)) throw NumericError("sum: non-finite value in output");
  Tensor result = Tensor::scalar(acc);
  if (should_record({&x})) {
    auto xi = x.impl(), ri = result.impl();
    active_tape()->record("sum", {x}, result, [xi, ri] {
      double* gx = grad_sink(xi.get());
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += ri->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace ckl
