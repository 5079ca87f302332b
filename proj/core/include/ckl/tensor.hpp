#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ckl {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes violate an op's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a forward op produces a non-finite value from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::int64_t node_id = -1;  // index of the producing tape record, -1 for leaves

  void accumulate_grad_storage() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

/// Dense row-major float64 array with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage. Ops never
/// mutate their inputs; parameters are mutated only through `mutable_data()`
/// by the optimizer and checkpoint loader.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  std::int64_t node_id() const { return impl_->node_id; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient storage; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// A constant copy of this tensor's values with no lineage.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;

  std::shared_ptr<TensorImpl> impl_;
};

/// Define-by-run record of differentiable ops.
///
/// Records are appended in execution order, so every record's inputs were
/// produced by an earlier record or are leaves. `backward` walks the records
/// once, in reverse. A tape is single-owner and must not be shared across
/// threads; activate it on the current thread with `TapeScope`.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `output` as produced by `op` from `inputs`. The closure reads
  /// the output gradient and accumulates into input gradients.
  void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output,
              BackwardFn backward);

  /// Reverse-mode sweep from a scalar loss produced on this tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const std::string& op_name(std::size_t i) const { return records_.at(i).op; }

 private:
  struct Record {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
};

/// The tape active on the calling thread, or nullptr.
Tape* active_tape();

/// RAII activation of a tape on the current thread. Scopes nest.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// RAII suspension of gradient recording on the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace ckl
