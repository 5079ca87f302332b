#include "ckl/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace ckl {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  auto n = data.size();
  return Tensor({n}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows() needs a matrix, got " + shape_to_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols() needs a matrix, got " + shape_to_string(shape()));
  return impl_->shape[1];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  auto c = cols();
  if (row >= rows() || col >= c) throw std::out_of_range("tensor index out of range");
  return impl_->data[row * c + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single element, got " + shape_to_string(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->accumulate_grad_storage();
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

// ---------------------------------------------------------------------------

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn backward) {
  if (consumed_) throw std::logic_error("cannot record on a tape after backward()");
  Record rec;
  rec.op = std::string(op);
  rec.inputs.reserve(inputs.size());
  for (auto& t : inputs) rec.inputs.push_back(t.impl());
  rec.output = output.impl();
  rec.backward = std::move(backward);
  output.impl()->requires_grad = true;
  output.impl()->node_id = static_cast<std::int64_t>(records_.size());
  records_.push_back(std::move(rec));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("backward() already ran on this tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  auto id = loss.node_id();
  if (id < 0 || static_cast<std::size_t>(id) >= records_.size() ||
      records_[static_cast<std::size_t>(id)].output != loss.impl()) {
    throw std::logic_error("backward() loss was not produced on this tape");
  }
  consumed_ = true;
  loss.impl()->grad.assign(1, 1.0);
  for (std::size_t i = static_cast<std::size_t>(id) + 1; i-- > 0;) {
    auto& rec = records_[i];
    if (rec.output->grad.empty()) continue;
    rec.backward();
  }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

}  // namespace ckl
