#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ckl/model.hpp"
#include "ckl/ops.hpp"
#include "gradient_suite.hpp"

namespace ckl {
namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "element " << i;
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({}, {}), ShapeError);
  EXPECT_THROW(Tensor({0}, {}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, AccessorsAndGrad) {
  auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}, true);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(t.at(2, 0), std::out_of_range);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad(), std::vector<double>(6, 0.0));
  t.mutable_grad()[1] = 2.0;
  EXPECT_TRUE(t.has_grad());
  t.zero_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Ops, MatmulForward) {
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  expect_values(matmul(a, b), {19, 22, 43, 50});
  expect_values(matmul_nt(a, b), {17, 23, 39, 53});
  expect_values(transpose(a), {1, 3, 2, 4});
  EXPECT_THROW(matmul(a, Tensor::matrix(3, 1, {1, 2, 3})), ShapeError);
}

TEST(Ops, ElementwiseForward) {
  auto a = Tensor::vector({1, -2, 3});
  auto b = Tensor::vector({4, 5, -6});
  expect_values(add(a, b), {5, 3, -3});
  expect_values(sub(a, b), {-3, -7, 9});
  expect_values(mul(a, b), {4, -10, -18});
  expect_values(scale(a, 2.0), {2, -4, 6});
  expect_values(add_scalar(a, 1.0), {2, -1, 4});
  expect_values(mul_scalar(a, Tensor::scalar(-1.0)), {-1, 2, -3});
  expect_values(relu(a), {1, 0, 3});
  expect_values(sum(a), {2});
  expect_values(mean(a), {2.0 / 3.0});
  EXPECT_THROW(add(a, Tensor::vector({1, 2})), ShapeError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  auto x = Tensor::matrix(2, 3, {1, 2, 3, 1000, 1000, 1000});
  auto y = softmax_lastdim(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += y.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_NEAR(y.at(1, 0), 1.0 / 3.0, 1e-15);
}

TEST(Ops, CausalSoftmaxMasksFuture) {
  auto y = causal_softmax(Tensor::matrix(3, 3, {1, 9, 9, 1, 1, 9, 1, 1, 1}));
  expect_values(y, {1, 0, 0, 0.5, 0.5, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(Ops, SigmoidAndGelu) {
  auto s = sigmoid(Tensor::vector({0.0, 40.0, -40.0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_GT(s[1], 0.5);
  EXPECT_LT(s[2], 0.5);
  EXPECT_GT(s[2], 0.0);
  auto g = gelu(Tensor::vector({0.0, 1.0}));
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 0.8413447460685429, 1e-6);
}

TEST(Ops, LayerNormNormalizes) {
  auto x = Tensor::matrix(1, 4, {1, 2, 3, 4});
  auto y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  double mu = 0, var = 0;
  for (auto v : y.data()) mu += v / 4;
  for (auto v : y.data()) var += (v - mu) * (v - mu) / 4;
  EXPECT_NEAR(mu, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.25 / (1.25 + kLayerNormEps), 1e-12);
}

TEST(Ops, EmbeddingLookupAndSlicing) {
  auto table = Tensor::matrix(3, 2, {0, 1, 10, 11, 20, 21});
  const std::vector<int> ids = {2, 0};
  expect_values(embedding_lookup(table, ids), {20, 21, 0, 1});
  const std::vector<int> bad = {3};
  EXPECT_THROW(embedding_lookup(table, bad), std::exception);
  expect_values(slice_rows(table, 1, 2), {10, 11, 20, 21});
  expect_values(slice_cols(table, 1, 1), {1, 11, 21});
  std::vector<Tensor> parts{slice_rows(table, 0, 1), slice_rows(table, 2, 1)};
  expect_values(concat_rows(parts), {0, 1, 20, 21});
  std::vector<Tensor> cols{slice_cols(table, 1, 1), slice_cols(table, 0, 1)};
  expect_values(concat_cols(cols), {1, 0, 11, 10, 21, 20});
  expect_values(element(table, 3), {11});
  EXPECT_EQ(reshape(table, {6}).shape(), Shape{6});
  EXPECT_THROW(reshape(table, {4}), ShapeError);
}

TEST(Ops, NonFiniteOutputThrows) {
  auto big = Tensor::vector({1000.0});
  EXPECT_THROW(exp(big), NumericError);
  EXPECT_THROW(scale(Tensor::vector({1e308}), 10.0), NumericError);
}

TEST(Tape, RecordsOnlyUnderScope) {
  auto a = Tensor::vector({1, 2}, true);
  Tape tape;
  {
    auto y = sum(a);
    EXPECT_EQ(y.node_id(), -1);
  }
  {
    TapeScope scope(tape);
    auto y = sum(mul(a, a));
    EXPECT_EQ(tape.size(), 2u);
    {
      NoGradScope ng;
      sum(a);
    }
    EXPECT_EQ(tape.size(), 2u);
    tape.backward(y);
  }
  expect_values(Tensor::vector(a.grad()), {2, 4});
}

TEST(Tape, BackwardRules) {
  auto a = Tensor::vector({1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  auto y = mul(a, a);
  EXPECT_THROW(tape.backward(y), ShapeError);
  auto s = sum(y);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), std::logic_error);
  EXPECT_THROW(sum(a), std::logic_error);
}

TEST(Tape, GradientsAccumulateOverReuse) {
  auto a = Tensor::scalar(3.0, true);
  Tape tape;
  TapeScope scope(tape);
  auto y = add(mul(a, a), a);  // a^2 + a
  tape.backward(y);
  EXPECT_DOUBLE_EQ(a.grad()[0], 7.0);
}

TEST(Attention, SingleKeyReturnsItsValue) {
  auto q = Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 4});
  auto k = Tensor::matrix(1, 3, {0.5, 0.5, 0.5});
  auto v = Tensor::matrix(1, 3, {7, 8, 9});
  expect_values(attention(q, k, v), {7, 8, 9, 7, 8, 9});
}

TEST(Attention, HandComputedTwoKeys) {
  auto q = Tensor::matrix(1, 1, {1.0});
  auto k = Tensor::matrix(2, 1, {0.0, std::log(3.0)});
  auto v = Tensor::matrix(2, 1, {1.0, 5.0});
  // weights 1/4 and 3/4
  expect_values(attention(q, k, v), {4.0});
}

TEST(GradCheck, EveryOp) {
  for (const auto& [name, r] : testing::op_gradchecks(3)) {
    EXPECT_LT(r.worst, 1e-4) << name << " at " << r.where;
    EXPECT_GT(r.checked, 0u) << name;
  }
}

}  // namespace
}  // namespace ckl
