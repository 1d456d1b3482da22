//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::max_grad_error;
using lmdm::testing::project;
using Vars = std::vector<ad::Var>;

namespace {

constexpr double kTol = 1e-7;

Matrix rnd(int r, int c, std::uint64_t seed) { return Rng(seed).normal(r, c); }

} // namespace

TEST(Autodiff, BinaryOps) {
  auto a = rnd(3, 4, 1), b = rnd(3, 4, 2), w = rnd(4, 2, 3);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::add(v[0], v[1])); }, {a, b}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::sub(v[0], v[1])); }, {a, b}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::mul(v[0], v[1])); }, {a, b}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::matmul(v[0], v[1])); }, {a, w}), kTol);
}

TEST(Autodiff, Broadcasts) {
  auto a = rnd(5, 3, 4), row = rnd(1, 3, 5), col = rnd(5, 1, 6);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::add_row(v[0], v[1])); }, {a, row}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::mul_col(v[0], v[1])); }, {a, col}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::repeat_cols(v[0], 4)); }, {col}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::row_sum(v[0])); }, {a}), kTol);
}

TEST(Autodiff, Unary) {
  auto a = rnd(4, 3, 7);
  Matrix pos = a.array().abs() + 0.5;
  using F = ad::Var (*)(ad::Var);
  for (F f : {static_cast<F>(ad::silu), static_cast<F>(ad::sigmoid), static_cast<F>(ad::softplus),
              static_cast<F>(ad::exp), static_cast<F>(ad::square)})
    EXPECT_LT(max_grad_error([f](ad::Tape &, const Vars &v) { return project(f(v[0])); }, {a}), kTol);
  for (F f : {static_cast<F>(ad::log), static_cast<F>(ad::sqrt), static_cast<F>(ad::reciprocal)})
    EXPECT_LT(max_grad_error([f](ad::Tape &, const Vars &v) { return project(f(v[0])); }, {pos}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::scale(v[0], -2.5)); }, {a}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::add_const(v[0], 3.0)); }, {a}), kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return ad::mean(ad::square(v[0])); }, {a}), kTol);
}

TEST(Autodiff, Structural) {
  auto a = rnd(4, 3, 8), b = rnd(4, 2, 9);
  auto idx = ad::make_index({0, 2, 2, 3, 1});
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::concat_cols({v[0], v[1]})); }, {a, b}),
            kTol);
  EXPECT_LT(max_grad_error([](ad::Tape &, const Vars &v) { return project(ad::slice_cols(v[0], 1, 2)); }, {a}), kTol);
  EXPECT_LT(max_grad_error([idx](ad::Tape &, const Vars &v) { return project(ad::gather_rows(v[0], idx)); }, {a}),
            kTol);
  auto e = rnd(5, 3, 10);
  EXPECT_LT(
      max_grad_error([idx](ad::Tape &, const Vars &v) { return project(ad::scatter_add_rows(v[0], idx, 4)); }, {e}),
      kTol);
  auto seg = ad::make_index({0, 0, 1, 1});
  EXPECT_LT(
      max_grad_error([seg](ad::Tape &, const Vars &v) { return project(ad::center_segments(v[0], seg, 2)); }, {a}),
      kTol);
  auto labels = ad::make_index({2, 0, 1, 2});
  EXPECT_LT(max_grad_error([labels](ad::Tape &, const Vars &v) { return ad::sum(ad::pick(ad::log_softmax(v[0]), labels)); },
                           {a}),
            kTol);
}

TEST(Autodiff, ValuesMatchEigen) {
  ad::Tape t;
  auto a = rnd(3, 3, 11), b = rnd(3, 3, 12);
  EXPECT_TRUE(ad::matmul(t.leaf(a), t.leaf(b)).value().isApprox(a * b, 1e-14));
  Matrix ls = ad::log_softmax(t.leaf(a)).value();
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(ls.row(r).array().exp().sum(), 1.0, 1e-14);
  auto seg = ad::make_index({0, 1, 1});
  Matrix c = ad::center_segments(t.leaf(a), seg, 2).value();
  EXPECT_NEAR(c.row(0).norm(), 0.0, 1e-15);
  EXPECT_NEAR((c.row(1) + c.row(2)).norm(), 0.0, 1e-14);
}

TEST(Autodiff, SharedInputAccumulates) {
  ad::Tape t;
  ad::Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
  ad::Var y = ad::add(ad::mul(x, x), x);
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x.id)(0, 0), 7.0);
}

TEST(Autodiff, Contracts) {
  ad::Tape t;
  ad::Var a = t.leaf(rnd(2, 3, 1)), b = t.leaf(rnd(3, 2, 2));
  EXPECT_THROW(ad::add(a, b), ContractError);
  EXPECT_THROW(t.backward(a), ContractError);
  EXPECT_THROW(ad::pick(a, ad::make_index({0})), ContractError);
  ad::Tape other;
  EXPECT_THROW(ad::add(a, other.leaf(rnd(2, 3, 3))), ContractError);
}
