//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "lmdm/invariant_net.hpp"
#include "test_util.hpp"

using namespace lmdm;

namespace {

double silu(double v) { return v / (1.0 + std::exp(-v)); }

EdgeList pairs(std::vector<int> r, std::vector<int> s) { return {ad::make_index(std::move(r)), ad::make_index(std::move(s))}; }

EdgeList all_pairs(int n) {
  std::vector<int> r, s;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        r.push_back(i);
        s.push_back(j);
      }
  return pairs(r, s);
}

InvariantNet small_net(int in, int hidden, int out) {
  InvariantNet net;
  net.name = "inv";
  net.in_features = in;
  net.hidden = hidden;
  net.n_layers = 2;
  net.out_features = out;
  return net;
}

} // namespace

TEST(DistTransition, ZeroScoresGiveZeroField) {
  ad::Tape t;
  Matrix x = Rng(1).normal(4, 3);
  EdgeList e = all_pairs(4);
  Matrix out = dist_transition(t.constant(Matrix::Zero(12, 1)), t.constant(x), e).value();
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(DistTransition, TwoAtomsUnitScores) {
  ad::Tape t;
  Matrix x(2, 3);
  x << 0, 0, 0, 0, 0, 2.5;
  Matrix out = dist_transition(t.constant(Matrix::Ones(2, 1)), t.constant(x), all_pairs(2)).value();
  EXPECT_NEAR(out(0, 2), -1.0, 1e-15);
  EXPECT_NEAR(out(1, 2), 1.0, 1e-15);
  EXPECT_NEAR(out.col(0).norm() + out.col(1).norm(), 0.0, 1e-15);
}

TEST(DistTransition, BruteForceSum) {
  Rng rng(3);
  Matrix x = rng.normal(3, 3);
  EdgeList e = all_pairs(3);
  Matrix s = rng.normal(6, 1);
  ad::Tape t;
  Matrix out = dist_transition(t.constant(s), t.constant(x), e).value();
  Matrix oracle = Matrix::Zero(3, 3);
  int k = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double d = std::sqrt((x(i, 0) - x(j, 0)) * (x(i, 0) - x(j, 0)) + (x(i, 1) - x(j, 1)) * (x(i, 1) - x(j, 1)) +
                                 (x(i, 2) - x(j, 2)) * (x(i, 2) - x(j, 2)));
      for (int c = 0; c < 3; ++c) oracle(i, c) += s(k, 0) / d * (x(i, c) - x(j, c));
      ++k;
    }
  EXPECT_LT((out - oracle).norm(), 1e-14);
}

TEST(DistTransition, SymmetricScoresSumToZero) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5;
    Matrix x = rng.normal(n, 3);
    Matrix sym = rng.normal(n, n);
    sym = sym + sym.transpose().eval();
    EdgeList e = all_pairs(n);
    Matrix s(static_cast<Eigen::Index>(e.size()), 1);
    for (std::size_t k = 0; k < e.size(); ++k) s(static_cast<Eigen::Index>(k), 0) = sym((*e.recv)[k], (*e.send)[k]);
    ad::Tape t;
    Matrix out = dist_transition(t.constant(s), t.constant(x), e).value();
    EXPECT_LT(out.colwise().sum().norm(), 1e-9);
  }
}

TEST(DistTransition, CoincidentAtomsAreDegenerate) {
  ad::Tape t;
  Matrix x = Matrix::Zero(2, 3);
  EXPECT_THROW(dist_transition(t.constant(Matrix::Ones(2, 1)), t.constant(x), all_pairs(2)), DegenerateGeometry);
  EXPECT_THROW(dist_transition(t.constant(Matrix::Ones(3, 1)), t.constant(Rng(1).normal(2, 3)), all_pairs(2)),
               ContractError);
}

TEST(InvariantNet, ScoresRotateWithInput) {
  InvariantNet net = small_net(3, 8, 2);
  ParamStore ps;
  Rng rng(5);
  net.init(ps, rng);
  const int n = 6;
  Matrix x = 1.5 * rng.normal(n, 3), h = rng.normal(n, 3);
  EdgeList e = all_pairs(n);
  Matrix attr = Matrix::Zero(static_cast<Eigen::Index>(e.size()), 2);
  attr.col(0).setOnes();
  auto eval = [&](const Matrix &xx) {
    ad::Tape t;
    Binding p(t, ps, false);
    auto s = net.scores(p, t.constant(h), t.constant(xx), e, attr);
    return std::pair<Matrix, Matrix>{s.coord.value(), s.feat.value()};
  };
  for (int trial = 0; trial < 5; ++trial) {
    Matrix r = random_rotation(rng);
    Eigen::RowVector3d shift(rng.normal(), rng.normal(), rng.normal());
    auto [c1, f1] = eval(x);
    auto [c2, f2] = eval(rigid_motion(x, r, shift));
    EXPECT_LT((c2 - c1 * r.transpose()).norm(), 1e-6 * (1.0 + c1.norm()));
    EXPECT_LT((f2 - f1).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(InvariantNet, RawCoordEmbedBreaksInvariance) {
  InvariantNet net = small_net(2, 4, 1);
  net.coord_embed = CoordEmbedMode::raw;
  ParamStore ps;
  Rng rng(6);
  net.init(ps, rng);
  Matrix x = rng.normal(3, 3), h = rng.normal(3, 2);
  EdgeList e = all_pairs(3);
  ad::Tape t;
  Binding p(t, ps, false);
  Matrix a = net.schnet_forward(p, t.constant(h), t.constant(x), e).value();
  Matrix b = net.schnet_forward(p, t.constant(h), t.constant(rigid_motion(x, random_rotation(rng), {1, 2, 3})), e).value();
  EXPECT_EQ(a.cols(), 8);
  EXPECT_GT((a - b).norm(), 1e-6);
}

TEST(InvariantNet, IsolatedNodeUsesSelfTermOnly) {
  InvariantNet net = small_net(2, 3, 1);
  net.n_layers = 1;
  ParamStore ps;
  Rng rng(7);
  net.init(ps, rng);
  Matrix h = rng.normal(1, 2);
  ad::Tape t;
  Binding p(t, ps, false);
  Matrix out = net.schnet_forward(p, t.constant(h), t.constant(Matrix::Zero(1, 3)), EdgeList{}).value();
  ad::Var emb = net.node_embed_mlp()(p, t.constant(h));
  Matrix oracle = ad::silu(net.conv(0).w0()(p, emb)).value();
  EXPECT_LT((out - oracle).norm(), 1e-15);
}

// Width-1 network with a two-centre basis reduces to scalar arithmetic.
TEST(InvariantNet, TwoNodeScalarOracle) {
  InvariantNet net = small_net(1, 1, 1);
  net.n_layers = 1;
  net.basis = RbfBasis::even(2, 0.0, 2.0);
  ParamStore ps;
  Rng rng(8);
  net.init(ps, rng);
  for (auto &[name, m] : ps.arrays()) m = rng.uniform(m.rows(), m.cols(), -1.0, 1.0);
  auto W = [&](const std::string &n) { return ps.at(n); };
  Matrix x(2, 3);
  x << 0, 0, 0, 0.6, 0.8, 0.0; // d = 1
  Matrix h(2, 1);
  h << 0.4, -0.9;
  EdgeList e = all_pairs(2);
  ad::Tape t;
  Binding p(t, ps, false);
  Matrix out = net.schnet_forward(p, t.constant(h), t.constant(x), e).value();

  auto lin = [&](const std::string &n, double v) { return W(n + ".W")(0, 0) * v + W(n + ".b")(0, 0); };
  auto emb = [&](double v) { return lin("inv.node_embed.1", silu(lin("inv.node_embed.0", v))); };
  // phi_w: [rbf0, rbf1] -> 1 -> 1
  const double r0 = std::exp(-0.5 * 1.0 / 4.0), r1 = std::exp(-0.5 * 1.0 / 4.0);
  const Matrix &pw0 = W("inv.conv0.phi_w.0.W");
  const double f0 = silu(pw0(0, 0) * r0 + pw0(1, 0) * r1 + W("inv.conv0.phi_w.0.b")(0, 0));
  const double filt = lin("inv.conv0.W1", lin("inv.conv0.phi_w.1", f0));
  for (int i = 0; i < 2; ++i) {
    const double hi = emb(h(i, 0)), hj = emb(h(1 - i, 0));
    const double oracle = silu(lin("inv.conv0.W0", hi) + filt * lin("inv.conv0.W2", hj));
    EXPECT_NEAR(out(i, 0), oracle, 1e-14);
  }

  // edge embedding at d = 1, e = (1, 0)
  Matrix d = Matrix::Ones(1, 1), ind(1, 2);
  ind << 1, 0;
  const double he = net.edge_embed(p, t.constant(d), t.constant(ind)).value()(0, 0);
  const Matrix &ew = W("inv.edge_mlp.0.W");
  const double e0 = silu(ew(0, 0) * 1.0 + ew(1, 0) * 1.0 + W("inv.edge_mlp.0.b")(0, 0));
  EXPECT_NEAR(he, silu(lin("inv.edge_mlp.1", e0)), 1e-14);
}

TEST(InvariantNet, DistanceScoreSymmetricForEqualNodes) {
  InvariantNet net = small_net(2, 4, 1);
  ParamStore ps;
  Rng rng(9);
  net.init(ps, rng);
  ad::Tape t;
  Binding p(t, ps, false);
  Matrix hi = rng.normal(1, 4), he = rng.normal(1, 4);
  const double a = net.distance_score(p, t.constant(hi), t.constant(hi), t.constant(he)).scalar();
  Matrix hj = rng.normal(1, 4);
  const double b = net.distance_score(p, t.constant(hi), t.constant(hj), t.constant(he)).scalar();
  const double c = net.distance_score(p, t.constant(hj), t.constant(hi), t.constant(he)).scalar();
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_NE(b, c);
  ps.at("inv.distance_mlp.1.W").setZero();
  ps.at("inv.distance_mlp.1.b").setZero();
  ad::Tape t2;
  Binding p2(t2, ps, false);
  EXPECT_EQ(net.distance_score(p2, t2.constant(hi), t2.constant(hj), t2.constant(he)).scalar(), 0.0);
}

TEST(InvariantNet, ZeroHeadGivesZeroScore) {
  InvariantNet net = small_net(2, 4, 3);
  ParamStore ps;
  Rng rng(10);
  net.init(ps, rng);
  for (auto &[name, m] : ps.arrays())
    if (name.rfind("inv.node_score", 0) == 0) m.setZero();
  ad::Tape t;
  Binding p(t, ps, false);
  EXPECT_EQ(net.node_score(p, t.constant(rng.normal(4, 4))).value().norm(), 0.0);
}
