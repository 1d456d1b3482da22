//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "lmdm/geometry.hpp"
#include "test_util.hpp"

using namespace lmdm;

namespace {

Matrix two_atoms(double d) {
  Matrix x(2, 3);
  x << 0, 0, 0, d, 0, 0;
  return x;
}

} // namespace

TEST(Geometry, ProjectZeroCom) {
  Matrix x = Rng(1).normal(6, 3).array() + 4.0;
  Matrix c = project_zero_com(x);
  EXPECT_LT(c.colwise().sum().norm(), 1e-12);
  EXPECT_TRUE(project_zero_com(c).isApprox(c, 1e-15));
  EXPECT_TRUE(pairwise_distances(c).isApprox(pairwise_distances(x), 1e-12));
}

TEST(Geometry, ProjectRejectsBadInput) {
  EXPECT_THROW(project_zero_com(Matrix(0, 3)), InvalidGeometry);
  Matrix x = Matrix::Zero(2, 3);
  x(1, 2) = std::nan("");
  EXPECT_THROW(project_zero_com(x), InvalidGeometry);
  EXPECT_THROW(pairwise_distances(x), InvalidGeometry);
}

TEST(Geometry, PairwiseDistances) {
  Matrix x(3, 3);
  x << 0, 0, 0, 3, 0, 0, 0, 4, 0;
  Matrix d = pairwise_distances(x);
  EXPECT_DOUBLE_EQ(d(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(d(0, 2), 4.0);
  EXPECT_DOUBLE_EQ(d(1, 2), 5.0);
  EXPECT_TRUE(d.isApprox(d.transpose(), 0.0));
  EXPECT_EQ(d.diagonal().norm(), 0.0);
}

TEST(Geometry, DistancesInvariantUnderRigidMotion) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = rng.normal(7, 3);
    Matrix r = random_rotation(rng);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    Matrix y = rigid_motion(x, r, Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal()));
    EXPECT_LT((pairwise_distances(y) - pairwise_distances(x)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Geometry, EdgesBelowAndAboveThreshold) {
  EdgeSet near = build_edges(two_atoms(1.5), 2.0);
  EXPECT_EQ(near.local, (std::vector<Edge>{{0, 1}, {1, 0}}));
  EXPECT_TRUE(near.global.empty());
  EdgeSet far = build_edges(two_atoms(2.5), 2.0);
  EXPECT_TRUE(far.local.empty());
  EXPECT_EQ(far.global, (std::vector<Edge>{{0, 1}, {1, 0}}));
}

TEST(Geometry, ThresholdIsInclusive) {
  EdgeSet es = build_edges(two_atoms(2.0), 2.0);
  EXPECT_EQ(es.local.size(), 2u);
  EXPECT_TRUE(es.global.empty());
}

TEST(Geometry, EdgesPartitionOrderedPairs) {
  Rng rng(3);
  Matrix x = 2.0 * rng.normal(9, 3);
  EdgeSet es = build_edges(x, 2.0);
  EXPECT_EQ(es.local.size() + es.global.size(), 9u * 8u);
  EXPECT_TRUE(std::is_sorted(es.local.begin(), es.local.end()));
  EXPECT_TRUE(std::is_sorted(es.global.begin(), es.global.end()));
  for (const auto &[i, j] : es.local) EXPECT_NE(i, j);
  EXPECT_EQ(build_edges(Matrix::Zero(1, 3)).local.size(), 0u);
  EXPECT_THROW(build_edges(x, 0.0), ContractError);
}

TEST(Geometry, Rbf) {
  RbfBasis b = RbfBasis::even(16);
  EXPECT_EQ(b.size(), 16);
  EXPECT_DOUBLE_EQ(b.centers(0), 0.0);
  EXPECT_DOUBLE_EQ(b.centers(15), 10.0);
  EXPECT_NEAR(b.width, 10.0 / 15.0, 1e-15);
  Vector v = rbf_expand(b.centers(4), b.centers, b.width);
  EXPECT_DOUBLE_EQ(v(4), 1.0);
  EXPECT_NEAR(v(5), std::exp(-0.5), 1e-14);
  EXPECT_NEAR(v(3), v(5), 1e-14);
  EXPECT_THROW(rbf_expand(1.0, b.centers, 0.0), ContractError);
}

TEST(Geometry, BatchEdgesStayInsideMolecules) {
  Rng rng(5);
  Segments seg = Segments::from_sizes({3, 1, 4});
  Matrix x = 1.5 * rng.normal(8, 3);
  BatchEdges be = batch_edges(x, seg, 2.0);
  EXPECT_EQ(be.all.size(), 3u * 2u + 4u * 3u);
  EXPECT_EQ(be.local.size() + be.global.size(), be.all.size());
  for (std::size_t e = 0; e < be.all.size(); ++e) {
    const int i = (*be.all.recv)[e], j = (*be.all.send)[e];
    EXPECT_EQ((*seg.segment)[i], (*seg.segment)[j]);
    const bool local = (x.row(i) - x.row(j)).norm() <= 2.0;
    EXPECT_EQ(be.indicator(static_cast<Eigen::Index>(e), 0), local ? 1.0 : 0.0);
    EXPECT_EQ(be.indicator.row(static_cast<Eigen::Index>(e)).sum(), 1.0);
  }
  Matrix agg = seg.aggregation_constant();
  EXPECT_DOUBLE_EQ(agg(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(agg(3, 0), 0.0);
  EXPECT_THROW(Segments::from_sizes({2, 0}), ContractError);
}

TEST(Geometry, CenterSegmentsPerMolecule) {
  Segments seg = Segments::from_sizes({2, 3});
  Matrix x = Rng(9).normal(5, 3).array() + 1.0;
  Matrix c = center_segments(x, seg);
  EXPECT_LT(c.topRows(2).colwise().sum().norm(), 1e-12);
  EXPECT_LT(c.bottomRows(3).colwise().sum().norm(), 1e-12);
}

TEST(Geometry, MoleculeFromElements) {
  Vocabulary v;
  Molecule m = Molecule::from_elements({"C", "O"}, two_atoms(1.2), v, {0, -1});
  EXPECT_EQ(m.features.cols(), v.feature_dim());
  EXPECT_EQ(m.type_indices(), (std::vector<int>{1, 3}));
  EXPECT_EQ(m.net_charge(), -1);
  EXPECT_THROW(Molecule::from_elements({"Xe", "O"}, two_atoms(1.2), v), UnsupportedElement);
  EXPECT_THROW(Molecule::from_elements({"C"}, two_atoms(1.2), v), ContractError);
}
