//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "lmdm/metrics.hpp"
#include "test_util.hpp"

using namespace lmdm;

namespace {

Molecule pair(const std::string &a, const std::string &b, double d) {
  Matrix x(2, 3);
  x << 0, 0, 0, d, 0, 0;
  return Molecule::from_elements({a, b}, x, Vocabulary());
}

Molecule methane(double ch = 1.09) {
  const double s = ch / std::sqrt(3.0);
  Matrix x(5, 3);
  x << 0, 0, 0, s, s, s, s, -s, -s, -s, s, -s, -s, -s, s;
  return Molecule::from_elements({"C", "H", "H", "H", "H"}, x, Vocabulary());
}

Molecule ethane_like() {
  // C-C with three H on each carbon.
  Matrix x(8, 3);
  x << 0, 0, 0, 1.54, 0, 0,
      -0.36, 1.03, 0, -0.36, -0.51, 0.89, -0.36, -0.51, -0.89,
      1.90, -1.03, 0, 1.90, 0.51, 0.89, 1.90, 0.51, -0.89;
  return Molecule::from_elements({"C", "C", "H", "H", "H", "H", "H", "H"}, x, Vocabulary());
}

} // namespace

TEST(Bonds, ReferenceLengths) {
  auto g = infer_bonds(pair("C", "C", 1.54));
  ASSERT_EQ(g.bonds.size(), 1u);
  EXPECT_EQ(g.bonds[0], (Bond{0, 1, 1}));
  EXPECT_TRUE(infer_bonds(pair("C", "C", 5.0)).bonds.empty());
  EXPECT_EQ(infer_bonds(pair("H", "H", 0.74)).bonds[0].order, 1);
  EXPECT_EQ(infer_bonds(pair("C", "C", 1.34)).bonds[0].order, 2);
  EXPECT_EQ(infer_bonds(pair("C", "C", 1.20)).bonds[0].order, 3);
  EXPECT_EQ(infer_bonds(pair("C", "O", 1.22)).bonds[0].order, 2);
}

TEST(Bonds, MarginBoundary) {
  EXPECT_EQ(infer_bonds(pair("C", "C", 1.64)).bonds.size(), 1u);
  EXPECT_TRUE(infer_bonds(pair("C", "C", 1.6401)).bonds.empty());
  EXPECT_EQ(infer_bonds(pair("C", "C", 1.39)).bonds[0].order, 2);
  EXPECT_EQ(infer_bonds(pair("C", "C", 1.3901)).bonds[0].order, 1);
}

TEST(Validity, Methane) {
  auto g = infer_bonds(methane());
  EXPECT_EQ(g.bonds.size(), 4u);
  MoleculeCheck c = molecule_checks(g);
  EXPECT_TRUE(c.valid);
  EXPECT_TRUE(c.ion_free);
  EXPECT_EQ(c.stable_atoms, 5);
  EXPECT_EQ(c.n_components, 1);
}

TEST(Validity, PentavalentCarbon) {
  Molecule m = methane();
  Matrix x(6, 3);
  x << m.coords, 0, 0, -1.09;
  m = Molecule::from_elements({"C", "H", "H", "H", "H", "H"}, x, Vocabulary());
  auto g = infer_bonds(m);
  MoleculeCheck c = molecule_checks(g);
  EXPECT_EQ(bond_valences(g)[0], 5);
  EXPECT_FALSE(c.valid);
  EXPECT_FALSE(c.ion_free);
}

TEST(Validity, UndersaturatedIsValidButUnstable) {
  Matrix x(3, 3);
  x << 0, 0, 0, 1.09, 0, 0, -1.09, 0, 0;
  auto g = infer_bonds(Molecule::from_elements({"C", "H", "H"}, x, Vocabulary()));
  MoleculeCheck c = molecule_checks(g);
  EXPECT_TRUE(c.valid);
  EXPECT_FALSE(c.ion_free);
  EXPECT_EQ(c.stable_atoms, 2);
}

TEST(Validity, TwoFragments) {
  Matrix x(10, 3);
  Molecule m = methane();
  x << m.coords, m.coords.rowwise() + Eigen::RowVector3d(10, 0, 0);
  std::vector<std::string> el = {"C", "H", "H", "H", "H", "C", "H", "H", "H", "H"};
  auto g = infer_bonds(Molecule::from_elements(el, x, Vocabulary()));
  EXPECT_EQ(count_components(g), 2);
  EXPECT_FALSE(molecule_checks(g).valid);
  CheckOptions loose;
  loose.require_connected = false;
  EXPECT_TRUE(molecule_checks(g, loose).valid);
}

TEST(Validity, ChargedNitrogenNeedsExtraValence) {
  Matrix x(5, 3);
  const double s = 1.01 / std::sqrt(3.0);
  x << 0, 0, 0, s, s, s, s, -s, -s, -s, s, -s, -s, -s, s;
  Molecule nh4 = Molecule::from_elements({"N", "H", "H", "H", "H"}, x, Vocabulary(), {1, 0, 0, 0, 0});
  auto g = infer_bonds(nh4);
  EXPECT_FALSE(molecule_checks(g).valid);
  CheckOptions opt;
  opt.valences.add("N", 4);
  MoleculeCheck c = molecule_checks(g, opt);
  EXPECT_TRUE(c.valid);
  EXPECT_FALSE(c.ion_free);
}

TEST(Hash, InvariantUnderPermutationAndMotion) {
  Molecule m = ethane_like();
  const auto h = canonical_hash(m);
  Rng rng(5);
  std::vector<int> perm = {5, 2, 7, 0, 3, 1, 6, 4};
  Matrix x(8, 3);
  std::vector<std::string> el;
  for (int i = 0; i < 8; ++i) {
    x.row(i) = m.coords.row(perm[static_cast<std::size_t>(i)]);
    el.push_back(m.element_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  x = rigid_motion(x, random_rotation(rng), Eigen::RowVector3d(1, -2, 3));
  EXPECT_EQ(canonical_hash(Molecule::from_elements(el, x, Vocabulary())), h);
}

TEST(Hash, DistinguishesGraphs) {
  EXPECT_NE(canonical_hash(methane()), canonical_hash(ethane_like()));
  EXPECT_NE(canonical_hash(pair("C", "C", 1.54)), canonical_hash(pair("C", "C", 1.34)));
  EXPECT_NE(canonical_hash(pair("C", "N", 1.47)), canonical_hash(pair("C", "C", 1.54)));
  // Same atoms, different connectivity: C-C-O versus C-O-C.
  Matrix a(3, 3), b(3, 3);
  a << 0, 0, 0, 1.54, 0, 0, 2.97, 0, 0;
  b << 0, 0, 0, 1.43, 0, 0, 2.86, 0, 0;
  EXPECT_NE(canonical_hash(Molecule::from_elements({"C", "C", "O"}, a, Vocabulary())),
            canonical_hash(Molecule::from_elements({"C", "O", "C"}, b, Vocabulary())));
}

TEST(SetMetrics, Counts) {
  Molecule bad = methane();
  Matrix x(6, 3);
  x << bad.coords, 0, 0, -1.09;
  bad = Molecule::from_elements({"C", "H", "H", "H", "H", "H"}, x, Vocabulary());
  std::vector<Molecule> gen = {methane(), methane(1.1), ethane_like(), bad};
  MetricsReport r = set_metrics(gen, corpus_hashes({methane()}));
  EXPECT_EQ(r.n_total, 4);
  EXPECT_EQ(r.n_valid, 3);
  EXPECT_EQ(r.n_unique, 2);
  EXPECT_EQ(r.n_novel, 1);
  EXPECT_EQ(r.n_stable, 3);
  EXPECT_DOUBLE_EQ(r.validity, 75.0);
  EXPECT_DOUBLE_EQ(r.uniqueness, 200.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.novelty, 50.0);
  EXPECT_EQ(r.n_atoms, 5 + 5 + 8 + 6);
  EXPECT_EQ(r.components.at(1), 4);
  EXPECT_EQ(r.to_json()["n_valid"], 3);
  EXPECT_NE(r.table().find("validity            75.00 %  (3 / 4)"), std::string::npos);
}

TEST(SetMetrics, Errors) {
  EXPECT_THROW(set_metrics({}, {}), ContractError);
  Vocabulary v({"H", "C", "S"});
  Matrix x(2, 3);
  x << 0, 0, 0, 1.8, 0, 0;
  EXPECT_THROW(infer_bonds(Molecule::from_elements({"C", "S"}, x, v)), UnsupportedElement);
  BondTable t;
  t.set("C", "S", 1, 1.82);
  BondGraph g = infer_bonds(Molecule::from_elements({"C", "S"}, x, v), t);
  EXPECT_EQ(g.bonds.size(), 1u);
  EXPECT_THROW(molecule_checks(g), UnsupportedElement);
}
