//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lmdm/metrics.hpp"
#include "lmdm/trainer.hpp"

namespace lmdm {

enum class ToyKind { chains, rings, mixed };

inline ToyKind parse_toy_kind(const std::string &s) {
  if (s == "chains") return ToyKind::chains;
  if (s == "rings") return ToyKind::rings;
  if (s == "mixed") return ToyKind::mixed;
  throw ConfigError("unknown toy dataset kind '" + s + "' (chains | rings | mixed)");
}

namespace detail {

inline const BondTable &toy_bonds() {
  static const BondTable t;
  return t;
}

inline int toy_valence(const std::string &e) { return ValenceTable().max_allowed(e); }

inline Eigen::RowVector3d unit(const Eigen::RowVector3d &v) { return v / v.norm(); }

// Tetrahedral directions not already used by the given bond directions.
inline std::vector<Eigen::RowVector3d> free_directions(const std::vector<Eigen::RowVector3d> &used) {
  const double s = 1.0 / std::sqrt(3.0);
  if (used.empty())
    return {Eigen::RowVector3d(s, s, s), Eigen::RowVector3d(s, -s, -s), Eigen::RowVector3d(-s, s, -s),
            Eigen::RowVector3d(-s, -s, s)};
  if (used.size() == 1) {
    const Eigen::RowVector3d u = used[0];
    Eigen::RowVector3d e1 = Eigen::RowVector3d(0, 0, 1).cross(u);
    if (e1.norm() < 1e-6) e1 = Eigen::RowVector3d(1, 0, 0).cross(u);
    e1 = unit(e1);
    const Eigen::RowVector3d e2 = u.cross(e1);
    std::vector<Eigen::RowVector3d> out;
    for (int k = 0; k < 3; ++k) {
      const double phi = 2.0 * M_PI * k / 3.0;
      out.push_back(-u / 3.0 + std::sqrt(8.0 / 9.0) * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
    return out;
  }
  const Eigen::RowVector3d a = -(used[0] + used[1]) / 2.0;
  const Eigen::RowVector3d n = unit(used[0].cross(used[1]));
  const double w = std::sqrt(std::max(0.0, 1.0 - a.squaredNorm()));
  return {unit(a + w * n), unit(a - w * n)};
}

// Saturated acyclic backbone of 1-3 heavy atoms, 3-8 atoms in total.
inline Molecule toy_chain(Rng &rng, const Vocabulary &vocab) {
  static const char *heavy[] = {"C", "N", "O", "F"};
  for (;;) {
    const int L = rng.uniform_int(1, 3);
    std::vector<std::string> backbone;
    for (int i = 0; i < L; ++i) backbone.push_back(heavy[rng.uniform_int(0, 3)]);
    std::vector<int> hydrogens;
    bool ok = true;
    int total = L;
    for (int i = 0; i < L; ++i) {
      const int nb = (i > 0) + (i + 1 < L);
      const int h = toy_valence(backbone[static_cast<std::size_t>(i)]) - nb;
      if (h < 0) ok = false;
      hydrogens.push_back(h);
      total += h;
    }
    if (!ok || total < 3 || total > 8) continue;

    // zigzag backbone in the xy plane at the tetrahedral angle
    const double half = std::acos(-1.0 / 3.0) / 2.0;
    std::vector<Eigen::RowVector3d> pos{Eigen::RowVector3d::Zero()};
    for (int i = 1; i < L; ++i) {
      const double r = *toy_bonds().length(backbone[static_cast<std::size_t>(i - 1)], backbone[static_cast<std::size_t>(i)], 1);
      const double sign = i % 2 ? 1.0 : -1.0;
      pos.push_back(pos.back() + r * Eigen::RowVector3d(std::sin(half), sign * std::cos(half), 0.0));
    }
    std::vector<std::string> elements = backbone;
    std::vector<Eigen::RowVector3d> all = pos;
    for (int i = 0; i < L; ++i) {
      std::vector<Eigen::RowVector3d> used;
      if (i > 0) used.push_back(unit(pos[static_cast<std::size_t>(i - 1)] - pos[static_cast<std::size_t>(i)]));
      if (i + 1 < L) used.push_back(unit(pos[static_cast<std::size_t>(i + 1)] - pos[static_cast<std::size_t>(i)]));
      auto dirs = free_directions(used);
      const double r = *toy_bonds().length(backbone[static_cast<std::size_t>(i)], "H", 1);
      for (int h = 0; h < hydrogens[static_cast<std::size_t>(i)]; ++h) {
        elements.push_back("H");
        all.push_back(pos[static_cast<std::size_t>(i)] + r * dirs[static_cast<std::size_t>(h)]);
      }
    }
    Matrix coords(static_cast<Eigen::Index>(all.size()), 3);
    for (std::size_t i = 0; i < all.size(); ++i) coords.row(static_cast<Eigen::Index>(i)) = all[i];
    return Molecule::from_elements(elements, coords, vocab);
  }
}

// All-carbon regular polygon with single-bond sides.
inline Molecule toy_ring(Rng &rng, const Vocabulary &vocab) {
  const int n = rng.uniform_int(3, 8);
  const double side = *toy_bonds().length("C", "C", 1);
  const double radius = side / (2.0 * std::sin(M_PI / n));
  Matrix coords(n, 3);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    coords.row(i) << radius * std::cos(a), radius * std::sin(a), 0.0;
  }
  return Molecule::from_elements(std::vector<std::string>(static_cast<std::size_t>(n), "C"), coords, vocab);
}

} // namespace detail

// Deterministic synthetic corpus. Each molecule is randomly oriented,
// centred, and jittered by at most 0.025 Angstrom per atom so that every
// bond length moves by at most 0.05 Angstrom.
inline std::vector<Molecule> make_toy_dataset(ToyKind kind, int n, std::uint64_t seed, const Vocabulary &vocab = {}) {
  if (n < 1) throw ContractError("make_toy_dataset: n must be >= 1");
  for (const char *e : {"H", "C", "N", "O", "F"})
    if (!vocab.contains(e)) throw ConfigError(std::string("toy data needs element ") + e + " in the vocabulary");
  std::vector<Molecule> out;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, streams::toy, static_cast<std::uint64_t>(i));
    const bool ring = kind == ToyKind::rings || (kind == ToyKind::mixed && i % 2 == 1);
    Molecule m = ring ? detail::toy_ring(rng, vocab) : detail::toy_chain(rng, vocab);
    Matrix rot = random_rotation(rng);
    Matrix jitter(m.size(), 3);
    for (int a = 0; a < m.size(); ++a) {
      Eigen::RowVector3d v(rng.normal(), rng.normal(), rng.normal());
      jitter.row(a) = 0.025 * rng.uniform() * v / v.norm();
    }
    m.coords = project_zero_com(m.coords * rot.transpose() + jitter);
    if (!molecule_checks(infer_bonds(m)).valid)
      throw ContractError("make_toy_dataset: generated an invalid molecule");
    out.push_back(std::move(m));
  }
  return out;
}

} // namespace lmdm
