//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lmdm/autodiff.hpp"
#include "lmdm/error.hpp"
#include "lmdm/rng.hpp"

namespace lmdm {

// Ordered element alphabet; feature rows are one-hot over it followed by a
// single charge column.
class Vocabulary {
public:
  Vocabulary() : symbols_{"H", "C", "N", "O", "F"} {}
  explicit Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw ConfigError("element vocabulary is empty");
  }

  int size() const { return static_cast<int>(symbols_.size()); }
  int feature_dim() const { return size() + 1; }
  const std::string &symbol(int i) const { return symbols_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string> &symbols() const { return symbols_; }

  int index_of(const std::string &symbol) const {
    auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
    if (it == symbols_.end())
      throw UnsupportedElement("element '" + symbol + "' is not in the vocabulary");
    return static_cast<int>(it - symbols_.begin());
  }
  bool contains(const std::string &symbol) const {
    return std::find(symbols_.begin(), symbols_.end(), symbol) != symbols_.end();
  }

  bool operator==(const Vocabulary &) const = default;

private:
  std::vector<std::string> symbols_;
};

struct Molecule {
  Matrix coords;   // N x 3, Angstrom
  Matrix features; // N x (|vocab| + 1)
  std::vector<std::string> element_ids;

  int size() const { return static_cast<int>(coords.rows()); }

  static Molecule from_elements(const std::vector<std::string> &elements, Matrix coords,
                                const Vocabulary &vocab,
                                const std::vector<int> &charges = {}) {
    Molecule m;
    const int n = static_cast<int>(elements.size());
    if (coords.rows() != n || coords.cols() != 3)
      throw ContractError("coordinate matrix must be N x 3");
    m.coords = std::move(coords);
    m.features = Matrix::Zero(n, vocab.feature_dim());
    m.element_ids = elements;
    for (int i = 0; i < n; ++i) {
      m.features(i, vocab.index_of(elements[i])) = 1.0;
      if (!charges.empty()) m.features(i, vocab.size()) = charges.at(static_cast<std::size_t>(i));
    }
    m.validate();
    return m;
  }

  int charge(int i) const {
    return static_cast<int>(std::lround(features(i, features.cols() - 1)));
  }
  int net_charge() const {
    int q = 0;
    for (int i = 0; i < size(); ++i) q += charge(i);
    return q;
  }

  // Vocabulary index per atom (argmax of the one-hot block).
  std::vector<int> type_indices() const {
    std::vector<int> out(static_cast<std::size_t>(size()));
    for (int i = 0; i < size(); ++i) {
      Eigen::Index best = 0;
      features.row(i).head(features.cols() - 1).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }

  void validate() const {
    if (size() < 1) throw InvalidGeometry("molecule has no atoms");
    if (coords.cols() != 3) throw InvalidGeometry("coordinates must have 3 columns");
    if (!coords.allFinite()) throw InvalidGeometry("non-finite coordinate");
    if (features.rows() != coords.rows() || features.cols() < 2)
      throw ContractError("feature matrix shape does not match coordinates");
    if (static_cast<int>(element_ids.size()) != size())
      throw ContractError("element list length does not match coordinates");
    for (int i = 0; i < size(); ++i)
      if (features.row(i).head(features.cols() - 1).sum() != 1.0)
        throw ContractError("feature row " + std::to_string(i) + " is not one-hot");
  }
};

inline void require_finite(const Matrix &coords) {
  if (!coords.allFinite()) throw InvalidGeometry("non-finite coordinate");
}

inline Matrix project_zero_com(const Matrix &coords) {
  if (coords.rows() < 1) throw InvalidGeometry("empty coordinate set");
  require_finite(coords);
  Matrix out = coords.rowwise() - coords.colwise().mean();
  return out;
}

inline Matrix pairwise_distances(const Matrix &coords) {
  require_finite(coords);
  const Eigen::Index n = coords.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (coords.row(i) - coords.row(j)).norm();
  return d;
}

using Edge = std::pair<int, int>;

struct EdgeSet {
  std::vector<Edge> local;
  std::vector<Edge> global;
};

inline constexpr double kDefaultTau = 2.0;

// Pairs with d_ij <= tau are local (closed ball); all other ordered pairs
// are global. Both lists are lexicographic in (i, j).
inline EdgeSet build_edges(const Matrix &coords, double tau = kDefaultTau) {
  if (!(tau > 0.0)) throw ContractError("tau must be positive");
  require_finite(coords);
  const int n = static_cast<int>(coords.rows());
  EdgeSet es;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = (coords.row(i) - coords.row(j)).norm();
      (d <= tau ? es.local : es.global).emplace_back(i, j);
    }
  return es;
}

inline Vector rbf_expand(double d, const Vector &centers, double width) {
  if (!(width > 0.0)) throw ContractError("rbf width must be positive");
  if (centers.size() < 1) throw ContractError("rbf needs at least one center");
  return (-(centers.array() - d).square() / (2.0 * width * width)).exp().matrix();
}

struct RbfBasis {
  Vector centers;
  double width = 1.0;

  // Evenly spaced centers on [lo, hi]; width equals the spacing.
  static RbfBasis even(int count, double lo = 0.0, double hi = 10.0) {
    RbfBasis b;
    b.centers = Vector::LinSpaced(count, lo, hi);
    b.width = count > 1 ? (hi - lo) / (count - 1) : 1.0;
    return b;
  }

  int size() const { return static_cast<int>(centers.size()); }
};

// ---------------------------------------------------------------------------
// Disjoint-union batches. Several molecules share one node matrix; edges
// never cross molecule boundaries.

struct Segments {
  ad::Index segment;        // molecule id per node
  std::vector<int> offsets; // first node of each molecule
  std::vector<int> sizes;

  int n_graphs() const { return static_cast<int>(sizes.size()); }
  int n_nodes() const { return static_cast<int>(segment->size()); }

  static Segments from_sizes(const std::vector<int> &sizes) {
    Segments s;
    s.sizes = sizes;
    std::vector<int> seg;
    int off = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      if (sizes[g] < 1) throw ContractError("molecule with no atoms in batch");
      s.offsets.push_back(off);
      for (int i = 0; i < sizes[g]; ++i) seg.push_back(static_cast<int>(g));
      off += sizes[g];
    }
    s.segment = ad::make_index(std::move(seg));
    return s;
  }

  // Per-node aggregation constant 1/(N-1); zero for isolated atoms.
  Matrix aggregation_constant() const {
    Matrix c(n_nodes(), 1);
    for (int i = 0; i < n_nodes(); ++i) {
      int n = sizes[static_cast<std::size_t>((*segment)[i])];
      c(i, 0) = n > 1 ? 1.0 / (n - 1) : 0.0;
    }
    return c;
  }
};

// Receiver i gets messages from sender j.
struct EdgeList {
  ad::Index recv = ad::make_index({});
  ad::Index send = ad::make_index({});
  std::size_t size() const { return recv->size(); }
  bool empty() const { return recv->empty(); }
};

struct BatchEdges {
  EdgeList all;
  EdgeList local;
  EdgeList global;
  Matrix indicator; // rows aligned with `all`: (1,0) local, (0,1) global
};

inline BatchEdges batch_edges(const Matrix &coords, const Segments &seg, double tau) {
  std::vector<int> ar, as, lr, ls, gr, gs;
  std::vector<int> lvl;
  for (int g = 0; g < seg.n_graphs(); ++g) {
    const int off = seg.offsets[static_cast<std::size_t>(g)];
    EdgeSet es = build_edges(coords.middleRows(off, seg.sizes[static_cast<std::size_t>(g)]), tau);
    // merge back into lexicographic order over all pairs
    std::size_t a = 0, b = 0;
    while (a < es.local.size() || b < es.global.size()) {
      bool take_local = b >= es.global.size() ||
                        (a < es.local.size() && es.local[a] < es.global[b]);
      const Edge &e = take_local ? es.local[a++] : es.global[b++];
      ar.push_back(off + e.first);
      as.push_back(off + e.second);
      lvl.push_back(take_local ? 0 : 1);
      (take_local ? lr : gr).push_back(off + e.first);
      (take_local ? ls : gs).push_back(off + e.second);
    }
  }
  BatchEdges be;
  be.indicator = Matrix::Zero(static_cast<Eigen::Index>(lvl.size()), 2);
  for (std::size_t e = 0; e < lvl.size(); ++e) be.indicator(static_cast<Eigen::Index>(e), lvl[e]) = 1.0;
  be.all = {ad::make_index(std::move(ar)), ad::make_index(std::move(as))};
  be.local = {ad::make_index(std::move(lr)), ad::make_index(std::move(ls))};
  be.global = {ad::make_index(std::move(gr)), ad::make_index(std::move(gs))};
  return be;
}

// Per-segment COM projection of a plain matrix.
inline Matrix center_segments(const Matrix &x, const Segments &seg) {
  Matrix out = x;
  for (int g = 0; g < seg.n_graphs(); ++g) {
    auto block = out.middleRows(seg.offsets[static_cast<std::size_t>(g)],
                                seg.sizes[static_cast<std::size_t>(g)]);
    Eigen::RowVectorXd m = block.colwise().mean();
    block.rowwise() -= m;
  }
  return out;
}

// Differentiable per-edge quantities.
inline ad::Var edge_vectors(ad::Var x, const EdgeList &edges) {
  return ad::sub(ad::gather_rows(x, edges.recv), ad::gather_rows(x, edges.send));
}

inline ad::Var squared_norms(ad::Var v) { return ad::row_sum(ad::square(v)); }

// Rotation helpers shared by tests and the self-test.
inline Matrix random_rotation(Rng &rng) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 9; ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
  Eigen::Matrix3d q = qr.householderQ();
  // fix the sign ambiguity of QR, then force det = +1
  Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 3; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return Matrix(q);
}

// Applies x -> R x + t to every row.
inline Matrix rigid_motion(const Matrix &coords, const Matrix &rot, const Eigen::RowVector3d &t) {
  Matrix out = coords * rot.transpose();
  out.rowwise() += t;
  return out;
}

} // namespace lmdm
