//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <vector>

#include "lmdm/geometry.hpp"
#include "lmdm/nn.hpp"

namespace lmdm {

enum class CoordEmbedMode { none, raw };

// Gaussian radial expansion of a column of distances: (E x 1) -> (E x K).
inline ad::Var rbf_expand(ad::Var d, const RbfBasis &basis) {
  ad::Tape &t = *d.tape;
  Matrix neg_centers = -basis.centers.transpose();
  ad::Var diff = ad::add_row(ad::repeat_cols(d, basis.size()), t.constant(neg_centers));
  return ad::exp(ad::scale(ad::square(diff), -1.0 / (2.0 * basis.width * basis.width)));
}

// s_x(i) = sum_{(i,j)} s_ij / d_ij * (x_i - x_j)
inline ad::Var dist_transition(ad::Var s_d, ad::Var coords, const EdgeList &edges) {
  ad::Tape &t = *coords.tape;
  const Eigen::Index n = coords.rows();
  if (edges.empty()) return t.constant(Matrix::Zero(n, 3));
  if (s_d.rows() != static_cast<Eigen::Index>(edges.size()) || s_d.cols() != 1)
    throw ContractError("dist_transition: one score per edge expected");
  ad::Var diff = edge_vectors(coords, edges);
  ad::Var d = ad::sqrt(squared_norms(diff));
  if (d.value().minCoeff() < 1e-8)
    throw DegenerateGeometry("coincident atoms on an edge in dist_transition");
  ad::Var coef = ad::mul(s_d, ad::reciprocal(d));
  return ad::scatter_add_rows(ad::mul_col(diff, coef), edges.recv, n);
}

// Continuous-filter convolution block:
//   h' = silu(W0 h_i + sum_j W1 phi_w(rbf(d_ij)) * W2 h_j)
struct ConvLayer {
  std::string name;
  int width = 0;
  int rbf = 0;

  Linear w0() const { return Linear{name + ".W0", width, width}; }
  Linear w1() const { return Linear{name + ".W1", width, width}; }
  Linear w2() const { return Linear{name + ".W2", width, width}; }
  Mlp phi_w() const { return Mlp(name + ".phi_w", {rbf, width, width}); }

  void init(ParamStore &ps, Rng &rng) const {
    w0().init(ps, rng);
    w1().init(ps, rng);
    w2().init(ps, rng);
    phi_w().init(ps, rng);
  }
};

// SchNet-style invariant network used as one branch of the score kernel and
// as the variational-noise encoder.
struct InvariantNet {
  std::string name;
  int in_features = 0;
  int hidden = 0;
  int n_layers = 1;
  int out_features = 1; // width of the node score head
  int edge_dim = 2;
  RbfBasis basis = RbfBasis::even(16);
  CoordEmbedMode coord_embed = CoordEmbedMode::none;

  int node_width() const { return coord_embed == CoordEmbedMode::raw ? 2 * hidden : hidden; }

  Mlp edge_mlp() const { return Mlp(name + ".edge_mlp", {1 + edge_dim, hidden, hidden}, true); }
  Mlp node_embed_mlp() const { return Mlp(name + ".node_embed", {in_features, hidden, hidden}); }
  Mlp coord_embed_mlp() const { return Mlp(name + ".coord_embed", {3, hidden, hidden}); }
  Mlp node_score_mlp() const { return Mlp(name + ".node_score", {node_width(), hidden, out_features}); }
  Mlp distance_mlp() const {
    return Mlp(name + ".distance_mlp", {2 * node_width() + hidden, hidden, 1});
  }
  ConvLayer conv(int l) const {
    return ConvLayer{name + ".conv" + std::to_string(l), node_width(), basis.size()};
  }

  void init(ParamStore &ps, Rng &rng) const {
    if (n_layers < 1) throw ContractError(name + ": at least one conv layer required");
    edge_mlp().init(ps, rng);
    node_embed_mlp().init(ps, rng);
    if (coord_embed == CoordEmbedMode::raw) coord_embed_mlp().init(ps, rng);
    for (int l = 0; l < n_layers; ++l) conv(l).init(ps, rng);
    node_score_mlp().init(ps, rng);
    distance_mlp().init(ps, rng);
  }

  // h_e = MLP(d_ij, e_ij); `d` is (E x 1), `e` is (E x edge_dim).
  ad::Var edge_embed(Binding &p, ad::Var d, ad::Var e) const {
    return edge_mlp()(p, ad::concat_cols({d, e}));
  }

  ad::Var schnet_forward(Binding &p, ad::Var features, ad::Var coords, const EdgeList &edges) const {
    if (features.cols() != in_features)
      throw ContractError(name + ": expected " + std::to_string(in_features) + " node features");
    if (features.rows() != coords.rows())
      throw ContractError(name + ": features and coordinates disagree on atom count");
    ad::Var h = node_embed_mlp()(p, features);
    if (coord_embed == CoordEmbedMode::raw)
      h = ad::concat_cols({h, coord_embed_mlp()(p, coords)});
    ad::Var filt_in;
    if (!edges.empty()) {
      ad::Var d = ad::sqrt(squared_norms(edge_vectors(coords, edges)));
      filt_in = rbf_expand(d, basis);
    }
    for (int l = 0; l < n_layers; ++l) {
      ConvLayer c = conv(l);
      ad::Var self = c.w0()(p, h);
      if (!edges.empty()) {
        ad::Var filt = c.w1()(p, c.phi_w()(p, filt_in));
        ad::Var msg = ad::mul(filt, ad::gather_rows(c.w2()(p, h), edges.send));
        self = ad::add(self, ad::scatter_add_rows(msg, edges.recv, h.rows()));
      }
      h = ad::silu(self);
    }
    return h;
  }

  ad::Var node_score(Binding &p, ad::Var h) const { return node_score_mlp()(p, h); }

  // s(d_ij) = MLP([h_i, h_j, h_e]) per directed edge.
  ad::Var distance_score(Binding &p, ad::Var h_i, ad::Var h_j, ad::Var h_e) const {
    return distance_mlp()(p, ad::concat_cols({h_i, h_j, h_e}));
  }

  struct Scores {
    ad::Var coord; // N x 3
    ad::Var feat;  // N x out_features
    ad::Var hidden;
  };

  // Full branch: node embeddings, per-edge distance scores, then the
  // distance-to-coordinate transition. `edge_attr` rows align with `edges`.
  Scores scores(Binding &p, ad::Var features, ad::Var coords, const EdgeList &edges,
                const Matrix &edge_attr) const {
    ad::Tape &t = p.tape();
    ad::Var h = schnet_forward(p, features, coords, edges);
    ad::Var sf = node_score(p, h);
    ad::Var sx;
    if (edges.empty()) {
      sx = t.constant(Matrix::Zero(coords.rows(), 3));
    } else {
      ad::Var d = ad::sqrt(squared_norms(edge_vectors(coords, edges)));
      ad::Var he = edge_embed(p, d, t.constant(edge_attr));
      ad::Var sd = distance_score(p, ad::gather_rows(h, edges.recv), ad::gather_rows(h, edges.send), he);
      sx = dist_transition(sd, coords, edges);
    }
    return {sx, sf, h};
  }
};

} // namespace lmdm
