//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "lmdm/geometry.hpp"
#include "lmdm/nn.hpp"

namespace lmdm {

// Edge inputs for one message-passing pass: directed pairs plus a per-edge
// attribute row (the local/global one-hot).
struct EdgeInputs {
  EdgeList edges;
  Matrix attributes; // |edges| x edge_dim
};

inline EdgeInputs all_pairs_inputs(const BatchEdges &be) { return {be.all, be.indicator}; }

struct EgclOutput {
  ad::Var x, h, v;
};

// Equivariant graph convolution with a velocity channel:
//   m_ij = phi_e(h_i, h_j, |x_i - x_j|^2, a_ij)
//   h_i' = [h_i +] phi_h(h_i, sum_j w_ij m_ij),  w_ij = sigmoid(phi_inf(m_ij))
//   v_i' = phi_v(h_i) v_i + C_i sum_j (x_i - x_j) phi_x(m_ij)
//   x_i' = x_i + v_i'
// The residual on h applies when input and output widths agree.
struct Egcl {
  std::string name;
  int in_features = 0;
  int out_features = 0;
  int hidden = 0;
  int edge_dim = 2;

  Mlp phi_e() const { return Mlp(name + ".phi_e", {2 * in_features + 1 + edge_dim, hidden, hidden}, true); }
  Linear phi_inf() const { return Linear{name + ".phi_inf", hidden, 1}; }
  Mlp phi_h() const { return Mlp(name + ".phi_h", {in_features + hidden, hidden, out_features}); }
  Mlp phi_x() const { return Mlp(name + ".phi_x", {hidden, hidden, 1}); }
  Mlp phi_v() const { return Mlp(name + ".phi_v", {in_features, hidden, 1}); }
  bool residual() const { return in_features == out_features; }

  void init(ParamStore &ps, Rng &rng) const {
    phi_e().init(ps, rng);
    phi_inf().init(ps, rng);
    phi_h().init(ps, rng);
    phi_x().init(ps, rng, /*zero_last=*/true);
    phi_v().init(ps, rng);
  }

  EgclOutput forward(Binding &p, ad::Var x, ad::Var h, ad::Var v, const EdgeInputs &in,
                     const Segments &seg) const {
    ad::Tape &t = p.tape();
    const Eigen::Index n = x.rows();
    if (x.cols() != 3 || v.cols() != 3 || v.rows() != n || h.rows() != n)
      throw ContractError(name + ": coordinate/velocity/feature shapes disagree");
    if (h.cols() != in_features)
      throw ContractError(name + ": expected " + std::to_string(in_features) + " feature columns");
    if (seg.n_nodes() != n) throw ContractError(name + ": segment map does not cover all nodes");
    if (static_cast<Eigen::Index>(in.edges.size()) != in.attributes.rows())
      throw ContractError(name + ": edge attribute rows do not match edges");

    ad::Var c = t.constant(seg.aggregation_constant());
    ad::Var scale_v = phi_v()(p, h);
    ad::Var v_next = ad::mul_col(v, scale_v);
    ad::Var h_agg;
    if (in.edges.empty()) {
      h_agg = t.constant(Matrix::Zero(n, hidden));
    } else {
      ad::Var diff = edge_vectors(x, in.edges);
      ad::Var d2 = squared_norms(diff);
      ad::Var m = phi_e()(p, ad::concat_cols({ad::gather_rows(h, in.edges.recv),
                                              ad::gather_rows(h, in.edges.send), d2,
                                              t.constant(in.attributes)}));
      ad::Var w = ad::sigmoid(phi_inf()(p, m));
      h_agg = ad::scatter_add_rows(ad::mul_col(m, w), in.edges.recv, n);
      ad::Var shift = ad::scatter_add_rows(ad::mul_col(diff, phi_x()(p, m)), in.edges.recv, n);
      v_next = ad::add(v_next, ad::mul_col(shift, c));
    }
    ad::Var h_next = phi_h()(p, ad::concat_cols({h, h_agg}));
    if (residual()) h_next = ad::add(h, h_next);
    ad::Var x_next = ad::add(x, v_next);
    return {x_next, h_next, v_next};
  }
};

struct EgnnStack {
  std::vector<Egcl> layers;

  static EgnnStack make(const std::string &name, int in_features, int hidden, int n_layers,
                        int edge_dim = 2) {
    EgnnStack s;
    for (int l = 0; l < n_layers; ++l)
      s.layers.push_back(Egcl{name + ".layer" + std::to_string(l), l == 0 ? in_features : hidden,
                              hidden, hidden, edge_dim});
    return s;
  }

  int out_features(int in_features) const {
    return layers.empty() ? in_features : layers.back().out_features;
  }

  void init(ParamStore &ps, Rng &rng) const {
    for (const auto &l : layers) l.init(ps, rng);
  }

  // Runs the stack with zero initial velocity. Raises NumericError naming the
  // first layer that produced a non-finite value.
  std::pair<ad::Var, ad::Var> forward(Binding &p, ad::Var x, ad::Var h, const EdgeInputs &in,
                                      const Segments &seg) const {
    for (std::size_t l = 1; l < layers.size(); ++l)
      if (layers[l].in_features != layers[l - 1].out_features)
        throw ContractError("EGNN stack widths are inconsistent at layer " + std::to_string(l));
    ad::Var v = p.tape().constant(Matrix::Zero(x.rows(), 3));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto out = layers[l].forward(p, x, h, v, in, seg);
      if (!out.x.value().allFinite() || !out.h.value().allFinite())
        throw NumericError("non-finite activation in EGNN layer " + std::to_string(l),
                           static_cast<int>(l));
      x = out.x;
      h = out.h;
      v = out.v;
    }
    return {x, h};
  }
};

} // namespace lmdm
