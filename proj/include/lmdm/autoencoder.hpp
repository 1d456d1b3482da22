//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <vector>

#include "lmdm/egnn.hpp"
#include "lmdm/geometry.hpp"
#include "lmdm/nn.hpp"

namespace lmdm {

inline constexpr double kSigmaFloor = 1e-5;

enum class RegMode { kl, es };

// Several molecules packed into one disjoint-union graph, coordinates
// centred per molecule.
struct MolBatch {
  Segments seg;
  Matrix coords;
  Matrix features;
  ad::Index types;
  Matrix charges; // N x 1

  static MolBatch from(const std::vector<const Molecule *> &mols) {
    if (mols.empty()) throw ContractError("empty molecule batch");
    std::vector<int> sizes;
    Eigen::Index n = 0, d = mols.front()->features.cols();
    for (const Molecule *m : mols) {
      m->validate();
      if (m->features.cols() != d) throw ContractError("batch mixes feature layouts");
      sizes.push_back(m->size());
      n += m->size();
    }
    MolBatch b;
    b.seg = Segments::from_sizes(sizes);
    b.coords.resize(n, 3);
    b.features.resize(n, d);
    b.charges.resize(n, 1);
    std::vector<int> types;
    Eigen::Index off = 0;
    for (const Molecule *m : mols) {
      b.coords.middleRows(off, m->size()) = project_zero_com(m->coords);
      b.features.middleRows(off, m->size()) = m->features;
      b.charges.middleRows(off, m->size()) = m->features.rightCols(1);
      for (int t : m->type_indices()) types.push_back(t);
      off += m->size();
    }
    b.types = ad::make_index(std::move(types));
    return b;
  }

  static MolBatch from(const std::vector<Molecule> &mols) {
    std::vector<const Molecule *> ptrs;
    for (const auto &m : mols) ptrs.push_back(&m);
    return from(ptrs);
  }
};

struct LatentState {
  Matrix z_x; // N x 3
  Matrix z_h; // N x k
  int k() const { return static_cast<int>(z_h.cols()); }
};

struct AeConfig {
  int n_types = 5; // vocabulary size
  int k = 1;
  int hidden = 64;
  int layers = 3;
  double tau = kDefaultTau;
};

struct Encoded {
  ad::Var mu_x, mu_h, sigma_x, sigma_h;
};

struct Decoded {
  ad::Var coords, type_logits, charge;
};

struct AeLoss {
  ad::Var total;
  double coord = 0, type = 0, charge = 0, kl = 0;
};

// Closed-form KL( N(mu, sigma^2) || N(0, I) ) summed over all entries.
inline ad::Var gaussian_kl_sum(ad::Var mu, ad::Var sigma) {
  ad::Var var = ad::square(sigma);
  ad::Var terms = ad::sub(ad::add(ad::square(mu), var), ad::add_const(ad::log(var), 1.0));
  return ad::scale(ad::sum(terms), 0.5);
}

class Autoencoder {
public:
  Autoencoder() = default;
  explicit Autoencoder(AeConfig cfg) : cfg_(cfg) {
    const int d_in = cfg_.n_types + 1;
    encoder_ = EgnnStack::make("encoder.egnn", d_in, cfg_.hidden, cfg_.layers);
    decoder_ = EgnnStack::make("decoder.egnn", cfg_.k, cfg_.hidden, cfg_.layers);
  }

  const AeConfig &config() const { return cfg_; }
  const EgnnStack &encoder_stack() const { return encoder_; }
  const EgnnStack &decoder_stack() const { return decoder_; }

  Linear mu_h_head() const { return {"encoder.mu_h", cfg_.hidden, cfg_.k}; }
  Linear sigma_x_head() const { return {"encoder.sigma_x", cfg_.hidden, 1}; }
  Linear sigma_h_head() const { return {"encoder.sigma_h", cfg_.hidden, cfg_.k}; }
  Linear type_head() const { return {"decoder.types", cfg_.hidden, cfg_.n_types}; }
  Linear charge_head() const { return {"decoder.charge", cfg_.hidden, 1}; }

  ParamStore init(Rng &rng) const {
    ParamStore ps;
    encoder_.init(ps, rng);
    decoder_.init(ps, rng);
    mu_h_head().init(ps, rng);
    sigma_x_head().init(ps, rng);
    sigma_h_head().init(ps, rng);
    type_head().init(ps, rng);
    charge_head().init(ps, rng);
    return ps;
  }

  Encoded encode(Binding &p, const Matrix &coords, const Matrix &features, const Segments &seg) const {
    ad::Tape &t = p.tape();
    BatchEdges be = batch_edges(coords, seg, cfg_.tau);
    auto [x, h] = encoder_.forward(p, t.constant(coords), t.constant(features), all_pairs_inputs(be), seg);
    Encoded e;
    e.mu_x = ad::center_segments(x, seg.segment, seg.n_graphs());
    e.mu_h = mu_h_head()(p, h);
    e.sigma_x = ad::repeat_cols(ad::add_const(ad::softplus(sigma_x_head()(p, h)), kSigmaFloor), 3);
    e.sigma_h = ad::add_const(ad::softplus(sigma_h_head()(p, h)), kSigmaFloor);
    return e;
  }

  Encoded encode(Binding &p, const MolBatch &b) const { return encode(p, b.coords, b.features, b.seg); }

  Decoded decode(Binding &p, ad::Var z_x, ad::Var z_h, const Segments &seg) const {
    if (z_h.cols() != cfg_.k) throw ContractError("decode: latent width does not match k");
    if (!z_x.value().allFinite() || !z_h.value().allFinite())
      throw NumericError("decode: non-finite latent");
    BatchEdges be = batch_edges(z_x.value(), seg, cfg_.tau);
    auto [x, h] = decoder_.forward(p, z_x, z_h, all_pairs_inputs(be), seg);
    Decoded d;
    d.coords = ad::center_segments(x, seg.segment, seg.n_graphs());
    d.type_logits = type_head()(p, h);
    d.charge = charge_head()(p, h);
    return d;
  }

  AeLoss loss(const MolBatch &b, const Decoded &dec, const Encoded &enc, RegMode mode,
              double kl_weight) const {
    ad::Tape &t = *dec.coords.tape;
    AeLoss out;
    ad::Var coord = ad::mean(ad::square(ad::sub(dec.coords, t.constant(b.coords))));
    ad::Var ce = ad::scale(ad::mean(ad::pick(ad::log_softmax(dec.type_logits), b.types)), -1.0);
    ad::Var chg = ad::mean(ad::square(ad::sub(dec.charge, t.constant(b.charges))));
    out.total = ad::add(ad::add(coord, ce), chg);
    out.coord = coord.scalar();
    out.type = ce.scalar();
    out.charge = chg.scalar();
    if (mode == RegMode::kl) {
      ad::Var kl = ad::scale(ad::add(gaussian_kl_sum(enc.mu_x, enc.sigma_x),
                                     gaussian_kl_sum(enc.mu_h, enc.sigma_h)),
                             1.0 / b.seg.n_graphs());
      out.kl = kl.scalar();
      out.total = ad::add(out.total, ad::scale(kl, kl_weight));
    }
    return out;
  }

private:
  AeConfig cfg_;
  EgnnStack encoder_;
  EgnnStack decoder_;
};

// z = mu + sigma * eps, with the coordinate block of eps projected to zero
// COM per molecule before use. `eps` is N x (3 + k).
inline LatentState reparameterize(const Matrix &mu_x, const Matrix &mu_h, const Matrix &sigma_x,
                                  const Matrix &sigma_h, const Matrix &eps, const Segments &seg) {
  const Eigen::Index k = mu_h.cols();
  if (eps.rows() != mu_x.rows() || eps.cols() != 3 + k)
    throw ContractError("reparameterize: noise must be N x (3 + k)");
  Matrix ex = center_segments(eps.leftCols(3), seg);
  LatentState z;
  z.z_x = mu_x + sigma_x.cwiseProduct(ex);
  z.z_h = mu_h + sigma_h.cwiseProduct(eps.rightCols(k));
  return z;
}

// Differentiable variant used during autoencoder training.
inline std::pair<ad::Var, ad::Var> reparameterize(const Encoded &e, const Matrix &eps,
                                                  const Segments &seg) {
  ad::Tape &t = *e.mu_x.tape;
  const Eigen::Index k = e.mu_h.cols();
  if (eps.cols() != 3 + k) throw ContractError("reparameterize: noise must be N x (3 + k)");
  ad::Var ex = t.constant(center_segments(eps.leftCols(3), seg));
  ad::Var eh = t.constant(eps.rightCols(k));
  return {ad::add(e.mu_x, ad::mul(e.sigma_x, ex)), ad::add(e.mu_h, ad::mul(e.sigma_h, eh))};
}

} // namespace lmdm
