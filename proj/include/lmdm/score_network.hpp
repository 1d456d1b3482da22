//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lmdm/autoencoder.hpp"
#include "lmdm/diffusion.hpp"
#include "lmdm/invariant_net.hpp"

namespace lmdm {

enum class VarNoiseScale { squared, linear };
enum class Branch { local, global, both };

struct ScoreConfig {
  int k = 1;
  int hidden = 64;
  int layers = 3;
  int time_embed = 8;
  int var_noise_dim = 2;
  int cond_dim = 0;
  int rbf = 16;
  double tau = kDefaultTau;
  VarNoiseScale var_noise_scale = VarNoiseScale::squared;
  // Divide network outputs by sqrt(1 - abar_t) so the networks regress
  // unit-scale quantities at every noise level.
  bool noise_scaled_output = true;
  CoordEmbedMode coord_embed = CoordEmbedMode::none;
};

struct VarNoise {
  ad::Var mu_v, sigma_v;
};

// Sinusoidal embedding of t / T, one row per node.
inline Matrix time_embedding(const std::vector<int> &t_per_graph, int T, const Segments &seg, int width) {
  Matrix out(seg.n_nodes(), width);
  const int half = width / 2;
  for (int i = 0; i < seg.n_nodes(); ++i) {
    const double u = static_cast<double>(t_per_graph.at(static_cast<std::size_t>((*seg.segment)[i]))) / T;
    for (int f = 0; f < half; ++f) {
      const double w = M_PI * std::ldexp(1.0, f);
      out(i, 2 * f) = std::sin(w * u);
      out(i, 2 * f + 1) = std::cos(w * u);
    }
    if (width % 2 == 1) out(i, width - 1) = u;
  }
  return out;
}

// eta_v = mu_v + sigma_v^2 * eta (squared) or mu_v + sigma_v * eta (linear)
inline Matrix sample_var_noise(const Matrix &mu_v, const Matrix &sigma_v, const Matrix &eta,
                               VarNoiseScale mode = VarNoiseScale::squared) {
  if (mu_v.rows() != eta.rows() || mu_v.cols() != eta.cols() || sigma_v.rows() != eta.rows() ||
      sigma_v.cols() != eta.cols())
    throw ContractError("sample_var_noise: shape mismatch");
  Matrix scale = mode == VarNoiseScale::squared ? Matrix(sigma_v.cwiseProduct(sigma_v)) : sigma_v;
  return mu_v + scale.cwiseProduct(eta);
}

inline ad::Var sample_var_noise(const VarNoise &vn, const Matrix &eta, VarNoiseScale mode) {
  ad::Tape &t = *vn.mu_v.tape;
  ad::Var scale = mode == VarNoiseScale::squared ? ad::square(vn.sigma_v) : vn.sigma_v;
  return ad::add(vn.mu_v, ad::mul(scale, t.constant(eta)));
}

// +KL(N(mu_v, sigma_v^2) || N(0, I)), summed over nodes and averaged over
// the molecules in the batch.
inline double var_noise_kl(const Matrix &mu_v, const Matrix &sigma_v, int n_graphs = 1) {
  if ((sigma_v.array() <= 0.0).any()) throw ContractError("var_noise_kl: sigma must be positive");
  Eigen::ArrayXXd var = sigma_v.array().square();
  return 0.5 * (mu_v.array().square() + var - 1.0 - var.log()).sum() / n_graphs;
}

inline ad::Var var_noise_kl(const VarNoise &vn, int n_graphs) {
  return ad::scale(gaussian_kl_sum(vn.mu_v, vn.sigma_v), 1.0 / n_graphs);
}

// Per-property standardisation of conditioning values.
struct CondStats {
  std::vector<std::string> names;
  Vector mean;
  Vector stddev;

  int dim() const { return static_cast<int>(names.size()); }

  static CondStats fit(const std::vector<std::string> &names, const Matrix &values) {
    CondStats s;
    s.names = names;
    s.mean = values.colwise().mean().transpose();
    s.stddev.resize(values.cols());
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      double var = (values.col(c).array() - s.mean(c)).square().mean();
      s.stddev(c) = var > 0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Matrix normalize(const Matrix &values) const {
    Matrix out = values;
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      out.col(c) = (values.col(c).array() - mean(c)) / stddev(c);
    return out;
  }
};

struct ScoreOutput {
  ad::Var s_x; // N x 3
  ad::Var s_h; // N x k
};

class DualScoreNet {
public:
  DualScoreNet() = default;
  explicit DualScoreNet(ScoreConfig cfg) : cfg_(cfg) {
    const int in = cfg_.k + cfg_.time_embed + cfg_.var_noise_dim + cfg_.cond_dim;
    const RbfBasis basis = RbfBasis::even(cfg_.rbf);
    global_ = InvariantNet{"score.global", in, cfg_.hidden, cfg_.layers, cfg_.k, 2, basis, cfg_.coord_embed};
    local_ = InvariantNet{"score.local", in, cfg_.hidden, cfg_.layers, cfg_.k, 2, basis, cfg_.coord_embed};
    varnoise_ = InvariantNet{"varnoise", cfg_.k + cfg_.time_embed + cfg_.cond_dim, cfg_.hidden, cfg_.layers,
                             2 * cfg_.var_noise_dim, 2, basis, CoordEmbedMode::none};
  }

  const ScoreConfig &config() const { return cfg_; }
  const InvariantNet &global_net() const { return global_; }
  const InvariantNet &local_net() const { return local_; }
  const InvariantNet &varnoise_net() const { return varnoise_; }

  ParamStore init(Rng &rng) const {
    ParamStore ps;
    global_.init(ps, rng);
    local_.init(ps, rng);
    if (cfg_.var_noise_dim > 0) varnoise_.init(ps, rng);
    return ps;
  }

  struct Inputs {
    Matrix z_x;
    Matrix z_h;
    std::vector<int> t; // per molecule
    Segments seg;
    BatchEdges edges;
    Matrix cond; // n_graphs x cond_dim, empty when unconditioned
  };

  static Inputs make_inputs(Matrix z_x, Matrix z_h, std::vector<int> t, const Segments &seg, double tau,
                            Matrix cond = {}) {
    Inputs in{std::move(z_x), std::move(z_h), std::move(t), seg, {}, std::move(cond)};
    in.edges = batch_edges(in.z_x, seg, tau);
    return in;
  }

  // Phi_v(z_t): invariant mean and positive scale of the variational noise.
  VarNoise var_noise_encode(Binding &p, const Inputs &in, const NoiseSchedule &s) const {
    if (cfg_.var_noise_dim == 0) throw ContractError("variational noise disabled (var_noise_dim = 0)");
    if (!in.z_x.allFinite() || !in.z_h.allFinite()) throw NumericError("var_noise_encode: non-finite latent");
    ad::Tape &t = p.tape();
    std::vector<ad::Var> parts{t.constant(in.z_h), t.constant(time_embedding(in.t, s.T(), in.seg, cfg_.time_embed))};
    if (cfg_.cond_dim > 0) parts.push_back(t.constant(cond_rows(in)));
    ad::Var feats = ad::concat_cols(parts);
    ad::Var x = t.constant(in.z_x);
    ad::Var h = varnoise_.schnet_forward(p, feats, x, in.edges.all);
    ad::Var raw = varnoise_.node_score(p, h);
    VarNoise vn;
    vn.mu_v = ad::slice_cols(raw, 0, cfg_.var_noise_dim);
    vn.sigma_v = ad::add_const(ad::softplus(ad::slice_cols(raw, cfg_.var_noise_dim, cfg_.var_noise_dim)), kSigmaFloor);
    if (!vn.mu_v.value().allFinite() || !vn.sigma_v.value().allFinite())
      throw NumericError("var_noise_encode: non-finite activation");
    return vn;
  }

  // s = Phi_l(z_t, eta_v, t, e_l) + Phi_g(z_t, eta_v, t, e_g)
  ScoreOutput dual_score(Binding &p, const Inputs &in, ad::Var eta_v, const NoiseSchedule &s,
                         Branch which = Branch::both) const {
    ad::Tape &t = p.tape();
    const int n = in.seg.n_nodes();
    if (in.z_x.rows() != n || in.z_x.cols() != 3 || in.z_h.rows() != n || in.z_h.cols() != cfg_.k)
      throw ContractError("dual_score: latent shape mismatch");
    if (eta_v.rows() != n || eta_v.cols() != cfg_.var_noise_dim)
      throw ContractError("dual_score: variational noise shape mismatch");
    if (cfg_.cond_dim > 0 && (in.cond.rows() != in.seg.n_graphs() || in.cond.cols() != cfg_.cond_dim))
      throw ContractError("dual_score: condition vector length must equal cond_dim");

    std::vector<ad::Var> parts{t.constant(in.z_h), t.constant(time_embedding(in.t, s.T(), in.seg, cfg_.time_embed))};
    if (cfg_.var_noise_dim > 0) parts.push_back(eta_v);
    if (cfg_.cond_dim > 0) parts.push_back(t.constant(cond_rows(in)));
    ad::Var feats = ad::concat_cols(parts);
    ad::Var x = t.constant(in.z_x);

    ScoreOutput out;
    bool first = true;
    auto accumulate = [&](const InvariantNet &net, const EdgeList &edges, int level) {
      Matrix attr = Matrix::Zero(static_cast<Eigen::Index>(edges.size()), 2);
      attr.col(level).setOnes();
      auto sc = net.scores(p, feats, x, edges, attr);
      if (first) {
        out = {sc.coord, sc.feat};
        first = false;
      } else {
        out = {ad::add(out.s_x, sc.coord), ad::add(out.s_h, sc.feat)};
      }
    };
    if (which != Branch::global) accumulate(local_, in.edges.local, 0);
    if (which != Branch::local) accumulate(global_, in.edges.global, 1);

    if (cfg_.noise_scaled_output) {
      Matrix inv(n, 1);
      for (int i = 0; i < n; ++i) {
        const int tt = in.t.at(static_cast<std::size_t>((*in.seg.segment)[i]));
        inv(i, 0) = 1.0 / std::sqrt(1.0 - s.alpha_bar(tt));
      }
      ad::Var c = t.constant(inv);
      out = {ad::mul_col(out.s_x, c), ad::mul_col(out.s_h, c)};
    }
    if (!out.s_x.value().allFinite() || !out.s_h.value().allFinite())
      throw NumericError("dual_score: non-finite score");
    return out;
  }

  ScoreOutput dual_score(Binding &p, const Inputs &in, const Matrix &eta_v, const NoiseSchedule &s,
                         Branch which = Branch::both) const {
    return dual_score(p, in, p.tape().constant(eta_v), s, which);
  }

private:
  Matrix cond_rows(const Inputs &in) const {
    Matrix out(in.seg.n_nodes(), cfg_.cond_dim);
    for (int i = 0; i < in.seg.n_nodes(); ++i) out.row(i) = in.cond.row((*in.seg.segment)[i]);
    return out;
  }

  ScoreConfig cfg_;
  InvariantNet global_, local_, varnoise_;
};

} // namespace lmdm
