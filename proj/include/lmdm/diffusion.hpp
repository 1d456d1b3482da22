//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lmdm/geometry.hpp"

namespace lmdm {

enum class ScheduleKind { linear, polynomial };
enum class SigmaMode { beta_tilde, beta, unit };
enum class CoordTarget { distance, gaussian };

// Discrete variance table indexed by t = 1..T. Index 0 holds the t = 0
// boundary (alpha_bar = 1) so that t - 1 lookups need no special casing.
class NoiseSchedule {
public:
  NoiseSchedule() = default;

  static NoiseSchedule from_betas(const std::vector<double> &betas) {
    if (betas.empty()) throw ContractError("noise schedule needs at least one step");
    NoiseSchedule s;
    const int T = static_cast<int>(betas.size());
    s.beta_.assign(T + 1, 0.0);
    s.alpha_.assign(T + 1, 1.0);
    s.alpha_bar_.assign(T + 1, 1.0);
    s.beta_tilde_.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
      double b = betas[static_cast<std::size_t>(t - 1)];
      if (!(b > 0.0 && b < 1.0)) throw ContractError("beta_t must lie strictly in (0, 1)");
      s.beta_[t] = b;
      s.alpha_[t] = 1.0 - b;
      s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - b);
      s.beta_tilde_[t] = t == 1 ? b : (1.0 - s.alpha_bar_[t - 1]) / (1.0 - s.alpha_bar_[t]) * b;
    }
    return s;
  }

  int T() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const { return beta_.at(check(t)); }
  double alpha(int t) const { return alpha_.at(check(t)); }
  double alpha_bar(int t) const {
    if (t < 0 || t > T()) throw ContractError("time step out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
  }
  double beta_tilde(int t) const { return beta_tilde_.at(check(t)); }

  double sigma(int t, SigmaMode mode) const {
    switch (mode) {
    case SigmaMode::beta_tilde: return std::sqrt(beta_tilde(t));
    case SigmaMode::beta: return std::sqrt(beta(t));
    case SigmaMode::unit: return 1.0;
    }
    return 1.0;
  }

  // beta_t^2 / (2 (1 - beta_t) (1 - alpha_bar_t) sigma_t^2)
  double gamma(int t, SigmaMode mode) const {
    double s = sigma(t, mode);
    return beta(t) * beta(t) / (2.0 * (1.0 - beta(t)) * (1.0 - alpha_bar(t)) * s * s);
  }

private:
  std::size_t check(int t) const {
    if (t < 1 || t > T()) throw ContractError("time step " + std::to_string(t) + " out of range");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> beta_, alpha_, alpha_bar_, beta_tilde_;
};

struct ScheduleParams {
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double power = 2.0;
  double precision = 1e-5; // keeps alpha_bar away from {0, 1}
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int T, const ScheduleParams &p = {}) {
  if (T < 2) throw ContractError("schedule requires T >= 2");
  std::vector<double> betas(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    for (int t = 1; t <= T; ++t)
      betas[static_cast<std::size_t>(t - 1)] =
          p.beta_start + (p.beta_end - p.beta_start) * (t - 1) / (T - 1);
    return NoiseSchedule::from_betas(betas);
  }
  // alpha_bar_t = (1 - (t/T)^p)^2, with per-step ratios clipped to
  // [1e-3, 1] and the product squeezed into [precision, 1 - precision].
  std::vector<double> raw(static_cast<std::size_t>(T + 1));
  for (int t = 0; t <= T; ++t) {
    double u = 1.0 - std::pow(static_cast<double>(t) / T, p.power);
    raw[static_cast<std::size_t>(t)] = u * u;
  }
  double cum = 1.0, prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    double ratio = std::clamp(raw[static_cast<std::size_t>(t)] / raw[static_cast<std::size_t>(t - 1)], 1e-3, 1.0);
    cum *= ratio;
    double ab = (1.0 - 2.0 * p.precision) * cum + p.precision;
    betas[static_cast<std::size_t>(t - 1)] = 1.0 - ab / prev;
    prev = ab;
  }
  return NoiseSchedule::from_betas(betas);
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline Matrix q_sample(const Matrix &z0, int t, const Matrix &eps, const NoiseSchedule &s) {
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw ContractError("q_sample: shape mismatch");
  if (t < 1 || t > s.T()) throw ContractError("q_sample: time step out of range");
  double ab = s.alpha_bar(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

struct Posterior {
  Matrix mean;
  double variance = 0;
};

inline Posterior posterior_mean_var(const Matrix &z_t, const Matrix &z0, int t, const NoiseSchedule &s) {
  if (t < 2) throw ContractError("posterior_mean_var requires t >= 2");
  const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), b = s.beta(t);
  const double c_t = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  const double c_0 = std::sqrt(ab_prev) * b / (1.0 - ab);
  return {c_t * z_t + c_0 * z0, s.beta_tilde(t)};
}

// Reverse mean in score form. With the score s = grad log q(z_t | z0) this is
//   (z_t + beta_t * s) / sqrt(1 - beta_t)
// which is the beta_t / sqrt(1 - abar_t) form applied to the unit-scale
// output sqrt(1 - abar_t) * s.
inline Matrix mu_theta(const Matrix &z_t, const Matrix &score, int t, const NoiseSchedule &s) {
  if (z_t.rows() != score.rows() || z_t.cols() != score.cols())
    throw ContractError("mu_theta: shape mismatch");
  const double b = s.beta(t);
  return (z_t + b * score) / std::sqrt(1.0 - b);
}

// Distance-based coordinate target summed over directed edges:
//   g_ij = -sqrt(abar_t) (dt_ij - d_ij) / (1 - abar_t)
//   out_i = sum_j g_ij (xt_i - xt_j) / dt_ij
inline Matrix coord_score_target(const Matrix &coords_t, const Matrix &coords_0, const EdgeList &edges,
                                 int t, const NoiseSchedule &s) {
  if (coords_t.rows() != coords_0.rows() || coords_t.cols() != 3 || coords_0.cols() != 3)
    throw ContractError("coord_score_target: shape mismatch");
  const double ab = s.alpha_bar(t);
  const double c = -std::sqrt(ab) / (1.0 - ab);
  Matrix out = Matrix::Zero(coords_t.rows(), 3);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int i = (*edges.recv)[e], j = (*edges.send)[e];
    Eigen::RowVector3d diff = coords_t.row(i) - coords_t.row(j);
    const double dt = diff.norm();
    if (dt < 1e-8) throw DegenerateGeometry("coincident atoms in coord_score_target");
    const double d0 = (coords_0.row(i) - coords_0.row(j)).norm();
    out.row(i) += c * (dt - d0) / dt * diff;
  }
  return out;
}

// Per-molecule variant over local and global edges together.
inline Matrix coord_score_target(const Matrix &coords_t, const Matrix &coords_0, const EdgeSet &es, int t,
                                 const NoiseSchedule &s) {
  std::vector<int> r, snd;
  for (const auto *lst : {&es.local, &es.global})
    for (const auto &[i, j] : *lst) {
      r.push_back(i);
      snd.push_back(j);
    }
  return coord_score_target(coords_t, coords_0, EdgeList{ad::make_index(r), ad::make_index(snd)}, t, s);
}

// Batched variant: each edge uses the time step of the molecule owning its
// receiver node.
inline Matrix coord_score_target(const Matrix &coords_t, const Matrix &coords_0, const EdgeList &edges,
                                 const std::vector<int> &t_per_graph, const Segments &seg,
                                 const NoiseSchedule &s) {
  if (coords_t.rows() != coords_0.rows() || coords_t.rows() != seg.n_nodes())
    throw ContractError("coord_score_target: shape mismatch");
  Matrix out = Matrix::Zero(coords_t.rows(), 3);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int i = (*edges.recv)[e], j = (*edges.send)[e];
    const double ab = s.alpha_bar(t_per_graph.at(static_cast<std::size_t>((*seg.segment)[i])));
    Eigen::RowVector3d diff = coords_t.row(i) - coords_t.row(j);
    const double dt = diff.norm();
    if (dt < 1e-8) throw DegenerateGeometry("coincident atoms in coord_score_target");
    const double d0 = (coords_0.row(i) - coords_0.row(j)).norm();
    out.row(i) += -std::sqrt(ab) / (1.0 - ab) * (dt - d0) / dt * diff;
  }
  return out;
}

// -(z_t - sqrt(abar_t) z0) / (1 - abar_t)
inline Matrix feature_score_target(const Matrix &zh_t, const Matrix &zh_0, int t, const NoiseSchedule &s) {
  if (zh_t.rows() != zh_0.rows() || zh_t.cols() != zh_0.cols())
    throw ContractError("feature_score_target: shape mismatch");
  const double ab = s.alpha_bar(t);
  return -(zh_t - std::sqrt(ab) * zh_0) / (1.0 - ab);
}

inline double diffusion_loss(const Matrix &s_pred, const Matrix &target, int t, const NoiseSchedule &s,
                             bool gamma_weighting, SigmaMode mode = SigmaMode::beta_tilde) {
  if (s_pred.rows() != target.rows() || s_pred.cols() != target.cols())
    throw ContractError("diffusion_loss: shape mismatch");
  if (s_pred.size() == 0) throw ContractError("diffusion_loss: empty input");
  double mse = (s_pred - target).array().square().mean();
  return gamma_weighting ? mse * s.gamma(t, mode) : mse;
}

} // namespace lmdm
