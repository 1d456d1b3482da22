//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "lmdm/trainer.hpp"

namespace lmdm {

enum class VarNoiseSource { normal, uniform, encoder };

// Observed atom counts of the training set.
class NodeHistogram {
public:
  NodeHistogram() = default;
  explicit NodeHistogram(std::map<int, std::uint64_t> counts) : counts_(std::move(counts)) {}

  static NodeHistogram of(const std::vector<Molecule> &mols) {
    NodeHistogram h;
    for (const auto &m : mols) ++h.counts_[m.size()];
    return h;
  }

  bool empty() const { return total() == 0; }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto &[k, c] : counts_) n += c;
    return n;
  }
  const std::map<int, std::uint64_t> &counts() const { return counts_; }

private:
  std::map<int, std::uint64_t> counts_;
};

inline int sample_node_count(const NodeHistogram &h, Rng &rng) {
  if (h.empty()) throw ContractError("sample_node_count: empty histogram");
  double u = rng.uniform(0.0, 1.0) * static_cast<double>(h.total());
  int last = 0;
  for (const auto &[n, c] : h.counts()) {
    if (c == 0) continue;
    last = n;
    if (u < static_cast<double>(c)) return n;
    u -= static_cast<double>(c);
  }
  return last;
}

struct Models {
  Autoencoder ae;
  ParamStore ae_params;
  DualScoreNet net;
  ParamStore score_params;
  NoiseSchedule schedule;
  Vocabulary vocab;
};

struct SampleConfig {
  int n_molecules = 1;
  int fixed_nodes = 0; // > 0 overrides the histogram
  NodeHistogram histogram;
  VarNoiseSource var_noise_source = VarNoiseSource::normal;
  SigmaMode sigma_mode = SigmaMode::beta_tilde;
  Matrix condition; // 1 x cond_dim, already normalised; empty when unconditioned
  std::uint64_t seed = 0;
  int chunk = 64;
  Matrix initial_rotation; // optional 3x3 applied to every z_T coordinate block
};

// One reverse step of a chunk, reported before the update from t to t - 1.
struct StepTrace {
  int t = 0;
  Segments seg;
  Matrix z_x, z_h, eps, eta_v;
};
using TraceFn = std::function<void(const StepTrace &)>;

struct SampleResult {
  std::vector<Molecule> molecules; // accepted samples in index order
  std::vector<int> accepted;       // molecule index of each accepted sample
  std::vector<int> rejected;
  std::vector<LatentState> final_latents;
};

inline constexpr double kRejectNorm = 1e6;

namespace detail {

struct Walker {
  int index = 0;
  int n = 0;
  Rng eps_rng;
  Rng eta_rng;
  Matrix z_x, z_h;
  bool alive = true;
};

inline Matrix draw_eps(Rng &rng, int n, int k) {
  Matrix e = rng.normal(n, 3 + k);
  e.leftCols(3) = project_zero_com(e.leftCols(3));
  return e;
}

} // namespace detail

inline SampleResult sample_molecules(const Models &m, const SampleConfig &cfg, const TraceFn &trace = {}) {
  if (cfg.n_molecules < 1) throw ContractError("sample_molecules: n_molecules must be >= 1");
  const int k = m.net.config().k;
  const int dim = m.net.config().var_noise_dim;
  const int T = m.schedule.T();
  if (m.net.config().cond_dim > 0 &&
      (cfg.condition.rows() != 1 || cfg.condition.cols() != m.net.config().cond_dim))
    throw ContractError("sample_molecules: condition vector length must equal cond_dim");
  if (cfg.var_noise_source == VarNoiseSource::encoder && dim == 0)
    throw ContractError("sample_molecules: encoder noise source needs var_noise_dim > 0");

  SampleResult res;
  const int chunk = std::max(1, cfg.chunk);
  for (int start = 0; start < cfg.n_molecules; start += chunk) {
    std::vector<detail::Walker> ws;
    for (int idx = start; idx < std::min(cfg.n_molecules, start + chunk); ++idx) {
      detail::Walker w;
      w.index = idx;
      Rng nrng = Rng::stream(cfg.seed, streams::sample_node, static_cast<std::uint64_t>(idx));
      w.n = cfg.fixed_nodes > 0 ? cfg.fixed_nodes : sample_node_count(cfg.histogram, nrng);
      w.eps_rng = Rng::stream(cfg.seed, streams::sample_eps, static_cast<std::uint64_t>(idx));
      w.eta_rng = Rng::stream(cfg.seed, streams::sample_eta, static_cast<std::uint64_t>(idx));
      Matrix z = detail::draw_eps(w.eps_rng, w.n, k);
      w.z_x = z.leftCols(3);
      if (cfg.initial_rotation.size() > 0) w.z_x = w.z_x * cfg.initial_rotation.transpose();
      w.z_h = z.rightCols(k);
      ws.push_back(std::move(w));
    }

    for (int t = T; t >= 1; --t) {
      std::vector<detail::Walker *> live;
      for (auto &w : ws)
        if (w.alive) live.push_back(&w);
      if (live.empty()) break;
      std::vector<int> sizes;
      for (auto *w : live) sizes.push_back(w->n);
      Segments seg = Segments::from_sizes(sizes);
      const int n = seg.n_nodes();
      Matrix zx(n, 3), zh(n, k), eta(n, dim), eps(n, 3 + k);
      for (std::size_t g = 0; g < live.size(); ++g) {
        const int off = seg.offsets[g];
        zx.middleRows(off, live[g]->n) = live[g]->z_x;
        zh.middleRows(off, live[g]->n) = live[g]->z_h;
        eta.middleRows(off, live[g]->n) = cfg.var_noise_source == VarNoiseSource::uniform
                                              ? live[g]->eta_rng.uniform(live[g]->n, dim, -1.0, 1.0)
                                              : live[g]->eta_rng.normal(live[g]->n, dim);
        eps.middleRows(off, live[g]->n) =
            t > 1 ? detail::draw_eps(live[g]->eps_rng, live[g]->n, k) : Matrix::Zero(live[g]->n, 3 + k);
      }
      Matrix cond;
      if (m.net.config().cond_dim > 0) cond = cfg.condition.replicate(seg.n_graphs(), 1);
      auto in = DualScoreNet::make_inputs(zx, zh, std::vector<int>(live.size(), t), seg, m.net.config().tau, cond);

      ad::Tape tape;
      Binding p(tape, m.score_params, false);
      Matrix eta_v = eta;
      if (cfg.var_noise_source == VarNoiseSource::encoder) {
        VarNoise vn = m.net.var_noise_encode(p, in, m.schedule);
        eta_v = sample_var_noise(vn.mu_v.value(), vn.sigma_v.value(), eta, m.net.config().var_noise_scale);
      }
      if (trace) trace({t, seg, zx, zh, eps, eta_v});

      std::optional<ScoreOutput> sc;
      try {
        sc = m.net.dual_score(p, in, eta_v, m.schedule);
      } catch (const NumericError &) {
      } catch (const DegenerateGeometry &) {
      }
      Matrix score(n, 3 + k);
      if (sc) score << sc->s_x.value(), sc->s_h.value();
      else score.setConstant(std::numeric_limits<double>::quiet_NaN());
      Matrix z(n, 3 + k);
      z << zx, zh;
      Matrix next = mu_theta(z, score, t, m.schedule) + m.schedule.sigma(t, cfg.sigma_mode) * eps;

      for (std::size_t g = 0; g < live.size(); ++g) {
        detail::Walker &w = *live[g];
        Matrix block = next.middleRows(seg.offsets[g], w.n);
        if (!block.allFinite() || block.norm() > kRejectNorm) {
          w.alive = false;
          continue;
        }
        w.z_x = project_zero_com(block.leftCols(3));
        w.z_h = block.rightCols(k);
      }
    }

    std::vector<detail::Walker *> done;
    for (auto &w : ws) {
      if (w.alive) done.push_back(&w);
      else res.rejected.push_back(w.index);
    }
    if (done.empty()) continue;
    std::vector<int> sizes;
    for (auto *w : done) sizes.push_back(w->n);
    Segments seg = Segments::from_sizes(sizes);
    Matrix zx(seg.n_nodes(), 3), zh(seg.n_nodes(), k);
    for (std::size_t g = 0; g < done.size(); ++g) {
      zx.middleRows(seg.offsets[g], done[g]->n) = done[g]->z_x;
      zh.middleRows(seg.offsets[g], done[g]->n) = done[g]->z_h;
    }
    ad::Tape tape;
    Binding p(tape, m.ae_params, false);
    Decoded dec;
    try {
      dec = m.ae.decode(p, tape.constant(zx), tape.constant(zh), seg);
    } catch (const NumericError &) {
      for (auto *w : done) res.rejected.push_back(w->index);
      continue;
    }
    const Matrix &coords = dec.coords.value();
    const Matrix &logits = dec.type_logits.value();
    const Matrix &charge = dec.charge.value();
    for (std::size_t g = 0; g < done.size(); ++g) {
      const int off = seg.offsets[g], sz = done[g]->n;
      if (!coords.middleRows(off, sz).allFinite()) {
        res.rejected.push_back(done[g]->index);
        continue;
      }
      std::vector<std::string> elements;
      std::vector<int> charges;
      for (int i = off; i < off + sz; ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        elements.push_back(m.vocab.symbol(static_cast<int>(best)));
        charges.push_back(static_cast<int>(std::lround(charge(i, 0))));
      }
      res.molecules.push_back(Molecule::from_elements(elements, coords.middleRows(off, sz), m.vocab, charges));
      res.accepted.push_back(done[g]->index);
      res.final_latents.push_back({done[g]->z_x, done[g]->z_h});
    }
  }
  std::sort(res.rejected.begin(), res.rejected.end());
  return res;
}

} // namespace lmdm
