//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lmdm/autoencoder.hpp"
#include "lmdm/diffusion.hpp"
#include "lmdm/optim.hpp"
#include "lmdm/score_network.hpp"

namespace lmdm {

// Random stream ids; every draw is keyed by (seed, stream, index).
namespace streams {
inline constexpr std::uint64_t ae_batch = 1, ae_eps = 2, diff_batch = 3, diff_latent = 4, diff_time = 5,
                               diff_eps = 6, diff_eta = 7, init_ae = 8, init_score = 9, sample_node = 10,
                               sample_eps = 11, sample_eta = 12, toy = 13, split = 14;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_steps = 1000;
  int es_patience = 5;
  int es_check_every = 100;
  std::uint64_t seed = 0;
  RegMode reg_mode = RegMode::es;
  double kl_weight = 1.0;
  bool gamma_weighting = false;
  bool noise_level_weighting = true;
  CoordTarget coord_target = CoordTarget::distance;
  SigmaMode sigma_mode = SigmaMode::beta_tilde;
  VarNoiseScale var_noise_scale = VarNoiseScale::squared;
};

struct LogRecord {
  int step = 0;
  std::string stage;
  std::map<std::string, double> values;
};

// ---------------------------------------------------------------------------
// Dataset split and batching

// Deterministic 90/10 split keyed on the molecule index. Falls back to using
// the training set for validation when the hash leaves it empty.
struct Split {
  std::vector<int> train, validation;

  static Split make(int n) {
    Split s;
    for (int i = 0; i < n; ++i)
      (splitmix64(static_cast<std::uint64_t>(i) ^ 0x5eedULL) % 10 == 0 ? s.validation : s.train).push_back(i);
    if (s.train.empty()) std::swap(s.train, s.validation);
    if (s.validation.empty()) s.validation = s.train;
    return s;
  }
};

inline std::vector<int> draw_batch(const std::vector<int> &pool, int batch_size, Rng &rng) {
  std::vector<int> out(static_cast<std::size_t>(batch_size));
  for (auto &i : out) i = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
  return out;
}

inline MolBatch gather(const std::vector<Molecule> &data, const std::vector<int> &idx) {
  std::vector<const Molecule *> ptrs;
  for (int i : idx) ptrs.push_back(&data.at(static_cast<std::size_t>(i)));
  return MolBatch::from(ptrs);
}

// ---------------------------------------------------------------------------
// Stage 1: autoencoder

// Reconstruction + regularisation for one batch given the reparameterisation
// noise (N x (3 + k)).
inline AeLoss ae_objective(Binding &p, const Autoencoder &ae, const MolBatch &b, const Matrix &eps,
                           RegMode mode, double kl_weight) {
  Encoded enc = ae.encode(p, b);
  auto [zx, zh] = reparameterize(enc, eps, b.seg);
  Decoded dec = ae.decode(p, zx, zh, b.seg);
  return ae.loss(b, dec, enc, mode, kl_weight);
}

// Deterministic reconstruction loss through the mean latent.
inline double ae_validation_loss(const Autoencoder &ae, const ParamStore &params, const std::vector<Molecule> &data,
                                 const std::vector<int> &idx, double *coord_mse = nullptr) {
  double total = 0, coord = 0;
  std::size_t atoms = 0;
  for (std::size_t start = 0; start < idx.size(); start += 256) {
    std::vector<int> chunk(idx.begin() + static_cast<long>(start),
                           idx.begin() + static_cast<long>(std::min(idx.size(), start + 256)));
    MolBatch b = gather(data, chunk);
    ad::Tape tape;
    Binding p(tape, params, false);
    Matrix eps = Matrix::Zero(b.seg.n_nodes(), 3 + ae.config().k);
    AeLoss l = ae_objective(p, ae, b, eps, RegMode::es, 0.0);
    const auto n = static_cast<std::size_t>(b.seg.n_nodes());
    total += l.total.scalar() * static_cast<double>(n);
    coord += l.coord * static_cast<double>(n);
    atoms += n;
  }
  if (coord_mse) *coord_mse = coord / static_cast<double>(atoms);
  return total / static_cast<double>(atoms);
}

struct AeTrainResult {
  ParamStore params;
  std::vector<LogRecord> log;
  int steps_run = 0;
  int best_step = 0;
  double best_validation = 0;
  bool diverged = false;
  bool early_stopped = false;
};

inline AeTrainResult train_autoencoder(const std::vector<Molecule> &data, const Autoencoder &ae, ParamStore params,
                                       const TrainConfig &cfg) {
  if (data.empty()) throw ContractError("train_autoencoder: empty dataset");
  Split split = Split::make(static_cast<int>(data.size()));
  AeTrainResult res;
  res.params = params;
  res.best_validation = ae_validation_loss(ae, params, data, split.validation);
  Adam opt(cfg.learning_rate);
  int checks_without_improvement = 0;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    Rng brng = Rng::stream(cfg.seed, streams::ae_batch, static_cast<std::uint64_t>(step));
    MolBatch b = gather(data, draw_batch(split.train, cfg.batch_size, brng));
    Rng erng = Rng::stream(cfg.seed, streams::ae_eps, static_cast<std::uint64_t>(step));
    Matrix eps = erng.normal(b.seg.n_nodes(), 3 + ae.config().k);

    ad::Tape tape;
    Binding p(tape, params);
    AeLoss l;
    bool finite = true;
    try {
      l = ae_objective(p, ae, b, eps, cfg.reg_mode, cfg.kl_weight);
      finite = std::isfinite(l.total.scalar());
    } catch (const NumericError &) {
      finite = false;
    }
    if (!finite) {
      res.diverged = true;
      break;
    }
    tape.backward(l.total);
    ParamStore grads = params.zeros_like();
    p.collect(grads);
    opt.step(params, grads);
    res.steps_run = step;
    res.log.push_back({step, "ae", {{"loss", l.total.scalar()}, {"coord", l.coord}, {"type", l.type},
                                    {"charge", l.charge}, {"kl", l.kl}}});

    if (step % cfg.es_check_every == 0 || step == cfg.max_steps) {
      double coord = 0;
      double val = params.all_finite() ? ae_validation_loss(ae, params, data, split.validation, &coord)
                                       : std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(val)) {
        res.diverged = true;
        break;
      }
      res.log.push_back({step, "ae_validation", {{"loss", val}, {"coord", coord}}});
      if (val < res.best_validation) {
        res.best_validation = val;
        res.best_step = step;
        res.params = params;
        checks_without_improvement = 0;
      } else if (++checks_without_improvement >= cfg.es_patience && cfg.reg_mode == RegMode::es) {
        res.early_stopped = true;
        break;
      }
    }
  }
  // KL mode regularises through the penalty, so the last finite iterate is kept.
  if (cfg.reg_mode == RegMode::kl && !res.diverged) res.params = params;
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2: latent diffusion

// Random draws for one diffusion step over a batch.
struct DiffusionDraw {
  Segments seg;
  Matrix z0_x, z0_h;
  std::vector<int> t;
  Matrix eps; // N x (3 + k), coordinate block centred per molecule
  Matrix eta; // N x var_noise_dim
  Matrix cond;
};

struct DiffusionLossParts {
  ad::Var total;
  double score = 0;
  double kl = 0;
  Matrix s_x, s_h;
};

struct LossWeights {
  bool gamma = false;
  bool noise_level = true;
  SigmaMode sigma_mode = SigmaMode::beta_tilde;
  CoordTarget coord_target = CoordTarget::distance;
};

// Per-molecule weight applied to the mean squared score error.
inline double sample_weight(int t, const NoiseSchedule &s, const LossWeights &w) {
  double weight = 1.0;
  if (w.gamma) weight *= s.gamma(t, w.sigma_mode);
  if (w.noise_level) weight *= 1.0 - s.alpha_bar(t);
  return weight;
}

inline DiffusionLossParts diffusion_objective(Binding &p, const DualScoreNet &net, const DiffusionDraw &d,
                                              const NoiseSchedule &s, const LossWeights &w, double tau) {
  ad::Tape &tape = p.tape();
  const int n = d.seg.n_nodes();
  const int k = static_cast<int>(d.z0_h.cols());
  Matrix zt_x(n, 3), zt_h(n, k);
  for (int i = 0; i < n; ++i) {
    const double ab = s.alpha_bar(d.t.at(static_cast<std::size_t>((*d.seg.segment)[i])));
    zt_x.row(i) = std::sqrt(ab) * d.z0_x.row(i) + std::sqrt(1.0 - ab) * d.eps.row(i).head(3);
    zt_h.row(i) = std::sqrt(ab) * d.z0_h.row(i) + std::sqrt(1.0 - ab) * d.eps.row(i).tail(k);
  }
  auto in = DualScoreNet::make_inputs(zt_x, zt_h, d.t, d.seg, tau, d.cond);

  DiffusionLossParts out;
  ad::Var eta_v = tape.constant(Matrix::Zero(n, 0));
  ad::Var kl;
  const int m = net.config().var_noise_dim;
  if (m > 0) {
    VarNoise vn = net.var_noise_encode(p, in, s);
    eta_v = sample_var_noise(vn, d.eta, net.config().var_noise_scale);
    kl = var_noise_kl(vn, d.seg.n_graphs());
    out.kl = kl.scalar();
  }
  ScoreOutput sc = net.dual_score(p, in, eta_v, s);

  Matrix tx = w.coord_target == CoordTarget::distance
                  ? coord_score_target(zt_x, d.z0_x, in.edges.all, d.t, d.seg, s)
                  : Matrix(n, 3);
  Matrix th(n, k);
  for (int i = 0; i < n; ++i) {
    const double ab = s.alpha_bar(d.t.at(static_cast<std::size_t>((*d.seg.segment)[i])));
    th.row(i) = -(zt_h.row(i) - std::sqrt(ab) * d.z0_h.row(i)) / (1.0 - ab);
    if (w.coord_target == CoordTarget::gaussian)
      tx.row(i) = -(zt_x.row(i) - std::sqrt(ab) * d.z0_x.row(i)) / (1.0 - ab);
  }
  Matrix target(n, 3 + k);
  target << tx, th;

  Matrix weights(n, 1);
  for (int i = 0; i < n; ++i) {
    const int g = (*d.seg.segment)[i];
    const double per_mol = sample_weight(d.t.at(static_cast<std::size_t>(g)), s, w);
    weights(i, 0) = per_mol / (d.seg.sizes[static_cast<std::size_t>(g)] * (3.0 + k) * d.seg.n_graphs());
  }
  ad::Var resid = ad::sub(ad::concat_cols({sc.s_x, sc.s_h}), tape.constant(target));
  ad::Var score_loss = ad::sum(ad::mul(ad::row_sum(ad::square(resid)), tape.constant(weights)));
  out.score = score_loss.scalar();
  out.total = m > 0 ? ad::add(score_loss, kl) : score_loss;
  out.s_x = sc.s_x.value();
  out.s_h = sc.s_h.value();
  return out;
}

// Frozen encoder statistics for every training molecule.
struct LatentStats {
  Matrix mu_x, mu_h, sigma_x, sigma_h;
};

inline std::vector<LatentStats> encode_dataset(const Autoencoder &ae, const ParamStore &ae_params,
                                               const std::vector<Molecule> &data) {
  std::vector<LatentStats> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += 256) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + 256); ++i) idx.push_back(static_cast<int>(i));
    MolBatch b = gather(data, idx);
    ad::Tape tape;
    Binding p(tape, ae_params, false);
    Encoded e = ae.encode(p, b);
    for (int g = 0; g < b.seg.n_graphs(); ++g) {
      const int off = b.seg.offsets[static_cast<std::size_t>(g)], sz = b.seg.sizes[static_cast<std::size_t>(g)];
      out.push_back({e.mu_x.value().middleRows(off, sz), e.mu_h.value().middleRows(off, sz),
                     e.sigma_x.value().middleRows(off, sz), e.sigma_h.value().middleRows(off, sz)});
    }
  }
  return out;
}

// Assembles the random draws for one step: a reparameterized latent z0 from
// the frozen encoder statistics, t ~ U{1..T}, centred eps and eta.
inline DiffusionDraw make_draw(const std::vector<LatentStats> &latents, const std::vector<int> &idx,
                               const NoiseSchedule &s, int var_noise_dim, std::uint64_t seed, int step,
                               const Matrix &cond_all = {}) {
  std::vector<int> sizes;
  for (int i : idx) sizes.push_back(static_cast<int>(latents.at(static_cast<std::size_t>(i)).mu_x.rows()));
  DiffusionDraw d;
  d.seg = Segments::from_sizes(sizes);
  const int n = d.seg.n_nodes();
  const int k = static_cast<int>(latents.front().mu_h.cols());
  d.z0_x.resize(n, 3);
  d.z0_h.resize(n, k);
  Rng lrng = Rng::stream(seed, streams::diff_latent, static_cast<std::uint64_t>(step));
  Rng trng = Rng::stream(seed, streams::diff_time, static_cast<std::uint64_t>(step));
  Rng erng = Rng::stream(seed, streams::diff_eps, static_cast<std::uint64_t>(step));
  Rng hrng = Rng::stream(seed, streams::diff_eta, static_cast<std::uint64_t>(step));
  d.eps.resize(n, 3 + k);
  for (std::size_t g = 0; g < idx.size(); ++g) {
    const LatentStats &ls = latents[static_cast<std::size_t>(idx[g])];
    const int off = d.seg.offsets[g], sz = d.seg.sizes[g];
    Matrix e0 = lrng.normal(sz, 3 + k);
    Matrix e0x = project_zero_com(e0.leftCols(3));
    d.z0_x.middleRows(off, sz) = ls.mu_x + ls.sigma_x.cwiseProduct(e0x);
    d.z0_h.middleRows(off, sz) = ls.mu_h + ls.sigma_h.cwiseProduct(e0.rightCols(k));
    d.t.push_back(trng.uniform_int(1, s.T()));
    Matrix e = erng.normal(sz, 3 + k);
    e.leftCols(3) = project_zero_com(e.leftCols(3));
    d.eps.middleRows(off, sz) = e;
  }
  d.eta = hrng.normal(n, var_noise_dim);
  if (cond_all.size() > 0) {
    d.cond.resize(static_cast<Eigen::Index>(idx.size()), cond_all.cols());
    for (std::size_t g = 0; g < idx.size(); ++g) d.cond.row(static_cast<Eigen::Index>(g)) = cond_all.row(idx[g]);
  }
  return d;
}

struct DiffusionTrainResult {
  ParamStore params;
  std::vector<LogRecord> log;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
  int steps_run = 0;
  bool diverged = false;
};

// `cond` holds normalised conditioning values, one row per molecule, or is
// empty for unconditioned training.
inline DiffusionTrainResult train_diffusion(const std::vector<Molecule> &data, const Autoencoder &ae,
                                            const ParamStore &ae_params, const DualScoreNet &net, ParamStore params,
                                            const NoiseSchedule &s, const TrainConfig &cfg, const Matrix &cond = {}) {
  if (data.empty()) throw ContractError("train_diffusion: empty dataset");
  if (net.config().cond_dim > 0 && cond.rows() != static_cast<Eigen::Index>(data.size()))
    throw ContractError("train_diffusion: conditioning rows must match the dataset");
  DiffusionTrainResult res;
  const ParamStore encoder = ae_params.with_prefix("encoder.");
  res.encoder_checksum_before = encoder.checksum();
  std::vector<LatentStats> latents = encode_dataset(ae, ae_params, data);
  std::vector<int> pool(data.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  LossWeights w{cfg.gamma_weighting, cfg.noise_level_weighting, cfg.sigma_mode, cfg.coord_target};
  Adam opt(cfg.learning_rate);
  ParamStore last_good = params;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    Rng brng = Rng::stream(cfg.seed, streams::diff_batch, static_cast<std::uint64_t>(step));
    std::vector<int> idx = draw_batch(pool, cfg.batch_size, brng);
    DiffusionDraw d = make_draw(latents, idx, s, net.config().var_noise_dim, cfg.seed, static_cast<int>(step), cond);
    ad::Tape tape;
    Binding p(tape, params);
    DiffusionLossParts l;
    bool finite = true;
    try {
      l = diffusion_objective(p, net, d, s, w, ae.config().tau);
      finite = std::isfinite(l.total.scalar());
    } catch (const NumericError &) {
      finite = false;
    } catch (const DegenerateGeometry &) {
      continue; // coincident noised atoms; skip this draw
    }
    if (!finite) {
      res.diverged = true;
      params = last_good;
      break;
    }
    tape.backward(l.total);
    ParamStore grads = params.zeros_like();
    p.collect(grads);
    last_good = params;
    opt.step(params, grads);
    res.steps_run = step;
    res.log.push_back({step, "diffusion", {{"loss", l.total.scalar()}, {"score", l.score}, {"kl", l.kl}}});
  }
  res.params = params;
  res.encoder_checksum_after = ae_params.with_prefix("encoder.").checksum();
  return res;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

// `loss_fn(params, grads)` returns the loss and, when `grads` is non-null,
// accumulates analytic gradients into it. Probes `n_probes` randomly chosen
// scalar parameters with central differences and returns the largest
// |analytic - numeric| / (|numeric| + 1e-8).
//
// Coordinates whose analytic gradient is below `floor` * max(1, |loss|) are
// not probed: central differences cannot resolve them at this step size.
using LossFn = std::function<double(const ParamStore &, ParamStore *)>;

struct GradCheckResult {
  double max_rel_err = 0;
  int probed = 0;
  std::size_t eligible = 0;
  std::size_t total = 0;
};

inline GradCheckResult grad_check_detail(const LossFn &loss_fn, const ParamStore &params, int n_probes,
                                         std::uint64_t seed = 0, double step = 1e-5, double floor = 1e-6) {
  ParamStore grads = params.zeros_like();
  const double loss = loss_fn(params, &grads);
  GradCheckResult res;
  std::vector<std::pair<std::string, Eigen::Index>> coords;
  for (const auto &[name, m] : params.arrays()) {
    res.total += static_cast<std::size_t>(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (std::abs(grads.at(name).data()[i]) >= floor * std::max(1.0, std::abs(loss))) coords.emplace_back(name, i);
  }
  res.eligible = coords.size();
  if (coords.empty()) return res;
  Rng rng(seed);
  ParamStore probe = params;
  for (int k = 0; k < n_probes; ++k) {
    const auto &[name, i] = coords[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(coords.size()) - 1))];
    double &slot = probe.at(name).data()[i];
    const double orig = slot;
    slot = orig + step;
    const double up = loss_fn(probe, nullptr);
    slot = orig - step;
    const double down = loss_fn(probe, nullptr);
    slot = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grads.at(name).data()[i];
    res.max_rel_err = std::max(res.max_rel_err, std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8));
    ++res.probed;
  }
  return res;
}

inline double grad_check(const LossFn &loss_fn, const ParamStore &params, int n_probes, std::uint64_t seed = 0,
                         double step = 1e-5) {
  return grad_check_detail(loss_fn, params, n_probes, seed, step).max_rel_err;
}

} // namespace lmdm
