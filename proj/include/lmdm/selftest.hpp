//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lmdm/pipeline.hpp"
#include "lmdm/toy.hpp"

namespace lmdm::selftest {

// Fills every parameter with U(-scale, scale) so that zero-initialised output
// layers do not hide anything.
inline void randomize(ParamStore &ps, Rng &rng, double scale = 0.5) {
  for (auto &[name, m] : ps.arrays()) m = rng.uniform(m.rows(), m.cols(), -scale, scale);
}

inline double rel_err(const Matrix &a, const Matrix &b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

inline Molecule random_molecule(Rng &rng, int n, double spread = 1.6, const Vocabulary &vocab = {}) {
  std::vector<std::string> el;
  for (int i = 0; i < n; ++i) el.push_back(vocab.symbol(rng.uniform_int(0, vocab.size() - 1)));
  return Molecule::from_elements(el, spread * rng.normal(n, 3), vocab);
}

// Maximum relative error of encoder/decoder/dual score under a random rigid
// motion, over `seeds` random instances.
inline double equivariance_error(int seeds, std::uint64_t base = 0) {
  double worst = 0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng = Rng::stream(base, 100, static_cast<std::uint64_t>(s));
    const int k = 1 + s % 2;
    Autoencoder ae(AeConfig{5, k, 16, 2, kDefaultTau});
    ParamStore ap = ae.init(rng);
    randomize(ap, rng);
    ScoreConfig scfg;
    scfg.k = k;
    scfg.hidden = 16;
    scfg.layers = 2;
    DualScoreNet net(scfg);
    ParamStore sp = net.init(rng);
    randomize(sp, rng);
    NoiseSchedule sched = make_schedule(ScheduleKind::linear, 50);

    std::vector<Molecule> mols{random_molecule(rng, 3 + s % 4), random_molecule(rng, 2 + s % 3)};
    MolBatch b = MolBatch::from(mols);
    Matrix rot = random_rotation(rng);
    Eigen::RowVector3d shift(rng.normal(), rng.normal(), rng.normal());
    Matrix moved = rigid_motion(b.coords, rot, shift);

    ad::Tape t1, t2;
    Binding p1(t1, ap, false), p2(t2, ap, false);
    Encoded e1 = ae.encode(p1, b.coords, b.features, b.seg);
    Encoded e2 = ae.encode(p2, moved, b.features, b.seg);
    worst = std::max(worst, rel_err(e2.mu_x.value(), e1.mu_x.value() * rot.transpose()));
    worst = std::max(worst, rel_err(e2.mu_h.value(), e1.mu_h.value()));
    worst = std::max(worst, rel_err(e2.sigma_h.value(), e1.sigma_h.value()));

    Matrix zx = center_segments(rng.normal(b.seg.n_nodes(), 3), b.seg), zh = rng.normal(b.seg.n_nodes(), k);
    Matrix zx_moved = rigid_motion(zx, rot, shift);
    ad::Tape t3, t4;
    Binding p3(t3, ap, false), p4(t4, ap, false);
    Decoded d1 = ae.decode(p3, t3.constant(zx), t3.constant(zh), b.seg);
    Decoded d2 = ae.decode(p4, t4.constant(zx_moved), t4.constant(zh), b.seg);
    worst = std::max(worst, rel_err(d2.coords.value(), d1.coords.value() * rot.transpose()));
    worst = std::max(worst, rel_err(d2.type_logits.value(), d1.type_logits.value()));
    worst = std::max(worst, rel_err(d2.charge.value(), d1.charge.value()));

    std::vector<int> ts{rng.uniform_int(1, 50), rng.uniform_int(1, 50)};
    Matrix eta = rng.normal(b.seg.n_nodes(), scfg.var_noise_dim);
    auto in1 = DualScoreNet::make_inputs(zx, zh, ts, b.seg, scfg.tau);
    auto in2 = DualScoreNet::make_inputs(zx_moved, zh, ts, b.seg, scfg.tau);
    ad::Tape t5, t6;
    Binding p5(t5, sp, false), p6(t6, sp, false);
    ScoreOutput s1 = net.dual_score(p5, in1, eta, sched);
    ScoreOutput s2 = net.dual_score(p6, in2, eta, sched);
    worst = std::max(worst, rel_err(s2.s_x.value(), s1.s_x.value() * rot.transpose()));
    worst = std::max(worst, rel_err(s2.s_h.value(), s1.s_h.value()));
    VarNoise v1 = net.var_noise_encode(p5, in1, sched), v2 = net.var_noise_encode(p6, in2, sched);
    worst = std::max(worst, rel_err(v2.mu_v.value(), v1.mu_v.value()));
    worst = std::max(worst, rel_err(v2.sigma_v.value(), v1.sigma_v.value()));
  }
  return worst;
}

// Largest finite-difference gradient error of the autoencoder loss (both
// regularisers) and the diffusion loss on small random instances.
inline double gradient_error(int probes = 40, std::uint64_t seed = 0) {
  double worst = 0;
  Rng rng = Rng::stream(seed, 200, 0);
  std::vector<Molecule> mols{random_molecule(rng, 3, 1.2), random_molecule(rng, 4, 1.2)};
  MolBatch b = MolBatch::from(mols);
  for (RegMode mode : {RegMode::es, RegMode::kl}) {
    Autoencoder ae(AeConfig{5, 1, 8, 2, kDefaultTau});
    ParamStore ap = ae.init(rng);
    randomize(ap, rng, 0.3);
    Matrix eps = rng.normal(b.seg.n_nodes(), 4);
    LossFn fn = [&](const ParamStore &ps, ParamStore *grads) {
      ad::Tape t;
      Binding p(t, ps, grads != nullptr);
      AeLoss l = ae_objective(p, ae, b, eps, mode, 0.7);
      if (grads) {
        t.backward(l.total);
        p.collect(*grads);
      }
      return l.total.scalar();
    };
    worst = std::max(worst, grad_check(fn, ap, probes, seed));
  }

  ScoreConfig scfg;
  scfg.hidden = 8;
  scfg.layers = 2;
  DualScoreNet net(scfg);
  ParamStore sp = net.init(rng);
  randomize(sp, rng, 0.3);
  NoiseSchedule sched = make_schedule(ScheduleKind::linear, 40);
  DiffusionDraw d;
  d.seg = b.seg;
  d.z0_x = center_segments(rng.normal(b.seg.n_nodes(), 3), b.seg);
  d.z0_h = rng.normal(b.seg.n_nodes(), 1);
  d.t = {5, 30};
  d.eps = rng.normal(b.seg.n_nodes(), 4);
  d.eps.leftCols(3) = center_segments(d.eps.leftCols(3), b.seg);
  d.eta = rng.normal(b.seg.n_nodes(), scfg.var_noise_dim);
  LossFn dfn = [&](const ParamStore &ps, ParamStore *grads) {
    ad::Tape t;
    Binding p(t, ps, grads != nullptr);
    DiffusionLossParts l = diffusion_objective(p, net, d, sched, LossWeights{}, scfg.tau);
    if (grads) {
      t.backward(l.total);
      p.collect(*grads);
    }
    return l.total.scalar();
  };
  worst = std::max(worst, grad_check(dfn, sp, probes, seed));
  return worst;
}

// |mu_theta(z_t, true score) - posterior mean| over random states.
inline double parameterization_error(int states, std::uint64_t seed = 0) {
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Rng rng = Rng::stream(seed, 300, 0);
  double worst = 0;
  for (int i = 0; i < states; ++i) {
    const int t = rng.uniform_int(2, 100);
    Matrix z0 = rng.normal(3, 4), eps = rng.normal(3, 4);
    Matrix zt = q_sample(z0, t, eps, s);
    Matrix score = feature_score_target(zt, z0, t, s);
    worst = std::max(worst, (mu_theta(zt, score, t, s) - posterior_mean_var(zt, z0, t, s).mean).cwiseAbs().maxCoeff());
  }
  return worst;
}

// coord_score_target against central differences of the quadratic distance
// potential  U = -(sqrt(abar)/(2(1-abar))) sum_{i<j} (|x_i - x_j| - d0_ij)^2.
inline double distance_score_error(int trials, std::uint64_t seed = 0) {
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Rng rng = Rng::stream(seed, 400, 0);
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 3 + trial % 3, t = rng.uniform_int(1, 100);
    Matrix x0 = rng.normal(n, 3), xt = rng.normal(n, 3);
    const double ab = s.alpha_bar(t);
    auto potential = [&](const Matrix &x) {
      double u = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const double r = (x.row(i) - x.row(j)).norm() - (x0.row(i) - x0.row(j)).norm();
          u += r * r;
        }
      return -std::sqrt(ab) / (2.0 * (1.0 - ab)) * u;
    };
    EdgeSet es = build_edges(xt, kDefaultTau);
    Matrix analytic = coord_score_target(xt, x0, es, t, s);
    Matrix numeric(n, 3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        Matrix up = xt, dn = xt;
        up(i, c) += 1e-6;
        dn(i, c) -= 1e-6;
        numeric(i, c) = (potential(up) - potential(dn)) / 2e-6;
      }
    worst = std::max(worst, rel_err(analytic, numeric));
  }
  return worst;
}

// Largest |sum of z_x rows| seen across a short sampling run with random nets.
inline double sampler_com_drift(std::uint64_t seed = 0) {
  Rng rng = Rng::stream(seed, 500, 0);
  Models m;
  m.ae = Autoencoder(AeConfig{5, 1, 8, 1, kDefaultTau});
  m.ae_params = m.ae.init(rng);
  ScoreConfig scfg;
  scfg.hidden = 8;
  scfg.layers = 1;
  m.net = DualScoreNet(scfg);
  m.score_params = m.net.init(rng);
  randomize(m.score_params, rng, 0.2);
  m.schedule = make_schedule(ScheduleKind::linear, 20);
  SampleConfig sc;
  sc.n_molecules = 3;
  sc.fixed_nodes = 5;
  sc.seed = seed;
  double worst = 0;
  sample_molecules(m, sc, [&](const StepTrace &tr) {
    for (int g = 0; g < tr.seg.n_graphs(); ++g)
      worst = std::max(worst, tr.z_x.middleRows(tr.seg.offsets[static_cast<std::size_t>(g)],
                                                tr.seg.sizes[static_cast<std::size_t>(g)])
                                  .colwise()
                                  .sum()
                                  .cwiseAbs()
                                  .maxCoeff());
  });
  return worst;
}

inline Molecule methane(const Vocabulary &vocab = {}) {
  const double r = 1.09 / std::sqrt(3.0);
  Matrix x(5, 3);
  x << 0, 0, 0, r, r, r, r, -r, -r, -r, r, -r, -r, -r, r;
  return Molecule::from_elements({"C", "H", "H", "H", "H"}, x, vocab);
}

struct Check {
  std::string name;
  std::function<bool(std::string &)> run;
};

inline std::vector<Check> checks() {
  auto fmt = [](const char *f, double v) {
    char b[64];
    std::snprintf(b, sizeof b, f, v);
    return std::string(b);
  };
  return {
      {"equivariance", [=](std::string &d) { double e = equivariance_error(10); d = fmt("max rel err %.2e", e); return e <= 1e-6; }},
      {"gradients", [=](std::string &d) { double e = gradient_error(); d = fmt("max rel err %.2e", e); return e <= 1e-4; }},
      {"parameterization", [=](std::string &d) { double e = parameterization_error(100); d = fmt("max abs err %.2e", e); return e <= 1e-12; }},
      {"distance_score", [=](std::string &d) { double e = distance_score_error(10); d = fmt("max rel err %.2e", e); return e <= 1e-5; }},
      {"sampler_com", [=](std::string &d) { double e = sampler_com_drift(); d = fmt("max |COM| %.2e", e); return e <= 1e-6; }},
      {"metrics", [](std::string &d) {
         auto c = molecule_checks(infer_bonds(methane()));
         Matrix x(6, 3);
         x.topRows(5) = methane().coords;
         x.row(5) << 0, 0, -1.09;
         auto bad = molecule_checks(infer_bonds(Molecule::from_elements({"C", "H", "H", "H", "H", "H"}, x, {})));
         d = "methane valid/ion-free, pentavalent carbon invalid";
         return c.valid && c.ion_free && c.stable_atoms == 5 && !bad.valid;
       }},
      {"hash_permutation", [](std::string &d) {
         auto mols = make_toy_dataset(ToyKind::mixed, 10, 7);
         Rng rng(11);
         for (const auto &m : mols) {
           std::vector<int> perm(static_cast<std::size_t>(m.size()));
           std::iota(perm.begin(), perm.end(), 0);
           std::shuffle(perm.begin(), perm.end(), rng.engine());
           std::vector<std::string> el;
           Matrix x(m.size(), 3);
           for (int i = 0; i < m.size(); ++i) {
             el.push_back(m.element_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
             x.row(i) = m.coords.row(perm[static_cast<std::size_t>(i)]);
           }
           if (canonical_hash(Molecule::from_elements(el, x, {})) != canonical_hash(m)) return false;
         }
         d = "10 molecules";
         return true;
       }},
      {"checkpoint_roundtrip", [](std::string &d) {
         Rng rng(3);
         Checkpoint c{Stage::ae, 42, RunConfig().to_text(), Autoencoder(AeConfig{5, 1, 8, 1, 2.0}).init(rng)};
         std::string a = serialize_checkpoint(c);
         d = std::to_string(a.size()) + " bytes";
         return serialize_checkpoint(deserialize_checkpoint(a)) == a;
       }},
      {"toy_validity", [](std::string &d) {
         auto mols = make_toy_dataset(ToyKind::mixed, 200, 0);
         auto r = set_metrics(mols, {});
         d = "200 molecules";
         return r.validity == 100.0;
       }},
  };
}

// Runs every check, printing one line each. Returns true when all pass.
inline bool run_all(std::FILE *out = stdout) {
  bool ok = true;
  for (const auto &c : checks()) {
    std::string detail;
    auto start = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception &e) {
      detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(out, "%-22s %s  %s  (%.2fs)\n", c.name.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), secs);
    ok = ok && pass;
  }
  return ok;
}

} // namespace lmdm::selftest
