//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmdm/config.hpp"
#include "lmdm/io.hpp"
#include "lmdm/metrics.hpp"
#include "lmdm/sampler.hpp"

namespace lmdm {

// Glue from a RunConfig to the trainer and sampler stages.

inline Vocabulary vocab_from(const RunConfig &c) { return Vocabulary(c.list("elements")); }

inline AeConfig ae_config_from(const RunConfig &c) {
  AeConfig a;
  a.n_types = vocab_from(c).size();
  a.k = c.integer("k");
  a.hidden = c.integer("hidden_dim");
  a.layers = c.integer("ae_layers");
  a.tau = c.real("tau");
  if (a.k < 1) throw ConfigError("k must be >= 1");
  if (a.hidden < 1 || a.layers < 1) throw ConfigError("hidden_dim and ae_layers must be >= 1");
  if (!(a.tau > 0)) throw ConfigError("tau must be positive");
  return a;
}

inline VarNoiseScale var_noise_scale_from(const RunConfig &c) {
  const auto &v = c.str("var_noise_scale");
  if (v == "squared") return VarNoiseScale::squared;
  if (v == "linear") return VarNoiseScale::linear;
  throw ConfigError("var_noise_scale must be squared | linear");
}

inline ScoreConfig score_config_from(const RunConfig &c) {
  ScoreConfig s;
  s.k = c.integer("k");
  s.hidden = c.integer("hidden_dim");
  s.layers = c.integer("score_layers");
  s.time_embed = c.integer("time_embed_dim");
  s.var_noise_dim = c.integer("var_noise_dim");
  s.cond_dim = static_cast<int>(c.list("cond_properties").size());
  s.rbf = c.integer("rbf_centers");
  s.tau = c.real("tau");
  s.var_noise_scale = var_noise_scale_from(c);
  if (s.layers < 1 || s.time_embed < 0 || s.var_noise_dim < 0 || s.rbf < 2)
    throw ConfigError("invalid score network dimensions");
  return s;
}

inline NoiseSchedule schedule_from(const RunConfig &c) {
  const auto &kind = c.str("schedule_kind");
  ScheduleKind k;
  if (kind == "linear") k = ScheduleKind::linear;
  else if (kind == "polynomial") k = ScheduleKind::polynomial;
  else throw ConfigError("schedule_kind must be linear | polynomial");
  return make_schedule(k, c.integer("T"));
}

inline SigmaMode sigma_mode_from(const RunConfig &c) {
  const auto &v = c.str("sigma_mode");
  if (v == "beta_tilde") return SigmaMode::beta_tilde;
  if (v == "beta") return SigmaMode::beta;
  if (v == "unit") return SigmaMode::unit;
  throw ConfigError("sigma_mode must be beta_tilde | beta | unit");
}

inline VarNoiseSource var_noise_source_from(const RunConfig &c) {
  const auto &v = c.str("var_noise_source");
  if (v == "normal") return VarNoiseSource::normal;
  if (v == "uniform") return VarNoiseSource::uniform;
  if (v == "encoder") return VarNoiseSource::encoder;
  throw ConfigError("var_noise_source must be normal | uniform | encoder");
}

inline TrainConfig train_config_from(const RunConfig &c) {
  TrainConfig t;
  t.learning_rate = c.real("learning_rate");
  t.batch_size = c.integer("batch_size");
  t.max_steps = c.integer("max_steps");
  t.es_patience = c.integer("es_patience");
  t.es_check_every = c.integer("es_check_every");
  t.seed = c.u64("seed");
  const auto &reg = c.str("reg_mode");
  if (reg == "es") t.reg_mode = RegMode::es;
  else if (reg == "kl") t.reg_mode = RegMode::kl;
  else throw ConfigError("reg_mode must be es | kl");
  t.kl_weight = c.real("kl_weight");
  t.gamma_weighting = c.flag("gamma_weighting");
  const auto &lw = c.str("loss_weighting");
  if (lw == "noise_level") t.noise_level_weighting = true;
  else if (lw == "none") t.noise_level_weighting = false;
  else throw ConfigError("loss_weighting must be none | noise_level");
  const auto &ct = c.str("coord_target");
  if (ct == "distance") t.coord_target = CoordTarget::distance;
  else if (ct == "gaussian") t.coord_target = CoordTarget::gaussian;
  else throw ConfigError("coord_target must be distance | gaussian");
  t.sigma_mode = sigma_mode_from(c);
  t.var_noise_scale = var_noise_scale_from(c);
  if (t.batch_size < 1 || t.max_steps < 0 || t.es_check_every < 1 || t.es_patience < 1 || !(t.learning_rate > 0))
    throw ConfigError("invalid training hyper-parameters");
  return t;
}

using LogFn = std::function<void(const LogRecord &)>;

inline void emit(const LogFn &log, const std::vector<LogRecord> &records) {
  if (log)
    for (const auto &r : records) log(r);
}

inline Checkpoint run_train_ae(const RunConfig &cfg, const std::vector<Molecule> &data, const LogFn &log = {}) {
  Autoencoder ae(ae_config_from(cfg));
  Rng rng = Rng::stream(cfg.u64("seed"), streams::init_ae, 0);
  AeTrainResult res = train_autoencoder(data, ae, ae.init(rng), train_config_from(cfg));
  emit(log, res.log);
  if (log)
    log({res.steps_run, "ae_summary",
         {{"best_step", res.best_step}, {"best_validation", res.best_validation},
          {"diverged", res.diverged ? 1.0 : 0.0}, {"early_stopped", res.early_stopped ? 1.0 : 0.0}}});
  return {Stage::ae, cfg.u64("seed"), cfg.to_text(), res.params};
}

inline ParamStore strip_meta(const ParamStore &ps, const std::string &prefix) {
  ParamStore out;
  for (const auto &[name, m] : ps.arrays())
    if (name.rfind(prefix, 0) == 0) out.add(name, m);
  return out;
}

// Stage 2. The resulting checkpoint carries the frozen autoencoder, the score
// networks, the training node-count histogram and conditioning statistics.
inline Checkpoint run_train_diff(const RunConfig &cfg, const std::vector<Molecule> &data, const Checkpoint &ae_ckpt,
                                 const std::optional<PropertyTable> &props = std::nullopt, const LogFn &log = {}) {
  if (ae_ckpt.stage != Stage::ae) throw CheckpointError("expected an autoencoder checkpoint");
  ae_ckpt.require_compatible(cfg);
  Autoencoder ae(ae_config_from(cfg));
  ScoreConfig sc = score_config_from(cfg);
  DualScoreNet net(sc);
  Rng rng = Rng::stream(cfg.u64("seed"), streams::init_score, 0);
  ParamStore params = net.init(rng);

  Matrix cond;
  CondStats stats;
  if (sc.cond_dim > 0) {
    if (!props) throw ConfigError("cond_properties is set but no property sidecar was given");
    if (props->values.rows() != static_cast<Eigen::Index>(data.size()))
      throw ConfigError("property sidecar has " + std::to_string(props->values.rows()) + " rows for " +
                        std::to_string(data.size()) + " molecules");
    Matrix raw = props->select(cfg.list("cond_properties"));
    stats = CondStats::fit(cfg.list("cond_properties"), raw);
    cond = stats.normalize(raw);
  }

  DiffusionTrainResult res =
      train_diffusion(data, ae, ae_ckpt.arrays, net, params, schedule_from(cfg), train_config_from(cfg), cond);
  emit(log, res.log);
  if (res.encoder_checksum_before != res.encoder_checksum_after)
    throw Error("encoder parameters changed during diffusion training");
  if (log) log({res.steps_run, "diffusion_summary", {{"diverged", res.diverged ? 1.0 : 0.0}}});

  Checkpoint out{Stage::diffusion, cfg.u64("seed"), cfg.to_text(), ae_ckpt.arrays};
  out.arrays.merge(res.params);
  const NodeHistogram hist = NodeHistogram::of(data);
  Matrix h(static_cast<Eigen::Index>(hist.counts().size()), 2);
  Eigen::Index r = 0;
  for (const auto &[n, c] : hist.counts()) h.row(r++) << n, static_cast<double>(c);
  out.arrays.add("meta.node_histogram", h);
  if (sc.cond_dim > 0) {
    out.arrays.add("meta.cond_mean", Matrix(stats.mean.transpose()));
    out.arrays.add("meta.cond_std", Matrix(stats.stddev.transpose()));
  }
  return out;
}

struct LoadedModels {
  Models models;
  NodeHistogram histogram;
  std::optional<CondStats> cond;
};

inline LoadedModels load_models(const Checkpoint &ckpt, const RunConfig &cfg) {
  if (ckpt.stage != Stage::diffusion) throw CheckpointError("sampling needs a diffusion checkpoint");
  ckpt.require_compatible(cfg);
  LoadedModels lm;
  lm.models.ae = Autoencoder(ae_config_from(cfg));
  lm.models.net = DualScoreNet(score_config_from(cfg));
  lm.models.schedule = schedule_from(cfg);
  lm.models.vocab = vocab_from(cfg);
  lm.models.ae_params = strip_meta(ckpt.arrays, "encoder.");
  lm.models.ae_params.merge(strip_meta(ckpt.arrays, "decoder."));
  lm.models.score_params = strip_meta(ckpt.arrays, "score.");
  lm.models.score_params.merge(strip_meta(ckpt.arrays, "varnoise."));
  if (!ckpt.arrays.contains("meta.node_histogram")) throw CheckpointError("checkpoint lacks a node-count histogram");
  std::map<int, std::uint64_t> counts;
  const Matrix &h = ckpt.arrays.at("meta.node_histogram");
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    counts[static_cast<int>(h(r, 0))] = static_cast<std::uint64_t>(h(r, 1));
  lm.histogram = NodeHistogram(counts);
  if (lm.models.net.config().cond_dim > 0) {
    CondStats s;
    s.names = cfg.list("cond_properties");
    s.mean = ckpt.arrays.at("meta.cond_mean").row(0).transpose();
    s.stddev = ckpt.arrays.at("meta.cond_std").row(0).transpose();
    lm.cond = s;
  }
  // structural check on array shapes
  Rng probe(0);
  ParamStore ref_ae = lm.models.ae.init(probe), ref_score = lm.models.net.init(probe);
  for (const auto *pair : {&ref_ae, &ref_score})
    for (const auto &[name, m] : pair->arrays()) {
      const ParamStore &got = pair == &ref_ae ? lm.models.ae_params : lm.models.score_params;
      if (!got.contains(name)) throw CheckpointError("checkpoint is missing array '" + name + "'");
      if (got.at(name).rows() != m.rows() || got.at(name).cols() != m.cols())
        throw CheckpointError("array '" + name + "' has the wrong shape");
    }
  return lm;
}

// `condition` holds raw (unnormalised) property values, one per
// cond_properties entry.
inline SampleResult run_sample(const Checkpoint &ckpt, const RunConfig &cfg, int n_molecules,
                               const std::vector<double> &condition = {}, int fixed_nodes = 0,
                               const TraceFn &trace = {}) {
  LoadedModels lm = load_models(ckpt, cfg);
  SampleConfig sc;
  sc.n_molecules = n_molecules;
  sc.fixed_nodes = fixed_nodes;
  sc.histogram = lm.histogram;
  sc.var_noise_source = var_noise_source_from(cfg);
  sc.sigma_mode = sigma_mode_from(cfg);
  sc.seed = cfg.u64("seed");
  sc.chunk = cfg.integer("sample_chunk");
  if (lm.cond) {
    if (static_cast<int>(condition.size()) != lm.cond->dim())
      throw ConfigError("expected " + std::to_string(lm.cond->dim()) + " condition values");
    Matrix raw(1, lm.cond->dim());
    for (int i = 0; i < lm.cond->dim(); ++i) raw(0, i) = condition[static_cast<std::size_t>(i)];
    sc.condition = lm.cond->normalize(raw);
  } else if (!condition.empty()) {
    throw ConfigError("condition values given but the model is unconditioned");
  }
  return sample_molecules(lm.models, sc, trace);
}

inline CheckOptions check_options_from(const RunConfig &cfg) {
  CheckOptions o;
  o.require_connected = cfg.flag("require_connected");
  for (const auto &item : cfg.list("valence_extras")) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("valence_extras entries look like El:valence");
    try {
      o.valences.add(RunConfig::trim(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    } catch (const std::logic_error &) {
      throw ConfigError("bad valence in '" + item + "'");
    }
  }
  return o;
}

} // namespace lmdm
