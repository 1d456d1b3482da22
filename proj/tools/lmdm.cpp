//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmdm/pipeline.hpp"
#include "lmdm/selftest.hpp"
#include "lmdm/toy.hpp"

namespace {

using namespace lmdm;

// Thrown for bad arguments discovered after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App *app) {
    app->add_option("--config", file, "key=value configuration file");
    app->add_option("--set", sets, "override one configuration key (key=value), repeatable");
  }

  // Defaults, then `base` (a checkpoint snapshot) if given, then the file,
  // then --set overrides.
  RunConfig build(const std::string *base = nullptr) const {
    RunConfig c = base ? RunConfig::parse(*base) : RunConfig();
    if (!file.empty()) c.apply(RunConfig::read_text(file));
    for (const auto &s : sets) c.set_assignment(s);
    return c;
  }
};

class JsonLog {
public:
  explicit JsonLog(const std::string &path) {
    if (!path.empty()) {
      file_.open(path, std::ios::trunc);
      if (!file_) throw Error("cannot write log '" + path + "'");
    }
  }
  void operator()(const LogRecord &r) {
    if (!file_.is_open()) return;
    nlohmann::json j = {{"step", r.step}, {"stage", r.stage}};
    for (const auto &[k, v] : r.values) j[k] = v;
    file_ << j.dump() << "\n";
  }

private:
  std::ofstream file_;
};

std::vector<double> parse_doubles(const std::string &text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error &) {
      throw UsageError("bad number '" + item + "' in --condition");
    }
  }
  return out;
}

int run(int argc, char **argv) {
  CLI::App app{"Latent molecular diffusion: toy data, training, sampling and evaluation"};
  app.require_subcommand(1);

  // ingest
  auto *ingest = app.add_subcommand("ingest", "validate a corpus and write it COM-centred");
  std::string ingest_in, ingest_out, ingest_props;
  ConfigArgs ingest_cfg;
  ingest->add_option("input", ingest_in, "input XYZ file")->required();
  ingest->add_option("-o,--output", ingest_out, "output XYZ file")->required();
  ingest->add_option("--properties", ingest_props, "property sidecar to check against the corpus");
  ingest_cfg.attach(ingest);

  // make-toy
  auto *toy = app.add_subcommand("make-toy", "write a synthetic corpus");
  std::string toy_kind = "mixed", toy_out;
  int toy_n = 100;
  std::uint64_t toy_seed = 0;
  toy->add_option("--kind", toy_kind, "chains | rings | mixed")->check(CLI::IsMember({"chains", "rings", "mixed"}));
  toy->add_option("-n,--count", toy_n, "number of molecules")->check(CLI::PositiveNumber);
  toy->add_option("--seed", toy_seed, "random seed");
  toy->add_option("-o,--output", toy_out, "output XYZ file")->required();

  // train-ae
  auto *tae = app.add_subcommand("train-ae", "train the autoencoder");
  std::string tae_data, tae_out, tae_log;
  ConfigArgs tae_cfg;
  tae->add_option("--data", tae_data, "training corpus (XYZ)")->required();
  tae->add_option("-o,--output", tae_out, "checkpoint to write")->required();
  tae->add_option("--log", tae_log, "JSON-lines training log");
  tae_cfg.attach(tae);

  // train-diff
  auto *tdf = app.add_subcommand("train-diff", "train the latent diffusion model on a frozen autoencoder");
  std::string tdf_data, tdf_ae, tdf_out, tdf_log, tdf_props;
  ConfigArgs tdf_cfg;
  tdf->add_option("--data", tdf_data, "training corpus (XYZ)")->required();
  tdf->add_option("--ae", tdf_ae, "autoencoder checkpoint")->required();
  tdf->add_option("-o,--output", tdf_out, "checkpoint to write")->required();
  tdf->add_option("--properties", tdf_props, "property sidecar for conditioning");
  tdf->add_option("--log", tdf_log, "JSON-lines training log");
  tdf_cfg.attach(tdf);

  // sample
  auto *smp = app.add_subcommand("sample", "draw molecules from a diffusion checkpoint");
  std::string smp_ckpt, smp_out, smp_cond;
  int smp_n = 100, smp_nodes = 0;
  ConfigArgs smp_cfg;
  smp->add_option("--checkpoint", smp_ckpt, "diffusion checkpoint")->required();
  smp->add_option("-o,--output", smp_out, "output XYZ file")->required();
  smp->add_option("-n,--count", smp_n, "number of molecules")->check(CLI::PositiveNumber);
  smp->add_option("--nodes", smp_nodes, "fixed atom count (default: training histogram)")->check(CLI::NonNegativeNumber);
  smp->add_option("--condition", smp_cond, "comma-separated raw property values");
  smp_cfg.attach(smp);

  // eval
  auto *evl = app.add_subcommand("eval", "validity, uniqueness, novelty and stability of a sample set");
  std::string evl_samples, evl_ref, evl_json;
  ConfigArgs evl_cfg;
  evl->add_option("--samples", evl_samples, "generated molecules (XYZ)")->required();
  evl->add_option("--reference", evl_ref, "training corpus for novelty (XYZ)");
  evl->add_option("--json", evl_json, "append the report as one JSON line");
  evl_cfg.attach(evl);

  // selftest
  auto *st = app.add_subcommand("selftest", "run the built-in property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*ingest) {
    RunConfig cfg = ingest_cfg.build();
    auto mols = read_xyz(ingest_in, vocab_from(cfg));
    if (mols.empty()) throw Error("corpus '" + ingest_in + "' is empty");
    for (auto &m : mols) m.coords = project_zero_com(m.coords);
    if (!ingest_props.empty()) {
      auto props = read_properties(ingest_props);
      if (props.values.rows() != static_cast<Eigen::Index>(mols.size()))
        throw Error("property sidecar has " + std::to_string(props.values.rows()) + " rows for " +
                    std::to_string(mols.size()) + " molecules");
    }
    write_xyz(mols, ingest_out);
    std::printf("ingested %zu molecules\n", mols.size());
  } else if (*toy) {
    write_xyz(make_toy_dataset(parse_toy_kind(toy_kind), toy_n, toy_seed), toy_out);
    std::printf("wrote %d molecules\n", toy_n);
  } else if (*tae) {
    RunConfig cfg = tae_cfg.build();
    auto data = read_xyz(tae_data, vocab_from(cfg));
    JsonLog log(tae_log);
    Checkpoint c = run_train_ae(cfg, data, std::ref(log));
    write_checkpoint(c, tae_out);
    std::printf("wrote %s (%zu arrays)\n", tae_out.c_str(), c.arrays.size());
  } else if (*tdf) {
    Checkpoint ae = read_checkpoint(tdf_ae);
    RunConfig cfg = tdf_cfg.build(&ae.config_text);
    auto data = read_xyz(tdf_data, vocab_from(cfg));
    std::optional<PropertyTable> props;
    if (!tdf_props.empty()) props = read_properties(tdf_props);
    JsonLog log(tdf_log);
    Checkpoint c = run_train_diff(cfg, data, ae, props, std::ref(log));
    write_checkpoint(c, tdf_out);
    std::printf("wrote %s (%zu arrays)\n", tdf_out.c_str(), c.arrays.size());
  } else if (*smp) {
    Checkpoint c = read_checkpoint(smp_ckpt);
    RunConfig cfg = smp_cfg.build(&c.config_text);
    SampleResult r = run_sample(c, cfg, smp_n, smp_cond.empty() ? std::vector<double>{} : parse_doubles(smp_cond),
                                smp_nodes);
    write_xyz(r.molecules, smp_out);
    std::printf("sampled %zu molecules, rejected %zu\n", r.molecules.size(), r.rejected.size());
  } else if (*evl) {
    RunConfig cfg = evl_cfg.build();
    const Vocabulary vocab = vocab_from(cfg);
    auto samples = read_xyz(evl_samples, vocab);
    std::set<std::uint64_t> ref;
    if (!evl_ref.empty()) ref = corpus_hashes(read_xyz(evl_ref, vocab));
    MetricsReport rep = set_metrics(samples, ref, check_options_from(cfg));
    std::fputs(rep.table().c_str(), stdout);
    if (!evl_json.empty()) {
      std::ofstream f(evl_json, std::ios::app);
      if (!f) throw Error("cannot write '" + evl_json + "'");
      f << rep.to_json().dump() << "\n";
    }
  } else if (*st) {
    return selftest::run_all() ? 0 : 1;
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const lmdm::ConfigError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
