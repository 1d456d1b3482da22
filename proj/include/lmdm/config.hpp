//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lmdm/error.hpp"

namespace lmdm {

struct ConfigKey {
  const char *name;
  const char *default_value;
  const char *doc;
  bool structural; // must match between a checkpoint and the loading run
};

// Every recognised key with its default. Keys outside this table are
// rejected.
inline const std::vector<ConfigKey> &config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"k", "1", "invariant latent width per atom", true},
      {"tau", "2.0", "local edge radius in Angstrom (inclusive)", true},
      {"T", "1000", "number of diffusion steps", true},
      {"schedule_kind", "linear", "noise schedule: linear | polynomial", true},
      {"sigma_mode", "beta_tilde", "reverse-step noise scale: beta_tilde | beta | unit", false},
      {"reg_mode", "es", "autoencoder regulariser: es | kl", false},
      {"kl_weight", "1.0", "weight of the latent KL term in kl mode", false},
      {"var_noise_source", "normal", "sampling-time eta_v: normal | uniform | encoder", false},
      {"var_noise_scale", "squared", "eta_v = mu + sigma^2 eta (squared) or mu + sigma eta (linear)", true},
      {"var_noise_dim", "2", "width of the variational noise per atom", true},
      {"learning_rate", "0.001", "Adam step size", false},
      {"batch_size", "32", "molecules per optimisation step", false},
      {"max_steps", "1000", "optimisation steps per training stage", false},
      {"seed", "0", "master seed for every random stream", false},
      {"cond_properties", "", "comma-separated property names used for conditioning", true},
      {"es_patience", "5", "validation checks without improvement before the autoencoder stops (es mode)", false},
      {"es_check_every", "100", "steps between validation checks", false},
      {"gamma_weighting", "off", "weight diffusion loss terms by gamma_t: on | off", false},
      {"coord_target", "distance", "coordinate score target: distance | gaussian", false},
      {"loss_weighting", "noise_level", "per-sample diffusion loss weight: none | noise_level", false},
      {"hidden_dim", "64", "hidden width of every network", true},
      {"ae_layers", "3", "EGNN layers in encoder and decoder", true},
      {"score_layers", "3", "continuous-filter layers per score branch", true},
      {"time_embed_dim", "8", "sinusoidal time embedding width", true},
      {"rbf_centers", "16", "radial basis functions on [0, 10] Angstrom", true},
      {"elements", "H,C,N,O,F", "element vocabulary in feature order", true},
      {"require_connected", "true", "validity requires a single connected fragment", false},
      {"valence_extras", "", "extra allowed valences, e.g. N:5,S:2", false},
      {"sample_chunk", "64", "molecules advanced together during sampling", false},
  };
  return keys;
}

class RunConfig {
public:
  RunConfig() {
    for (const auto &k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool is_known(const std::string &key) {
    const auto &keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey &k) { return key == k.name; });
  }

  void set(const std::string &key, const std::string &value) {
    if (!is_known(key)) throw ConfigError("unknown configuration key '" + key + "'");
    values_[key] = value;
  }

  // Accepts "key=value"; surrounding whitespace is trimmed.
  void set_assignment(const std::string &line) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  static RunConfig parse(const std::string &text) {
    RunConfig c;
    c.apply(text);
    return c;
  }

  // Applies the assignments in `text` on top of the current values.
  void apply(const std::string &text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      if (trim(line).empty()) continue;
      try {
        set_assignment(line);
      } catch (const ConfigError &e) {
        throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  static std::string read_text(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  static RunConfig load(const std::string &path) { return parse(read_text(path)); }

  // Sorted key=value lines; the canonical snapshot stored in checkpoints.
  std::string to_text() const {
    std::string out;
    for (const auto &[k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  const std::string &str(const std::string &key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
  }

  int integer(const std::string &key) const {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(str(key), &pos);
      if (pos != str(key).size()) throw std::invalid_argument("trailing");
      return static_cast<int>(v);
    } catch (const std::logic_error &) {
      throw ConfigError("key '" + key + "' expects an integer, got '" + str(key) + "'");
    }
  }

  std::uint64_t u64(const std::string &key) const {
    try {
      return std::stoull(str(key));
    } catch (const std::logic_error &) {
      throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + str(key) + "'");
    }
  }

  double real(const std::string &key) const {
    try {
      std::size_t pos = 0;
      double v = std::stod(str(key), &pos);
      if (pos != str(key).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::logic_error &) {
      throw ConfigError("key '" + key + "' expects a number, got '" + str(key) + "'");
    }
  }

  bool flag(const std::string &key) const {
    const std::string &v = str(key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "' expects on/off, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string &key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) out.push_back(trim(item));
    return out;
  }

  // Keys flagged structural whose values differ between the two configs.
  std::vector<std::string> structural_mismatches(const RunConfig &other) const {
    std::vector<std::string> out;
    for (const auto &k : config_keys())
      if (k.structural && str(k.name) != other.str(k.name)) out.push_back(k.name);
    return out;
  }

  const std::map<std::string, std::string> &values() const { return values_; }

  static std::string trim(const std::string &s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

private:
  std::map<std::string, std::string> values_;
};

} // namespace lmdm
