//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmdm/autodiff.hpp"

namespace lmdm {

// Named parameter arrays. Ordered by name so that iteration, checksums and
// serialization are deterministic.
class ParamStore {
public:
  using Map = std::map<std::string, Matrix>;

  Matrix &add(const std::string &name, Matrix value) {
    auto [it, inserted] = arrays_.insert_or_assign(name, std::move(value));
    return it->second;
  }
  bool contains(const std::string &name) const { return arrays_.count(name) > 0; }
  const Matrix &at(const std::string &name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  Matrix &at(const std::string &name) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  const Map &arrays() const { return arrays_; }
  Map &arrays() { return arrays_; }
  std::size_t size() const { return arrays_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto &[_, m] : arrays_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  // Zero-valued copy with identical names and shapes.
  ParamStore zeros_like() const {
    ParamStore z;
    for (const auto &[name, m] : arrays_) z.add(name, Matrix::Zero(m.rows(), m.cols()));
    return z;
  }

  // Subset whose names start with `prefix`.
  ParamStore with_prefix(const std::string &prefix) const {
    ParamStore out;
    for (const auto &[name, m] : arrays_)
      if (name.rfind(prefix, 0) == 0) out.add(name, m);
    return out;
  }

  void merge(const ParamStore &other) {
    for (const auto &[name, m] : other.arrays_) add(name, m);
  }

  // FNV-1a over names, shapes and raw bytes of the values.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void *p, std::size_t n) {
      auto *b = static_cast<const unsigned char *>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto &[name, m] : arrays_) {
      mix(name.data(), name.size());
      Eigen::Index dims[2] = {m.rows(), m.cols()};
      mix(dims, sizeof(dims));
      mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    return h;
  }

  bool all_finite() const {
    for (const auto &[_, m] : arrays_)
      if (!m.allFinite()) return false;
    return true;
  }

private:
  Map arrays_;
};

// Binds parameters to tape leaves on first use. Frozen bindings register
// parameters as constants so no adjoint flows into them.
class Binding {
public:
  Binding(ad::Tape &tape, const ParamStore &params, bool trainable = true)
      : tape_(&tape), params_(&params), trainable_(trainable) {}

  ad::Var operator()(const std::string &name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Matrix &m = params_->at(name);
    ad::Var v = trainable_ ? tape_->leaf(m) : tape_->constant(m);
    bound_.emplace(name, v);
    return v;
  }

  ad::Tape &tape() { return *tape_; }

  // Accumulates adjoints of bound parameters into `grads` (same names).
  void collect(ParamStore &grads) const {
    for (const auto &[name, v] : bound_) {
      if (!tape_->has_grad(v.id)) continue;
      Matrix &g = grads.at(name);
      g += tape_->grad(v.id);
    }
  }

private:
  ad::Tape *tape_;
  const ParamStore *params_;
  bool trainable_;
  std::map<std::string, ad::Var> bound_;
};

enum class InitMode { uniform, zeros };

// Dense layer y = x W + b with W stored as (in x out).
struct Linear {
  std::string name;
  int in = 0;
  int out = 0;

  void init(ParamStore &ps, Rng &rng, InitMode mode = InitMode::uniform) const {
    double s = 1.0 / std::sqrt(static_cast<double>(in));
    if (mode == InitMode::zeros) {
      ps.add(name + ".W", Matrix::Zero(in, out));
      ps.add(name + ".b", Matrix::Zero(1, out));
    } else {
      ps.add(name + ".W", rng.uniform(in, out, -s, s));
      ps.add(name + ".b", rng.uniform(1, out, -s, s));
    }
  }

  ad::Var operator()(Binding &p, ad::Var x) const {
    if (x.cols() != in)
      throw ContractError(name + ": expected " + std::to_string(in) + " input columns, got " +
                          std::to_string(x.cols()));
    return ad::add_row(ad::matmul(x, p(name + ".W")), p(name + ".b"));
  }
};

// Feed-forward network with SiLU between layers. `activate_last` also
// applies SiLU to the output layer.
struct Mlp {
  std::string name;
  std::vector<int> widths;
  bool activate_last = false;

  Mlp() = default;
  Mlp(std::string n, std::vector<int> w, bool act_last = false)
      : name(std::move(n)), widths(std::move(w)), activate_last(act_last) {
    if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
  }

  int in() const { return widths.front(); }
  int out() const { return widths.back(); }

  Linear layer(std::size_t i) const {
    return Linear{name + "." + std::to_string(i), widths[i], widths[i + 1]};
  }
  std::size_t depth() const { return widths.size() - 1; }

  void init(ParamStore &ps, Rng &rng, bool zero_last = false) const {
    for (std::size_t i = 0; i < depth(); ++i)
      layer(i).init(ps, rng,
                    (zero_last && i + 1 == depth()) ? InitMode::zeros : InitMode::uniform);
  }

  ad::Var operator()(Binding &p, ad::Var x) const {
    for (std::size_t i = 0; i < depth(); ++i) {
      x = layer(i)(p, x);
      if (i + 1 < depth() || activate_last) x = ad::silu(x);
    }
    return x;
  }
};

} // namespace lmdm
