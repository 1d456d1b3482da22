//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>

#include "lmdm/nn.hpp"

namespace lmdm {

// First/second-moment adaptive update with bias correction.
class Adam {
public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore &params, const ParamStore &grads) {
    if (m_.size() == 0) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (auto &[name, p] : params.arrays()) {
      if (!grads.contains(name)) continue;
      const Matrix &g = grads.at(name);
      Matrix &m = m_.at(name);
      Matrix &v = v_.at(name);
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
      p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
  }

  int steps() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  ParamStore m_, v_;
};

} // namespace lmdm
