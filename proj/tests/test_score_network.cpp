//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "lmdm/score_network.hpp"
#include "test_util.hpp"

using namespace lmdm;

namespace {

ScoreConfig small(int k = 1, int cond = 0) {
  ScoreConfig c;
  c.k = k;
  c.hidden = 8;
  c.layers = 2;
  c.cond_dim = cond;
  return c;
}

ParamStore randomized(const DualScoreNet &net, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore ps = net.init(rng);
  for (auto &[name, m] : ps.arrays()) m += rng.uniform(m.rows(), m.cols(), -0.2, 0.2);
  return ps;
}

struct Case {
  Segments seg = Segments::from_sizes({5});
  Matrix zx, zh, eta;
  std::vector<int> t{17};
};

Case make_case(std::uint64_t seed, int n = 5, int k = 1) {
  Rng rng(seed);
  Case c;
  c.seg = Segments::from_sizes({n});
  c.zx = project_zero_com(1.6 * rng.normal(n, 3));
  c.zh = rng.normal(n, k);
  c.eta = rng.normal(n, 2);
  return c;
}

std::pair<Matrix, Matrix> score(const DualScoreNet &net, const ParamStore &ps, const Case &c, const Matrix &zx,
                                const NoiseSchedule &s, Branch b = Branch::both, Matrix cond = {}) {
  ad::Tape t;
  Binding p(t, ps, false);
  auto in = DualScoreNet::make_inputs(zx, c.zh, c.t, c.seg, net.config().tau, std::move(cond));
  ScoreOutput o = net.dual_score(p, in, c.eta, s, b);
  return {o.s_x.value(), o.s_h.value()};
}

} // namespace

TEST(TimeEmbedding, Layout) {
  Segments seg = Segments::from_sizes({2, 1});
  Matrix e = time_embedding({50, 100}, 100, seg, 5);
  EXPECT_EQ(e.rows(), 3);
  EXPECT_EQ(e.row(0), e.row(1));
  EXPECT_NEAR(e(0, 0), std::sin(M_PI * 0.5), 1e-15);
  EXPECT_NEAR(e(0, 1), std::cos(M_PI * 0.5), 1e-15);
  EXPECT_NEAR(e(0, 2), std::sin(2 * M_PI * 0.5), 1e-15);
  EXPECT_NEAR(e(2, 3), std::cos(2 * M_PI * 1.0), 1e-15);
  EXPECT_DOUBLE_EQ(e(2, 4), 1.0);
}

TEST(VarNoise, Sampling) {
  Rng rng(1);
  Matrix mu = rng.normal(3, 2), sg = rng.uniform(3, 2, 0.1, 2.0), eta = rng.normal(3, 2);
  EXPECT_EQ(sample_var_noise(mu, sg, Matrix::Zero(3, 2)), mu);
  EXPECT_TRUE(sample_var_noise(mu, Matrix::Ones(3, 2), eta).isApprox(mu + eta, 1e-15));
  Matrix sq = sample_var_noise(mu, sg, eta);
  Matrix li = sample_var_noise(mu, sg, eta, VarNoiseScale::linear);
  EXPECT_TRUE(sq.isApprox(mu + sg.cwiseProduct(sg).cwiseProduct(eta), 1e-15));
  EXPECT_TRUE(li.isApprox(mu + sg.cwiseProduct(eta), 1e-15));
  EXPECT_THROW(sample_var_noise(mu, sg, rng.normal(2, 2)), ContractError);
}

TEST(VarNoise, MonteCarloScaleIsSigmaSquared) {
  Rng rng(2);
  const int draws = 100000;
  Matrix mu = Matrix::Constant(1, 1, 0.3), sg = Matrix::Constant(1, 1, 1.4);
  double s1 = 0, s2 = 0;
  for (int i = 0; i < draws; ++i) {
    const double v = sample_var_noise(mu, sg, rng.normal(1, 1))(0, 0);
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / draws, sd = std::sqrt(s2 / draws - mean * mean);
  EXPECT_NEAR(sd, 1.96, 3 * 1.96 / std::sqrt(2.0 * draws));
  EXPECT_NEAR(mean, 0.3, 3 * 1.96 / std::sqrt(draws));
}

TEST(VarNoise, KlClosedForm) {
  EXPECT_NEAR(var_noise_kl(Matrix::Zero(3, 2), Matrix::Ones(3, 2)), 0.0, 1e-15);
  EXPECT_NEAR(var_noise_kl(Matrix::Ones(1, 1), Matrix::Ones(1, 1)), 0.5, 1e-15);
  EXPECT_NEAR(var_noise_kl(Matrix::Ones(4, 1), Matrix::Ones(4, 1), 2), 1.0, 1e-15);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_GE(var_noise_kl(rng.normal(2, 2), rng.uniform(2, 2, 0.01, 5.0)), 0.0);
  EXPECT_THROW(var_noise_kl(Matrix::Zero(1, 1), Matrix::Zero(1, 1)), ContractError);
}

TEST(VarNoise, EncoderInvariance) {
  DualScoreNet net(small());
  ParamStore ps = randomized(net, 4);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(5);
  Rng rng(6);
  auto enc = [&](const Matrix &zx) {
    ad::Tape t;
    Binding p(t, ps, false);
    VarNoise v = net.var_noise_encode(p, DualScoreNet::make_inputs(zx, c.zh, c.t, c.seg, 2.0), s);
    return std::pair<Matrix, Matrix>{v.mu_v.value(), v.sigma_v.value()};
  };
  auto [m1, s1] = enc(c.zx);
  auto [m2, s2] = enc(rigid_motion(c.zx, random_rotation(rng), {3, -1, 2}));
  EXPECT_LT((m1 - m2).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((s1 - s2).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GE(s1.minCoeff(), kSigmaFloor);
}

TEST(DualScore, RotationEquivariance) {
  DualScoreNet net(small(2));
  ParamStore ps = randomized(net, 7);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(8, 6, 2);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix r = random_rotation(rng);
    auto [x1, h1] = score(net, ps, c, c.zx, s);
    auto [x2, h2] = score(net, ps, c, rigid_motion(c.zx, r, {0.5, 0.5, -2}), s);
    EXPECT_LT((x2 - x1 * r.transpose()).norm(), 1e-6 * (1 + x1.norm()));
    EXPECT_LT((h2 - h1).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(DualScore, BranchAdditivity) {
  DualScoreNet net(small());
  ParamStore ps = randomized(net, 10);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(11, 7);
  auto [xb, hb] = score(net, ps, c, c.zx, s);
  auto [xl, hl] = score(net, ps, c, c.zx, s, Branch::local);
  auto [xg, hg] = score(net, ps, c, c.zx, s, Branch::global);
  EXPECT_LT((xb - xl - xg).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((hb - hl - hg).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DualScore, CloseTwoAtomsUseLocalBranchOnly) {
  DualScoreNet net(small());
  ParamStore ps = randomized(net, 12);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(13, 2);
  c.zx << -0.5, 0, 0, 0.5, 0, 0;
  auto [xb, hb] = score(net, ps, c, c.zx, s);
  auto [xl, hl] = score(net, ps, c, c.zx, s, Branch::local);
  auto [xg, hg] = score(net, ps, c, c.zx, s, Branch::global);
  EXPECT_EQ(xg.norm(), 0.0);
  EXPECT_LT((xb - xl).norm(), 1e-15);
  EXPECT_LT((hb - hl - hg).norm(), 1e-15);
}

TEST(DualScore, ZeroWeightsGiveZeroScores) {
  DualScoreNet net(small());
  ParamStore ps = randomized(net, 14);
  for (auto &[name, m] : ps.arrays()) m.setZero();
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(15);
  auto [x, h] = score(net, ps, c, c.zx, s);
  EXPECT_EQ(x.norm(), 0.0);
  EXPECT_EQ(h.norm(), 0.0);
}

TEST(DualScore, NoiseScaledOutput) {
  ScoreConfig raw = small();
  raw.noise_scaled_output = false;
  DualScoreNet scaled(small()), plain(raw);
  ParamStore ps = randomized(scaled, 16);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(17);
  auto [xs, hs] = score(scaled, ps, c, c.zx, s);
  auto [xp, hp] = score(plain, ps, c, c.zx, s);
  const double f = 1.0 / std::sqrt(1.0 - s.alpha_bar(c.t[0]));
  EXPECT_LT((xs - f * xp).norm(), 1e-12);
  EXPECT_LT((hs - f * hp).norm(), 1e-12);
}

TEST(DualScore, ConditioningShape) {
  DualScoreNet net(small(1, 2));
  ParamStore ps = randomized(net, 18);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(19);
  EXPECT_THROW(score(net, ps, c, c.zx, s, Branch::both, Matrix::Zero(1, 3)), ContractError);
  EXPECT_THROW(score(net, ps, c, c.zx, s), ContractError);
  auto [x0, h0] = score(net, ps, c, c.zx, s, Branch::both, Matrix::Zero(1, 2));
  auto [x1, h1] = score(net, ps, c, c.zx, s, Branch::both, Matrix::Ones(1, 2));
  EXPECT_GT((h0 - h1).norm(), 0.0);
}

TEST(DualScore, UnconditionedMatchesPlainBuild) {
  ScoreConfig a = small(), b = small();
  b.cond_dim = 0;
  DualScoreNet na(a), nb(b);
  Rng r1(20), r2(20);
  ParamStore pa = na.init(r1), pb = nb.init(r2);
  NoiseSchedule s = make_schedule(ScheduleKind::linear, 100);
  Case c = make_case(21);
  EXPECT_EQ(score(na, pa, c, c.zx, s).first, score(nb, pb, c, c.zx, s).first);
}

TEST(CondStats, Normalizes) {
  Matrix v(4, 2);
  v << 1, 5, 2, 5, 3, 5, 4, 5;
  CondStats st = CondStats::fit({"a", "b"}, v);
  Matrix n = st.normalize(v);
  EXPECT_NEAR(n.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(std::sqrt(n.col(0).array().square().mean()), 1.0, 1e-14);
  EXPECT_EQ(n.col(1).norm(), 0.0);
}
