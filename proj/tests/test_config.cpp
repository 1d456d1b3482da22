//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "lmdm/pipeline.hpp"

using namespace lmdm;

TEST(Config, DefaultsAndTypes) {
  RunConfig c;
  EXPECT_EQ(c.integer("k"), 1);
  EXPECT_DOUBLE_EQ(c.real("tau"), 2.0);
  EXPECT_TRUE(c.flag("require_connected"));
  EXPECT_FALSE(c.flag("gamma_weighting"));
  EXPECT_EQ(c.list("elements"), (std::vector<std::string>{"H", "C", "N", "O", "F"}));
  EXPECT_TRUE(c.list("cond_properties").empty());
  EXPECT_EQ(c.values().size(), config_keys().size());
}

TEST(Config, UnknownKeyRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("kk", "1"), ConfigError);
  EXPECT_THROW(c.set_assignment("no equals sign"), ConfigError);
  try {
    RunConfig::parse("k=2\n# fine\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("config line 3"), std::string::npos);
  }
}

TEST(Config, BadValues) {
  RunConfig c;
  c.set("k", "two");
  EXPECT_THROW(c.integer("k"), ConfigError);
  c.set("tau", "2.0x");
  EXPECT_THROW(c.real("tau"), ConfigError);
  c.set("gamma_weighting", "maybe");
  EXPECT_THROW(c.flag("gamma_weighting"), ConfigError);
}

TEST(Config, LayeringAndSnapshot) {
  RunConfig c = RunConfig::parse("k = 2\nT=50 # short\n");
  c.apply("T=60\n");
  c.set_assignment(" tau= 1.5 ");
  EXPECT_EQ(c.integer("k"), 2);
  EXPECT_EQ(c.integer("T"), 60);
  EXPECT_EQ(c.str("tau"), "1.5");
  RunConfig d = RunConfig::parse(c.to_text());
  EXPECT_EQ(d.values(), c.values());
  EXPECT_TRUE(c.structural_mismatches(d).empty());
  d.set("hidden_dim", "32");
  d.set("learning_rate", "1");
  EXPECT_EQ(c.structural_mismatches(d), (std::vector<std::string>{"hidden_dim"}));
}

TEST(Config, TrainConfigParsing) {
  RunConfig c;
  EXPECT_EQ(train_config_from(c).coord_target, CoordTarget::distance);
  c.set("coord_target", "gaussian");
  EXPECT_EQ(train_config_from(c).coord_target, CoordTarget::gaussian);
  c.set("coord_target", "forces");
  EXPECT_THROW(train_config_from(c), ConfigError);
  RunConfig s;
  s.set("schedule_kind", "cosine");
  EXPECT_THROW(schedule_from(s), ConfigError);
  RunConfig v;
  v.set("sigma_mode", "zero");
  EXPECT_THROW(sigma_mode_from(v), ConfigError);
  RunConfig e;
  e.set("valence_extras", "N:4,S");
  EXPECT_THROW(check_options_from(e), ConfigError);
  e.set("valence_extras", "N:4");
  EXPECT_EQ(check_options_from(e).valences.allowed("N"), (std::vector<int>{3, 4}));
}

TEST(Config, ModelConfigs) {
  RunConfig c = RunConfig::parse("k=2\nhidden_dim=16\nvar_noise_dim=0\nT=10\nschedule_kind=polynomial\n");
  EXPECT_EQ(ae_config_from(c).k, 2);
  EXPECT_EQ(ae_config_from(c).hidden, 16);
  EXPECT_EQ(score_config_from(c).var_noise_dim, 0);
  EXPECT_EQ(schedule_from(c).T(), 10);
  EXPECT_EQ(vocab_from(c).size(), 5);
}
