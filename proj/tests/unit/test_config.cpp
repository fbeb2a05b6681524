#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"
#include "wfn/config.hpp"

namespace wfn {
namespace {

TEST(KeyValue, ParsesCommentsAndWhitespace) {
  const KeyValues kv = parse_key_values("# header\n\n  steps = 12  # trailing\nlr0=0.5\n\tdepth =radial\n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"steps", "12"}));
  EXPECT_EQ(kv[1].second, "0.5");
  EXPECT_EQ(kv[2], (std::pair<std::string, std::string>{"depth", "radial"}));
}

TEST(KeyValue, RejectsMalformedInput) {
  EXPECT_THROW(parse_key_values("steps 12\n"), ConfigError);
  EXPECT_THROW(parse_key_values("steps = 1\nsteps = 2\n"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 3\n"), ConfigError);
  EXPECT_THROW(parse_int("k", "12x"), ConfigError);
  EXPECT_THROW(parse_double("k", "abc"), ConfigError);
  EXPECT_THROW(parse_bool("k", "maybe"), ConfigError);
  EXPECT_TRUE(parse_bool("k", "on"));
  EXPECT_FALSE(parse_bool("k", "0"));
  EXPECT_EQ(parse_double("k", format_double(0.1)), 0.1);
}

TEST(RunConfig, DefaultsAndOverrides) {
  const RunConfig d;
  EXPECT_EQ(d.train.lr0, 1e-4);
  EXPECT_EQ(d.train.weights.msssim, 0.4);
  EXPECT_EQ(d.train.clip_norm, 1.0);
  const RunConfig c = RunConfig::parse("stages = 2\nbase_channels = 8\nwindow = 4\nsteps = 7\nuse_fam = false\n"
                                       "depth = blocks\nw_perc = 0\n");
  EXPECT_EQ(c.network.stages, 2);
  EXPECT_EQ(c.network.attention.window, 4);
  EXPECT_FALSE(c.network.use_fam);
  EXPECT_EQ(c.train.steps, 7);
  EXPECT_EQ(c.train.weights.perceptual, 0.0);
  EXPECT_EQ(c.synth.depth, DepthKind::Blocks);
}

TEST(RunConfig, UnknownKeyRejected) {
  try {
    RunConfig::parse("stages = 2\nlearning_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::parse("stages = two\n"), ConfigError);
}

TEST(RunConfig, ResolvedRoundTrip) {
  RunConfig c = RunConfig::parse("channel_multipliers = 1,2\nstages = 2\nheads = 4\nshifted_windows = true\n"
                                 "wavelet = db4\nlr0 = 3e-4\nseed = 42\npatch = 32\nflip = false\n");
  const RunConfig r = RunConfig::parse(c.format());
  EXPECT_EQ(r.format(), c.format());
  EXPECT_EQ(r.network, c.network);
  EXPECT_EQ(r.train.lr0, 3e-4);
  EXPECT_EQ(r.train.seed, 42u);
  EXPECT_FALSE(r.train.augment_spec.flip);

  const RunConfig d = RunConfig::parse(RunConfig{}.format());
  EXPECT_TRUE(d.network.channel_multipliers.empty());
  EXPECT_EQ(d.format(), RunConfig{}.format());
}

TEST(RunConfig, ValidationCatchesBadCombinations) {
  EXPECT_THROW(RunConfig::parse("patch = 40\n").validate(), Error);
  EXPECT_THROW(RunConfig::parse("stages = 2\nchannel_multipliers = 1,2,4\n").validate(), ConfigError);
  EXPECT_THROW(RunConfig::parse("t_min = 0\n").validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(RunConfig, LoadFromFile) {
  test::TempDir dir("cfg");
  {
    std::ofstream f(dir.path() / "run.cfg");
    f << "steps = 3\n";
  }
  EXPECT_EQ(RunConfig::load(dir.path() / "run.cfg").train.steps, 3);
  EXPECT_THROW(RunConfig::load(dir.path() / "missing.cfg"), IoError);
}

}  // namespace
}  // namespace wfn
