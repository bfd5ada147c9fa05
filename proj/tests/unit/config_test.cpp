#include <gtest/gtest.h>

#include "dynaware/run_config.hpp"
#include "fixtures.hpp"

using namespace dynaware;

TEST(RunConfig, DefaultsValidate) {
  RunConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.train.batches, 2000u);
  EXPECT_EQ(c.train.tasks_per_batch, 16u);
  EXPECT_EQ(c.train.per_class, 4u);
  EXPECT_DOUBLE_EQ(c.train.lr, 3e-4);
  EXPECT_EQ(c.eval.candidates, 1000u);
  EXPECT_EQ(c.eval.max_attempts, 100u);
  EXPECT_EQ(c.folds, 4);
  EXPECT_EQ(c.model.similarity.bins, 20);
  EXPECT_DOUBLE_EQ(c.model.similarity.alpha, std::sqrt(2.0));
  EXPECT_EQ(c.model.proj_dim, 256u);
  EXPECT_EQ(c.model.embed_dim, 128u);
  EXPECT_EQ(c.model.negatives, 63u);
  EXPECT_DOUBLE_EQ(c.model.beta, 0.1);
  EXPECT_EQ(c.model.frames, 2u);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  apply_override(c, "seed=9");
  apply_override(c, "data.templates=ramp,gap");
  apply_override(c, "model.loss=selfsup");
  apply_override(c, "model.window=last:5");
  apply_override(c, "train.lr=0.00123");
  apply_override(c, "split.mode=cross");
  const auto back = parse_config_text(config_text(c));
  EXPECT_EQ(config_text(back), config_text(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.templates, (std::vector<std::string>{"ramp", "gap"}));
}

TEST(RunConfig, FileRoundTrip) {
  const auto dir = dwtest::scratch_dir("config_file");
  RunConfig c;
  apply_override(c, "train.batches=17");
  save_config(dir / "c.txt", c);
  EXPECT_EQ(load_config(dir / "c.txt").train.batches, 17u);
  EXPECT_THROW(load_config(dir / "missing.txt"), ConfigError);
}

TEST(RunConfig, CommentsAndBlankLines) {
  const auto c = parse_config_text("# header\n\nseed = 4  # trailing\ntrain.batches=3\n");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.train.batches, 3u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_override(c, "train.batchez=3"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.batches=many"), ConfigError);
  EXPECT_THROW(apply_override(c, "data.templates=nope"), ConfigError);
  EXPECT_THROW(apply_override(c, "model.loss=magic"), ConfigError);
  EXPECT_THROW(parse_config_text("seed=1\nbogus=2\n"), ConfigError);
}

TEST(RunConfig, ValidateCatchesInconsistentValues) {
  RunConfig c;
  c.eval.max_attempts = c.eval.candidates + 1;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.fold = c.folds;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(RunConfig, EveryListedKeyIsSettable) {
  RunConfig c;
  for (const auto& [k, v] : config_options(c)) EXPECT_NO_THROW(set_option(c, k, v)) << k;
  EXPECT_EQ(config_text(c), config_text(RunConfig{}));
}

TEST(RunConfig, StageSeedsDiffer) {
  RunConfig c;
  const std::vector<std::uint64_t> s{init_seed(c), cache_seed(c), split_seed(c), train_seed(c), eval_seed(c)};
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) EXPECT_NE(s[i], s[j]);
  }
  RunConfig d;
  d.seed = 1;
  EXPECT_NE(init_seed(c), init_seed(d));
  EXPECT_EQ(split_seed(c), split_seed(d));
}
