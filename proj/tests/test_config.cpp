#include <gtest/gtest.h>

#include <string>

#include "tadpole/config.hpp"

using namespace tadpole;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "t.cfg");
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(KeyValues, Grammar) {
  const auto kv = parse_key_values("# header\n\n a = 1 \nb=two words # trailing\r\n", "x");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two words");
}

TEST(KeyValues, ErrorsNameTheLine) {
  try {
    parse_key_values("a = 1\nnot a pair\n", "f.cfg");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(parse_key_values("Bad-Key = 1\n", "f"), std::invalid_argument);
  EXPECT_THROW(parse_key_values("= 1\n", "f"), std::invalid_argument);
  const std::string dup = [] {
    try {
      parse_key_values("a = 1\na = 2\n", "f.cfg");
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::string();
  }();
  EXPECT_NE(dup.find("f.cfg:2: duplicate key 'a'"), std::string::npos);
}

TEST(RunConfig, DefaultsFromEmptyText) {
  const RunConfig c = parse_run_config("", "t");
  EXPECT_EQ(c.env.height, 16u);
  EXPECT_EQ(c.env.episode_length, 300u);
  EXPECT_EQ(c.reward.weights.w1, 2000.0);
  EXPECT_EQ(c.reward.weights.w2, 200.0);
  EXPECT_EQ(c.reward.sampler.lo, 400);
  EXPECT_EQ(c.reward.sampler.hi, 500);
  EXPECT_EQ(c.sweep_noise_grid, (std::vector<int>{50, 450, 950}));
  EXPECT_EQ(c.sweep_weight_grid.size(), 5u);
  EXPECT_EQ(c.denoiser.rule, ConditioningRule::recognition_gated);
}

TEST(RunConfig, ParsesValues) {
  const RunConfig c = parse_run_config(
      "prompts = moving-right, moving-left\nprompt = moving-left\n"
      "sweep_observation = moving-right\nsweep_misaligned_prompt = moving-left\n"
      "reward_mode = video\nwindow = 4\nw1 = 10\nnoise_lo = 500\nnoise_hi = 600\n"
      "optimizer = reinforce\nseed = 18446744073709551615\nrandomized_init = true\n"
      "sweep_weight_grid = 0:0, 1.5:2\nbridge_timeout_ms = 50\n",
      "t");
  EXPECT_EQ(c.prompts, (std::vector<std::string>{"moving-right", "moving-left"}));
  EXPECT_EQ(c.prompt_index("moving-left"), 1u);
  EXPECT_EQ(c.reward.mode, RewardMode::video);
  EXPECT_EQ(c.reward.effective_window(), 4u);
  EXPECT_EQ(c.reward.weights.w1, 10.0);
  EXPECT_EQ(c.optimizer, OptimizerKind::reinforce);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  EXPECT_TRUE(c.env.randomized_init);
  ASSERT_EQ(c.sweep_weight_grid.size(), 2u);
  EXPECT_EQ(c.sweep_weight_grid[1].first, 1.5);
  EXPECT_EQ(c.bridge.timeout.count(), 50);
  EXPECT_TRUE(c.prompt_definitions()[0].is_motion);
}

TEST(RunConfig, UnknownKeyIsNamed) {
  EXPECT_NE(error_of("planner_horizn = 5\n").find("unknown key 'planner_horizn'"),
            std::string::npos);
}

TEST(RunConfig, BadValuesRejected) {
  EXPECT_NE(error_of("w1 = abc\n").find("expected a number"), std::string::npos);
  EXPECT_NE(error_of("seed = -3\n").find("non-negative"), std::string::npos);
  EXPECT_NE(error_of("episodes = 2x\n").find("episodes"), std::string::npos);
  EXPECT_NE(error_of("randomized_init = maybe\n").find("true or false"), std::string::npos);
  EXPECT_FALSE(error_of("reward_mode = audio\n").empty());
  EXPECT_FALSE(error_of("env = maze\n").empty());
  EXPECT_FALSE(error_of("w2 = -1\n").empty());
  EXPECT_FALSE(error_of("denoiser_rule = other\n").empty());
  EXPECT_FALSE(error_of("sweep_weight_grid = 1;2\n").empty());
}

TEST(RunConfig, CrossFieldValidation) {
  EXPECT_NE(error_of("window = 4\n").find("requires reward_mode = video"), std::string::npos);
  EXPECT_FALSE(error_of("reward_mode = video\nwindow = 0\n").empty());
  EXPECT_FALSE(error_of("reward_mode = video\nwindow = 8\nepisode_length = 4\n").empty());
  EXPECT_FALSE(error_of("prompt = center\n").empty());
  EXPECT_FALSE(error_of("eval_prompts = top-left\n").empty());
  EXPECT_FALSE(error_of("noise_lo = 600\nnoise_hi = 500\n").empty());
  EXPECT_FALSE(error_of("planner_elites = 100\n").empty());
  EXPECT_FALSE(error_of("uncond_temperature = 0.5\n").empty());
  EXPECT_FALSE(error_of("backend = bridge\nbridge_endpoint = nowhere\n").empty());
  EXPECT_TRUE(error_of("backend = bridge\nbridge_endpoint = localhost:9\n").empty());
}

TEST(RunConfig, DumpRoundTrips) {
  const RunConfig c = parse_run_config(
      "prompts = top-right,bottom-left,center\nprompt = center\ndt = 0.07\n"
      "eval_prompts = center,top-right\nsweep_noise_grid = 1,2,3\nlearning_rate = 0.123456789\n",
      "t");
  const std::string text = dump_run_config(c);
  const RunConfig back = parse_run_config(text, "dump");
  EXPECT_EQ(dump_run_config(back), text);
  EXPECT_EQ(back.env.dt, 0.07);
  EXPECT_EQ(back.learning_rate, 0.123456789);
  EXPECT_EQ(back.eval_prompts, c.eval_prompts);
  EXPECT_EQ(back.sweep_noise_grid, (std::vector<int>{1, 2, 3}));
}

TEST(RunConfig, MissingFile) {
  try {
    load_run_config("/nonexistent/dir/x.cfg");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.cfg"), std::string::npos);
  }
}
