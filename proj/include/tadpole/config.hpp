#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tadpole/bridge.hpp"
#include "tadpole/denoiser.hpp"
#include "tadpole/env.hpp"
#include "tadpole/policy.hpp"

namespace tadpole {

// Grammar: one `key = value` per line; `#` starts a comment; blank lines
// are skipped; keys are [a-z0-9_]+; later duplicates are an error.
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& origin);

enum class BackendKind { analytic, bridge };

struct RunConfig {
  EnvSpec env;
  std::vector<std::string> prompts{"top-right", "bottom-left"};
  std::string prompt = "top-right";  // task prompt, one of `prompts`
  double prior_sigma = 0.05;
  double template_speed = 0.05;
  std::size_t template_frames = 4;  // frames per motion template (image mode)

  RewardConfig reward;
  AnalyticDenoiserOptions denoiser;
  BackendKind backend = BackendKind::analytic;
  std::string bridge_endpoint = "127.0.0.1:5555";
  BridgeOptions bridge;

  OptimizerKind optimizer = OptimizerKind::planner;
  PlannerConfig planner;
  std::size_t episodes = 30;
  std::uint64_t seed = 0;
  std::string out = "out";
  double learning_rate = 0.05;
  std::size_t batch_episodes = 4;
  double policy_std = 0.3;
  bool log_wall_time = true;

  std::size_t eval_episodes = 30;
  std::vector<std::string> eval_prompts;  // empty: the task prompt

  std::vector<int> sweep_noise_grid{50, 450, 950};
  std::size_t sweep_draws = 1000;
  std::string sweep_observation = "top-right";
  std::string sweep_misaligned_prompt = "bottom-left";
  std::vector<std::pair<double, double>> sweep_weight_grid{
      {200, 2000}, {1000, 2000}, {2000, 200}, {2000, 1000}, {2000, 2000}};
  std::size_t sweep_episodes = 3;

  void validate() const;
  // Prompt definitions in `prompts` order, speeds applied.
  std::vector<PromptDefinition> prompt_definitions() const;
  std::size_t prompt_index(const std::string& name) const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);
// Plain-text dump in the same grammar; parse_run_config round-trips it.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace tadpole
