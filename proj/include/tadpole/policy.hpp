#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tadpole/env.hpp"
#include "tadpole/reward.hpp"

namespace tadpole {

struct PlannerConfig {
  std::size_t horizon = 5;
  std::size_t population = 64;
  std::size_t elite_count = 8;
  std::size_t iterations = 4;
  double momentum = 0.1;
  double discount = 0.99;
  double init_std = 0.5;
  double min_std = 0.05;
  // Reuse iteration 0's corruption draws in every iteration, so the
  // elite score trace is comparable across iterations.
  bool share_noise_across_iterations = false;

  void validate() const;
};

// What the planner sees of one imagined step. `window` ends at the imagined
// observation and is as long as the reward's context window.
struct StepContext {
  const EnvState& before;
  const Action& action;
  const EnvState& after;
  std::span<const Tensor> window;
  const NoiseDraw& draw;
  std::size_t horizon_index;
};

using StepRewardFn = std::function<double(const StepContext&)>;

struct PlanResult {
  Action action;
  std::vector<Action> mean_sequence;
  std::vector<Action> best_sequence;
  std::vector<double> best_score_trace;  // best candidate score per iteration
};

struct RefitResult {
  std::vector<double> mean;
  std::vector<double> std;
};

// Elite refit over flattened sequences with momentum toward the old
// distribution. Candidates are ranked by descending score.
RefitResult refit_distribution(const std::vector<std::vector<double>>& samples,
                               const std::vector<double>& scores,
                               std::size_t elite_count,
                               const std::vector<double>& old_mean,
                               const std::vector<double>& old_std,
                               double momentum, double min_std);

struct PlanQuery {
  EnvState state;
  // Most recent real observations, oldest first. Imagined windows that
  // reach before the first one repeat it.
  std::span<const Tensor> history;
  std::size_t window = 1;
  std::span<const Action> warm_start;
  NoiseLevelSampler sampler;
};

PlanResult cem_plan(const PlanQuery& query, const EnvSpec& spec,
                    const StepRewardFn& reward_eval, const PlannerConfig& config,
                    RandomStream& rng);

// Scores imagined steps by the window's mean r_total.
StepRewardFn tadpole_step_reward(TermSource& source, const Prompt& prompt,
                                 const RewardWeights& weights);

enum class RewardMode { image, video };

struct RewardConfig {
  RewardMode mode = RewardMode::image;
  std::size_t window = 1;
  RewardWeights weights;
  NoiseLevelSampler sampler{400, 500};
  double sparse_scale = 0.0;

  std::size_t effective_window() const {
    return mode == RewardMode::image ? 1 : window;
  }
};

struct StepRecord {
  EnvState state;
  Action action;
  EnvState next_state;
  Tensor observation;  // render of next_state
  RewardTerms reward;
  bool sparse_success = false;
  double shaped_reward = 0.0;  // r_total plus the scaled sparse signal
  double diagnostic = 0.0;
};

struct Episode {
  std::vector<StepRecord> records;
  Tensor initial_observation;

  double cumulative_total() const;
  double cumulative_align() const;
  double cumulative_rec() const;
  double diagnostic_return() const;
  EnvState final_state() const;
};

class ReplayBuffer {
 public:
  void append(Episode episode) { episodes_.push_back(std::move(episode)); }
  std::size_t size() const { return episodes_.size(); }
  const Episode& at(std::size_t i) const { return episodes_.at(i); }
  const std::vector<Episode>& episodes() const { return episodes_; }

 private:
  std::vector<Episode> episodes_;
};

// Action mean = W * [px, py, vx, vy, 1], isotropic std.
class LinearGaussianPolicy {
 public:
  static constexpr std::size_t kFeatures = 5;
  static constexpr std::size_t kParams = 2 * kFeatures;

  explicit LinearGaussianPolicy(double std = 0.3);
  LinearGaussianPolicy(std::array<double, kParams> weights, double std);

  static std::array<double, kFeatures> features(const EnvState& s);
  Vec2 mean(const EnvState& s) const;
  double log_prob(const EnvState& s, const Action& a) const;
  Action sample(const EnvState& s, RandomStream& rng) const;

  const std::array<double, kParams>& weights() const { return weights_; }
  std::array<double, kParams>& weights() { return weights_; }
  double std_dev() const { return std_; }

 private:
  std::array<double, kParams> weights_{};
  double std_;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual Action act(const EnvState& state, std::span<const Tensor> history,
                     std::size_t t) = 0;
};

class ZeroActor final : public Actor {
 public:
  Action act(const EnvState&, std::span<const Tensor>, std::size_t) override {
    return {};
  }
};

class RandomActor final : public Actor {
 public:
  void begin_episode(std::uint64_t seed) override;
  Action act(const EnvState&, std::span<const Tensor>, std::size_t) override;

 private:
  RandomStream rng_{0};
};

// PD controller driving straight to a goal.
class ScriptedActor final : public Actor {
 public:
  explicit ScriptedActor(Vec2 goal, double kp = 4.0, double kd = 4.0)
      : goal_(goal), kp_(kp), kd_(kd) {}
  Action act(const EnvState& state, std::span<const Tensor>, std::size_t) override;

 private:
  Vec2 goal_;
  double kp_, kd_;
};

class PolicyActor final : public Actor {
 public:
  PolicyActor(LinearGaussianPolicy policy, bool stochastic)
      : policy_(policy), stochastic_(stochastic) {}
  void begin_episode(std::uint64_t seed) override;
  Action act(const EnvState& state, std::span<const Tensor>, std::size_t) override;

 private:
  LinearGaussianPolicy policy_;
  bool stochastic_;
  RandomStream rng_{0};
};

// Receding-horizon CEM with warm starts from the previous plan.
class PlannerActor final : public Actor {
 public:
  PlannerActor(const EnvSpec& spec, TermSource& source, Prompt prompt,
               RewardConfig reward, PlannerConfig planner);
  void begin_episode(std::uint64_t seed) override;
  Action act(const EnvState& state, std::span<const Tensor> history,
             std::size_t t) override;

 private:
  EnvSpec spec_;
  StepRewardFn reward_fn_;
  RewardConfig reward_;
  PlannerConfig planner_;
  std::uint64_t seed_ = 0;
  std::vector<Action> warm_;
};

struct Task {
  PromptDefinition definition;
  Prompt prompt = Prompt::component(0);
};

// Runs one episode: act, step, render, reward. Rewards are written into the
// records once final (video mode lags by n - 1 steps).
Episode rollout_episode(const EnvSpec& spec, Actor& actor,
                        const RewardConfig& reward, TermSource& source,
                        const Task& task, std::uint64_t episode_seed);

std::vector<double> returns_to_go(const Episode& episode, double gamma);

// Gradient of the REINFORCE surrogate below with respect to the weights.
std::array<double, LinearGaussianPolicy::kParams> reinforce_gradient(
    const LinearGaussianPolicy& policy, std::span<const Episode> episodes,
    double gamma);

// (1/N) sum over episodes and steps of A_t * log pi(a_t | s_t), with A_t the
// return-to-go minus the per-timestep mean across episodes.
double reinforce_surrogate(const LinearGaussianPolicy& policy,
                           std::span<const Episode> episodes, double gamma);

LinearGaussianPolicy reinforce_update(const LinearGaussianPolicy& policy,
                                      std::span<const Episode> episodes,
                                      double lr, double gamma);

enum class OptimizerKind { planner, reinforce };

struct TrainSetup {
  EnvSpec env;
  Task task;
  RewardConfig reward;
  PlannerConfig planner;
  OptimizerKind optimizer = OptimizerKind::planner;
  std::size_t episodes = 30;
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  std::size_t batch_episodes = 4;
  double policy_std = 0.3;
  bool log_wall_time = true;
};

struct EpisodeLogRow {
  std::size_t episode = 0;
  double cumulative_r_total = 0.0;
  double cumulative_r_align = 0.0;
  double cumulative_r_rec = 0.0;
  double diagnostic_return = 0.0;
  double wall_seconds = 0.0;
  bool success = false;
};

struct TrainResult {
  std::vector<EpisodeLogRow> log;
  LinearGaussianPolicy policy;
  Episode last_episode;
};

std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t episode);

TrainResult train(const TrainSetup& setup, TermSource& source);

}  // namespace tadpole
