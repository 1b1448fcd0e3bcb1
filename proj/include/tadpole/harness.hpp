#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "tadpole/config.hpp"

namespace tadpole {

// Owns whatever the configured backend needs and hands out term sources.
class Backend {
 public:
  explicit Backend(const RunConfig& cfg);

  TermSource& source() { return *source_; }
  // A source safe to use from another thread; analytic backends only.
  std::unique_ptr<TermSource> fresh_source() const;
  bool parallel_safe() const { return denoiser_ != nullptr; }
  const AnalyticDenoiser* denoiser() const { return denoiser_.get(); }
  Prompt prompt_for(const std::string& name) const;

 private:
  RunConfig cfg_;
  std::unique_ptr<AnalyticDenoiser> denoiser_;
  std::unique_ptr<TermSource> source_;
};

// Analytic prior matching the config's environment and reward mode.
GaussianMixturePrior build_prior(const RunConfig& cfg);
Task make_task(const RunConfig& cfg, const Backend& backend, const std::string& prompt);
TrainSetup make_train_setup(const RunConfig& cfg, const Backend& backend);

struct PolicyArtifact {
  std::string kind = "planner";  // planner | reinforce | scripted | random | zero
  std::string prompt;
  std::uint64_t seed = 0;
  LinearGaussianPolicy policy;
};

void write_policy_artifact(const std::string& path, const PolicyArtifact& a);
PolicyArtifact read_policy_artifact(const std::string& path);

extern const char* const kRunLogHeader;
extern const char* const kEpisodeHeader;
extern const char* const kNoiseSweepHeader;
extern const char* const kWeightSweepHeader;
extern const char* const kEvalHeader;

void write_run_log(const std::string& path, const std::vector<EpisodeLogRow>& rows);
void write_episode_csv(const std::string& path, const Episode& ep);

// Per-step positions recovered from an episode CSV.
struct EpisodeTrace {
  std::vector<EnvState> next_states;
};
EpisodeTrace read_episode_csv(const std::string& path);

struct NoiseSweepRow {
  int t_noise = 0;
  double mean_r_total_aligned = 0.0;
  double mean_r_total_misaligned = 0.0;
  double gap = 0.0;
};

struct WeightSweepRow {
  double w1 = 0.0;
  double w2 = 0.0;
  double final_diagnostic_return = 0.0;
  std::uint64_t seed = 0;
};

struct EvalRow {
  std::string prompt;
  std::size_t episodes = 0;
  double success_rate = 0.0;
  double mean_diagnostic_return = 0.0;
};

// Mean r_total for the aligned and misaligned prompt on the same observation,
// at every grid level, with common noise draws for both prompts.
std::vector<NoiseSweepRow> run_noise_sweep(const RunConfig& cfg, Backend& backend);
std::vector<WeightSweepRow> run_weight_sweep(const RunConfig& cfg, Backend& backend);
std::vector<EvalRow> run_eval(const RunConfig& cfg, Backend& backend,
                              const PolicyArtifact& artifact);

std::string format_double(double v);

// Subcommands. Every one writes under cfg.out and a plain-text manifest.
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_eval(const RunConfig& cfg, const std::string& policy_path, std::ostream& log);
void cmd_sweep_noise(const RunConfig& cfg, std::ostream& log);
void cmd_sweep_weights(const RunConfig& cfg, std::ostream& log);
void cmd_render(const RunConfig& cfg, const std::string& episode_path, std::ostream& log);
void cmd_bridge_check(const RunConfig& cfg, std::ostream& log);

}  // namespace tadpole
