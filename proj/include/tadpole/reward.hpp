#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tadpole/denoiser.hpp"
#include "tadpole/diffusion.hpp"
#include "tadpole/random.hpp"
#include "tadpole/tensor.hpp"

namespace tadpole {

struct RewardWeights {
  double w1 = 2000.0;  // alignment
  double w2 = 200.0;   // reconstruction

  void validate() const;
};

struct RewardTerms {
  double r_align = 0.0;
  double r_rec = 0.0;
  double r_total = 0.0;
};

// symlog(w1 * align) + symlog(w2 * rec).
RewardTerms compose_terms(double r_align, double r_rec,
                          const RewardWeights& weights);

// Mean over all elements of (cond - uncond)^2.
double compute_align(const DenoisePrediction& cond,
                     const DenoisePrediction& uncond);

// MSE(uncond, eps0) - MSE(cond, eps0).
double compute_rec(const DenoisePrediction& cond,
                   const DenoisePrediction& uncond, const SourceNoise& eps0);

// r + scale when the sparse success signal fired.
double compose_with_sparse(double r, bool success, double scale);

// Raw per-frame terms of one window evaluation.
struct WindowTerms {
  std::vector<double> r_align;
  std::vector<double> r_rec;
};

// One draw of corruption randomness: the level and the seed that expands
// into eps0 (locally, or bridge-side in latent space).
struct NoiseDraw {
  int t_noise = 0;
  std::uint64_t seed = 0;
};

NoiseDraw draw_noise(const NoiseLevelSampler& sampler, RandomStream& rng);

// Corrupts the stacked window with eps0 at level t, runs one conditional and
// one unconditional prediction on it, and reduces per frame.
WindowTerms video_window_terms(std::span<const Tensor> frames,
                               const Prompt& prompt, int t,
                               const SourceNoise& eps0,
                               const NoisePredictor& backend);

// Anything that turns (frames, prompt, noise draw) into raw window terms.
class TermSource {
 public:
  virtual ~TermSource() = default;
  virtual WindowTerms window_terms(std::span<const Tensor> frames,
                                   const Prompt& prompt,
                                   const NoiseDraw& draw) = 0;
  virtual std::size_t max_window() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
};

// Local source over a NoisePredictor; eps0 is expanded from the draw seed.
class AnalyticTermSource final : public TermSource {
 public:
  explicit AnalyticTermSource(const NoisePredictor& backend);

  WindowTerms window_terms(std::span<const Tensor> frames, const Prompt& prompt,
                           const NoiseDraw& draw) override;
  std::size_t max_window() const override;
  const NoiseSchedule& schedule() const override { return backend_.schedule(); }

  // eps0 for a window of the backend's input shape.
  SourceNoise noise_for(const NoiseDraw& draw);

 private:
  const NoisePredictor& backend_;
  std::map<std::uint64_t, SourceNoise> noise_cache_;
};

// Single-frame reward: samples the level and eps0 from rng, then composes.
RewardTerms tadpole_reward(const Tensor& obs_next, const Prompt& prompt,
                           TermSource& source,
                           const NoiseLevelSampler& sampler,
                           const RewardWeights& weights, RandomStream& rng);

// Convenience overload over a NoisePredictor directly.
RewardTerms tadpole_reward(const Tensor& obs_next, const Prompt& prompt,
                           const NoisePredictor& backend,
                           const NoiseLevelSampler& sampler,
                           const RewardWeights& weights, RandomStream& rng);

struct VideoRewardConfig {
  std::size_t window = 1;
  RewardWeights weights;
  NoiseLevelSampler sampler{500, 600};
};

// Stream of the noise draw for window / step index `index`.
RandomStream reward_stream(std::uint64_t reward_seed, std::uint64_t index);

// Sliding-window reward with the boundary rule: only windows fully inside the
// episode participate, and each frame averages over the windows containing
// it. Every window is evaluated exactly once, as soon as its last frame
// arrives; reward t is final once frame t + n - 1 has been pushed.
class VideoRewardAccumulator {
 public:
  VideoRewardAccumulator(VideoRewardConfig config, TermSource& source,
                         Prompt prompt, std::uint64_t reward_seed,
                         std::size_t episode_length);

  void push(Tensor frame);
  // Rewards finalized since the last call, in timestep order.
  std::vector<RewardTerms> take_finalized();
  std::size_t windows_evaluated() const { return windows_evaluated_; }
  std::size_t frames_pushed() const { return frames_.size(); }

 private:
  struct FrameSums {
    double total = 0.0;
    double align = 0.0;
    double rec = 0.0;
    std::size_t count = 0;
  };

  std::size_t last_window_start() const;
  std::size_t windows_containing(std::size_t t) const;

  VideoRewardConfig config_;
  TermSource& source_;
  Prompt prompt_;
  std::uint64_t reward_seed_;
  std::size_t length_;
  std::vector<Tensor> frames_;
  std::vector<FrameSums> sums_;
  std::size_t next_final_ = 0;
  std::size_t windows_evaluated_ = 0;
};

// Whole-episode convenience wrapper over VideoRewardAccumulator.
std::vector<RewardTerms> video_tadpole_rewards(std::span<const Tensor> frames,
                                               const VideoRewardConfig& config,
                                               TermSource& source,
                                               const Prompt& prompt,
                                               std::uint64_t reward_seed);

}  // namespace tadpole
