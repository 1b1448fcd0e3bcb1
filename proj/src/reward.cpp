#include "tadpole/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tadpole {

void RewardWeights::validate() const {
  if (!(w1 >= 0.0 && w2 >= 0.0) || !std::isfinite(w1) || !std::isfinite(w2)) {
    throw std::invalid_argument("reward weights must be finite and >= 0");
  }
}

RewardTerms compose_terms(double r_align, double r_rec,
                          const RewardWeights& weights) {
  return {r_align, r_rec,
          symlog(weights.w1 * r_align) + symlog(weights.w2 * r_rec)};
}

namespace {

double mse(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace

double compute_align(const DenoisePrediction& cond,
                     const DenoisePrediction& uncond) {
  require_same_shape(cond.eps_hat, uncond.eps_hat, "compute_align");
  return mse(cond.eps_hat.values(), uncond.eps_hat.values());
}

double compute_rec(const DenoisePrediction& cond,
                   const DenoisePrediction& uncond, const SourceNoise& eps0) {
  require_same_shape(cond.eps_hat, uncond.eps_hat, "compute_rec");
  require_same_shape(cond.eps_hat, eps0.values, "compute_rec");
  return mse(uncond.eps_hat.values(), eps0.values.values()) -
         mse(cond.eps_hat.values(), eps0.values.values());
}

double compose_with_sparse(double r, bool success, double scale) {
  return r + (success ? scale : 0.0);
}

NoiseDraw draw_noise(const NoiseLevelSampler& sampler, RandomStream& rng) {
  NoiseDraw d;
  d.t_noise = sample_noise_level(sampler, rng);
  d.seed = rng.next_u64();
  return d;
}

WindowTerms video_window_terms(std::span<const Tensor> frames,
                               const Prompt& prompt, int t,
                               const SourceNoise& eps0,
                               const NoisePredictor& backend) {
  if (frames.empty()) throw std::invalid_argument("window: no frames");
  const Tensor window = stack_frames(frames);
  if (window.shape() != backend.input_shape()) {
    throw std::invalid_argument("window of shape " + shape_string(window.shape()) +
                                " unsupported by backend expecting " +
                                shape_string(backend.input_shape()));
  }
  const Tensor noisy = q_sample(window, eps0, t, backend.schedule());
  const auto [cond, uncond] = backend.predict_pair(noisy, t, prompt);

  const std::size_t n = frames.size();
  const std::size_t per = window.size() / n;
  WindowTerms out;
  out.r_align.reserve(n);
  out.r_rec.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t off = f * per;
    auto c = cond.eps_hat.values().subspan(off, per);
    auto u = uncond.eps_hat.values().subspan(off, per);
    auto e = eps0.values.values().subspan(off, per);
    out.r_align.push_back(mse(c, u));
    out.r_rec.push_back(mse(u, e) - mse(c, e));
  }
  return out;
}

AnalyticTermSource::AnalyticTermSource(const NoisePredictor& backend)
    : backend_(backend) {}

std::size_t AnalyticTermSource::max_window() const {
  const auto& shape = backend_.input_shape();
  return shape.size() >= 3 ? shape[0] : 1;
}

SourceNoise AnalyticTermSource::noise_for(const NoiseDraw& draw) {
  auto it = noise_cache_.find(draw.seed);
  if (it != noise_cache_.end()) return it->second;
  if (noise_cache_.size() >= 256) noise_cache_.clear();
  RandomStream rng(draw.seed);
  auto eps = sample_source_noise(backend_.input_shape(), rng);
  noise_cache_.emplace(draw.seed, eps);
  return eps;
}

WindowTerms AnalyticTermSource::window_terms(std::span<const Tensor> frames,
                                             const Prompt& prompt,
                                             const NoiseDraw& draw) {
  const auto& shape = backend_.input_shape();
  if (shape.size() >= 3 && frames.size() != shape[0]) {
    throw std::invalid_argument("backend scores windows of exactly " +
                                std::to_string(shape[0]) + " frames, got " +
                                std::to_string(frames.size()));
  }
  if (shape.size() < 3 && frames.size() != 1) {
    throw std::invalid_argument("image backend scores single frames only");
  }
  SourceNoise eps0 = noise_for(draw);
  if (shape.size() < 3) {
    // Image backend: the window is the bare frame.
    const Tensor noisy = q_sample(frames[0], eps0, draw.t_noise, schedule());
    const auto [cond, uncond] = backend_.predict_pair(noisy, draw.t_noise, prompt);
    return {{compute_align(cond, uncond)}, {compute_rec(cond, uncond, eps0)}};
  }
  return video_window_terms(frames, prompt, draw.t_noise, eps0, backend_);
}

RewardTerms tadpole_reward(const Tensor& obs_next, const Prompt& prompt,
                           TermSource& source, const NoiseLevelSampler& sampler,
                           const RewardWeights& weights, RandomStream& rng) {
  if (prompt.is_unconditional()) {
    throw std::invalid_argument("tadpole_reward needs a non-null prompt");
  }
  sampler.validate(source.schedule());
  const NoiseDraw draw = draw_noise(sampler, rng);
  const WindowTerms terms = source.window_terms({&obs_next, 1}, prompt, draw);
  return compose_terms(terms.r_align.at(0), terms.r_rec.at(0), weights);
}

RewardTerms tadpole_reward(const Tensor& obs_next, const Prompt& prompt,
                           const NoisePredictor& backend,
                           const NoiseLevelSampler& sampler,
                           const RewardWeights& weights, RandomStream& rng) {
  AnalyticTermSource source(backend);
  return tadpole_reward(obs_next, prompt, source, sampler, weights, rng);
}

RandomStream reward_stream(std::uint64_t reward_seed, std::uint64_t index) {
  return RandomStream(derive_seed(reward_seed, index));
}

VideoRewardAccumulator::VideoRewardAccumulator(VideoRewardConfig config,
                                               TermSource& source, Prompt prompt,
                                               std::uint64_t reward_seed,
                                               std::size_t episode_length)
    : config_(config),
      source_(source),
      prompt_(std::move(prompt)),
      reward_seed_(reward_seed),
      length_(episode_length),
      sums_(episode_length) {
  if (config_.window < 1) throw std::invalid_argument("window size must be >= 1");
  if (config_.window > episode_length) {
    throw std::invalid_argument("window size " + std::to_string(config_.window) +
                                " exceeds episode length " +
                                std::to_string(episode_length));
  }
  if (config_.window > source_.max_window()) {
    throw std::invalid_argument("window size exceeds backend maximum " +
                                std::to_string(source_.max_window()));
  }
  config_.weights.validate();
  config_.sampler.validate(source_.schedule());
}

std::size_t VideoRewardAccumulator::last_window_start() const {
  return length_ - config_.window;
}

void VideoRewardAccumulator::push(Tensor frame) {
  if (frames_.size() >= length_) {
    throw std::logic_error("video reward: more frames than episode length");
  }
  frames_.push_back(std::move(frame));
  const std::size_t n = config_.window;
  if (frames_.size() < n) return;
  const std::size_t start = frames_.size() - n;

  RandomStream rng = reward_stream(reward_seed_, start);
  const NoiseDraw draw = draw_noise(config_.sampler, rng);
  const WindowTerms terms = source_.window_terms(
      std::span<const Tensor>(frames_).subspan(start, n), prompt_, draw);
  ++windows_evaluated_;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = sums_[start + i];
    s.total += symlog(config_.weights.w1 * terms.r_align[i]) +
               symlog(config_.weights.w2 * terms.r_rec[i]);
    s.align += terms.r_align[i];
    s.rec += terms.r_rec[i];
    ++s.count;
  }
}

std::vector<RewardTerms> VideoRewardAccumulator::take_finalized() {
  std::vector<RewardTerms> out;
  if (frames_.size() < config_.window) return out;
  const std::size_t evaluated_through = frames_.size() - config_.window;
  while (next_final_ < length_ &&
         std::min(next_final_, last_window_start()) <= evaluated_through) {
    const auto& s = sums_[next_final_];
    const double m = static_cast<double>(s.count);
    out.push_back({s.align / m, s.rec / m, s.total / m});
    ++next_final_;
  }
  return out;
}

std::vector<RewardTerms> video_tadpole_rewards(std::span<const Tensor> frames,
                                               const VideoRewardConfig& config,
                                               TermSource& source,
                                               const Prompt& prompt,
                                               std::uint64_t reward_seed) {
  if (frames.empty()) throw std::invalid_argument("video reward: empty episode");
  VideoRewardAccumulator acc(config, source, prompt, reward_seed, frames.size());
  std::vector<RewardTerms> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    acc.push(f);
    for (const auto& r : acc.take_finalized()) out.push_back(r);
  }
  return out;
}

}  // namespace tadpole
