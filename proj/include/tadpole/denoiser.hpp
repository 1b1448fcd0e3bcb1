#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tadpole/diffusion.hpp"
#include "tadpole/tensor.hpp"

namespace tadpole {

// Conditioning input y. `unconditional` requests the prompt-free branch.
class Prompt {
 public:
  enum class Kind { unconditional, component, caption };

  static Prompt unconditional() { return Prompt(Kind::unconditional, -1, {}); }
  static Prompt component(int id) { return Prompt(Kind::component, id, {}); }
  static Prompt caption(std::string text) {
    return Prompt(Kind::caption, -1, std::move(text));
  }

  Kind kind() const { return kind_; }
  bool is_unconditional() const { return kind_ == Kind::unconditional; }
  int component_id() const;
  const std::string& text() const;

 private:
  Prompt(Kind kind, int id, std::string text)
      : kind_(kind), id_(id), text_(std::move(text)) {}

  Kind kind_;
  int id_;
  std::string text_;
};

// One isotropic Gaussian N(mean, sigma^2 I). `label` is the prompt id the
// component belongs to; prompt-built priors use label == component index.
struct MixtureComponent {
  double weight = 1.0;
  Tensor mean;
  double sigma = 0.05;
  int label = 0;
};

class GaussianMixturePrior {
 public:
  // Validates: non-empty, weights positive and summing to 1 within 1e-9,
  // sigmas non-negative, all means the same shape.
  explicit GaussianMixturePrior(std::vector<MixtureComponent> components);

  const std::vector<MixtureComponent>& components() const { return components_; }
  const std::vector<std::size_t>& shape() const {
    return components_.front().mean.shape();
  }
  bool has_label(int label) const;

 private:
  std::vector<MixtureComponent> components_;
};

struct DenoisePrediction {
  Tensor eps_hat;
};

// Closed-form E[x | x_noisy]. Unconditional prompts use the whole mixture,
// component prompts only the components carrying that label. Responsibilities
// are softmax(log-evidence / temperature); temperature 1 is exact Bayes.
Tensor gm_posterior_mean(const Tensor& x_noisy, int t,
                         const GaussianMixturePrior& prior,
                         const Prompt& prompt, const NoiseSchedule& sched,
                         double temperature = 1.0);

// Posterior responsibilities of each component for x_noisy under the full
// mixture (exact Bayes). Exposed for diagnostics and tests.
std::vector<double> gm_responsibilities(const Tensor& x_noisy, int t,
                                        const GaussianMixturePrior& prior,
                                        const NoiseSchedule& sched);

// (x_noisy - sqrt(ab) * E[x | x_noisy]) / sqrt(1 - ab).
DenoisePrediction gm_predict_noise(const Tensor& x_noisy, int t,
                                   const GaussianMixturePrior& prior,
                                   const Prompt& prompt,
                                   const NoiseSchedule& sched);

// Converts a clean-signal estimate into the matching noise prediction.
// Rejects levels where sqrt(1 - ab) < 1e-6.
DenoisePrediction noise_from_clean_estimate(const Tensor& x_noisy,
                                            const Tensor& clean, int t,
                                            const NoiseSchedule& sched);

// The denoiser contract eps_hat(x_noisy; t, y).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual DenoisePrediction predict(const Tensor& x_noisy, int t,
                                    const Prompt& prompt) const = 0;

  // (conditional, unconditional) on the same corrupted input.
  virtual std::pair<DenoisePrediction, DenoisePrediction> predict_pair(
      const Tensor& x_noisy, int t, const Prompt& prompt) const;

  // Shape a query must have; windows are [n, H, W].
  virtual std::vector<std::size_t> input_shape() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
};

enum class ConditioningRule {
  // Conditional branch = posterior of the prompt's components alone; the
  // unconditional branch = exact posterior of the full mixture.
  component_selector,
  // Unconditional branch hedges across modes (tempered responsibilities).
  // The conditional branch moves toward the prompt's mode in proportion to
  // the exact posterior probability that the input shows that mode.
  recognition_gated,
};

struct AnalyticDenoiserOptions {
  ConditioningRule rule = ConditioningRule::recognition_gated;
  double uncond_temperature = 4.0;
};

class AnalyticDenoiser final : public NoisePredictor {
 public:
  AnalyticDenoiser(GaussianMixturePrior prior, NoiseSchedule sched,
                   AnalyticDenoiserOptions options = {});

  DenoisePrediction predict(const Tensor& x_noisy, int t,
                            const Prompt& prompt) const override;
  std::pair<DenoisePrediction, DenoisePrediction> predict_pair(
      const Tensor& x_noisy, int t, const Prompt& prompt) const override;
  std::vector<std::size_t> input_shape() const override { return prior_.shape(); }
  const NoiseSchedule& schedule() const override { return sched_; }

  const GaussianMixturePrior& prior() const { return prior_; }
  const AnalyticDenoiserOptions& options() const { return options_; }

 private:
  double uncond_temperature() const;
  // (conditional, unconditional) clean-signal estimates.
  std::pair<Tensor, Tensor> clean_estimates(const Tensor& x_noisy, int t,
                                            const Prompt& prompt) const;

  GaussianMixturePrior prior_;
  NoiseSchedule sched_;
  AnalyticDenoiserOptions options_;
};

// Deterministic DDIM (eta = 0) from t_start down to a clean estimate. Returns
// the clean-image estimate x0_hat after each of `steps` model evaluations; the
// last entry is the final estimate.
std::vector<Tensor> ddim_denoise_to_completion(const Tensor& x_noisy,
                                               int t_start,
                                               const Prompt& prompt,
                                               const NoisePredictor& backend,
                                               int steps);

}  // namespace tadpole
