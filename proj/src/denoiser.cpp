#include "tadpole/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace tadpole {

int Prompt::component_id() const {
  if (kind_ != Kind::component) {
    throw std::logic_error("prompt is not a component selector");
  }
  return id_;
}

const std::string& Prompt::text() const {
  if (kind_ != Kind::caption) throw std::logic_error("prompt is not a caption");
  return text_;
}

GaussianMixturePrior::GaussianMixturePrior(
    std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("mixture: no components");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw std::invalid_argument("mixture: weights must be positive");
    }
    if (!(c.sigma >= 0.0) || !std::isfinite(c.sigma)) {
      throw std::invalid_argument("mixture: sigma must be >= 0");
    }
    require_same_shape(c.mean, components_.front().mean, "mixture means");
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture: weights sum to " +
                                std::to_string(total));
  }
}

bool GaussianMixturePrior::has_label(int label) const {
  return std::any_of(components_.begin(), components_.end(),
                     [&](const MixtureComponent& c) { return c.label == label; });
}

namespace {

struct ComponentPosterior {
  double log_evidence;  // log pi_k + log N(x_noisy; sqrt(ab) mu_k, v_k I)
  Tensor mean;          // E[x | x_noisy, k]
};

std::vector<ComponentPosterior> fit_components(const Tensor& x_noisy, int t,
                                               const GaussianMixturePrior& prior,
                                               const NoiseSchedule& sched) {
  sched.require_level(t);
  const double ab = sched.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double d = static_cast<double>(x_noisy.size());
  std::vector<ComponentPosterior> out;
  out.reserve(prior.components().size());
  for (const auto& c : prior.components()) {
    require_same_shape(x_noisy, c.mean, "mixture posterior");
    const double s2 = c.sigma * c.sigma;
    const double v = ab * s2 + (1.0 - ab);
    double sq = 0.0;
    Tensor mean(x_noisy.shape());
    for (std::size_t i = 0; i < x_noisy.size(); ++i) {
      const double r = x_noisy[i] - signal * c.mean[i];
      sq += r * r;
      mean[i] = (s2 * signal * x_noisy[i] + (1.0 - ab) * c.mean[i]) / v;
    }
    const double log_ev = std::log(c.weight) - sq / (2.0 * v) -
                          0.5 * d * std::log(2.0 * std::numbers::pi * v);
    out.push_back({log_ev, std::move(mean)});
  }
  return out;
}

// softmax(log_evidence / temperature) over the components accepted by `keep`.
template <typename Keep>
std::vector<double> responsibilities(const std::vector<ComponentPosterior>& fits,
                                     double temperature, Keep keep) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (keep(k)) top = std::max(top, fits[k].log_evidence / temperature);
  }
  std::vector<double> w(fits.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (!keep(k)) continue;
    w[k] = std::exp(fits[k].log_evidence / temperature - top);
    total += w[k];
  }
  for (auto& v : w) v /= total;
  return w;
}

Tensor weighted_mean(const std::vector<ComponentPosterior>& fits,
                     const std::vector<double>& w) {
  Tensor out(fits.front().mean.shape());
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (w[k] == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[k] * fits[k].mean[i];
  }
  return out;
}

auto label_filter(const GaussianMixturePrior& prior, const Prompt& prompt) {
  if (prompt.kind() == Prompt::Kind::caption) {
    throw std::invalid_argument(
        "analytic mixture prompts must be component ids, not captions");
  }
  const bool all = prompt.is_unconditional();
  const int label = all ? -1 : prompt.component_id();
  if (!all && !prior.has_label(label)) {
    throw std::invalid_argument("mixture: no component with id " +
                                std::to_string(label));
  }
  return [&prior, all, label](std::size_t k) {
    return all || prior.components()[k].label == label;
  };
}

}  // namespace

Tensor gm_posterior_mean(const Tensor& x_noisy, int t,
                         const GaussianMixturePrior& prior, const Prompt& prompt,
                         const NoiseSchedule& sched, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("posterior temperature must be positive");
  }
  auto keep = label_filter(prior, prompt);
  const auto fits = fit_components(x_noisy, t, prior, sched);
  return weighted_mean(fits, responsibilities(fits, temperature, keep));
}

std::vector<double> gm_responsibilities(const Tensor& x_noisy, int t,
                                        const GaussianMixturePrior& prior,
                                        const NoiseSchedule& sched) {
  const auto fits = fit_components(x_noisy, t, prior, sched);
  return responsibilities(fits, 1.0, [](std::size_t) { return true; });
}

DenoisePrediction noise_from_clean_estimate(const Tensor& x_noisy,
                                            const Tensor& clean, int t,
                                            const NoiseSchedule& sched) {
  require_same_shape(x_noisy, clean, "noise prediction");
  sched.require_level(t);
  const double ab = sched.alpha_bar(t);
  const double noise = std::sqrt(1.0 - ab);
  if (noise < 1e-6) {
    throw std::domain_error("noise level " + std::to_string(t) +
                            " has sqrt(1 - alpha_bar) below 1e-6");
  }
  const double signal = std::sqrt(ab);
  Tensor eps(x_noisy.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    eps[i] = (x_noisy[i] - signal * clean[i]) / noise;
  }
  return {std::move(eps)};
}

DenoisePrediction gm_predict_noise(const Tensor& x_noisy, int t,
                                   const GaussianMixturePrior& prior,
                                   const Prompt& prompt,
                                   const NoiseSchedule& sched) {
  return noise_from_clean_estimate(
      x_noisy, gm_posterior_mean(x_noisy, t, prior, prompt, sched), t, sched);
}

std::pair<DenoisePrediction, DenoisePrediction> NoisePredictor::predict_pair(
    const Tensor& x_noisy, int t, const Prompt& prompt) const {
  return {predict(x_noisy, t, prompt),
          predict(x_noisy, t, Prompt::unconditional())};
}

AnalyticDenoiser::AnalyticDenoiser(GaussianMixturePrior prior,
                                   NoiseSchedule sched,
                                   AnalyticDenoiserOptions options)
    : prior_(std::move(prior)), sched_(std::move(sched)), options_(options) {
  if (!(options_.uncond_temperature >= 1.0)) {
    throw std::invalid_argument("unconditional temperature must be >= 1");
  }
}

double AnalyticDenoiser::uncond_temperature() const {
  return options_.rule == ConditioningRule::recognition_gated
             ? options_.uncond_temperature
             : 1.0;
}

std::pair<Tensor, Tensor> AnalyticDenoiser::clean_estimates(
    const Tensor& x_noisy, int t, const Prompt& prompt) const {
  auto keep = label_filter(prior_, prompt);
  const auto fits = fit_components(x_noisy, t, prior_, sched_);
  Tensor uncond = weighted_mean(
      fits, responsibilities(fits, uncond_temperature(),
                             [](std::size_t) { return true; }));
  if (prompt.is_unconditional()) {
    Tensor copy = uncond;
    return {std::move(copy), std::move(uncond)};
  }
  Tensor mode = weighted_mean(fits, responsibilities(fits, 1.0, keep));
  if (options_.rule == ConditioningRule::component_selector) {
    return {std::move(mode), std::move(uncond)};
  }
  const auto exact = responsibilities(fits, 1.0, [](std::size_t) { return true; });
  double recognition = 0.0;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (keep(k)) recognition += exact[k];
  }
  Tensor cond(x_noisy.shape());
  for (std::size_t i = 0; i < cond.size(); ++i) {
    cond[i] = uncond[i] + recognition * (mode[i] - uncond[i]);
  }
  return {std::move(cond), std::move(uncond)};
}

DenoisePrediction AnalyticDenoiser::predict(const Tensor& x_noisy, int t,
                                            const Prompt& prompt) const {
  auto [cond, uncond] = clean_estimates(x_noisy, t, prompt);
  return noise_from_clean_estimate(x_noisy, cond, t, sched_);
}

std::pair<DenoisePrediction, DenoisePrediction> AnalyticDenoiser::predict_pair(
    const Tensor& x_noisy, int t, const Prompt& prompt) const {
  auto [cond, uncond] = clean_estimates(x_noisy, t, prompt);
  return {noise_from_clean_estimate(x_noisy, cond, t, sched_),
          noise_from_clean_estimate(x_noisy, uncond, t, sched_)};
}

std::vector<Tensor> ddim_denoise_to_completion(const Tensor& x_noisy,
                                               int t_start,
                                               const Prompt& prompt,
                                               const NoisePredictor& backend,
                                               int steps) {
  const NoiseSchedule& sched = backend.schedule();
  sched.require_level(t_start);
  if (steps < 1 || steps > t_start + 1) {
    throw std::invalid_argument("ddim: steps must be in [1, t_start + 1]");
  }
  std::vector<int> levels(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    levels[static_cast<std::size_t>(i)] = t_start - (i * (t_start + 1)) / steps;
  }

  std::vector<Tensor> estimates;
  estimates.reserve(levels.size());
  Tensor x = x_noisy;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const int t = levels[i];
    const auto eps = backend.predict(x, t, prompt).eps_hat;
    const double ab = sched.alpha_bar(t);
    Tensor x0(x.shape());
    for (std::size_t j = 0; j < x.size(); ++j) {
      x0[j] = (x[j] - std::sqrt(1.0 - ab) * eps[j]) / std::sqrt(ab);
    }
    if (i + 1 < levels.size()) {
      const double next = sched.alpha_bar(levels[i + 1]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] = std::sqrt(next) * x0[j] + std::sqrt(1.0 - next) * eps[j];
      }
    }
    estimates.push_back(std::move(x0));
  }
  return estimates;
}

}  // namespace tadpole
