#include "tadpole/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tadpole {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule: no steps");
  NoiseSchedule s;
  s.alpha_bars_.reserve(betas.size());
  double running = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("schedule: beta " + std::to_string(b) +
                                  " outside (0, 1)");
    }
    running *= 1.0 - b;
    s.alpha_bars_.push_back(running);
  }
  s.betas_ = std::move(betas);
  return s;
}

void NoiseSchedule::require_level(int t) const {
  if (t < 0 || t >= steps()) {
    throw std::out_of_range("noise level " + std::to_string(t) +
                            " outside [0, " + std::to_string(steps()) + ")");
  }
}

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument(
        "schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
    betas[static_cast<std::size_t>(t)] =
        beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

NoiseSchedule default_schedule() {
  return build_linear_schedule(1000, 1e-4, 0.02);
}

void NoiseLevelSampler::validate(const NoiseSchedule& sched) const {
  if (lo < 0 || lo > hi || hi >= sched.steps()) {
    throw std::invalid_argument("noise range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "] invalid for T=" +
                                std::to_string(sched.steps()));
  }
}

int sample_noise_level(const NoiseLevelSampler& sampler, RandomStream& rng) {
  if (sampler.lo > sampler.hi) {
    throw std::invalid_argument("noise sampler: lo > hi");
  }
  return rng.uniform_int(sampler.lo, sampler.hi);
}

SourceNoise sample_source_noise(const std::vector<std::size_t>& shape,
                                RandomStream& rng) {
  Tensor eps(shape);
  for (auto& v : eps.values()) v = rng.normal();
  return {std::move(eps)};
}

Tensor q_sample(const Tensor& x, const SourceNoise& eps0, int t,
                const NoiseSchedule& sched) {
  require_same_shape(x, eps0.values, "q_sample");
  sched.require_level(t);
  const double ab = sched.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = signal * x[i] + noise * eps0.values[i];
  }
  return out;
}

double symlog(double v) {
  if (!std::isfinite(v)) throw std::domain_error("symlog: non-finite input");
  return std::copysign(std::log1p(std::fabs(v)), v);
}

}  // namespace tadpole
