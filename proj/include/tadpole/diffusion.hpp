#pragma once

#include <cstddef>
#include <vector>

#include "tadpole/random.hpp"
#include "tadpole/tensor.hpp"

namespace tadpole {

// DDPM forward-process coefficients. alpha_bar(t) is the cumulative signal
// fraction after corruption step t, for t in [0, T).
class NoiseSchedule {
 public:
  // Builds alpha_bars as the running product of (1 - beta). Every beta must
  // lie strictly inside (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const {
    return alpha_bars_.at(static_cast<std::size_t>(t));
  }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  void require_level(int t) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);

// The default used everywhere: T = 1000, beta in [1e-4, 0.02].
NoiseSchedule default_schedule();

// Uniform integer noise level in [lo, hi], both inclusive.
struct NoiseLevelSampler {
  int lo = 400;
  int hi = 500;

  void validate(const NoiseSchedule& sched) const;
};

int sample_noise_level(const NoiseLevelSampler& sampler, RandomStream& rng);

// Standard normal source noise with the shape of the tensor it corrupts.
struct SourceNoise {
  Tensor values;
};

SourceNoise sample_source_noise(const std::vector<std::size_t>& shape,
                                RandomStream& rng);

// sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * eps0, elementwise.
Tensor q_sample(const Tensor& x, const SourceNoise& eps0, int t,
                const NoiseSchedule& sched);

// sign(v) * ln(1 + |v|). Rejects non-finite input.
double symlog(double v);

}  // namespace tadpole
