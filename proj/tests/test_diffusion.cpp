#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tadpole/diffusion.hpp"

using namespace tadpole;

namespace {

// Brute-force cumulative product computed with a separate script before the
// build (plain Python float loop).
constexpr double kAlphaBar999 = 4.0358297653756754e-05;
constexpr double kAlphaBar450 = 0.12583882800090695;

}  // namespace

TEST(Schedule, SingleStep) {
  const auto s = build_linear_schedule(1, 0.5, 0.5);
  ASSERT_EQ(s.steps(), 1);
  EXPECT_DOUBLE_EQ(s.beta(0), 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 0.5);
}

TEST(Schedule, TwoStepsByHand) {
  const auto s = build_linear_schedule(2, 0.1, 0.1);
  EXPECT_NEAR(s.alpha_bar(0), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar(1), 0.81, 1e-15);
}

TEST(Schedule, DefaultMatchesFrozenProducts) {
  const auto s = default_schedule();
  ASSERT_EQ(s.steps(), 1000);
  EXPECT_NEAR(s.alpha_bar(999), kAlphaBar999, 1e-12 * kAlphaBar999);
  EXPECT_NEAR(s.alpha_bar(450), kAlphaBar450, 1e-12 * kAlphaBar450);
  EXPECT_DOUBLE_EQ(s.beta(0), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(999), 0.02);
}

TEST(Schedule, RecurrenceAndMonotonicity) {
  const auto s = default_schedule();
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0 - s.beta(0));
  for (int t = 1; t < s.steps(); ++t) {
    const double expect = s.alpha_bar(t - 1) * (1.0 - s.beta(t));
    EXPECT_NEAR(s.alpha_bar(t), expect, 1e-12 * expect);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.beta(t), 0.0);
    EXPECT_LT(s.beta(t), 1.0);
  }
}

TEST(Schedule, RejectsBadArguments) {
  EXPECT_THROW(build_linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
  EXPECT_THROW(build_linear_schedule(-3, 1e-4, 0.02), std::invalid_argument);
  EXPECT_THROW(build_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
  EXPECT_THROW(build_linear_schedule(10, 0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(build_linear_schedule(10, 0.2, 0.1), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule::from_betas({}), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), std::invalid_argument);
}

TEST(NoiseLevel, DegenerateRange) {
  RandomStream rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_noise_level({450, 450}, rng), 450);
}

TEST(NoiseLevel, MonteCarloMean) {
  RandomStream rng(11);
  double sum = 0.0;
  const int n = 100000;
  int lo = 1000, hi = -1;
  for (int i = 0; i < n; ++i) {
    const int t = sample_noise_level({400, 500}, rng);
    sum += t;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  EXPECT_NEAR(sum / n, 450.0, 2.0);
  EXPECT_EQ(lo, 400);
  EXPECT_EQ(hi, 500);
}

TEST(NoiseLevel, SameSeedSameSequence) {
  RandomStream a(99), b(99);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sample_noise_level({400, 500}, a), sample_noise_level({400, 500}, b));
  }
}

TEST(NoiseLevel, ValidateAgainstSchedule) {
  const auto s = default_schedule();
  EXPECT_NO_THROW((NoiseLevelSampler{0, 999}.validate(s)));
  EXPECT_THROW((NoiseLevelSampler{-1, 10}.validate(s)), std::invalid_argument);
  EXPECT_THROW((NoiseLevelSampler{20, 10}.validate(s)), std::invalid_argument);
  EXPECT_THROW((NoiseLevelSampler{0, 1000}.validate(s)), std::invalid_argument);
}

TEST(QSample, NoCorruptionReturnsInput) {
  // beta = 1e-300 makes alpha_bar round to exactly 1.
  const auto s = NoiseSchedule::from_betas({1e-300});
  ASSERT_EQ(s.alpha_bar(0), 1.0);
  Tensor x({3}, {0.25, -1.0, 4.0});
  RandomStream rng(1);
  const auto eps = sample_source_noise(x.shape(), rng);
  EXPECT_EQ(q_sample(x, eps, 0, s), x);
}

TEST(QSample, FullCorruptionReturnsNoise) {
  const auto s = NoiseSchedule::from_betas(std::vector<double>(40, 0.9));
  ASSERT_LT(s.alpha_bar(39), 1e-39);
  Tensor x({4}, {1.0, 0.5, -0.5, 2.0});
  RandomStream rng(2);
  const auto eps = sample_source_noise(x.shape(), rng);
  const Tensor out = q_sample(x, eps, 39, s);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], eps.values[i], 1e-15);
}

TEST(QSample, MonteCarloMoments) {
  const auto s = default_schedule();
  const int t = 450;
  const double ab = s.alpha_bar(t);
  Tensor x({3}, {0.8, 0.0, -0.3});
  RandomStream rng(5);
  const int n = 10000;
  std::vector<double> sum(3, 0.0), sum2(3, 0.0);
  for (int k = 0; k < n; ++k) {
    const Tensor y = q_sample(x, sample_source_noise(x.shape(), rng), t, s);
    for (std::size_t i = 0; i < 3; ++i) {
      sum[i] += y[i];
      sum2[i] += y[i] * y[i];
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double mean = sum[i] / n;
    EXPECT_NEAR(mean, std::sqrt(ab) * x[i], 4.0 * std::sqrt((1.0 - ab) / n));
    const double var = sum2[i] / n - mean * mean;
    // Standard error of a Gaussian sample variance is var * sqrt(2 / (n - 1)).
    EXPECT_NEAR(var, 1.0 - ab, 3.0 * (1.0 - ab) * std::sqrt(2.0 / (n - 1)));
  }
}

TEST(QSample, AffineInBothArguments) {
  const auto s = default_schedule();
  RandomStream rng(8);
  const auto e1 = sample_source_noise({5}, rng);
  const auto e2 = sample_source_noise({5}, rng);
  Tensor x1({5}), x2({5});
  for (std::size_t i = 0; i < 5; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.normal();
  }
  const double a = 0.3;
  Tensor xm({5});
  SourceNoise em{Tensor({5})};
  for (std::size_t i = 0; i < 5; ++i) {
    xm[i] = a * x1[i] + (1 - a) * x2[i];
    em.values[i] = a * e1.values[i] + (1 - a) * e2.values[i];
  }
  const Tensor y1 = q_sample(x1, e1, 300, s);
  const Tensor y2 = q_sample(x2, e2, 300, s);
  const Tensor ym = q_sample(xm, em, 300, s);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(ym[i], a * y1[i] + (1 - a) * y2[i], 1e-14);

  const Tensor zero({5});
  for (int t : {0, 450, 999}) EXPECT_EQ(q_sample(zero, SourceNoise{zero}, t, s), zero);
}

TEST(QSample, RejectsShapeMismatchAndBadLevel) {
  const auto s = default_schedule();
  Tensor x({4});
  EXPECT_THROW(q_sample(x, SourceNoise{Tensor({5})}, 10, s), std::invalid_argument);
  EXPECT_THROW(q_sample(x, SourceNoise{Tensor({4})}, 1000, s), std::out_of_range);
  EXPECT_THROW(q_sample(x, SourceNoise{Tensor({4})}, -1, s), std::out_of_range);
}

TEST(Symlog, Examples) {
  EXPECT_EQ(symlog(0.0), 0.0);
  EXPECT_NEAR(symlog(std::exp(1.0) - 1.0), 1.0, 1e-15);
  EXPECT_NEAR(symlog(-(std::exp(1.0) - 1.0)), -1.0, 1e-15);
}

TEST(Symlog, OddMonotoneContracting) {
  RandomStream rng(21);
  double prev_v = -1e9, prev = symlog(-1e9);
  std::vector<double> vs;
  for (int i = 0; i < 2000; ++i) vs.push_back((rng.uniform() - 0.5) * std::pow(10.0, rng.uniform_int(-6, 8)));
  std::sort(vs.begin(), vs.end());
  for (double v : vs) {
    EXPECT_EQ(symlog(-v), -symlog(v));
    EXPECT_LE(std::fabs(symlog(v)), std::fabs(v));
    if (v > prev_v) {
      EXPECT_GE(symlog(v), prev);
    }
    prev_v = v;
    prev = symlog(v);
  }
}

TEST(Symlog, RejectsNonFinite) {
  EXPECT_THROW(symlog(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
  EXPECT_THROW(symlog(std::numeric_limits<double>::infinity()), std::domain_error);
  EXPECT_THROW(symlog(-std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}
