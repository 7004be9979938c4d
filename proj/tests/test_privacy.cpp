#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "oracles.hpp"

using namespace fedarmor;
using oracle::Vec;

TEST(Clip, ScalesDownToBound) {
  const Vec w{6.0, 8.0};  // norm 10
  const Vec c = clip_params(w, 2.0);
  EXPECT_NEAR(l2_norm(c), 2.0, 1e-12);
  EXPECT_NEAR(c[0] / c[1], 0.75, 1e-15);
  EXPECT_GT(c[0], 0.0);
}

TEST(Clip, InsideBallUnchanged) {
  const Vec w{0.6, -0.8};  // norm 1
  const Vec c = clip_params(w, 2.0);
  EXPECT_EQ(std::memcmp(c.data(), w.data(), sizeof(double) * 2), 0);
  EXPECT_EQ(clip_params(Vec{0.0, 0.0, 0.0}, 1.0), (Vec{0.0, 0.0, 0.0}));
}

TEST(Clip, NonPositiveBoundThrows) {
  EXPECT_THROW(clip_params(Vec{1.0}, 0.0), DomainError);
  EXPECT_THROW(clip_params(Vec{1.0}, -1.0), DomainError);
}

TEST(Clip, NeverExceedsBound) {
  RngStream rng(StreamId{1, StreamKind::kTest, 0, 0});
  for (int t = 0; t < 10000; ++t) {
    Vec w(1 + rng.below(50));
    const double scale = std::exp(8.0 * rng.uniform() - 4.0);
    for (double& v : w) v = scale * rng.normal();
    const double bound = std::exp(6.0 * rng.uniform() - 3.0);
    ASSERT_LE(l2_norm(clip_params(w, bound)), bound + 1e-12);
  }
}

TEST(Sensitivity, Formula) {
  EXPECT_DOUBLE_EQ(uplink_sensitivity(1.0, 100), 0.02);
  EXPECT_EQ(uplink_sensitivity(0.5, 1), 1.0);
  for (std::size_t m : {1u, 3u, 7u, 100u})
    EXPECT_EQ(uplink_sensitivity(1.3, 2 * m), uplink_sensitivity(1.3, m) / 2.0);
  EXPECT_THROW(uplink_sensitivity(1.0, 0), DomainError);
}

TEST(NoiseScale, Formula) {
  EXPECT_DOUBLE_EQ(noise_scale(1.0, 1, 0.02, 0.01), 2.0);
  EXPECT_EQ(noise_scale(1.7, 6, 0.3, 0.9), 2.0 * noise_scale(1.7, 3, 0.3, 0.9));
  EXPECT_EQ(noise_scale(1.7, 3, 0.3, 1.8), noise_scale(1.7, 3, 0.3, 0.9) / 2.0);
  EXPECT_THROW(noise_scale(1.0, 1, 0.02, 0.0), DomainError);
  EXPECT_THROW(noise_scale(1.0, 1, 0.02, -1.0), DomainError);
}

TEST(NoiseMultiplier, KnownValues) {
  EXPECT_NEAR(default_noise_multiplier(1.25 / std::exp(2.0)), 2.0, 1e-15);
  // sqrt(2 ln 125000), evaluated at 30 digits with mpmath.
  EXPECT_NEAR(default_noise_multiplier(1e-5), 4.84480526260538942, 1e-14);
  EXPECT_GT(default_noise_multiplier(1e-6), default_noise_multiplier(1e-5));
  EXPECT_THROW(default_noise_multiplier(0.0), DomainError);
  EXPECT_THROW(default_noise_multiplier(1.0), DomainError);
}

TEST(PrivacySpec, DerivedFieldsMatchRecomputation) {
  PrivacySpec p;
  p.epsilon_dp = 0.7;
  p.delta_dp = 1e-4;
  p.clip_bound = 2.5;
  p.exposures = 3;
  p.min_dataset_size = 40;
  p.noise_multiplier = default_noise_multiplier(1e-4);
  const double ds = 2.0 * 2.5 / 40.0;
  EXPECT_EQ(p.uplink_sensitivity(), ds);
  EXPECT_EQ(p.sigma_up(), p.noise_multiplier * 3.0 * ds / 0.7);
}

TEST(GaussianPerturb, ZeroSigmaIsIdentity) {
  const Vec w{1.0, -0.0, 3.5};
  const Vec out = gaussian_perturb(w, NoiseChannel{0.0, StreamId{1, StreamKind::kUplink, 0, 0}});
  EXPECT_EQ(std::memcmp(out.data(), w.data(), sizeof(double) * 3), 0);
  EXPECT_THROW(gaussian_perturb(w, NoiseChannel{-1.0, StreamId{}}), DomainError);
}

TEST(GaussianPerturb, EmpiricalMomentsPerStream) {
  const double sigma = 0.7;
  const std::size_t n = 100000;
  Vec draws(n);
  for (std::size_t k = 0; k < n; ++k)
    draws[k] = gaussian_perturb(Vec{0.0}, NoiseChannel{sigma, StreamId{5, StreamKind::kUplink, 0, k}})[0];
  EXPECT_NEAR(oracle::population_std(draws) / sigma, 1.0, 0.02);
  EXPECT_LE(std::abs(oracle::mean(draws)), 3.0 * sigma / std::sqrt(double(n)));
}

TEST(GaussianPerturb, DistinctStreamsDiffer) {
  const Vec w(4, 0.0);
  const Vec a = gaussian_perturb(w, NoiseChannel{1.0, StreamId{1, StreamKind::kUplink, 0, 0}});
  const Vec b = gaussian_perturb(w, NoiseChannel{1.0, StreamId{1, StreamKind::kUplink, 0, 1}});
  const Vec c = gaussian_perturb(w, NoiseChannel{1.0, StreamId{1, StreamKind::kDownlink, 0, 0}});
  const Vec a2 = gaussian_perturb(w, NoiseChannel{1.0, StreamId{1, StreamKind::kUplink, 0, 0}});
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a, a2);
}

TEST(GaussianPerturb, KolmogorovSmirnov) {
  const double sigma = 2.5;
  const Vec z = gaussian_perturb(Vec(10000, 1.0), NoiseChannel{sigma, StreamId{3, StreamKind::kDownlink, 1, 2}});
  Vec standardized;
  for (double v : z) standardized.push_back((v - 1.0) / sigma);
  EXPECT_LT(oracle::ks_standard_normal(standardized), 0.02);
}

TEST(Sensitivity, TinyDomainOracle) {
  for (double clip : {0.5, 1.0, 2.0}) {
    const auto r = oracle::tiny_domain_sensitivity(clip, 0.05, 0.1);
    EXPECT_GT(r.pairs, 0u);
    EXPECT_LE(r.max_distance, 2.0 * clip / 4.0 + 1e-9) << "clip " << clip;
  }
}

TEST(AverageClipped, Errors) {
  EXPECT_THROW(average_clipped(std::vector<Vec>{}, 1.0), DomainError);
  EXPECT_THROW(average_clipped(std::vector<Vec>{{1.0}, {1.0, 2.0}}, 1.0), ShapeError);
}
