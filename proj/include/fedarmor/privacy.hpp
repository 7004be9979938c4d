#pragma once

// Parameter clipping, sensitivity and Gaussian noise calibration for the
// client-to-server (uplink) and server-to-client (downlink) channels.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fedarmor/error.hpp"
#include "fedarmor/rng.hpp"

namespace fedarmor {

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Rescales `w` onto the L2 ball of radius `bound`; vectors already inside are
// returned unchanged.
inline std::vector<double> clip_params(std::span<const double> w, double bound) {
  if (!(bound > 0.0)) throw DomainError("clip bound must be positive");
  std::vector<double> out(w.begin(), w.end());
  const double norm = l2_norm(w);
  if (norm <= bound) return out;
  const double scale = bound / norm;
  for (double& v : out) v *= scale;
  return out;
}

// Sensitivity of a per-sample average of clipped releases when every client
// holds at least `min_dataset_size` examples: 2C/m.
inline double uplink_sensitivity(double clip_bound, std::size_t min_dataset_size) {
  if (min_dataset_size == 0) throw DomainError("min_dataset_size must be >= 1");
  if (!(clip_bound > 0.0)) throw DomainError("clip bound must be positive");
  return 2.0 * clip_bound / static_cast<double>(min_dataset_size);
}

// sigma = c * L * sensitivity / epsilon.
inline double noise_scale(double multiplier, std::size_t exposures,
                          double sensitivity, double epsilon_dp) {
  if (!(epsilon_dp > 0.0)) throw DomainError("privacy epsilon must be positive");
  if (!(multiplier > 0.0) || exposures == 0 || !(sensitivity > 0.0))
    throw DomainError("noise_scale inputs must be positive");
  return multiplier * static_cast<double>(exposures) * sensitivity / epsilon_dp;
}

// Classical Gaussian-mechanism constant sqrt(2 ln(1.25/delta)).
inline double default_noise_multiplier(double delta_dp) {
  if (!(delta_dp > 0.0 && delta_dp < 1.0))
    throw DomainError("privacy delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta_dp));
}

struct PrivacySpec {
  double epsilon_dp = 1.0;
  double delta_dp = 1e-5;
  double clip_bound = 1.0;
  std::size_t exposures = 1;
  std::size_t min_dataset_size = 1;
  double noise_multiplier = default_noise_multiplier(1e-5);

  double uplink_sensitivity() const {
    return fedarmor::uplink_sensitivity(clip_bound, min_dataset_size);
  }
  double sigma_up() const {
    return noise_scale(noise_multiplier, exposures, uplink_sensitivity(),
                       epsilon_dp);
  }
};

struct NoiseChannel {
  double sigma = 0.0;
  StreamId stream;
};

// w + N(0, sigma^2) per coordinate, drawn from the channel's own stream.
inline std::vector<double> gaussian_perturb(std::span<const double> w,
                                            const NoiseChannel& channel) {
  if (channel.sigma < 0.0) throw DomainError("noise sigma must be >= 0");
  std::vector<double> out(w.begin(), w.end());
  if (channel.sigma == 0.0) return out;
  RngStream rng(channel.stream);
  for (double& v : out) v += channel.sigma * rng.normal();
  return out;
}

// Release of a local dataset when the trainer is the average of per-sample
// minimizers: each per-sample solution is clipped to `bound`, then averaged.
// Replacing one sample moves the result by at most 2*bound/|samples|.
inline std::vector<double> average_clipped(
    std::span<const std::vector<double>> per_sample, double bound) {
  if (per_sample.empty()) throw DomainError("no per-sample solutions");
  std::vector<double> acc(per_sample.front().size(), 0.0);
  for (const auto& s : per_sample) {
    if (s.size() != acc.size()) throw ShapeError("per-sample solutions differ in size");
    const auto c = clip_params(s, bound);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c[i];
  }
  for (double& v : acc) v /= static_cast<double>(per_sample.size());
  return acc;
}

}  // namespace fedarmor
