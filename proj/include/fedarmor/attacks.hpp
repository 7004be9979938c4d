#pragma once

// Untargeted L-infinity evasion attacks (FGSM and PGD) against the true label.

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedarmor/error.hpp"
#include "fedarmor/nn.hpp"

namespace fedarmor {

enum class AttackMethod { kFgsm, kPgd };

inline std::string_view to_string(AttackMethod m) {
  return m == AttackMethod::kFgsm ? "fgsm" : "pgd";
}

struct AttackSpec {
  AttackMethod method = AttackMethod::kPgd;
  double epsilon = 0.05;  // FGSM step and budget
  double alpha = 0.01;    // PGD per-step size
  std::size_t steps = 10;
  double eta = 0.05;      // PGD L-infinity radius around the clean input
  double clamp_lo = -10.0;
  double clamp_hi = 10.0;

  // Throws DomainError naming the violated constraint.
  void validate() const {
    if (!(clamp_lo < clamp_hi)) throw DomainError("attack clamp_lo must be < clamp_hi");
    if (epsilon < 0.0) throw DomainError("attack epsilon must be >= 0");
    if (method == AttackMethod::kFgsm && epsilon > clamp_hi - clamp_lo)
      throw DomainError("attack epsilon exceeds the clamp range");
    if (method == AttackMethod::kPgd) {
      if (steps == 0) throw DomainError("attack steps must be positive");
      if (!(alpha > 0.0)) throw DomainError("attack alpha must be positive");
      if (!(eta > 0.0)) throw DomainError("attack eta must be positive");
      if (alpha > eta) throw DomainError("attack alpha must be <= eta");
    }
  }

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// v + amount, leaving v bit-identical when nothing is added (keeps -0.0).
inline double shift(double v, double amount) { return amount == 0.0 ? v : v + amount; }

inline void check_method(const AttackSpec& spec, AttackMethod expected) {
  if (spec.method != expected)
    throw DomainError("attack spec method is " + std::string(to_string(spec.method)) +
                      ", expected " + std::string(to_string(expected)));
}

}  // namespace detail

// Clamp-aware projection of `v` onto the L-infinity ball of `radius` around
// `center`, followed by the domain clamp.
inline void project_linf(std::span<double> v, std::span<const double> center,
                         double radius, double lo, double hi) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    double p = std::min(std::max(v[i], center[i] - radius), center[i] + radius);
    v[i] = std::min(std::max(p, lo), hi);
  }
}

inline std::vector<double> fgsm(const ModelParams& params,
                                std::span<const double> x, std::size_t y,
                                const AttackSpec& spec) {
  detail::check_method(spec, AttackMethod::kFgsm);
  const auto g = grad_input(params, x, y);
  std::vector<double> adv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = detail::shift(x[i], spec.epsilon * detail::sign(g[i]));
    adv[i] = std::min(std::max(step, spec.clamp_lo), spec.clamp_hi);
  }
  return adv;
}

// No random start: the first iterate is the clean input.
inline std::vector<double> pgd(const ModelParams& params,
                               std::span<const double> x, std::size_t y,
                               const AttackSpec& spec) {
  detail::check_method(spec, AttackMethod::kPgd);
  std::vector<double> adv(x.begin(), x.end());
  for (std::size_t s = 0; s < spec.steps; ++s) {
    const auto g = grad_input(params, adv, y);
    for (std::size_t i = 0; i < adv.size(); ++i)
      adv[i] = detail::shift(adv[i], spec.alpha * detail::sign(g[i]));
    project_linf(adv, x, spec.eta, spec.clamp_lo, spec.clamp_hi);
  }
  return adv;
}

inline std::vector<double> craft(const ModelParams& params,
                                 std::span<const double> x, std::size_t y,
                                 const AttackSpec& spec) {
  return spec.method == AttackMethod::kFgsm ? fgsm(params, x, y, spec)
                                            : pgd(params, x, y, spec);
}

// Adversarial twin of every row; labels and order are kept.
inline Dataset craft_set(const ModelParams& params, const Dataset& data,
                         const AttackSpec& spec) {
  if (data.empty()) throw DomainError("cannot craft attacks on an empty dataset");
  Tensor feats({data.size(), data.dim()});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto adv = craft(params, data.x(i), data.y(i), spec);
    std::copy(adv.begin(), adv.end(), feats.row(i).begin());
  }
  return Dataset(std::move(feats), data.labels(), data.num_classes());
}

// Mean loss on the crafted set: the inner maximization over the allowed
// perturbation set, approximated by the configured attack.
inline double adversarial_loss(const ModelParams& params, const Dataset& data,
                               const AttackSpec& spec) {
  return loss(params, craft_set(params, data, spec));
}

}  // namespace fedarmor
