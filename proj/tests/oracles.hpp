#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the library's forward/backward code; models are read only through their
// raw weight arrays.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "fedarmor/fedarmor.hpp"

namespace oracle {

using fedarmor::Dataset;
using fedarmor::ModelParams;
using Vec = std::vector<double>;

// Straight-line forward pass: z = W a + b, ReLU on hidden layers.
inline Vec forward(const ModelParams& m, const Vec& x, Vec* hidden_pre = nullptr) {
  Vec a = x;
  const auto& layers = m.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& W = layers[k].weight;
    const auto& b = layers[k].bias;
    const std::size_t rows = W.dim(0), cols = W.dim(1);
    Vec z(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = b[r];
      for (std::size_t c = 0; c < cols; ++c) s += W[r * cols + c] * a[c];
      z[r] = s;
    }
    if (k + 1 < layers.size()) {
      if (hidden_pre) hidden_pre->insert(hidden_pre->end(), z.begin(), z.end());
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = z;
  }
  return a;
}

inline double xent(const Vec& logits, std::size_t y) {
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - peak);
  return -(logits[y] - peak - std::log(s));
}

inline Vec row(const Dataset& d, std::size_t i) {
  auto r = d.x(i);
  return Vec(r.begin(), r.end());
}

inline double mean_loss(const ModelParams& m, const Dataset& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += xent(forward(m, row(d, i)), d.y(i));
  return s / static_cast<double>(d.size());
}

// Smallest |pre-activation| over hidden units; finite differences are only
// trusted when this is far above the step size.
inline double kink_margin(const ModelParams& m, const Dataset& d) {
  double margin = INFINITY;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Vec pre;
    forward(m, row(d, i), &pre);
    for (double z : pre) margin = std::min(margin, std::abs(z));
  }
  return margin;
}

inline Vec fd_grad_params(const ModelParams& m, const Dataset& d, double h) {
  Vec flat = m.flatten();
  Vec g(flat.size());
  for (std::size_t p = 0; p < flat.size(); ++p) {
    const double keep = flat[p];
    flat[p] = keep + h;
    const double up = mean_loss(ModelParams::unflatten(m, flat), d);
    flat[p] = keep - h;
    const double down = mean_loss(ModelParams::unflatten(m, flat), d);
    flat[p] = keep;
    g[p] = (up - down) / (2.0 * h);
  }
  return g;
}

inline Vec fd_grad_input(const ModelParams& m, Vec x, std::size_t y, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = xent(forward(m, x), y);
    x[i] = keep - h;
    const double down = xent(forward(m, x), y);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor). The floor keeps entries that are zero up to
// rounding from dominating the maximum.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckResult {
  double max_rel_params = 0.0;
  double max_rel_input = 0.0;
  std::size_t trials = 0;
};

// Random (architecture, batch) pairs; draws that put a hidden unit within
// 1e-3 of its kink are redrawn.
inline GradCheckResult gradient_trials(std::size_t count, std::uint64_t seed,
                                       double h = 1e-5) {
  using namespace fedarmor;
  RngStream rng(StreamId{seed, StreamKind::kTest, 0, 0});
  GradCheckResult res;
  while (res.trials < count) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> widths{2 + rng.below(5)};
    for (std::size_t k = 0; k + 1 < depth; ++k) widths.push_back(2 + rng.below(6));
    const std::size_t classes = 2 + rng.below(3);
    widths.push_back(classes);
    ModelParams m = init_model(widths, rng);
    {
      Vec flat = m.flatten();
      for (double& v : flat) v += 0.1 * rng.normal();  // nonzero biases
      m = ModelParams::unflatten(m, flat);
    }
    const std::size_t n = 1 + rng.below(6);
    Tensor feats({n, widths.front()});
    for (double& v : feats.data()) v = rng.normal();
    std::vector<std::size_t> labels(n);
    for (auto& y : labels) y = rng.below(classes);
    Dataset batch(std::move(feats), std::move(labels), classes);
    if (kink_margin(m, batch) < 1e-3) continue;

    const Vec analytic = grad_params(m, batch);
    const Vec numeric = fd_grad_params(m, batch, h);
    for (std::size_t p = 0; p < analytic.size(); ++p)
      res.max_rel_params = std::max(res.max_rel_params, rel_err(analytic[p], numeric[p]));
    for (std::size_t i = 0; i < n; ++i) {
      const Vec gi = grad_input(m, batch.x(i), batch.y(i));
      const Vec fi = fd_grad_input(m, row(batch, i), batch.y(i), h);
      for (std::size_t j = 0; j < gi.size(); ++j)
        res.max_rel_input = std::max(res.max_rel_input, rel_err(gi[j], fi[j]));
    }
    ++res.trials;
  }
  return res;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// One-sample Kolmogorov-Smirnov statistic against N(0, 1).
inline double ks_standard_normal(Vec z) {
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double mean(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_std(const Vec& v) {
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Sensitivity family: samples (x, y) with x in {-1, 0, 1}^2 and y in {-1, +1}.
// A sample's solution minimizes log(1 + exp(-y w.x)) + (lambda/2) |w|^2 over
// a grid on [-3, 3]^2; the dataset release averages the clipped per-sample
// solutions. Returns max ||s - s'|| over all ordered 4-tuples and all
// single-position replacements.
struct SensitivityResult {
  double max_distance = 0.0;
  std::size_t pairs = 0;
};

inline SensitivityResult tiny_domain_sensitivity(double clip, double lambda = 0.05,
                                                 double step = 0.05) {
  std::vector<std::pair<Vec, double>> samples;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int y : {-1, 1})
        samples.push_back({Vec{double(a), double(b)}, double(y)});

  const int steps = static_cast<int>(std::lround(6.0 / step));
  std::vector<Vec> solution;
  for (const auto& [x, y] : samples) {
    double best = INFINITY;
    Vec arg{0.0, 0.0};
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double w0 = -3.0 + step * i, w1 = -3.0 + step * j;
        const double margin = y * (w0 * x[0] + w1 * x[1]);
        const double f = std::log1p(std::exp(-margin)) + 0.5 * lambda * (w0 * w0 + w1 * w1);
        if (f < best) {
          best = f;
          arg = {w0, w1};
        }
      }
    solution.push_back(arg);
  }

  const std::size_t k = samples.size();
  SensitivityResult res;
  std::vector<Vec> set(4), alt(4);
  for (std::size_t i0 = 0; i0 < k; ++i0)
    for (std::size_t i1 = 0; i1 < k; ++i1)
      for (std::size_t i2 = 0; i2 < k; ++i2)
        for (std::size_t i3 = 0; i3 < k; ++i3) {
          const std::size_t idx[4] = {i0, i1, i2, i3};
          for (int p = 0; p < 4; ++p) set[p] = solution[idx[p]];
          const Vec s = fedarmor::average_clipped(set, clip);
          for (int p = 0; p < 4; ++p) {
            for (std::size_t r = 0; r < k; ++r) {
              if (r == idx[p]) continue;
              alt = set;
              alt[p] = solution[r];
              const Vec t = fedarmor::average_clipped(alt, clip);
              const double d = std::hypot(s[0] - t[0], s[1] - t[1]);
              res.max_distance = std::max(res.max_distance, d);
              ++res.pairs;
            }
          }
        }
  return res;
}

// One-parameter instance for the retraining-risk bound. Two classes on the
// real line; the model is logits (-beta/2 * x, beta/2 * x) with zero bias, so
// the logit gap is beta * x.
inline ModelParams beta_model(double beta) {
  using fedarmor::Layer;
  using fedarmor::Tensor;
  return ModelParams({Layer{Tensor({2, 1}, {-beta / 2.0, beta / 2.0}), Tensor({2})}});
}

inline double beta_gradient(const ModelParams& m, const Dataset& d) {
  const Vec g = fedarmor::grad_params(m, d);  // w0, w1, b0, b1
  return -0.5 * g[0] + 0.5 * g[1];
}

struct RiskCheck {
  double final_beta = 0.0;
  double retraining_risk = 0.0;
  double grid_min = 0.0;
  double grid_argmin = 0.0;
};

// Crafts twins once against beta0, descends on beta over clean + twins (bias
// frozen), then compares the final-iterate risk against a brute-force grid
// minimum of the adaptation loss on [-20, 20]. Unit noise keeps the classes
// overlapping so the final iterate stays well inside the grid.
inline RiskCheck risk_inequality(std::uint64_t seed, double eps = 0.3,
                                 std::size_t attacked_label = 1) {
  using namespace fedarmor;
  RngStream rng(StreamId{seed, StreamKind::kTest, 7, 0});
  const std::size_t n = 24;
  Tensor feats({n, 1});
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2;
    feats.data()[i] = (labels[i] == 1 ? 1.0 : -1.0) + rng.normal();
  }
  const Dataset base(std::move(feats), std::move(labels), 2);
  const AttackSpec atk{AttackMethod::kFgsm, eps, 0.01, 1, eps, -10.0, 10.0};

  double beta = 0.5;
  const Dataset twins = craft_set(beta_model(beta), base, atk);
  const Dataset train = base.concat(twins);
  for (int it = 0; it < 2000; ++it) beta -= 0.5 * beta_gradient(beta_model(beta), train);

  RiskCheck out;
  out.final_beta = beta;
  out.retraining_risk = retraining_risk(beta_model(beta), base, twins);
  out.grid_min = INFINITY;
  for (int i = -20000; i <= 20000; ++i) {
    const double b = i * 1e-3;
    const double v = adaptation_loss(beta_model(b), base, atk, attacked_label);
    if (v < out.grid_min) {
      out.grid_min = v;
      out.grid_argmin = b;
    }
  }
  return out;
}

struct AttackTrials {
  std::size_t cases = 0;
  std::size_t budget_checked = 0;     // FGSM coordinates with no clamp and g != 0
  double max_budget_error = 0.0;      // max | |x_adv - x| - eps | over those
  std::size_t pgd_violations = 0;     // PGD outputs outside the ball or clamp
  std::size_t fgsm_mismatches = 0;    // PGD(1 step, alpha = eps = eta) != FGSM
};

// Random nets, inputs, budgets and clamp ranges; about a third of the cases
// put the clamp close enough to bind.
inline AttackTrials attack_trials(std::size_t count, std::uint64_t seed) {
  using namespace fedarmor;
  RngStream rng(StreamId{seed, StreamKind::kTest, 3, 0});
  AttackTrials res;
  for (; res.cases < count; ++res.cases) {
    const std::size_t d = 2 + rng.below(6), classes = 2 + rng.below(3);
    std::vector<std::size_t> widths{d};
    if (rng.below(2)) widths.push_back(2 + rng.below(6));
    widths.push_back(classes);
    const ModelParams m = init_model(widths, rng);
    Vec x(d);
    for (double& v : x) v = rng.normal();
    const std::size_t y = rng.below(classes);
    const double eps = 0.01 + 0.5 * rng.uniform();
    double lo = -10.0, hi = 10.0;
    if (rng.below(3) == 0) {
      lo = *std::min_element(x.begin(), x.end()) - 0.1 * rng.uniform();
      hi = *std::max_element(x.begin(), x.end()) + 0.1 * rng.uniform();
    }

    const AttackSpec f{AttackMethod::kFgsm, eps, eps, 1, eps, lo, hi};
    const Vec adv = fgsm(m, x, y, f);
    const Vec g = grad_input(m, x, y);
    for (std::size_t i = 0; i < d; ++i) {
      const double moved = x[i] + eps * (g[i] > 0 ? 1.0 : -1.0);
      if (g[i] == 0.0 || moved < lo || moved > hi) continue;
      ++res.budget_checked;
      res.max_budget_error =
          std::max(res.max_budget_error, std::abs(std::abs(adv[i] - x[i]) - eps));
    }

    const AttackSpec one{AttackMethod::kPgd, eps, eps, 1, eps, lo, hi};
    const Vec p1 = pgd(m, x, y, one);
    if (std::memcmp(p1.data(), adv.data(), d * sizeof(double)) != 0) ++res.fgsm_mismatches;

    const double eta = 0.01 + 0.5 * rng.uniform();
    const AttackSpec multi{AttackMethod::kPgd, eps, eta * (0.05 + 0.95 * rng.uniform()),
                           1 + rng.below(20), eta, lo, hi};
    const Vec pk = pgd(m, x, y, multi);
    for (std::size_t i = 0; i < d; ++i) {
      // x + eta is itself rounded, so the distance may exceed eta by an ulp.
      const bool in_ball = std::abs(pk[i] - x[i]) <= eta + 1e-12;
      const bool in_range = pk[i] >= lo && pk[i] <= hi;
      // When x itself lies outside the clamp range the ball and the range
      // can be disjoint; the clamp wins then.
      const bool feasible = x[i] + eta >= lo && x[i] - eta <= hi;
      if (!in_range || (feasible && !in_ball)) {
        ++res.pgd_violations;
        break;
      }
    }
  }
  return res;
}

}  // namespace oracle
