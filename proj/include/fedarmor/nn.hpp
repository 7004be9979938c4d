#pragma once

// Small fully connected classifier with hand-derived backward passes.
//
// Hidden layers use rectified-linear activations, the output layer is the
// identity, and training minimizes mean softmax cross-entropy with plain
// minibatch SGD. Everything is a pure function of its arguments; randomness
// only enters through an explicitly passed RngStream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fedarmor/error.hpp"
#include "fedarmor/rng.hpp"
#include "fedarmor/tensor.hpp"

namespace fedarmor {

struct Layer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  std::size_t in() const { return weight.dim(1); }
  std::size_t out() const { return weight.dim(0); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("model needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& l = layers_[k];
      if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.out())
        throw ShapeError("layer " + std::to_string(k) + " is malformed");
      if (k > 0 && layers_[k - 1].out() != l.in())
        throw ShapeError("layer " + std::to_string(k) + " input " +
                         std::to_string(l.in()) + " does not chain with " +
                         std::to_string(layers_[k - 1].out()));
    }
  }

  // All-zero model with the given widths, input first.
  static ModelParams zeros(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw ShapeError("need input and output widths");
    std::vector<Layer> layers;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      layers.push_back({Tensor({widths[k + 1], widths[k]}),
                        Tensor({widths[k + 1]})});
    }
    return ModelParams(std::move(layers));
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  std::size_t input_dim() const { return layers_.front().in(); }
  std::size_t output_dim() const { return layers_.back().out(); }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim()};
    for (const Layer& l : layers_) w.push_back(l.out());
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Layer by layer: weight (row-major) then bias.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Layer& l : layers_) {
      flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
      flat.insert(flat.end(), l.bias.values().begin(), l.bias.values().end());
    }
    return flat;
  }

  // Same architecture as `like`, values taken from `flat`.
  static ModelParams unflatten(const ModelParams& like,
                               std::span<const double> flat) {
    if (flat.size() != like.parameter_count())
      throw ShapeError("flat vector length " + std::to_string(flat.size()) +
                       " does not match parameter count " +
                       std::to_string(like.parameter_count()));
    ModelParams out = like;
    std::size_t pos = 0;
    for (Layer& l : out.layers_) {
      for (double& v : l.weight.data()) v = flat[pos++];
      for (double& v : l.bias.data()) v = flat[pos++];
    }
    return out;
  }

  bool same_architecture(const ModelParams& other) const {
    return widths() == other.widths();
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<Layer> layers_;
};

class Dataset {
 public:
  Dataset() = default;

  Dataset(Tensor features, std::vector<std::size_t> labels,
          std::size_t num_classes)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        num_classes_(num_classes) {
    if (num_classes_ == 0) throw DomainError("num_classes must be positive");
    if (features_.rank() != 2)
      throw ShapeError("features must be an [n x d] matrix");
    if (features_.dim(0) != labels_.size())
      throw ShapeError("feature rows and labels differ in count");
    for (std::size_t y : labels_)
      if (y >= num_classes_)
        throw DomainError("label " + std::to_string(y) + " >= num_classes " +
                          std::to_string(num_classes_));
  }

  // Empty dataset with a fixed feature dimension.
  static Dataset empty(std::size_t dim, std::size_t num_classes) {
    return Dataset(Tensor({0, dim}), {}, num_classes);
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const { return features_.dim(1); }
  std::size_t num_classes() const noexcept { return num_classes_; }

  const Tensor& features() const noexcept { return features_; }
  Tensor& features() noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

  std::span<const double> x(std::size_t i) const { return features_.row(i); }
  std::size_t y(std::size_t i) const { return labels_[i]; }

  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<double> feats;
    feats.reserve(indices.size() * dim());
    std::vector<std::size_t> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
      auto row = x(i);
      feats.insert(feats.end(), row.begin(), row.end());
      labels.push_back(labels_.at(i));
    }
    return Dataset(Tensor({indices.size(), dim()}, std::move(feats)),
                   std::move(labels), num_classes_);
  }

  // Rows of `this` followed by rows of `other`.
  Dataset concat(const Dataset& other) const {
    if (other.dim() != dim() || other.num_classes_ != num_classes_)
      throw ShapeError("cannot concatenate datasets of different layout");
    std::vector<double> feats = features_.values();
    feats.insert(feats.end(), other.features_.values().begin(),
                 other.features_.values().end());
    std::vector<std::size_t> labels = labels_;
    labels.insert(labels.end(), other.labels_.begin(), other.labels_.end());
    const std::size_t n = labels.size();
    return Dataset(Tensor({n, dim()}, std::move(feats)),
                   std::move(labels), num_classes_);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Tensor features_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_ = 0;
};

// He-normal weights, zero biases.
inline ModelParams init_model(std::span<const std::size_t> widths,
                              RngStream& rng) {
  ModelParams params = ModelParams::zeros(widths);
  for (Layer& l : params.layers()) {
    const double scale = std::sqrt(2.0 / static_cast<double>(l.in()));
    for (double& w : l.weight.data()) w = scale * rng.normal();
  }
  return params;
}

namespace detail {

inline void check_input(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim())
    throw ShapeError("input has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(params.input_dim()));
}

// Pre-activations of every layer for one example.
inline std::vector<std::vector<double>> forward_trace(
    const ModelParams& params, std::span<const double> x) {
  check_input(params, x);
  const auto& layers = params.layers();
  std::vector<std::vector<double>> pre(layers.size());
  std::vector<double> act(x.begin(), x.end());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    std::vector<double>& z = pre[k];
    z.assign(l.out(), 0.0);
    for (std::size_t o = 0; o < l.out(); ++o) {
      double s = l.bias[o];
      auto w = l.weight.row(o);
      for (std::size_t i = 0; i < l.in(); ++i) s += w[i] * act[i];
      z[o] = s;
    }
    if (k + 1 < layers.size()) {
      act.resize(l.out());
      for (std::size_t o = 0; o < l.out(); ++o) act[o] = std::max(z[o], 0.0);
    }
  }
  return pre;
}

inline double log_sum_exp(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - peak);
  return peak + std::log(s);
}

// d(loss)/d(logits) for softmax cross-entropy is softmax - onehot.
inline std::vector<double> logit_gradient(std::span<const double> logits,
                                          std::size_t y) {
  const double lse = log_sum_exp(logits);
  std::vector<double> g(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c)
    g[c] = std::exp(logits[c] - lse);
  g[y] -= 1.0;
  return g;
}

// Backpropagates one example. Adds `weight` times the parameter gradient into
// `param_grad` (flattened order) when non-null, and writes the input gradient
// into `input_grad` when non-null.
inline void backward(const ModelParams& params, std::span<const double> x,
                     std::size_t y, double weight, double* param_grad,
                     std::vector<double>* input_grad) {
  const auto& layers = params.layers();
  const auto pre = forward_trace(params, x);
  if (y >= params.output_dim())
    throw DomainError("label " + std::to_string(y) + " out of range");

  // Offsets of each layer inside the flattened vector.
  std::vector<std::size_t> offset(layers.size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    offset[k] = pos;
    pos += layers[k].weight.size() + layers[k].bias.size();
  }

  std::vector<double> delta = logit_gradient(pre.back(), y);
  std::vector<double> act;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Layer& l = layers[k];
    // Input activation of layer k.
    if (k == 0) {
      act.assign(x.begin(), x.end());
    } else {
      act.resize(pre[k - 1].size());
      for (std::size_t i = 0; i < act.size(); ++i)
        act[i] = std::max(pre[k - 1][i], 0.0);
    }
    if (param_grad != nullptr) {
      double* gw = param_grad + offset[k];
      double* gb = gw + l.weight.size();
      for (std::size_t o = 0; o < l.out(); ++o) {
        const double d = weight * delta[o];
        if (d == 0.0) continue;
        double* row = gw + o * l.in();
        for (std::size_t i = 0; i < l.in(); ++i) row[i] += d * act[i];
        gb[o] += d;
      }
    }
    if (k == 0 && input_grad == nullptr) break;
    std::vector<double> prev(l.in(), 0.0);
    for (std::size_t o = 0; o < l.out(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      auto w = l.weight.row(o);
      for (std::size_t i = 0; i < l.in(); ++i) prev[i] += w[i] * d;
    }
    if (k > 0) {
      for (std::size_t i = 0; i < prev.size(); ++i)
        if (pre[k - 1][i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
}

inline void require_nonempty(const Dataset& batch) {
  if (batch.empty()) throw DomainError("batch is empty");
}

inline void check_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v))
      throw DomainError(std::string(what) + " became non-finite");
}

}  // namespace detail

inline std::vector<double> forward(const ModelParams& params,
                                   std::span<const double> x) {
  return detail::forward_trace(params, x).back();
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double lse = detail::log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c)
    p[c] = std::exp(logits[c] - lse);
  return p;
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

inline std::size_t predict(const ModelParams& params, std::span<const double> x) {
  return argmax(forward(params, x));
}

// Cross-entropy of one example.
inline double example_loss(const ModelParams& params, std::span<const double> x,
                           std::size_t y) {
  if (y >= params.output_dim())
    throw DomainError("label " + std::to_string(y) + " out of range");
  const auto logits = forward(params, x);
  return detail::log_sum_exp(logits) - logits[y];
}

inline std::vector<double> example_losses(const ModelParams& params,
                                          const Dataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out[i] = example_loss(params, data.x(i), data.y(i));
  return out;
}

// Mean cross-entropy over the batch.
inline double loss(const ModelParams& params, const Dataset& batch) {
  detail::require_nonempty(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    total += example_loss(params, batch.x(i), batch.y(i));
  return total / static_cast<double>(batch.size());
}

// Gradient of `loss` with respect to every parameter, flattened.
inline std::vector<double> grad_params(const ModelParams& params,
                                       const Dataset& batch) {
  detail::require_nonempty(batch);
  std::vector<double> grad(params.parameter_count(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    detail::backward(params, batch.x(i), batch.y(i), w, grad.data(), nullptr);
  return grad;
}

// Gradient of the single-example loss with respect to the input.
inline std::vector<double> grad_input(const ModelParams& params,
                                      std::span<const double> x, std::size_t y) {
  std::vector<double> g;
  detail::backward(params, x, y, 0.0, nullptr, &g);
  return g;
}

inline ModelParams sgd_step(const ModelParams& params,
                            std::span<const double> grad, double lr) {
  std::vector<double> flat = params.flatten();
  if (grad.size() != flat.size())
    throw ShapeError("gradient length " + std::to_string(grad.size()) +
                     " does not match parameter count " +
                     std::to_string(flat.size()));
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= lr * grad[i];
  detail::check_finite(flat, "parameters");
  return ModelParams::unflatten(params, flat);
}

struct TrainOptions {
  std::size_t epochs = 5;
  double lr = 0.05;
  std::size_t batch_size = 16;

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

// Minibatch SGD; the example order is reshuffled from `rng` every epoch.
inline ModelParams train_local(const ModelParams& params, const Dataset& data,
                               const TrainOptions& opts, RngStream& rng) {
  if (data.empty()) throw DomainError("cannot train on an empty dataset");
  if (opts.batch_size == 0) throw DomainError("batch_size must be >= 1");
  if (data.dim() != params.input_dim())
    throw ShapeError("dataset dimension does not match model input");
  if (opts.epochs == 0 || opts.lr == 0.0) return params;

  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  std::vector<std::size_t> order(data.size());
  ModelParams current = params;
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      const double w = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        detail::backward(current, data.x(i), data.y(i), w, grad.data(), nullptr);
      }
      for (std::size_t p = 0; p < flat.size(); ++p) flat[p] -= opts.lr * grad[p];
      current = ModelParams::unflatten(current, flat);
    }
  }
  detail::check_finite(flat, "parameters");
  return current;
}

}  // namespace fedarmor
