#pragma once

// Synchronous federated training with DP uplinks, server-side adversarial
// adaptation and noisy downlink distribution.
//
// One round: every client starts from the broadcast global model, trains
// locally, optionally clips its parameter vector and adds uplink noise, and
// the server aggregates the uploads with a weighted average. After the last
// round the server retrains the global model on a held-out pool augmented with
// adversarial twins, then sends each client an independently noised copy.
//
// Every random draw comes from a stream keyed by (master seed, purpose, round,
// client), so results do not depend on the order clients are processed in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedarmor/attacks.hpp"
#include "fedarmor/error.hpp"
#include "fedarmor/nn.hpp"
#include "fedarmor/privacy.hpp"
#include "fedarmor/rng.hpp"

namespace fedarmor {

struct FederationConfig {
  std::size_t num_clients = 3;
  std::vector<double> client_weights;  // empty until derived from the partition
  std::size_t rounds = 10;
  std::size_t local_epochs = 5;
  double lr = 0.05;
  std::size_t batch_size = 16;
  double adaptation_fraction = 0.5;
  std::size_t adversary_client = 0;
  std::uint64_t master_seed = 0;

  TrainOptions local_training() const { return {local_epochs, lr, batch_size}; }

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

// Uplink behaviour of every client.
struct UplinkPolicy {
  bool enabled = false;  // clip + noise when set, plain upload otherwise
  double clip_bound = 1.0;
  double sigma = 0.0;
};

struct FederationState {
  ModelParams global;
  std::vector<ModelParams> client_models;
  std::size_t round = 0;
  Dataset server_dataset;
};

inline void check_weights(std::span<const double> weights, std::size_t count) {
  if (weights.size() != count)
    throw DomainError("got " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(count) + " models");
  double sum = 0.0;
  for (double p : weights) {
    if (!(p > 0.0)) throw DomainError("client weights must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DomainError("client weights must sum to 1");
}

// Weights proportional to the given sizes.
inline std::vector<double> size_weights(std::span<const std::size_t> sizes) {
  double total = 0.0;
  for (std::size_t s : sizes) total += static_cast<double>(s);
  std::vector<double> w;
  for (std::size_t s : sizes) w.push_back(static_cast<double>(s) / total);
  return w;
}

// Coordinate-wise sum of p_i * w_i. The terms of each coordinate are added in
// ascending order, so the result does not depend on the order of the models.
inline ModelParams fed_avg(std::span<const ModelParams> models,
                           std::span<const double> weights) {
  if (models.empty()) throw DomainError("nothing to aggregate");
  check_weights(weights, models.size());
  std::vector<std::vector<double>> flats;
  flats.reserve(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (!models[k].same_architecture(models.front()))
      throw ShapeError("model " + std::to_string(k) + " has a different architecture");
    flats.push_back(models[k].flatten());
  }
  std::vector<double> acc(flats.front().size(), 0.0);
  std::vector<double> terms(models.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (std::size_t k = 0; k < models.size(); ++k) terms[k] = weights[k] * flats[k][i];
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    acc[i] = s;
  }
  return ModelParams::unflatten(models.front(), acc);
}

// Independent noisy copy of `global` for each of `count` clients; copy k uses
// stream (seed, downlink, round, k).
inline std::vector<ModelParams> broadcast_noisy(const ModelParams& global,
                                                double sigma_down,
                                                std::size_t count,
                                                std::uint64_t seed,
                                                std::size_t round = 0) {
  if (count == 0) throw DomainError("broadcast needs at least one client");
  std::vector<ModelParams> out;
  out.reserve(count);
  const auto flat = global.flatten();
  for (std::size_t k = 0; k < count; ++k) {
    const NoiseChannel ch{sigma_down, StreamId{seed, StreamKind::kDownlink, round, k}};
    out.push_back(ModelParams::unflatten(global, gaussian_perturb(flat, ch)));
  }
  return out;
}

inline FederationState initial_state(ModelParams global, std::size_t num_clients,
                                     Dataset server_dataset) {
  FederationState s;
  s.client_models.assign(num_clients, global);
  s.global = std::move(global);
  s.server_dataset = std::move(server_dataset);
  return s;
}

// One synchronous round; client k draws its shuffling from
// (seed, train, round, k) and its uplink noise from (seed, uplink, round, k).
inline FederationState run_round(const FederationState& state,
                                 const FederationConfig& cfg,
                                 const UplinkPolicy& uplink,
                                 std::span<const Dataset> data_parts) {
  if (state.round >= cfg.rounds)
    throw DomainError("round " + std::to_string(state.round) + " exceeds rounds " +
                      std::to_string(cfg.rounds));
  if (data_parts.size() != cfg.num_clients)
    throw DomainError("expected " + std::to_string(cfg.num_clients) +
                      " client datasets, got " + std::to_string(data_parts.size()));
  FederationState next = state;
  const TrainOptions opts = cfg.local_training();
  for (std::size_t k = 0; k < cfg.num_clients; ++k) {
    try {
      RngStream rng(StreamId{cfg.master_seed, StreamKind::kClientTrain, state.round, k});
      ModelParams local = train_local(state.global, data_parts[k], opts, rng);
      if (uplink.enabled) {
        auto flat = clip_params(local.flatten(), uplink.clip_bound);
        flat = gaussian_perturb(
            flat, NoiseChannel{uplink.sigma,
                               StreamId{cfg.master_seed, StreamKind::kUplink, state.round, k}});
        local = ModelParams::unflatten(local, flat);
      }
      next.client_models[k] = std::move(local);
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(state.round) + ", client " +
                               std::to_string(k) + ": " + e.what());
    }
  }
  next.global = fed_avg(next.client_models, cfg.client_weights);
  next.round = state.round + 1;
  return next;
}

// Deterministic subsample of floor(fraction * n) rows, in original order.
inline std::vector<std::size_t> adaptation_indices(std::size_t n, double fraction,
                                                   const StreamId& stream) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("adaptation fraction must lie in [0, 1]");
  const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RngStream rng(stream);
  rng.shuffle(idx);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Selected clean rows followed by their adversarial twins crafted against
// `model`.
inline Dataset adaptation_set(const ModelParams& model, const Dataset& selected,
                              const AttackSpec& attack) {
  return selected.concat(craft_set(model, selected, attack));
}

struct AdaptationOptions {
  TrainOptions train;
  std::size_t passes = 1;  // re-craft against the updated model between passes
  StreamId sample_stream;
  StreamId train_stream;
};

inline ModelParams server_adapt(const ModelParams& global,
                                const Dataset& server_data,
                                const AttackSpec& attack, double fraction,
                                const AdaptationOptions& opts) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("adaptation fraction must lie in [0, 1]");
  if (fraction == 0.0) return global;
  if (server_data.empty())
    throw DomainError("server adaptation requested with an empty server dataset");
  const auto idx = adaptation_indices(server_data.size(), fraction, opts.sample_stream);
  if (idx.empty()) return global;
  const Dataset selected = server_data.subset(idx);
  RngStream rng(opts.train_stream);
  ModelParams model = global;
  for (std::size_t pass = 0; pass < std::max<std::size_t>(opts.passes, 1); ++pass)
    model = train_local(model, adaptation_set(model, selected, attack), opts.train, rng);
  return model;
}

// Sum (not mean) of per-example losses over base and augmented rows.
inline double retraining_risk(const ModelParams& params, const Dataset& base,
                              const Dataset& augmented) {
  if (base.empty() && augmented.empty())
    throw DomainError("retraining risk over two empty sets");
  double total = 0.0;
  for (const Dataset* d : {&base, &augmented}) {
    if (d->empty()) continue;
    if (d->dim() != params.input_dim())
      throw ShapeError("dataset dimension does not match model input");
    for (double l : example_losses(params, *d)) total += l;
  }
  return total;
}

// Summed loss where rows labelled `attacked_label` are replaced by their best
// response to `params` and all other rows stay clean.
inline double adaptation_loss(const ModelParams& params, const Dataset& data,
                              const AttackSpec& attack, std::size_t attacked_label) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.y(i) == attacked_label) {
      const auto adv = craft(params, data.x(i), data.y(i), attack);
      total += example_loss(params, adv, data.y(i));
    } else {
      total += example_loss(params, data.x(i), data.y(i));
    }
  }
  return total;
}

}  // namespace fedarmor
