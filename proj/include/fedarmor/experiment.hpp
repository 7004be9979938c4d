#pragma once

// End-to-end experiment: data preparation, federated rounds, server
// adaptation, downlink distribution and attack evaluation.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedarmor/attacks.hpp"
#include "fedarmor/data.hpp"
#include "fedarmor/error.hpp"
#include "fedarmor/federation.hpp"
#include "fedarmor/metrics.hpp"
#include "fedarmor/nn.hpp"
#include "fedarmor/privacy.hpp"
#include "fedarmor/rng.hpp"

namespace fedarmor {

enum class Defense { kNone, kAdversarialTraining, kDistributedNoise };

inline std::string_view to_string(Defense d) {
  switch (d) {
    case Defense::kNone: return "none";
    case Defense::kAdversarialTraining: return "adversarial-training";
    case Defense::kDistributedNoise: return "distributed-noise";
  }
  return "none";
}

inline std::optional<Defense> parse_defense(std::string_view s) {
  if (s == "none") return Defense::kNone;
  if (s == "adversarial-training") return Defense::kAdversarialTraining;
  if (s == "distributed-noise") return Defense::kDistributedNoise;
  return std::nullopt;
}

struct DataConfig {
  std::optional<std::string> csv_path;
  SynthSpec synth;
  double skew = 0.5;
  double test_fraction = 0.2;
  double server_fraction = 0.2;
  bool normalize = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct PrivacyConfig {
  bool enabled = false;  // uplink clipping and noise
  double epsilon = 30.0;
  double delta = 1e-5;
  double clip_bound = 5.0;
  std::size_t exposures = 1;
  std::optional<std::size_t> min_dataset_size;  // smallest client set if unset
  std::optional<double> noise_multiplier;       // sqrt(2 ln(1.25/delta)) if unset
  std::optional<double> downlink_sensitivity;   // uplink sensitivity if unset
  std::optional<double> sigma_down = 0.15;      // calibrated when unset

  friend bool operator==(const PrivacyConfig&, const PrivacyConfig&) = default;
};

struct AdaptationConfig {
  AttackSpec attack{AttackMethod::kFgsm, 0.05, 0.01, 1, 0.05, -10.0, 10.0};
  TrainOptions train{4, 0.05, 16};
  std::size_t passes = 1;
  bool every_round = false;

  friend bool operator==(const AdaptationConfig&, const AdaptationConfig&) = default;
};

struct ExperimentConfig {
  FederationConfig federation;
  bool seed_explicit = false;  // seed came from the config file itself
  std::vector<std::size_t> hidden{32, 16};
  PrivacyConfig privacy;
  AttackSpec attack;  // evaluation attack
  AdaptationConfig adaptation;
  Defense defense = Defense::kDistributedNoise;
  DataConfig data;
  std::string output = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Resolved channel parameters of one experiment.
struct ChannelPlan {
  PrivacySpec privacy;
  UplinkPolicy uplink;
  double sigma_down = 0.0;
};

inline ChannelPlan plan_channels(const ExperimentConfig& cfg,
                                 std::size_t smallest_client) {
  const PrivacyConfig& pc = cfg.privacy;
  ChannelPlan plan;
  plan.privacy.epsilon_dp = pc.epsilon;
  plan.privacy.delta_dp = pc.delta;
  plan.privacy.clip_bound = pc.clip_bound;
  plan.privacy.exposures = pc.exposures;
  plan.privacy.min_dataset_size = pc.min_dataset_size.value_or(smallest_client);
  plan.privacy.noise_multiplier =
      pc.noise_multiplier.value_or(default_noise_multiplier(pc.delta));

  plan.uplink.enabled = pc.enabled;
  plan.uplink.clip_bound = pc.clip_bound;
  plan.uplink.sigma = pc.enabled ? plan.privacy.sigma_up() : 0.0;

  if (cfg.defense == Defense::kDistributedNoise) {
    if (pc.sigma_down) {
      plan.sigma_down = *pc.sigma_down;
    } else {
      const double sens =
          pc.downlink_sensitivity.value_or(plan.privacy.uplink_sensitivity());
      plan.sigma_down = noise_scale(plan.privacy.noise_multiplier,
                                    plan.privacy.exposures, sens, pc.epsilon);
    }
  }
  return plan;
}

// The three disjoint splits every experiment works on.
struct ExperimentData {
  std::vector<Dataset> clients;
  Dataset server;
  Dataset test;
};

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.federation.master_seed;
  Dataset all;
  if (cfg.data.csv_path) {
    all = load_csv(*cfg.data.csv_path, cfg.data.synth.num_classes);
  } else {
    RngStream rng(StreamId{seed, StreamKind::kSynthetic, 0, 0});
    all = gen_synthetic(cfg.data.synth, rng);
  }
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream split_rng(StreamId{seed, StreamKind::kSplit, 0, 0});
  split_rng.shuffle(order);

  const auto n = static_cast<double>(all.size());
  const auto n_test = static_cast<std::size_t>(std::floor(cfg.data.test_fraction * n));
  const auto n_server = static_cast<std::size_t>(std::floor(cfg.data.server_fraction * n));
  if (n_test == 0) throw DomainError("test split is empty");
  if (n_test + n_server >= all.size()) throw DomainError("no rows left for clients");

  auto slice = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(from),
                                 order.begin() + static_cast<std::ptrdiff_t>(to));
    std::sort(idx.begin(), idx.end());
    return all.subset(idx);
  };
  ExperimentData out;
  out.test = slice(0, n_test);
  out.server = slice(n_test, n_test + n_server);
  Dataset pool = slice(n_test + n_server, all.size());

  if (cfg.data.normalize) {
    const Moments m = feature_moments(pool);
    std::vector<double> std = m.std;
    for (double& s : std)
      if (s == 0.0) s = 1.0;
    pool = normalize(pool, m.mean, std);
    out.server = normalize(out.server, m.mean, std);
    out.test = normalize(out.test, m.mean, std);
  }
  out.clients = partition_non_iid(
      pool, PartitionSpec{cfg.federation.num_clients, cfg.data.skew, seed});
  return out;
}

inline MetricsReport run_experiment(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  FederationConfig& fed = cfg.federation;
  const std::uint64_t seed = fed.master_seed;

  ExperimentData data = prepare_data(cfg);
  std::vector<std::size_t> sizes;
  for (const Dataset& d : data.clients) sizes.push_back(d.size());
  if (fed.client_weights.empty()) fed.client_weights = size_weights(sizes);
  const ChannelPlan plan =
      plan_channels(cfg, *std::min_element(sizes.begin(), sizes.end()));

  std::vector<std::size_t> widths{data.test.dim()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(data.test.num_classes());
  RngStream init_rng(StreamId{seed, StreamKind::kInit, 0, 0});
  FederationState state =
      initial_state(init_model(widths, init_rng), fed.num_clients, data.server);

  const bool adapt = cfg.defense != Defense::kNone;
  auto adapt_options = [&](std::size_t round) {
    return AdaptationOptions{cfg.adaptation.train, cfg.adaptation.passes,
                             StreamId{seed, StreamKind::kAdaptSample, round, 0},
                             StreamId{seed, StreamKind::kAdaptTrain, round, 0}};
  };

  while (state.round < fed.rounds) {
    state = run_round(state, fed, plan.uplink, data.clients);
    if (adapt && cfg.adaptation.every_round && state.round < fed.rounds) {
      state.global = server_adapt(state.global, state.server_dataset,
                                  cfg.adaptation.attack, fed.adaptation_fraction,
                                  adapt_options(state.round));
    }
  }
  if (adapt) {
    state.global = server_adapt(state.global, state.server_dataset,
                                cfg.adaptation.attack, fed.adaptation_fraction,
                                adapt_options(state.round));
  }

  const std::vector<ModelParams> received =
      broadcast_noisy(state.global, plan.sigma_down, fed.num_clients, seed, state.round);

  MetricsReport report;
  report.defense = std::string(to_string(cfg.defense));
  report.epsilon = cfg.attack.method == AttackMethod::kFgsm ? cfg.attack.epsilon
                                                            : cfg.attack.eta;
  report.fraction = fed.adaptation_fraction;
  report.dp = cfg.privacy.enabled;
  report.seed = seed;
  report.adversary = fed.adversary_client;
  for (const ModelParams& m : received)
    report.clean_accuracy.push_back(clean_accuracy(m, data.test));
  report.transfer_matrix = transfer_matrix(received, data.test, cfg.attack);
  const auto& row = report.transfer_matrix[fed.adversary_client];
  report.asr_self = row[fed.adversary_client];
  report.asr_avg = mean_excluding(row, fed.adversary_client);
  return report;
}

}  // namespace fedarmor
