#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedarmor/attacks.hpp"
#include "fedarmor/error.hpp"
#include "fedarmor/nn.hpp"

namespace fedarmor {

inline std::vector<std::size_t> predictions(const ModelParams& params,
                                            const Dataset& data) {
  std::vector<std::size_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict(params, data.x(i));
  return out;
}

inline double clean_accuracy(const ModelParams& params, const Dataset& test) {
  if (test.empty()) throw DomainError("clean accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (predict(params, test.x(i)) == test.y(i)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// Fraction of positions where the predicted label changed. The reference is
// the model's own pre-attack prediction, not the ground truth.
inline double asr(std::span<const std::size_t> pre_labels,
                  std::span<const std::size_t> post_labels) {
  if (pre_labels.size() != post_labels.size())
    throw DomainError("pre/post label arrays differ in length");
  if (pre_labels.empty()) throw DomainError("ASR of an empty label set");
  std::size_t flips = 0;
  for (std::size_t i = 0; i < pre_labels.size(); ++i)
    if (pre_labels[i] != post_labels[i]) ++flips;
  return static_cast<double>(flips) / static_cast<double>(pre_labels.size());
}

// ASR of one crafted set replayed against every victim model.
inline std::vector<double> transfer_row(std::span<const ModelParams> victims,
                                        const Dataset& clean,
                                        const Dataset& crafted) {
  std::vector<double> row;
  row.reserve(victims.size());
  for (const ModelParams& v : victims)
    row.push_back(asr(predictions(v, clean), predictions(v, crafted)));
  return row;
}

// Entry (r, c): ASR on model c of the attack set crafted against model r.
inline std::vector<std::vector<double>> transfer_matrix(
    std::span<const ModelParams> models, const Dataset& attack_set,
    const AttackSpec& spec) {
  std::vector<std::vector<double>> m;
  m.reserve(models.size());
  for (const ModelParams& crafter : models)
    m.push_back(transfer_row(models, attack_set, craft_set(crafter, attack_set, spec)));
  return m;
}

struct AttackEvaluation {
  double asr_self = 0.0;
  double asr_avg = 0.0;
  std::vector<double> per_victim;  // ASR on every model, adversary included
};

// Mean over the victims other than the adversary; a lone model reports its
// own ASR.
inline double mean_excluding(std::span<const double> row, std::size_t skip) {
  if (row.size() == 1) return row.front();
  double s = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c)
    if (c != skip) s += row[c];
  return s / static_cast<double>(row.size() - 1);
}

inline AttackEvaluation evaluate_attack(std::span<const ModelParams> models,
                                        std::size_t adversary,
                                        const Dataset& attack_set,
                                        const AttackSpec& spec) {
  if (adversary >= models.size())
    throw DomainError("adversary index " + std::to_string(adversary) +
                      " out of range for " + std::to_string(models.size()) +
                      " models");
  if (attack_set.empty()) throw DomainError("attack set is empty");
  const Dataset crafted = craft_set(models[adversary], attack_set, spec);
  AttackEvaluation ev;
  ev.per_victim = transfer_row(models, attack_set, crafted);
  ev.asr_self = ev.per_victim[adversary];
  ev.asr_avg = mean_excluding(ev.per_victim, adversary);
  return ev;
}

// One experiment's evaluation surface.
struct MetricsReport {
  std::string defense;
  double epsilon = 0.0;
  double fraction = 0.0;
  bool dp = false;
  std::uint64_t seed = 0;
  std::vector<double> clean_accuracy;  // per received client model
  double asr_self = 0.0;
  double asr_avg = 0.0;
  std::vector<std::vector<double>> transfer_matrix;  // row crafts, column is victim
  std::size_t adversary = 0;
  std::optional<double> attack_accuracy;  // reserved, never populated
  std::string config_digest;

  double clean_accuracy_mean() const {
    if (clean_accuracy.empty()) return 0.0;
    double s = 0.0;
    for (double v : clean_accuracy) s += v;
    return s / static_cast<double>(clean_accuracy.size());
  }
};

}  // namespace fedarmor
