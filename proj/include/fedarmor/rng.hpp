#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace fedarmor {

// Purpose tag folded into every derived stream, so that e.g. the uplink noise
// of client 2 in round 5 never shares draws with its minibatch shuffling.
enum class StreamKind : std::uint32_t {
  kSynthetic = 1,
  kSplit,
  kPartition,
  kInit,
  kClientTrain,
  kUplink,
  kDownlink,
  kAdaptSample,
  kAdaptTrain,
  kTest,
};

// Identifies one independent random stream: (master seed, purpose, round,
// client). Two equal ids always produce the same sequence.
struct StreamId {
  std::uint64_t master_seed = 0;
  StreamKind kind = StreamKind::kTest;
  std::uint64_t round = 0;
  std::uint64_t client = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

// Deterministic random stream. The engine (mt19937_64) and seed_seq are fully
// specified by the standard; the uniform and normal transforms are written out
// here because the standard distributions are implementation defined.
class RngStream {
 public:
  explicit RngStream(const StreamId& id) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(id.master_seed), hi(id.master_seed),
                      static_cast<std::uint32_t>(id.kind),
                      lo(id.round),  hi(id.round),
                      lo(id.client), hi(id.client)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % bound;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace fedarmor
