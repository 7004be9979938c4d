#pragma once

// Synthetic Gaussian-blob datasets, CSV IO, normalization and label-skewed
// (non-IID) partitioning across clients.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedarmor/error.hpp"
#include "fedarmor/nn.hpp"
#include "fedarmor/rng.hpp"

namespace fedarmor {

struct SynthSpec {
  std::size_t num_classes = 2;
  std::size_t dim = 16;
  std::size_t n = 600;
  double class_separation = 0.0405;
  double noise_std = 0.09;
  // The first `robust_dims` coordinates use `robust_separation` instead of
  // `class_separation`.
  std::size_t robust_dims = 2;
  double robust_separation = 0.243;

  void validate() const {
    if (num_classes < 2) throw DomainError("num_classes must be >= 2");
    if (dim == 0) throw DomainError("dim must be positive");
    if (n < num_classes) throw DomainError("n must be >= num_classes");
    if (!(class_separation > 0.0)) throw DomainError("class_separation must be positive");
    if (!(noise_std > 0.0)) throw DomainError("noise_std must be positive");
    if (robust_dims > dim) throw DomainError("robust_dims exceeds dim");
    if (robust_dims > 0 && !(robust_separation > 0.0))
      throw DomainError("robust_separation must be positive");
    if (dim < 63 && (std::uint64_t{1} << dim) < num_classes)
      throw DomainError("dim too small for distinct class vertices");
  }

  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

// Class centers: hypercube vertices (+-1 per coordinate) scaled by half the
// per-coordinate separation. Class 1 is the antipode of class 0; further
// classes are random distinct vertices.
inline std::vector<std::vector<double>> class_centers(const SynthSpec& spec,
                                                      RngStream& rng) {
  std::vector<std::vector<int>> vertices;
  auto random_vertex = [&] {
    std::vector<int> v(spec.dim);
    for (int& s : v) s = (rng.next_u64() >> 63) != 0 ? 1 : -1;
    return v;
  };
  vertices.push_back(random_vertex());
  std::vector<int> anti = vertices.front();
  for (int& s : anti) s = -s;
  vertices.push_back(anti);
  while (vertices.size() < spec.num_classes) {
    auto v = random_vertex();
    if (std::find(vertices.begin(), vertices.end(), v) == vertices.end())
      vertices.push_back(std::move(v));
  }
  std::vector<std::vector<double>> centers;
  for (const auto& v : vertices) {
    std::vector<double> c(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) {
      const double sep =
          i < spec.robust_dims ? spec.robust_separation : spec.class_separation;
      c[i] = 0.5 * sep * v[i];
    }
    centers.push_back(std::move(c));
  }
  return centers;
}

// Labels cycle through the classes (balanced to within one), then the rows
// are shuffled.
inline Dataset gen_synthetic(const SynthSpec& spec, RngStream& rng) {
  spec.validate();
  const auto centers = class_centers(spec, rng);
  std::vector<std::size_t> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) labels[i] = i % spec.num_classes;
  rng.shuffle(labels);
  Tensor feats({spec.n, spec.dim});
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto row = feats.row(i);
    const auto& c = centers[labels[i]];
    for (std::size_t j = 0; j < spec.dim; ++j)
      row[j] = c[j] + spec.noise_std * rng.normal();
  }
  return Dataset(std::move(feats), std::move(labels), spec.num_classes);
}

struct PartitionSpec {
  std::size_t num_parts = 3;
  double skew = 0.5;  // 0 = near-IID, 1 = each part draws only its own class
  std::uint64_t seed = 0;
};

// Index sets of a label-skewed partition. Part k prefers class k mod C; its
// class prior is (1 - skew) * uniform + skew * onehot. The examples of each
// class are split across parts in proportion to the parts' priors for that
// class (largest-remainder quotas), and the seeded shuffle decides which
// examples land where.
inline std::vector<std::vector<std::size_t>> partition_indices(
    std::span<const std::size_t> labels, std::size_t num_classes,
    const PartitionSpec& spec) {
  const std::size_t n = labels.size();
  if (spec.num_parts == 0) throw DomainError("num_parts must be positive");
  if (spec.num_parts > n)
    throw DomainError("num_parts " + std::to_string(spec.num_parts) +
                      " exceeds dataset size " + std::to_string(n));
  if (!(spec.skew >= 0.0 && spec.skew <= 1.0))
    throw DomainError("skew must lie in [0, 1]");

  RngStream rng(StreamId{spec.seed, StreamKind::kPartition, 0, 0});
  const double uniform = 1.0 / static_cast<double>(num_classes);
  auto prior = [&](std::size_t part, std::size_t label) {
    const double onehot = (part % num_classes) == label ? 1.0 : 0.0;
    return (1.0 - spec.skew) * uniform + spec.skew * onehot;
  };

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i : order) {
    if (labels[i] >= num_classes) throw DomainError("label out of range");
    by_class[labels[i]].push_back(i);
  }

  std::vector<std::vector<std::size_t>> parts(spec.num_parts);
  std::vector<double> share(spec.num_parts);
  std::vector<std::size_t> quota(spec.num_parts);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& members = by_class[c];
    double total = 0.0;
    for (std::size_t k = 0; k < spec.num_parts; ++k) total += prior(k, c);
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < spec.num_parts; ++k) {
      // No part prefers this class: split it evenly.
      const double w = total > 0.0 ? prior(k, c) / total
                                   : 1.0 / static_cast<double>(spec.num_parts);
      share[k] = w * static_cast<double>(members.size());
      quota[k] = static_cast<std::size_t>(std::floor(share[k]));
      assigned += quota[k];
    }
    while (assigned < members.size()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < spec.num_parts; ++k)
        if (share[k] - quota[k] > share[best] - quota[best]) best = k;
      ++quota[best];
      share[best] = static_cast<double>(quota[best]);  // remainder used up
      ++assigned;
    }
    std::size_t next = 0;
    for (std::size_t k = 0; k < spec.num_parts; ++k)
      for (std::size_t q = 0; q < quota[k]; ++q) parts[k].push_back(members[next++]);
  }

  // Every part must be nonempty: move the last index of the largest part.
  for (auto& part : parts) {
    if (!part.empty()) continue;
    auto largest = std::max_element(
        parts.begin(), parts.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    part.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& part : parts) std::sort(part.begin(), part.end());
  return parts;
}

inline std::vector<Dataset> partition_non_iid(const Dataset& data,
                                              const PartitionSpec& spec) {
  std::vector<Dataset> out;
  for (const auto& idx : partition_indices(data.labels(), data.num_classes(), spec))
    out.push_back(data.subset(idx));
  return out;
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> std;
};

// Per-coordinate mean and population standard deviation.
inline Moments feature_moments(const Dataset& data) {
  if (data.empty()) throw DomainError("cannot compute moments of an empty dataset");
  const std::size_t d = data.dim();
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += data.x(i)[j];
  for (double& v : m.mean) v /= n;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = data.x(i)[j] - m.mean[j];
      m.std[j] += c * c;
    }
  for (double& v : m.std) v = std::sqrt(v / n);
  return m;
}

inline Dataset normalize(const Dataset& data, std::span<const double> mean,
                         std::span<const double> std) {
  if (mean.size() != data.dim() || std.size() != data.dim())
    throw ShapeError("normalization moments do not match feature dimension");
  for (double s : std)
    if (!(s > 0.0)) throw DomainError("normalization std must be positive");
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.features().row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / std[j];
  }
  return out;
}

inline Dataset denormalize(const Dataset& data, std::span<const double> mean,
                           std::span<const double> std) {
  if (mean.size() != data.dim() || std.size() != data.dim())
    throw ShapeError("normalization moments do not match feature dimension");
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.features().row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] * std[j] + mean[j];
  }
  return out;
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

// Format: header `label,f0,...,f{d-1}`, one example per line. The class count
// is the largest label seen plus one unless `num_classes` is given.
inline Dataset load_csv(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const auto header = detail::split_commas(line);
  if (header.size() < 2 || header.front() != "label")
    throw ParseError("header must be label,f0,...", 1);
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j - 1))
      throw ParseError("unexpected header column '" + std::string(header[j]) + "'", 1);
  const std::size_t d = header.size() - 1;

  std::vector<double> feats;
  std::vector<std::size_t> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " columns, got " +
                           std::to_string(cells.size()),
                       lineno);
    std::size_t label = 0;
    auto lr = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), label);
    if (lr.ec != std::errc() || lr.ptr != cells[0].data() + cells[0].size())
      throw ParseError("label '" + std::string(cells[0]) + "' is not a class index", lineno);
    labels.push_back(label);
    for (std::size_t j = 1; j <= d; ++j) {
      double v = 0.0;
      auto r = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
      if (r.ec != std::errc() || r.ptr != cells[j].data() + cells[j].size() ||
          !std::isfinite(v))
        throw ParseError("cell '" + std::string(cells[j]) + "' is not a number", lineno);
      feats.push_back(v);
    }
  }
  std::size_t classes = num_classes;
  if (classes == 0) {
    for (std::size_t y : labels) classes = std::max(classes, y + 1);
    classes = std::max<std::size_t>(classes, 1);
  }
  const std::size_t n = labels.size();
  return Dataset(Tensor({n, d}, std::move(feats)), std::move(labels), classes);
}

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "label";
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.y(i);
    for (double v : data.x(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace fedarmor
