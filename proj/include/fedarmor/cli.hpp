#pragma once

// Command-line front end: `run` and `sweep` subcommands, report files.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedarmor/config.hpp"
#include "fedarmor/data.hpp"
#include "fedarmor/experiment.hpp"
#include "fedarmor/metrics.hpp"

namespace fedarmor {

inline constexpr std::string_view kCsvHeader =
    "defense,epsilon,fraction,dp,seed,clean_acc_mean,asr_self,asr_avg";

inline std::string csv_row(const MetricsReport& r) {
  std::string s = r.defense;
  s += ',' + format_double(r.epsilon);
  s += ',' + format_double(r.fraction);
  s += r.dp ? ",1" : ",0";
  s += ',' + std::to_string(r.seed);
  s += ',' + format_double(r.clean_accuracy_mean());
  s += ',' + format_double(r.asr_self);
  s += ',' + format_double(r.asr_avg);
  return s;
}

inline Json report_to_json(const MetricsReport& r) {
  return Json{{"defense", r.defense},
              {"epsilon", r.epsilon},
              {"fraction", r.fraction},
              {"dp", r.dp},
              {"seed", r.seed},
              {"config_digest", r.config_digest},
              {"adversary", r.adversary},
              {"clean_accuracy", r.clean_accuracy},
              {"clean_acc_mean", r.clean_accuracy_mean()},
              {"asr_self", r.asr_self},
              {"asr_avg", r.asr_avg},
              {"transfer_matrix", r.transfer_matrix},
              {"attack_accuracy", detail::optional_json(r.attack_accuracy)}};
}

inline Json model_to_json(const ModelParams& m) {
  return Json{{"widths", m.widths()}, {"parameters", m.flatten()}};
}

inline ModelParams model_from_json(const Json& j) {
  const auto widths = j.at("widths").get<std::vector<std::size_t>>();
  const auto flat = j.at("parameters").get<std::vector<double>>();
  return ModelParams::unflatten(ModelParams::zeros(widths), flat);
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("failed writing " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace detail

// Runs one experiment and stamps the digest on the report.
inline MetricsReport run_config(const ExperimentConfig& cfg) {
  MetricsReport r = run_experiment(cfg);
  r.config_digest = config_digest(cfg);
  return r;
}

// Writes report.json and report.csv into `cfg.output`.
inline MetricsReport cmd_run(const ExperimentConfig& cfg) {
  const MetricsReport r = run_config(cfg);
  const std::filesystem::path dir(cfg.output);
  detail::ensure_dir(dir);
  Json j = report_to_json(r);
  j["config"] = config_to_json(cfg);
  detail::write_file(dir / "report.json", j.dump(2) + "\n");
  detail::write_file(dir / "report.csv",
                     std::string(kCsvHeader) + "\n" + csv_row(r) + "\n");
  return r;
}

enum class SweepAxis { kEpsilon, kFraction, kDp, kDefense };

inline std::optional<SweepAxis> parse_axis(std::string_view s) {
  if (s == "epsilon") return SweepAxis::kEpsilon;
  if (s == "fraction") return SweepAxis::kFraction;
  if (s == "dp") return SweepAxis::kDp;
  if (s == "defense") return SweepAxis::kDefense;
  return std::nullopt;
}

// Named value lists accepted by --values.
inline std::optional<std::string> sweep_preset(std::string_view name) {
  if (name == "fine") return "0.005,0.012,0.017,0.05";
  if (name == "coarse") return "0.01,0.03,0.05,0.07";
  if (name == "fractions") return "0.1,0.2,0.3,0.5,0.7,1.0";
  return std::nullopt;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto cell : detail::split_commas(text)) {
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    if (cell.empty()) throw ConfigError("--values", "empty entry in '" + text + "'");
    out.emplace_back(cell);
  }
  return out;
}

// Copy of `base` with one axis set to `value`. For the epsilon axis the FGSM
// step and the PGD radius both take the value, and the PGD step size is capped
// at it.
inline ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis,
                                   const std::string& value) {
  ExperimentConfig c = base;
  auto number = [&](const char* key) {
    double v = 0.0;
    auto r = std::from_chars(value.data(), value.data() + value.size(), v);
    if (r.ec != std::errc() || r.ptr != value.data() + value.size())
      throw ConfigError(key, "'" + value + "' is not a number");
    return v;
  };
  switch (axis) {
    case SweepAxis::kEpsilon: {
      const double v = number("attack.epsilon");
      c.attack.epsilon = v;
      c.attack.eta = v;
      if (v > 0.0) c.attack.alpha = std::min(c.attack.alpha, v);
      // PGD needs eta > 0; a zero budget is only meaningful for FGSM.
      if (v == 0.0 && c.attack.method == AttackMethod::kPgd)
        throw ConfigError("attack.eta", "PGD radius must be positive");
      break;
    }
    case SweepAxis::kFraction:
      c.federation.adaptation_fraction = number("federation.adaptation_fraction");
      break;
    case SweepAxis::kDp:
      if (value == "on" || value == "true" || value == "1") c.privacy.enabled = true;
      else if (value == "off" || value == "false" || value == "0") c.privacy.enabled = false;
      else throw ConfigError("privacy.enabled", "'" + value + "' is not on/off");
      break;
    case SweepAxis::kDefense:
      if (auto d = parse_defense(value)) c.defense = *d;
      else throw ConfigError("defense", "unknown defense '" + value + "'");
      break;
  }
  validate_config(c);
  return c;
}

// One report per (value, seed); every value sees the same seed schedule.
inline std::vector<MetricsReport> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                            const std::vector<std::string>& values,
                                            std::size_t seeds = 1) {
  std::vector<ExperimentConfig> points;
  for (const auto& v : values) points.push_back(apply_axis(base, axis, v));
  std::vector<MetricsReport> out;
  for (const auto& p : points)
    for (std::size_t s = 0; s < seeds; ++s) {
      ExperimentConfig c = p;
      c.federation.master_seed = base.federation.master_seed + s;
      out.push_back(run_config(c));
    }
  return out;
}

inline std::vector<MetricsReport> cmd_sweep(const ExperimentConfig& base, SweepAxis axis,
                                            const std::vector<std::string>& values,
                                            std::size_t seeds = 1) {
  const auto reports = run_sweep(base, axis, values, seeds);
  const std::filesystem::path dir(base.output);
  detail::ensure_dir(dir);
  std::string csv(kCsvHeader);
  csv += '\n';
  Json all = Json::array();
  for (const auto& r : reports) {
    csv += csv_row(r) + '\n';
    all.push_back(report_to_json(r));
  }
  detail::write_file(dir / "sweep.csv", csv);
  detail::write_file(dir / "sweep.json", all.dump(2) + "\n");
  return reports;
}

// Exit codes: 0 success, 1 config or usage error, 2 runtime error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Federated learning simulator with server-side adversarial adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string axis_name;
  std::string values_text;
  std::size_t seeds = 1;

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--seed", seed, "master seed (overrides config and FEDARMOR_SEED)");
  run->add_option("--out", out_dir, "output directory (overrides config)");

  auto* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
  sweep->add_option("--config", config_path, "JSON config file")->required();
  sweep->add_option("--axis", axis_name, "epsilon | fraction | dp | defense")->required();
  sweep->add_option("--values", values_text,
                    "comma list, or a preset: fine, coarse, fractions")
      ->required();
  sweep->add_option("--seed", seed, "first master seed");
  sweep->add_option("--seeds", seeds, "number of consecutive seeds per value")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "output directory (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  SweepAxis axis = SweepAxis::kEpsilon;
  std::vector<std::string> values;
  try {
    cfg = parse_config(config_path);
    cfg.federation.master_seed = resolve_seed(cfg, seed, std::getenv("FEDARMOR_SEED"));
    if (!out_dir.empty()) cfg.output = out_dir;
    if (*sweep) {
      auto a = parse_axis(axis_name);
      if (!a) throw ConfigError("--axis", "unknown axis '" + axis_name + "'");
      axis = *a;
      values = split_list(sweep_preset(values_text).value_or(values_text));
      for (const auto& v : values) apply_axis(cfg, axis, v);
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*run) {
      const MetricsReport r = cmd_run(cfg);
      out << kCsvHeader << '\n' << csv_row(r) << '\n';
    } else {
      const auto reports = cmd_sweep(cfg, axis, values, seeds);
      out << kCsvHeader << '\n';
      for (const auto& r : reports) out << csv_row(r) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace fedarmor
