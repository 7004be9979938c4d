#pragma once

// JSON experiment configs: parsing with strict key checking, canonical
// serialization and a content digest.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedarmor/error.hpp"
#include "fedarmor/experiment.hpp"

namespace fedarmor {

using Json = nlohmann::json;

namespace detail {

// Reads the members of one JSON object and remembers which keys were used so
// leftovers can be reported.
class Section {
 public:
  Section(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const Json* find(const std::string& key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  Section child(const std::string& key) {
    static const Json empty = Json::object();
    const Json* j = find(key);
    return Section(j ? *j : empty, key_path(key));
  }

  void read(const std::string& key, double& out) {
    if (const Json* j = find(key)) {
      if (!j->is_number()) throw ConfigError(key_path(key), "expected a number");
      out = j->get<double>();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (const Json* j = find(key)) out = as_count(*j, key);
  }

  void read(const std::string& key, bool& out) {
    if (const Json* j = find(key)) {
      if (!j->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
      out = j->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const Json* j = find(key)) {
      if (!j->is_string()) throw ConfigError(key_path(key), "expected a string");
      out = j->get<std::string>();
    }
  }

  // null clears the value.
  void read(const std::string& key, std::optional<double>& out) {
    if (const Json* j = find(key)) {
      if (j->is_null()) {
        out.reset();
      } else if (j->is_number()) {
        out = j->get<double>();
      } else {
        throw ConfigError(key_path(key), "expected a number or null");
      }
    }
  }

  void read(const std::string& key, std::optional<std::size_t>& out) {
    if (const Json* j = find(key)) {
      if (j->is_null()) out.reset();
      else out = as_count(*j, key);
    }
  }

  void read(const std::string& key, std::optional<std::string>& out) {
    if (const Json* j = find(key)) {
      if (j->is_null()) out.reset();
      else if (j->is_string()) out = j->get<std::string>();
      else throw ConfigError(key_path(key), "expected a string or null");
    }
  }

  void read(const std::string& key, std::vector<double>& out) {
    if (const Json* j = find(key)) {
      if (!j->is_array()) throw ConfigError(key_path(key), "expected an array of numbers");
      out.clear();
      for (const Json& v : *j) {
        if (!v.is_number()) throw ConfigError(key_path(key), "expected an array of numbers");
        out.push_back(v.get<double>());
      }
    }
  }

  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (const Json* j = find(key)) {
      if (!j->is_array()) throw ConfigError(key_path(key), "expected an array of integers");
      out.clear();
      for (const Json& v : *j) out.push_back(as_count(v, key));
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
  }

 private:
  std::uint64_t as_count(const Json& j, const std::string& key) const {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() &&
                                   j.get<std::int64_t>() < 0))
      throw ConfigError(key_path(key), "expected a non-negative integer");
    return j.get<std::uint64_t>();
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline AttackMethod parse_method(const std::string& s, const std::string& key) {
  if (s == "fgsm") return AttackMethod::kFgsm;
  if (s == "pgd") return AttackMethod::kPgd;
  throw ConfigError(key, "unknown attack method '" + s + "' (fgsm or pgd)");
}

inline void read_attack(Section sec, AttackSpec& a) {
  std::string method(to_string(a.method));
  sec.read("method", method);
  a.method = parse_method(method, sec.key_path("method"));
  sec.read("epsilon", a.epsilon);
  sec.read("alpha", a.alpha);
  sec.read("steps", a.steps);
  sec.read("eta", a.eta);
  sec.read("clamp_min", a.clamp_lo);
  sec.read("clamp_max", a.clamp_hi);
  sec.finish();
}

inline Json attack_json(const AttackSpec& a) {
  return Json{{"method", std::string(to_string(a.method))},
              {"epsilon", a.epsilon},
              {"alpha", a.alpha},
              {"steps", a.steps},
              {"eta", a.eta},
              {"clamp_min", a.clamp_lo},
              {"clamp_max", a.clamp_hi}};
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

inline void validate_attack(const AttackSpec& a, const std::string& prefix) {
  try {
    a.validate();
  } catch (const DomainError& e) {
    throw ConfigError(prefix, e.what());
  }
}

}  // namespace detail

// Cross-field checks; the thrown ConfigError names the offending key.
inline void validate_config(const ExperimentConfig& c) {
  using detail::require;
  const FederationConfig& f = c.federation;
  require(f.num_clients > 0, "federation.num_clients", "must be positive");
  require(f.rounds > 0, "federation.rounds", "must be positive");
  require(f.local_epochs > 0, "federation.local_epochs", "must be positive");
  require(f.lr > 0.0, "federation.lr", "must be positive");
  require(f.batch_size > 0, "federation.batch_size", "must be positive");
  require(f.adaptation_fraction >= 0.0 && f.adaptation_fraction <= 1.0,
          "federation.adaptation_fraction", "must lie in [0, 1]");
  require(f.adversary_client < f.num_clients, "federation.adversary_client",
          "must be less than num_clients (" + std::to_string(f.num_clients) + ")");
  if (!f.client_weights.empty()) {
    try {
      check_weights(f.client_weights, f.num_clients);
    } catch (const DomainError& e) {
      throw ConfigError("federation.client_weights", e.what());
    }
  }

  for (std::size_t h : c.hidden) require(h > 0, "model.hidden", "widths must be positive");

  const PrivacyConfig& p = c.privacy;
  require(p.epsilon > 0.0, "privacy.epsilon", "must be positive");
  require(p.delta > 0.0 && p.delta < 1.0, "privacy.delta", "must lie in (0, 1)");
  require(p.clip_bound > 0.0, "privacy.clip_bound", "must be positive");
  require(p.exposures > 0, "privacy.exposures", "must be positive");
  require(!p.min_dataset_size || *p.min_dataset_size > 0, "privacy.min_dataset_size",
          "must be positive");
  require(!p.noise_multiplier || *p.noise_multiplier >= 0.0, "privacy.noise_multiplier",
          "must be >= 0");
  require(!p.downlink_sensitivity || *p.downlink_sensitivity >= 0.0,
          "privacy.downlink_sensitivity", "must be >= 0");
  require(!p.sigma_down || *p.sigma_down >= 0.0, "privacy.sigma_down", "must be >= 0");

  detail::validate_attack(c.attack, "attack");
  detail::validate_attack(c.adaptation.attack, "adaptation.attack");
  require(c.adaptation.train.epochs > 0, "adaptation.epochs", "must be positive");
  require(c.adaptation.train.lr > 0.0, "adaptation.lr", "must be positive");
  require(c.adaptation.train.batch_size > 0, "adaptation.batch_size", "must be positive");
  require(c.adaptation.passes > 0, "adaptation.passes", "must be positive");

  const DataConfig& d = c.data;
  require(d.skew >= 0.0 && d.skew <= 1.0, "data.skew", "must lie in [0, 1]");
  require(d.test_fraction > 0.0 && d.test_fraction < 1.0, "data.test_fraction",
          "must lie in (0, 1)");
  require(d.server_fraction >= 0.0 && d.server_fraction < 1.0, "data.server_fraction",
          "must lie in [0, 1)");
  require(d.test_fraction + d.server_fraction < 1.0, "data.server_fraction",
          "test_fraction + server_fraction must be < 1");
  require(c.defense == Defense::kNone || d.server_fraction > 0.0 ||
              f.adaptation_fraction == 0.0,
          "data.server_fraction", "server adaptation needs a nonempty server split");
  if (!d.csv_path) {
    try {
      d.synth.validate();
    } catch (const DomainError& e) {
      throw ConfigError("data", e.what());
    }
  }
  require(c.output.size() > 0, "output", "must not be empty");
}

inline ExperimentConfig config_from_json(const Json& root) {
  ExperimentConfig c;
  detail::Section top(root, "");

  if (const Json* s = top.find("seed")) {
    if (!s->is_number_unsigned() &&
        !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
      throw ConfigError("seed", "expected a non-negative 64-bit integer");
    c.federation.master_seed = s->get<std::uint64_t>();
    c.seed_explicit = true;
  }
  std::string defense(to_string(c.defense));
  top.read("defense", defense);
  if (auto d = parse_defense(defense)) c.defense = *d;
  else
    throw ConfigError("defense", "unknown defense '" + defense +
                                     "' (none, adversarial-training, distributed-noise)");
  top.read("output", c.output);

  {
    auto sec = top.child("model");
    sec.read("hidden", c.hidden);
    sec.finish();
  }
  {
    auto sec = top.child("federation");
    FederationConfig& f = c.federation;
    sec.read("num_clients", f.num_clients);
    sec.read("client_weights", f.client_weights);
    sec.read("rounds", f.rounds);
    sec.read("local_epochs", f.local_epochs);
    sec.read("lr", f.lr);
    sec.read("batch_size", f.batch_size);
    sec.read("adaptation_fraction", f.adaptation_fraction);
    sec.read("adversary_client", f.adversary_client);
    sec.finish();
  }
  {
    auto sec = top.child("privacy");
    PrivacyConfig& p = c.privacy;
    sec.read("enabled", p.enabled);
    sec.read("epsilon", p.epsilon);
    sec.read("delta", p.delta);
    sec.read("clip_bound", p.clip_bound);
    sec.read("exposures", p.exposures);
    sec.read("min_dataset_size", p.min_dataset_size);
    sec.read("noise_multiplier", p.noise_multiplier);
    sec.read("downlink_sensitivity", p.downlink_sensitivity);
    sec.read("sigma_down", p.sigma_down);
    sec.finish();
  }
  detail::read_attack(top.child("attack"), c.attack);
  {
    auto sec = top.child("adaptation");
    AdaptationConfig& a = c.adaptation;
    detail::read_attack(sec.child("attack"), a.attack);
    sec.read("epochs", a.train.epochs);
    sec.read("lr", a.train.lr);
    sec.read("batch_size", a.train.batch_size);
    sec.read("passes", a.passes);
    sec.read("every_round", a.every_round);
    sec.finish();
  }
  {
    auto sec = top.child("data");
    DataConfig& d = c.data;
    sec.read("csv", d.csv_path);
    sec.read("num_classes", d.synth.num_classes);
    sec.read("dim", d.synth.dim);
    sec.read("n", d.synth.n);
    sec.read("class_separation", d.synth.class_separation);
    sec.read("noise_std", d.synth.noise_std);
    sec.read("robust_dims", d.synth.robust_dims);
    sec.read("robust_separation", d.synth.robust_separation);
    sec.read("skew", d.skew);
    sec.read("test_fraction", d.test_fraction);
    sec.read("server_fraction", d.server_fraction);
    sec.read("normalize", d.normalize);
    sec.finish();
  }
  top.finish();
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<file>", e.what());
  }
  return config_from_json(root);
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Every field, defaults included. The seed is written only when the config
// carried one itself.
inline Json config_to_json(const ExperimentConfig& c) {
  const FederationConfig& f = c.federation;
  const PrivacyConfig& p = c.privacy;
  const DataConfig& d = c.data;
  Json j;
  if (c.seed_explicit) j["seed"] = f.master_seed;
  j["defense"] = std::string(to_string(c.defense));
  j["output"] = c.output;
  j["model"] = Json{{"hidden", c.hidden}};
  j["federation"] = Json{{"num_clients", f.num_clients},
                         {"client_weights", f.client_weights},
                         {"rounds", f.rounds},
                         {"local_epochs", f.local_epochs},
                         {"lr", f.lr},
                         {"batch_size", f.batch_size},
                         {"adaptation_fraction", f.adaptation_fraction},
                         {"adversary_client", f.adversary_client}};
  j["privacy"] = Json{{"enabled", p.enabled},
                      {"epsilon", p.epsilon},
                      {"delta", p.delta},
                      {"clip_bound", p.clip_bound},
                      {"exposures", p.exposures},
                      {"min_dataset_size", detail::optional_json(p.min_dataset_size)},
                      {"noise_multiplier", detail::optional_json(p.noise_multiplier)},
                      {"downlink_sensitivity", detail::optional_json(p.downlink_sensitivity)},
                      {"sigma_down", detail::optional_json(p.sigma_down)}};
  j["attack"] = detail::attack_json(c.attack);
  j["adaptation"] = Json{{"attack", detail::attack_json(c.adaptation.attack)},
                         {"epochs", c.adaptation.train.epochs},
                         {"lr", c.adaptation.train.lr},
                         {"batch_size", c.adaptation.train.batch_size},
                         {"passes", c.adaptation.passes},
                         {"every_round", c.adaptation.every_round}};
  j["data"] = Json{{"csv", detail::optional_json(d.csv_path)},
                   {"num_classes", d.synth.num_classes},
                   {"dim", d.synth.dim},
                   {"n", d.synth.n},
                   {"class_separation", d.synth.class_separation},
                   {"noise_std", d.synth.noise_std},
                   {"robust_dims", d.synth.robust_dims},
                   {"robust_separation", d.synth.robust_separation},
                   {"skew", d.skew},
                   {"test_fraction", d.test_fraction},
                   {"server_fraction", d.server_fraction},
                   {"normalize", d.normalize}};
  return j;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hex FNV-1a of the canonical JSON with the seed included. The output
// directory is not part of the digest.
inline std::string config_digest(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  copy.seed_explicit = true;
  copy.output.clear();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(copy).dump())));
  return buf;
}

// --seed beats the config file, which beats FEDARMOR_SEED; 0 otherwise.
inline std::uint64_t resolve_seed(const ExperimentConfig& c,
                                  std::optional<std::uint64_t> cli_seed,
                                  const char* env_value) {
  if (cli_seed) return *cli_seed;
  if (c.seed_explicit) return c.federation.master_seed;
  if (env_value && *env_value) {
    std::uint64_t v = 0;
    const std::string_view s(env_value);
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw ConfigError("FEDARMOR_SEED", "not an unsigned 64-bit integer: " + std::string(s));
    return v;
  }
  return 0;
}

}  // namespace fedarmor
