#pragma once

// Flat `key = value` run configuration with a fixed schema. Every key has a
// default; unknown keys and malformed values raise ConfigError naming the key.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mail/augment.hpp"
#include "mail/dataset.hpp"
#include "mail/network.hpp"
#include "mail/robust.hpp"
#include "mail/synth.hpp"
#include "mail/trainer.hpp"

namespace mail {

enum class ValueKind { Bool, Uint, Real, Text, UintList };

struct ConfigKey {
  const char* key;
  ValueKind kind;
  const char* fallback;
  const char* help;
};

/// The full schema in echo order.
const std::vector<ConfigKey>& config_schema();

class RunConfig {
 public:
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment. Duplicate keys within
  /// one text are rejected.
  void parse(const std::string& text, const std::string& origin = "config");
  void load(const std::string& path);
  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void assign(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::vector<std::size_t> get_list(const std::string& key) const;
  Split get_split(const std::string& key) const;

  /// Every key with its resolved value, schema order.
  std::string echo() const;

  std::uint64_t seed() const { return get_uint("seed"); }
  SynthConfig synth() const;
  /// Network matching the dataset's modalities, channels, size and tasks.
  NetworkConfig network(const Dataset& ds) const;
  /// Preset input size with the synth modality and class counts (cost reports).
  NetworkConfig network() const;
  TrainConfig train() const;
  RobustConfig robust() const;
  bool robust_enabled() const { return get_bool("robust.enabled"); }
  AttackConfig attack() const;
  std::vector<std::size_t> attack_iters() const { return get_list("attack.iters"); }

 private:
  std::map<std::string, std::string> values_;
};

/// Parses a real number, accepting "a/b" fractions. Throws ConfigError.
double parse_real(const std::string& key, const std::string& text);

}  // namespace mail
