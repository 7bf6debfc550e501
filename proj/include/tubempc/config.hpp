#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubempc/plant.hpp"

namespace tubempc {

/// Error in a plain-text config; carries the offending line when known.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parsed `key = value` lines. `#` starts a comment, blank lines are skipped,
/// duplicate keys are rejected.
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(std::istream& in);
  static KeyValueConfig Load(const std::string& path);

  bool has(const std::string& key) const;
  const std::string& raw(const std::string& key) const;
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  /// Throws ConfigError naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }
  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::string> entries_;
};

/// Plant section of a config: parameters plus the disturbance seed.
struct PlantConfig {
  ArmParams params = ArmParams::Default();
  std::uint64_t seed = 0;
};

/// Keys understood by plant_config_from().
const std::set<std::string>& plant_config_keys();

/// Overrides defaults with any plant keys present. Keys: link_lengths,
/// theta_lower, theta_upper, input_lower, input_upper (3 numbers each),
/// eta1, seed. Angles accept `pi` expressions like `pi/16` or `-pi/2`.
PlantConfig plant_config_from(const KeyValueConfig& cfg);

/// Parses and validates a plant-only config; unknown keys are rejected.
PlantConfig load_plant_config(std::istream& in);

}  // namespace tubempc
