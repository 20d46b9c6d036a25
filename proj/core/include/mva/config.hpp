#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "mva/adapters.hpp"
#include "mva/encoder.hpp"
#include "mva/retrieval.hpp"
#include "mva/synthdata.hpp"

namespace mva {

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string key_, const std::string& msg)
      : std::runtime_error("config key '" + key_ + "': " + msg), key(std::move(key_)) {}
};

struct TrainSettings {
  int epochs = 30;
  int batch = 32;
  int max_steps = 0;  // 0 = no limit
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double tau_init = 2.0;
  double tau_cap_start = 100.0;
  double tau_cap_end = 20.0;
  TauSchedule::Shape tau_shape = TauSchedule::Shape::Linear;
};

/// Flat `key = value` configuration with namespaced keys, `#` comments,
/// documented defaults for every key, and rejection of unknown keys.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig from_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);
  /// The CLIP-B/16-shaped preset used for full-scale parameter accounting.
  static RunConfig clip_b16();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Sorted `key = value` lines with normalized values; the checkpoint
  /// config hash is the FNV-1a of this text.
  std::string canonical_text() const;
  std::uint64_t hash() const;

  EncoderConfig encoder() const;
  AdapterConfig adapter() const;
  TrainSettings train() const;
  DatasetSpec dataset() const;
  /// One `key = value (doc)` line per key, for --help style listings.
  static std::string documented_defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mva
