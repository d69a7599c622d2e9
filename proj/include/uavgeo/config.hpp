#pragma once

// Run configuration: a flat set of dotted keys resolved from built-in defaults,
// an optional preset, a key=value file, UAVGEO_* environment variables and
// command-line overrides, in that order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavgeo/losses.hpp"
#include "uavgeo/network.hpp"
#include "uavgeo/optimizer.hpp"

namespace uavgeo::config {

enum class AuxLoss { None, Triplet };

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_root;
  net::ModelConfig model;  ///< model.num_classes = 0 means "take it from the training split"
  loss::LossWeights loss;
  AuxLoss aux = AuxLoss::None;
  double w_aux = 1.0;
  double triplet_margin = 0.3;
  optim::SgdOptions optim;
  double grad_clip = 0.0;  ///< global gradient-norm ceiling; 0 disables
  int epochs = 200;
  int batch_size = 32;
  double center_lr = 0.5;  ///< alpha of the class-centre update
  bool augment = true;
  std::string out_dir = "runs/train";
  int eval_every = 0;      ///< epochs between training-set recall checks; 0 = only at the end
  bool sas_pooled = false;

  /// Parses and stores one key. Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError on the first invalid field.
  void validate() const;
  /// Every key with its current value; feeding these back through set() reproduces the config.
  std::map<std::string, std::string> to_map() const;
};

/// All recognised keys, sorted.
std::vector<std::string> known_keys();

/// Named bundles of overrides; currently only "toy".
std::map<std::string, std::string> preset(const std::string& name);

/// `key = value` lines, `#` comments, blank lines ignored. Throws ParseError naming the line.
std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
std::string format_kv(const std::map<std::string, std::string>& kv);

/// `model.gem_p` -> `UAVGEO_MODEL__GEM_P`.
std::string env_name(const std::string& key);

struct Sources {
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> file;
  bool use_environment = true;
  std::vector<std::string> overrides;  ///< `key=value`
  std::optional<std::uint64_t> seed;
};

/// Layers the sources and validates the result.
RunConfig resolve(const Sources& sources);

}  // namespace uavgeo::config
