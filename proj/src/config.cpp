#include "uavgeo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "uavgeo/error.hpp"

extern char** environ;

namespace uavgeo::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// model.init_seed follows the run seed and is not a key of its own.
const std::vector<std::string> kModelKeys{"model.num_classes", "model.gem_p",      "model.gem_learnable", "partition.ratio",
                                          "model.hab_stages",  "model.input_size", "model.base_width",    "model.blocks",
                                          "model.descriptor"};

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (std::find(kModelKeys.begin(), kModelKeys.end(), key) != kModelKeys.end()) {
    auto kv = model.to_map();
    if (key == "model.gem_learnable") {
      kv[key] = to_bool(key, value) ? "true" : "false";
    } else if (key == "model.hab_stages") {
      kv[key] = value == "none" ? "" : value;
    } else if (key == "model.num_classes" || key == "model.input_size" || key == "model.base_width") {
      kv[key] = std::to_string(to_int(key, value));
    } else if (key == "model.gem_p" || key == "partition.ratio") {
      kv[key] = fmt(to_double(key, value));
    } else {
      kv[key] = value;
    }
    // from_map validates, and 0 classes ("infer") is only meaningful here.
    const bool infer_classes = kv["model.num_classes"] == "0";
    if (infer_classes) kv["model.num_classes"] = "1";
    try {
      model = net::ModelConfig::from_map(kv);
      if (infer_classes) model.num_classes = 0;
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    return;
  }

  if (key == "seed") {
    const long long s = to_int(key, value);
    if (s < 0) throw ConfigError("seed must be non-negative");
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "data.root") {
    data_root = value;
  } else if (key == "loss.w_center") {
    loss.w_center = to_double(key, value);
  } else if (key == "loss.w_ce") {
    loss.w_ce = to_double(key, value);
  } else if (key == "loss.w_dc") {
    loss.w_dc = to_double(key, value);
  } else if (key == "loss.lambda_dc") {
    loss.lambda_dc = to_double(key, value);
  } else if (key == "loss.aux") {
    if (value == "none") aux = AuxLoss::None;
    else if (value == "triplet") aux = AuxLoss::Triplet;
    else throw ConfigError("loss.aux: expected none or triplet, got '" + value + "'");
  } else if (key == "loss.w_aux") {
    w_aux = to_double(key, value);
  } else if (key == "loss.triplet_margin") {
    triplet_margin = to_double(key, value);
  } else if (key == "optim.lr") {
    optim.lr = to_double(key, value);
  } else if (key == "optim.momentum") {
    optim.momentum = to_double(key, value);
  } else if (key == "optim.weight_decay") {
    optim.weight_decay = to_double(key, value);
  } else if (key == "optim.step_epochs") {
    optim.step_epochs = static_cast<int>(to_int(key, value));
  } else if (key == "optim.step_gamma") {
    optim.step_gamma = to_double(key, value);
  } else if (key == "optim.grad_clip") {
    grad_clip = to_double(key, value);
  } else if (key == "optim.epochs") {
    epochs = static_cast<int>(to_int(key, value));
  } else if (key == "optim.batch_size") {
    batch_size = static_cast<int>(to_int(key, value));
  } else if (key == "optim.center_lr") {
    center_lr = to_double(key, value);
  } else if (key == "train.augment") {
    augment = to_bool(key, value);
  } else if (key == "train.out_dir") {
    out_dir = value;
  } else if (key == "train.eval_every") {
    eval_every = static_cast<int>(to_int(key, value));
  } else if (key == "sas.pooled") {
    sas_pooled = to_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::validate() const {
  net::ModelConfig m = model;
  if (m.num_classes < 0) throw ConfigError("model.num_classes must be >= 0");
  if (m.num_classes == 0) m.num_classes = 1;
  m.validate();
  loss.validate();
  auto finite_nonneg = [](double v, const char* key) {
    if (!std::isfinite(v) || v < 0) throw ConfigError(std::string(key) + " must be finite and non-negative");
  };
  if (!std::isfinite(optim.lr) || optim.lr <= 0) throw ConfigError("optim.lr must be positive");
  if (!(optim.momentum >= 0 && optim.momentum < 1)) throw ConfigError("optim.momentum must be in [0, 1)");
  finite_nonneg(optim.weight_decay, "optim.weight_decay");
  finite_nonneg(grad_clip, "optim.grad_clip");
  if (optim.step_epochs < 1) throw ConfigError("optim.step_epochs must be >= 1");
  if (!(optim.step_gamma > 0 && optim.step_gamma <= 1)) throw ConfigError("optim.step_gamma must be in (0, 1]");
  if (epochs < 1) throw ConfigError("optim.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("optim.batch_size must be >= 2");
  if (!(center_lr >= 0 && center_lr <= 1)) throw ConfigError("optim.center_lr must be in [0, 1]");
  finite_nonneg(w_aux, "loss.w_aux");
  finite_nonneg(triplet_margin, "loss.triplet_margin");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (out_dir.empty()) throw ConfigError("train.out_dir must not be empty");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : model.to_map()) {
    if (k != "model.init_seed") kv[k] = v;
  }
  if (kv["model.hab_stages"].empty()) kv["model.hab_stages"] = "none";
  kv["seed"] = std::to_string(seed);
  kv["data.root"] = data_root;
  kv["loss.w_center"] = fmt(loss.w_center);
  kv["loss.w_ce"] = fmt(loss.w_ce);
  kv["loss.w_dc"] = fmt(loss.w_dc);
  kv["loss.lambda_dc"] = fmt(loss.lambda_dc);
  kv["loss.aux"] = aux == AuxLoss::Triplet ? "triplet" : "none";
  kv["loss.w_aux"] = fmt(w_aux);
  kv["loss.triplet_margin"] = fmt(triplet_margin);
  kv["optim.lr"] = fmt(optim.lr);
  kv["optim.momentum"] = fmt(optim.momentum);
  kv["optim.weight_decay"] = fmt(optim.weight_decay);
  kv["optim.step_epochs"] = std::to_string(optim.step_epochs);
  kv["optim.step_gamma"] = fmt(optim.step_gamma);
  kv["optim.grad_clip"] = fmt(grad_clip);
  kv["optim.epochs"] = std::to_string(epochs);
  kv["optim.batch_size"] = std::to_string(batch_size);
  kv["optim.center_lr"] = fmt(center_lr);
  kv["train.augment"] = augment ? "true" : "false";
  kv["train.out_dir"] = out_dir;
  kv["train.eval_every"] = std::to_string(eval_every);
  kv["sas.pooled"] = sas_pooled ? "true" : "false";
  return kv;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : RunConfig{}.to_map()) keys.push_back(k);
  return keys;
}

std::map<std::string, std::string> preset(const std::string& name) {
  if (name == "toy") {
    // Small enough to train from random init on one CPU core in minutes.
    return {
        {"optim.epochs", "40"},
        {"model.num_classes", "20"},
        {"model.input_size", "64"},
        {"model.base_width", "8"},
        {"model.blocks", "1,1,1,1"},
        {"optim.batch_size", "16"},
        {"optim.lr", "0.04"},
    };
  }
  throw ConfigError("unknown preset '" + name + "'");
}

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + " line " + std::to_string(lineno);
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (kv.contains(key)) throw ParseError(where + ": duplicate key " + key);
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_kv(ss.str(), path.string());
}

std::string format_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string env_name(const std::string& key) {
  std::string out = "UAVGEO_";
  for (char c : key) {
    if (c == '.') out += "__";
    else out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

RunConfig resolve(const Sources& sources) {
  RunConfig cfg;
  auto apply = [&](const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) cfg.set(k, v);
  };
  if (sources.preset) apply(preset(*sources.preset));
  if (sources.file) {
    try {
      apply(read_kv_file(*sources.file));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  if (sources.use_environment) {
    for (const auto& key : known_keys()) {
      if (const char* v = std::getenv(env_name(key).c_str())) cfg.set(key, v);
    }
    // A misspelt override should not pass silently.
    const std::string prefix = "UAVGEO_";
    for (char** e = environ; e && *e; ++e) {
      const std::string entry(*e);
      if (entry.rfind(prefix, 0) != 0) continue;
      const std::string name = entry.substr(0, entry.find('='));
      const auto keys = known_keys();
      if (std::none_of(keys.begin(), keys.end(), [&](const std::string& k) { return env_name(k) == name; })) {
        throw ConfigError("unknown environment override " + name);
      }
    }
  }
  for (const auto& o : sources.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  if (sources.seed) cfg.seed = *sources.seed;
  cfg.validate();
  return cfg;
}

}  // namespace uavgeo::config
