#include "gatecap/config_file.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "gatecap/error.hpp"

namespace gatecap {

namespace {

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

std::size_t parse_size(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + value + "' is not a non-negative integer");
  }
}

std::uint64_t parse_u64(const std::string& value, const std::string& where) {
  return parse_size(value, where);
}

double parse_double(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(where + ": '" + value + "' is not a boolean (use true/false)");
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where) {
  if (key == "embed_dim") {
    cfg.model.embed_dim = parse_size(value, where);
  } else if (key == "hidden_dim") {
    cfg.model.hidden_dim = parse_size(value, where);
  } else if (key == "depth") {
    cfg.model.depth = parse_size(value, where);
  } else if (key == "feature_dim") {
    cfg.model.feature_dim = parse_size(value, where);
  } else if (key == "activation") {
    cfg.model.activation = parse_activation(value);
  } else if (key == "feed_mode") {
    cfg.model.feed_mode = parse_feed_mode(value);
  } else if (key == "max_decode_len") {
    cfg.model.max_decode_len = parse_size(value, where);
  } else if (key == "share_transition_weights") {
    cfg.model.share_transition_weights = parse_bool(value, where);
  } else if (key == "batch_size") {
    cfg.train.batch_size = parse_size(value, where);
  } else if (key == "epochs") {
    cfg.train.epochs = parse_size(value, where);
  } else if (key == "learning_rate") {
    cfg.train.learning_rate = parse_double(value, where);
  } else if (key == "rms_decay") {
    cfg.train.rms_decay = parse_double(value, where);
  } else if (key == "rms_eps") {
    cfg.train.rms_eps = parse_double(value, where);
  } else if (key == "clip_bound") {
    cfg.train.clip_bound = parse_double(value, where);
  } else if (key == "l2_coeff") {
    cfg.train.l2_coeff = parse_double(value, where);
  } else if (key == "dropout_p") {
    cfg.train.dropout_p = parse_double(value, where);
  } else if (key == "dropout_input") {
    cfg.train.dropout_input = parse_bool(value, where);
  } else if (key == "dropout_image") {
    cfg.train.dropout_image = parse_bool(value, where);
  } else if (key == "lr_decay_per_epoch") {
    cfg.train.lr_decay_per_epoch = parse_double(value, where);
  } else if (key == "seed") {
    cfg.train.seed = parse_u64(value, where);
  } else if (key == "min_count") {
    cfg.min_count = parse_size(value, where);
  } else if (key == "dev_n") {
    cfg.dev_n = parse_size(value, where);
  } else if (key == "test_n") {
    cfg.test_n = parse_size(value, where);
  } else if (key == "split_seed") {
    cfg.split_seed = parse_u64(value, where);
  } else {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

void for_each_config_entry(const std::string& path, const ConfigEntryFn& fn) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = path + ":" + std::to_string(lineno);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    if (value.empty()) throw ConfigError(where + ": missing value for key '" + key + "'");
    fn(key, value, where);
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  for_each_config_entry(path, [&](const std::string& key, const std::string& value,
                                  const std::string& where) {
    apply_config_entry(cfg, key, value, where);
  });
}

}  // namespace gatecap
