#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "gatecap/model.hpp"
#include "gatecap/optimizer.hpp"

namespace gatecap {

// Everything a training run needs beyond the data paths. Defaults follow the
// reference recipe; a config file and then explicit CLI flags override them.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t min_count = 5;
  std::size_t dev_n = 1000;
  std::size_t test_n = 1000;
  std::uint64_t split_seed = 1;
};

// Applies "key = value" lines from `path` onto `cfg`. '#' starts a comment,
// blank lines are ignored, and an unknown key is fatal (ConfigError naming
// the key and line).
void apply_config_file(RunConfig& cfg, const std::string& path);

// Applies a single key/value pair; shared by the file parser and tests.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where);

// Parses `path` and hands each (key, value) pair to `fn` with a
// "<path>:<line>" location string, without applying anything itself.
using ConfigEntryFn =
    std::function<void(const std::string& key, const std::string& value, const std::string& where)>;
void for_each_config_entry(const std::string& path, const ConfigEntryFn& fn);

}  // namespace gatecap
