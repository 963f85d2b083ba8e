#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatecap/data.hpp"
#include "gatecap/model.hpp"
#include "gatecap/optimizer.hpp"

namespace gatecap {

// On-disk snapshot of a run: model/training configuration, vocabulary, the
// resolved dev/test image-id lists (so evaluation reproduces the original
// split), the best-dev parameters, and optionally the live training state
// needed to resume.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Vocabulary vocab;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
  ModelParams params;  // best-dev parameters

  bool has_train_state = false;
  ModelParams current;
  RmsPropState rms;
  std::uint64_t epochs_done = 0;
  double lr = 0.0;
  double best_dev_loss = 0.0;

  // Binary little-endian format, written atomically (temp file + rename).
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);  // throws DataError
};

}  // namespace gatecap
