#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gatecap/data.hpp"
#include "gatecap/model.hpp"

namespace gatecap {

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;
  double clip_bound = 5.0;
  double l2_coeff = 1e-4;
  double dropout_p = 0.5;
  double lr_decay_per_epoch = 1.0;
  std::uint64_t seed = 0;
  // Dropout sites: the word-vector input and the projected image vector.
  // Hidden layers never get dropout.
  bool dropout_input = true;
  bool dropout_image = true;

  void validate() const;  // throws ConfigError
};

// Fresh Bernoulli(1-p) masks scaled by 1/(1-p): one per timestep for the
// input, one for the projected image. p = 0 gives all-ones masks.
DropoutMasks dropout_masks(const ModelConfig& cfg, const TrainConfig& tcfg, std::uint64_t seed,
                           std::size_t n_steps);

// cache <- rho * cache + (1-rho) * g^2; theta <- theta - lr * g / (sqrt(cache) + eps).
// A non-finite gradient aborts with a diagnostic naming the tensor.
void rmsprop_update(ModelParams& params, const Gradients& grads, RmsPropState& state,
                    const TrainConfig& tcfg, double lr);

struct SampleRef {
  const std::vector<int>* tokens;
  const Vector* feature;
};

// Forward+backward per pair with fresh dropout masks, gradients averaged in
// pair order, L2 added, elementwise clip, then one RMSprop step. Returns the
// pre-update mean data loss.
double train_minibatch(ModelParams& params, RmsPropState& state,
                       const std::vector<SampleRef>& batch, const ModelConfig& cfg,
                       const TrainConfig& tcfg, double lr,
                       const std::vector<std::uint64_t>& pair_seeds);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;
};

std::string format_history_line(const EpochStats& s);

struct TrainResult {
  ModelParams params;       // best-dev parameters
  std::vector<EpochStats> history;

  // Training state, for checkpoint/resume.
  ModelParams last_params;
  RmsPropState rms;
  std::size_t epochs_done = 0;
  double lr = 0.0;
  double best_dev_loss = 0.0;
};

// One (image, caption) sample per pair.
std::vector<SampleRef> expand_samples(const std::vector<CaptionedImage>& images);

// Mean sequence loss with dropout disabled.
double mean_loss(const ModelParams& params, const ModelConfig& cfg,
                 const std::vector<SampleRef>& samples);

using EpochCallback = std::function<void(const EpochStats&)>;

// Epochs over seeded shuffles of the expanded training pairs; dev loss is
// recorded each epoch and the best-dev parameters are retained.
TrainResult train(const Dataset& dataset, const ModelConfig& cfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch = {});

// Continues a run from checkpointed state. Epoch numbering, shuffles and
// dropout seeds depend only on (seed, epoch, sample), so a resumed run
// reproduces the uninterrupted one exactly.
TrainResult train_from(ModelParams current, RmsPropState state, std::size_t epochs_done,
                       double lr, ModelParams best, double best_dev_loss,
                       const Dataset& dataset, const ModelConfig& cfg, const TrainConfig& tcfg,
                       const EpochCallback& on_epoch = {});

}  // namespace gatecap
