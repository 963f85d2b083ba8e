#include "gatecap/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "gatecap/error.hpp"
#include "gatecap/gradients.hpp"
#include "gatecap/rng.hpp"

namespace gatecap {

namespace {

// Seed-mixing tags so the shuffle stream, the dropout stream and parameter
// init never collide even for equal epoch/sample indices.
constexpr std::uint64_t kShuffleTag = 0x5u;
constexpr std::uint64_t kDropoutTag = 0xDu;

void fill_mask(Vector& mask, std::size_t n, double p, Rng& rng) {
  mask.v.assign(n, 1.0);
  if (p <= 0.0) return;
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) {
    mask.v[i] = rng.next_double() < p ? 0.0 : scale;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive and finite");
  }
  if (!(rms_decay > 0.0) || !(rms_decay < 1.0)) {
    throw ConfigError("rms_decay must lie in (0, 1)");
  }
  if (!(rms_eps > 0.0)) throw ConfigError("rms_eps must be positive");
  if (!(clip_bound > 0.0)) throw ConfigError("clip_bound must be positive");
  if (l2_coeff < 0.0 || !std::isfinite(l2_coeff)) {
    throw ConfigError("l2_coeff must be non-negative and finite");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("dropout_p must lie in [0, 1)");
  }
  if (!(lr_decay_per_epoch > 0.0) || lr_decay_per_epoch > 1.0) {
    throw ConfigError("lr_decay_per_epoch must lie in (0, 1]");
  }
}

DropoutMasks dropout_masks(const ModelConfig& cfg, const TrainConfig& tcfg, std::uint64_t seed,
                           std::size_t n_steps) {
  Rng rng(seed);
  DropoutMasks masks;
  masks.input.resize(n_steps);
  const double p_in = tcfg.dropout_input ? tcfg.dropout_p : 0.0;
  for (std::size_t t = 0; t < n_steps; ++t) {
    fill_mask(masks.input[t], cfg.embed_dim, p_in, rng);
  }
  const double p_img = tcfg.dropout_image ? tcfg.dropout_p : 0.0;
  fill_mask(masks.image, cfg.hidden_dim, p_img, rng);
  return masks;
}

void rmsprop_update(ModelParams& params, const Gradients& grads, RmsPropState& state,
                    const TrainConfig& tcfg, double lr) {
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(static_cast<const Gradients&>(grads));
  auto s_refs = tensor_refs(state);
  for (std::size_t k = 0; k < p_refs.size(); ++k) {
    double* theta = p_refs[k].data;
    const double* g = g_refs[k].data;
    double* cache = s_refs[k].data;
    const std::size_t n = p_refs[k].size;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i])) {
        throw DataError("non-finite gradient in tensor " + std::string(p_refs[k].name));
      }
      cache[i] = tcfg.rms_decay * cache[i] + (1.0 - tcfg.rms_decay) * g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(cache[i]) + tcfg.rms_eps);
    }
  }
}

double train_minibatch(ModelParams& params, RmsPropState& state,
                       const std::vector<SampleRef>& batch, const ModelConfig& cfg,
                       const TrainConfig& tcfg, double lr,
                       const std::vector<std::uint64_t>& pair_seeds) {
  if (batch.empty()) throw ConfigError("train_minibatch: empty batch");
  if (pair_seeds.size() != batch.size()) {
    throw ConfigError("train_minibatch: need one dropout seed per pair");
  }

  Gradients total = Gradients::zeros(cfg);
  auto total_refs = tensor_refs(total);
  double loss_sum = 0.0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& sample = batch[b];
    DropoutMasks masks = dropout_masks(cfg, tcfg, pair_seeds[b], sample.tokens->size() - 1);
    ForwardTrace trace = forward_sequence(params, cfg, *sample.tokens, *sample.feature, &masks);
    const std::vector<int> targets = targets_of(*sample.tokens);
    loss_sum += cross_entropy_loss(trace, targets);
    Gradients g = backward_sequence(params, cfg, trace, targets, /*l2_coeff=*/0.0);
    auto g_refs = tensor_refs(g);
    for (std::size_t k = 0; k < total_refs.size(); ++k) {
      double* dst = total_refs[k].data;
      const double* src = g_refs[k].data;
      const std::size_t n = total_refs[k].size;
      for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& ref : total_refs) {
    double* dst = ref.data;
    const std::size_t n = ref.size;
    for (std::size_t i = 0; i < n; ++i) dst[i] *= inv_n;
  }
  add_l2_gradient(total, params, cfg, tcfg.l2_coeff);
  for (auto& ref : total_refs) {
    for (std::size_t i = 0; i < ref.size; ++i) {
      double& v = ref.data[i];
      if (v > tcfg.clip_bound) v = tcfg.clip_bound;
      if (v < -tcfg.clip_bound) v = -tcfg.clip_bound;
    }
  }
  rmsprop_update(params, total, state, tcfg, lr);
  return loss_sum * inv_n;
}

std::string format_history_line(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch %zu train_loss %.17g dev_loss %.17g lr %.17g", s.epoch,
                s.train_loss, s.dev_loss, s.lr);
  return buf;
}

std::vector<SampleRef> expand_samples(const std::vector<CaptionedImage>& images) {
  std::vector<SampleRef> out;
  for (const auto& img : images) {
    for (const auto& cap : img.captions) {
      out.push_back(SampleRef{&cap, &img.feature});
    }
  }
  return out;
}

double mean_loss(const ModelParams& params, const ModelConfig& cfg,
                 const std::vector<SampleRef>& samples) {
  if (samples.empty()) throw DataError("mean_loss: no samples");
  double sum = 0.0;
  for (const auto& s : samples) {
    ForwardTrace trace = forward_sequence(params, cfg, *s.tokens, *s.feature, nullptr);
    sum += cross_entropy_loss(trace, targets_of(*s.tokens));
  }
  return sum / static_cast<double>(samples.size());
}

TrainResult train(const Dataset& dataset, const ModelConfig& cfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch) {
  ModelParams init = init_params(cfg, tcfg.seed);
  RmsPropState state = RmsPropState::zeros(cfg);
  return train_from(init, std::move(state), /*epochs_done=*/0, tcfg.learning_rate, init,
                    std::numeric_limits<double>::infinity(), dataset, cfg, tcfg, on_epoch);
}

TrainResult train_from(ModelParams current, RmsPropState state, std::size_t epochs_done,
                       double lr, ModelParams best, double best_dev_loss,
                       const Dataset& dataset, const ModelConfig& cfg, const TrainConfig& tcfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  tcfg.validate();
  if (dataset.train.empty()) throw DataError("training split is empty");
  if (dataset.dev.empty()) throw DataError("dev split is empty");

  const std::vector<SampleRef> train_samples = expand_samples(dataset.train);
  const std::vector<SampleRef> dev_samples = expand_samples(dataset.dev);
  if (train_samples.empty()) throw DataError("training split has no captions");
  if (dev_samples.empty()) throw DataError("dev split has no captions");

  TrainResult result;
  result.best_dev_loss = best_dev_loss;
  result.params = std::move(best);
  result.lr = lr;

  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t epoch = epochs_done; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(tcfg.seed, kShuffleTag, epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    std::size_t n_seen = 0;
    std::vector<SampleRef> batch;
    std::vector<std::uint64_t> seeds;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      batch.clear();
      seeds.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(train_samples[order[i]]);
        seeds.push_back(mix_seed(tcfg.seed, kDropoutTag, epoch, order[i]));
      }
      const double batch_loss = train_minibatch(current, state, batch, cfg, tcfg, result.lr, seeds);
      epoch_loss_sum += batch_loss * static_cast<double>(batch.size());
      n_seen += batch.size();
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = epoch_loss_sum / static_cast<double>(n_seen);
    stats.dev_loss = mean_loss(current, cfg, dev_samples);
    stats.lr = result.lr;
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.dev_loss < result.best_dev_loss) {
      result.best_dev_loss = stats.dev_loss;
      result.params = current;
    }
    result.lr *= tcfg.lr_decay_per_epoch;
    result.epochs_done = epoch + 1;
  }

  if (result.epochs_done == 0) result.epochs_done = epochs_done;
  if (!std::isfinite(result.best_dev_loss)) {
    // No epoch ran (epochs == epochs_done); keep the incoming parameters.
    result.params = current;
  }
  result.last_params = std::move(current);
  result.rms = std::move(state);
  return result;
}

}  // namespace gatecap
