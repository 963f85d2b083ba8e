#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatecap/tensor.hpp"

namespace gatecap {

enum class Activation { kRelu, kTanh };

// Schedule for injecting the projected image vector into the first hidden
// layer: a learned sigmoid gate, forced to 1 only at the first step, forced
// to 1 always, or forced to 0 (image ignored).
enum class FeedMode { kLearnedGate, kFirstStepOnly, kAlways, kNone };

const char* activation_name(Activation a);
const char* feed_mode_name(FeedMode m);
Activation parse_activation(const std::string& s);
FeedMode parse_feed_mode(const std::string& s);

struct ModelConfig {
  std::size_t vocab_size = 0;     // V, includes START/END/UNK
  std::size_t embed_dim = 256;    // D
  std::size_t hidden_dim = 512;   // H
  std::size_t depth = 2;          // N hidden layers per timestep
  std::size_t feature_dim = 4096; // F
  Activation activation = Activation::kRelu;
  FeedMode feed_mode = FeedMode::kLearnedGate;
  std::size_t max_decode_len = 50;
  bool share_transition_weights = false;

  void validate() const;  // throws ConfigError
};

enum class TensorKind { kWeight, kEmbedding, kBias };

struct TensorRef {
  std::string name;
  TensorKind kind;
  std::vector<std::size_t> dims;
  double* data;
  std::size_t size;
};

struct ConstTensorRef {
  std::string name;
  TensorKind kind;
  std::vector<std::size_t> dims;
  const double* data;
  std::size_t size;
};

// One tensor per learnable parameter. The same bag shape doubles as the
// gradient holder and the RMSprop cache. wh_trans holds the inter-layer
// transition matrices for layers 2..N; with share_transition_weights they
// alias wh_rec instead and wh_trans stays empty.
struct ModelTensors {
  Matrix embedding;               // V x D
  Matrix ws;                      // H x D, input projection
  Matrix wh_rec;                  // H x H, recurrence h_N(t-1) -> layer 1
  std::vector<Matrix> wh_trans;   // layers 2..N, each H x H
  Matrix wd;                      // V x H, output projection
  Matrix wi;                      // H x F, image projection
  Matrix wg;                      // H x H, gate
  std::vector<Vector> bh;         // per-layer hidden biases, N of length H
  Vector bd;                      // V
  Vector bi;                      // H
  Vector bg;                      // H

  static ModelTensors zeros(const ModelConfig& cfg);
};

using ModelParams = ModelTensors;
using Gradients = ModelTensors;
using RmsPropState = ModelTensors;

// Fixed-order named views over every tensor in the bag. The order is part of
// the checkpoint format and of every deterministic reduction over tensors.
std::vector<TensorRef> tensor_refs(ModelTensors& t);
std::vector<ConstTensorRef> tensor_refs(const ModelTensors& t);

const Matrix& transition_weight(const ModelParams& p, const ModelConfig& cfg, std::size_t layer);
Matrix& transition_grad(Gradients& g, const ModelConfig& cfg, std::size_t layer);

// Weights i.i.d. uniform on [-s, s] with s = sqrt(6 / (rows + cols)); biases
// zero, so the learned gate starts at 0.5 everywhere.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Inverted-dropout masks: entries are 0 or 1/(1-p). One mask per timestep
// for the word vector, one per sequence for the projected image. Empty masks
// mean "no dropout".
struct DropoutMasks {
  std::vector<Vector> input;
  Vector image;
};

struct StepTrace {
  int input_id = -1;
  Vector x;                    // embedding row, before dropout
  Vector input_mask;           // empty when no dropout
  Vector gate;                 // g(t)
  std::vector<Vector> preact;  // per layer, before activation
  std::vector<Vector> hidden;  // per layer, after activation
  Vector y;                    // softmax over vocabulary
};

// Everything the backward pass needs, per timestep plus the once-per-sequence
// image projection (stored before dropout; image_mask reapplies it).
struct ForwardTrace {
  std::vector<StepTrace> steps;
  Vector projected_image;      // wi * feature + bi
  Vector image_mask;           // empty when no dropout
  Vector feature;
};

struct StepOutput {
  Vector gate;
  std::vector<Vector> preact;
  std::vector<Vector> hidden;
  Vector y;
};

// g(t). h_prev is h_N(t-1); t is the 1-based timestep (first-step-only mode
// gates to ones at t == 1 and zeros after).
Vector compute_gate(const ModelParams& p, FeedMode mode, const Vector& h_prev, std::size_t t);

// One timestep. x_t and projected_image must already have dropout applied
// when training.
StepOutput step(const ModelParams& p, const ModelConfig& cfg, const Vector& x_t,
                const Vector& h_prev, const Vector& projected_image, std::size_t t);

// Runs the recurrence over inputs token_ids[0..T-2]; token_ids[1..T-1] are
// the targets. h_N(0) is the zero vector.
ForwardTrace forward_sequence(const ModelParams& p, const ModelConfig& cfg,
                              const std::vector<int>& token_ids, const Vector& feature,
                              const DropoutMasks* masks = nullptr);

std::vector<int> targets_of(const std::vector<int>& token_ids);

// Mean over timesteps of -ln y(t)[target_t].
double cross_entropy_loss(const ForwardTrace& trace, const std::vector<int>& target_ids);

// Sum of sum_squares over the weight matrices (embedding and biases excluded).
double l2_penalty(const ModelParams& p, const ModelConfig& cfg);

}  // namespace gatecap
