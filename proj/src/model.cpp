#include "gatecap/model.hpp"

#include <cmath>
#include <sstream>

#include "gatecap/error.hpp"
#include "gatecap/rng.hpp"

namespace gatecap {

const char* activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

const char* feed_mode_name(FeedMode m) {
  switch (m) {
    case FeedMode::kLearnedGate: return "learned";
    case FeedMode::kFirstStepOnly: return "first_step";
    case FeedMode::kAlways: return "always";
    case FeedMode::kNone: return "none";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu|tanh)");
}

FeedMode parse_feed_mode(const std::string& s) {
  if (s == "learned") return FeedMode::kLearnedGate;
  if (s == "first_step") return FeedMode::kFirstStepOnly;
  if (s == "always") return FeedMode::kAlways;
  if (s == "none") return FeedMode::kNone;
  throw ConfigError("unknown feed_mode '" + s + "' (expected learned|first_step|always|none)");
}

void ModelConfig::validate() const {
  if (vocab_size < 4)
    throw ConfigError("vocab_size must be >= 4 (START, END, UNK and at least one word)");
  if (embed_dim < 1 || hidden_dim < 1 || depth < 1 || feature_dim < 1)
    throw ConfigError("embed_dim, hidden_dim, depth and feature_dim must all be >= 1");
  if (max_decode_len < 1) throw ConfigError("max_decode_len must be >= 1");
}

ModelTensors ModelTensors::zeros(const ModelConfig& cfg) {
  ModelTensors t;
  t.embedding = Matrix(cfg.vocab_size, cfg.embed_dim);
  t.ws = Matrix(cfg.hidden_dim, cfg.embed_dim);
  t.wh_rec = Matrix(cfg.hidden_dim, cfg.hidden_dim);
  if (!cfg.share_transition_weights && cfg.depth >= 2) {
    t.wh_trans.assign(cfg.depth - 1, Matrix(cfg.hidden_dim, cfg.hidden_dim));
  }
  t.wd = Matrix(cfg.vocab_size, cfg.hidden_dim);
  t.wi = Matrix(cfg.hidden_dim, cfg.feature_dim);
  t.wg = Matrix(cfg.hidden_dim, cfg.hidden_dim);
  t.bh.assign(cfg.depth, Vector(cfg.hidden_dim));
  t.bd = Vector(cfg.vocab_size);
  t.bi = Vector(cfg.hidden_dim);
  t.bg = Vector(cfg.hidden_dim);
  return t;
}

namespace {

template <class Ref, class Bag>
std::vector<Ref> make_refs(Bag& t) {
  std::vector<Ref> out;
  auto mat = [&out](const std::string& name, TensorKind kind, auto& m) {
    out.push_back(Ref{name, kind, {m.rows, m.cols}, m.data(), m.size()});
  };
  auto vec = [&out](const std::string& name, auto& v) {
    out.push_back(Ref{name, TensorKind::kBias, {v.size()}, v.data(), v.size()});
  };
  mat("embedding", TensorKind::kEmbedding, t.embedding);
  mat("Ws", TensorKind::kWeight, t.ws);
  mat("Wh_rec", TensorKind::kWeight, t.wh_rec);
  for (std::size_t k = 0; k < t.wh_trans.size(); ++k) {
    mat("Wh_trans[" + std::to_string(k + 2) + "]", TensorKind::kWeight, t.wh_trans[k]);
  }
  mat("Wd", TensorKind::kWeight, t.wd);
  mat("Wi", TensorKind::kWeight, t.wi);
  mat("Wg", TensorKind::kWeight, t.wg);
  for (std::size_t k = 0; k < t.bh.size(); ++k) {
    vec("bh[" + std::to_string(k + 1) + "]", t.bh[k]);
  }
  vec("bd", t.bd);
  vec("bi", t.bi);
  vec("bg", t.bg);
  return out;
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelTensors& t) { return make_refs<TensorRef>(t); }

std::vector<ConstTensorRef> tensor_refs(const ModelTensors& t) {
  return make_refs<ConstTensorRef>(t);
}

const Matrix& transition_weight(const ModelParams& p, const ModelConfig& cfg, std::size_t layer) {
  return cfg.share_transition_weights ? p.wh_rec : p.wh_trans[layer - 2];
}

Matrix& transition_grad(Gradients& g, const ModelConfig& cfg, std::size_t layer) {
  return cfg.share_transition_weights ? g.wh_rec : g.wh_trans[layer - 2];
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p = ModelTensors::zeros(cfg);
  Rng rng(mix_seed(seed, 0x1217ULL));
  for (auto& ref : tensor_refs(p)) {
    if (ref.kind == TensorKind::kBias) continue;  // biases stay zero
    const double s = std::sqrt(6.0 / static_cast<double>(ref.dims[0] + ref.dims[1]));
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = rng.uniform(-s, s);
  }
  return p;
}

Vector compute_gate(const ModelParams& p, FeedMode mode, const Vector& h_prev, std::size_t t) {
  const std::size_t h = p.bg.size();
  switch (mode) {
    case FeedMode::kLearnedGate: {
      Vector u = matvec(p.wg, h_prev);
      for (std::size_t i = 0; i < h; ++i) u[i] += p.bg[i];
      return sigmoid(u);
    }
    case FeedMode::kFirstStepOnly:
      return Vector(h, t == 1 ? 1.0 : 0.0);
    case FeedMode::kAlways:
      return Vector(h, 1.0);
    case FeedMode::kNone:
      return Vector(h, 0.0);
  }
  throw ConfigError("compute_gate: bad feed mode");
}

namespace {

Vector apply_activation(Activation a, const Vector& v) {
  return a == Activation::kRelu ? relu(v) : tanh_act(v);
}

}  // namespace

StepOutput step(const ModelParams& p, const ModelConfig& cfg, const Vector& x_t,
                const Vector& h_prev, const Vector& projected_image, std::size_t t) {
  if (x_t.size() != cfg.embed_dim || h_prev.size() != cfg.hidden_dim ||
      projected_image.size() != cfg.hidden_dim) {
    std::ostringstream os;
    os << "step: got x " << x_t.size() << ", h_prev " << h_prev.size() << ", image "
       << projected_image.size() << " for config D=" << cfg.embed_dim
       << " H=" << cfg.hidden_dim;
    throw ConfigError(os.str());
  }
  StepOutput out;
  out.gate = compute_gate(p, cfg.feed_mode, h_prev, t);

  Vector a1 = matvec(p.ws, x_t);
  const Vector rec = matvec(p.wh_rec, h_prev);
  for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
    a1[i] += rec[i];
    a1[i] += out.gate[i] * projected_image[i];
    a1[i] += p.bh[0][i];
  }
  out.preact.push_back(a1);
  out.hidden.push_back(apply_activation(cfg.activation, a1));

  for (std::size_t k = 2; k <= cfg.depth; ++k) {
    Vector ak = matvec(transition_weight(p, cfg, k), out.hidden.back());
    for (std::size_t i = 0; i < cfg.hidden_dim; ++i) ak[i] += p.bh[k - 1][i];
    out.preact.push_back(ak);
    out.hidden.push_back(apply_activation(cfg.activation, ak));
  }

  Vector logits = matvec(p.wd, out.hidden.back());
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) logits[i] += p.bd[i];
  out.y = softmax(logits);
  return out;
}

ForwardTrace forward_sequence(const ModelParams& p, const ModelConfig& cfg,
                              const std::vector<int>& token_ids, const Vector& feature,
                              const DropoutMasks* masks) {
  if (token_ids.size() < 2) {
    throw DataError("forward_sequence: sequence needs at least two tokens, got " +
                    std::to_string(token_ids.size()));
  }
  if (feature.size() != cfg.feature_dim) {
    throw DataError("forward_sequence: feature has length " + std::to_string(feature.size()) +
                    ", config expects " + std::to_string(cfg.feature_dim));
  }
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw DataError("forward_sequence: token id " + std::to_string(id) + " out of vocabulary");
  }
  const std::size_t n_steps = token_ids.size() - 1;
  if (masks && masks->input.size() != n_steps)
    throw ConfigError("forward_sequence: dropout masks cover " +
                      std::to_string(masks->input.size()) + " steps, sequence has " +
                      std::to_string(n_steps));

  ForwardTrace trace;
  trace.feature = feature;
  trace.projected_image = matvec(p.wi, feature);
  for (std::size_t i = 0; i < cfg.hidden_dim; ++i) trace.projected_image[i] += p.bi[i];

  Vector proj_used = trace.projected_image;
  if (masks) {
    trace.image_mask = masks->image;
    proj_used = elemwise_mul(proj_used, masks->image);
  }

  Vector h_prev(cfg.hidden_dim);
  trace.steps.reserve(n_steps);
  for (std::size_t s = 0; s < n_steps; ++s) {
    StepTrace st;
    st.input_id = token_ids[s];
    st.x = Vector(cfg.embed_dim);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      st.x[j] = p.embedding(static_cast<std::size_t>(st.input_id), j);
    }
    Vector x_used = st.x;
    if (masks) {
      st.input_mask = masks->input[s];
      x_used = elemwise_mul(x_used, st.input_mask);
    }
    StepOutput so = step(p, cfg, x_used, h_prev, proj_used, s + 1);
    st.gate = std::move(so.gate);
    st.preact = std::move(so.preact);
    st.hidden = std::move(so.hidden);
    st.y = std::move(so.y);
    h_prev = st.hidden.back();
    trace.steps.push_back(std::move(st));
  }
  return trace;
}

std::vector<int> targets_of(const std::vector<int>& token_ids) {
  if (token_ids.size() < 2)
    throw DataError("targets_of: sequence needs at least two tokens");
  return std::vector<int>(token_ids.begin() + 1, token_ids.end());
}

double cross_entropy_loss(const ForwardTrace& trace, const std::vector<int>& target_ids) {
  if (trace.steps.empty()) throw DataError("cross_entropy_loss: empty trace");
  if (target_ids.size() != trace.steps.size()) {
    throw DataError("cross_entropy_loss: " + std::to_string(target_ids.size()) +
                    " targets for " + std::to_string(trace.steps.size()) + " timesteps");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const int tid = target_ids[s];
    if (tid < 0 || static_cast<std::size_t>(tid) >= trace.steps[s].y.size())
      throw DataError("cross_entropy_loss: target id " + std::to_string(tid) +
                      " out of vocabulary");
    total += -std::log(trace.steps[s].y[static_cast<std::size_t>(tid)]);
  }
  return total / static_cast<double>(trace.steps.size());
}

double l2_penalty(const ModelParams& p, const ModelConfig& cfg) {
  double total = sum_squares(p.ws);
  total += sum_squares(p.wh_rec);
  for (const auto& w : p.wh_trans) total += sum_squares(w);
  total += sum_squares(p.wd);
  total += sum_squares(p.wi);
  total += sum_squares(p.wg);
  (void)cfg;
  return total;
}

}  // namespace gatecap
