#include "gatecap/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "gatecap/error.hpp"
#include "gatecap/rng.hpp"

namespace gatecap {

namespace {

double act_deriv(Activation a, double pre, double post) {
  if (a == Activation::kRelu) return pre > 0.0 ? 1.0 : 0.0;
  return 1.0 - post * post;  // tanh'
}

}  // namespace

Gradients backward_sequence(const ModelParams& p, const ModelConfig& cfg,
                            const ForwardTrace& trace, const std::vector<int>& target_ids,
                            double l2_coeff) {
  const std::size_t n_steps = trace.steps.size();
  if (n_steps == 0) throw DataError("backward_sequence: empty trace");
  if (target_ids.size() != n_steps) {
    throw DataError("backward_sequence: " + std::to_string(target_ids.size()) +
                    " targets for " + std::to_string(n_steps) + " timesteps");
  }
  const std::size_t H = cfg.hidden_dim;
  const double inv_steps = 1.0 / static_cast<double>(n_steps);
  const bool learned_gate = cfg.feed_mode == FeedMode::kLearnedGate;

  Gradients g = ModelTensors::zeros(cfg);

  // Projected image after dropout, shared by every timestep.
  Vector proj_used = trace.projected_image;
  if (trace.image_mask.size() != 0) proj_used = elemwise_mul(proj_used, trace.image_mask);

  Vector d_proj_used(H);  // accumulates d loss / d proj_used over timesteps
  Vector carry(H);        // d loss / d h_N(t) contribution arriving from step t+1
  const Vector h_zero(H);

  for (std::size_t s = n_steps; s-- > 0;) {
    const StepTrace& st = trace.steps[s];
    const Vector& h_prev = s == 0 ? h_zero : trace.steps[s - 1].hidden.back();

    // Softmax + mean cross-entropy collapse to (y - onehot) / S.
    Vector dz = st.y;
    const int tid = target_ids[s];
    if (tid < 0 || static_cast<std::size_t>(tid) >= cfg.vocab_size)
      throw DataError("backward_sequence: target id " + std::to_string(tid) +
                      " out of vocabulary");
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= inv_steps;
    dz[static_cast<std::size_t>(tid)] -= inv_steps;

    add_outer(g.wd, dz, st.hidden.back());
    for (std::size_t i = 0; i < dz.size(); ++i) g.bd[i] += dz[i];

    Vector dh = matvec_transposed(p.wd, dz);
    for (std::size_t i = 0; i < H; ++i) dh[i] += carry[i];

    // Walk layers N..2, then the recurrent layer 1.
    for (std::size_t k = cfg.depth; k >= 2; --k) {
      Vector da(H);
      for (std::size_t i = 0; i < H; ++i)
        da[i] = dh[i] * act_deriv(cfg.activation, st.preact[k - 1][i], st.hidden[k - 1][i]);
      add_outer(transition_grad(g, cfg, k), da, st.hidden[k - 2]);
      for (std::size_t i = 0; i < H; ++i) g.bh[k - 1][i] += da[i];
      dh = matvec_transposed(transition_weight(p, cfg, k), da);
    }

    Vector da1(H);
    for (std::size_t i = 0; i < H; ++i)
      da1[i] = dh[i] * act_deriv(cfg.activation, st.preact[0][i], st.hidden[0][i]);

    Vector x_used = st.x;
    if (st.input_mask.size() != 0) x_used = elemwise_mul(x_used, st.input_mask);
    add_outer(g.ws, da1, x_used);
    for (std::size_t i = 0; i < H; ++i) g.bh[0][i] += da1[i];
    add_outer(g.wh_rec, da1, h_prev);

    for (std::size_t i = 0; i < H; ++i) d_proj_used[i] += da1[i] * st.gate[i];

    // Embedding rows see gradient only for observed input tokens.
    Vector dx = matvec_transposed(p.ws, da1);
    if (st.input_mask.size() != 0) dx = elemwise_mul(dx, st.input_mask);
    const std::size_t row = static_cast<std::size_t>(st.input_id);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) g.embedding(row, j) += dx[j];

    carry = matvec_transposed(p.wh_rec, da1);
    if (learned_gate) {
      // d gate = da1 * proj; through the sigmoid: du = dg * g * (1 - g).
      Vector du(H);
      for (std::size_t i = 0; i < H; ++i) {
        const double dg = da1[i] * proj_used[i];
        du[i] = dg * st.gate[i] * (1.0 - st.gate[i]);
      }
      add_outer(g.wg, du, h_prev);
      for (std::size_t i = 0; i < H; ++i) g.bg[i] += du[i];
      const Vector via_gate = matvec_transposed(p.wg, du);
      for (std::size_t i = 0; i < H; ++i) carry[i] += via_gate[i];
    }
  }

  Vector d_proj = d_proj_used;
  if (trace.image_mask.size() != 0) d_proj = elemwise_mul(d_proj, trace.image_mask);
  add_outer(g.wi, d_proj, trace.feature);
  for (std::size_t i = 0; i < H; ++i) g.bi[i] += d_proj[i];

  if (l2_coeff != 0.0) add_l2_gradient(g, p, cfg, l2_coeff);
  return g;
}

void add_l2_gradient(Gradients& g, const ModelParams& p, const ModelConfig& cfg,
                     double l2_coeff) {
  if (l2_coeff == 0.0) return;
  auto gr = tensor_refs(g);
  auto pr = tensor_refs(p);
  (void)cfg;
  for (std::size_t t = 0; t < gr.size(); ++t) {
    if (gr[t].kind != TensorKind::kWeight) continue;
    for (std::size_t i = 0; i < gr[t].size; ++i) gr[t].data[i] += 2.0 * l2_coeff * pr[t].data[i];
  }
}

double central_difference(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

namespace {

struct LossProbe {
  double loss = 0.0;
  double min_abs_preact = std::numeric_limits<double>::infinity();
};

LossProbe regularized_loss(const ModelParams& p, const ModelConfig& cfg,
                           const std::vector<int>& token_ids, const Vector& feature,
                           const std::vector<int>& target_ids, double l2_coeff) {
  LossProbe out;
  const ForwardTrace trace = forward_sequence(p, cfg, token_ids, feature);
  for (const auto& st : trace.steps) {
    for (const auto& pre : st.preact) {
      for (std::size_t i = 0; i < pre.size(); ++i)
        out.min_abs_preact = std::min(out.min_abs_preact, std::abs(pre[i]));
    }
  }
  out.loss = cross_entropy_loss(trace, target_ids) + l2_coeff * l2_penalty(p, cfg);
  return out;
}

}  // namespace

FdResult finite_difference_grad(const ModelParams& p, const ModelConfig& cfg,
                                const std::vector<int>& token_ids, const Vector& feature,
                                const std::vector<int>& target_ids, std::size_t tensor_idx,
                                std::size_t flat_idx, double eps, double l2_coeff) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_grad: eps must be positive");
  ModelParams work = p;
  auto refs = tensor_refs(work);
  if (tensor_idx >= refs.size() || flat_idx >= refs[tensor_idx].size)
    throw ConfigError("finite_difference_grad: coordinate out of range");
  double* slot = refs[tensor_idx].data + flat_idx;
  const double orig = *slot;

  *slot = orig + eps;
  const LossProbe plus = regularized_loss(work, cfg, token_ids, feature, target_ids, l2_coeff);
  *slot = orig - eps;
  const LossProbe minus = regularized_loss(work, cfg, token_ids, feature, target_ids, l2_coeff);
  *slot = orig;

  FdResult r;
  r.derivative = (plus.loss - minus.loss) / (2.0 * eps);
  if (cfg.activation == Activation::kRelu) {
    r.skipped = std::min(plus.min_abs_preact, minus.min_abs_preact) < 10.0 * eps;
  }
  return r;
}

std::string GradCheckReport::text() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& t : tensors) {
    std::snprintf(buf, sizeof(buf), "tensor %-12s checked %4zu skipped %3zu max_rel_err %.3e",
                  t.tensor.c_str(), t.checked, t.skipped, t.max_rel_err);
    os << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf),
                "total checked %zu skipped %zu max_rel_err %.3e threshold %.0e %s", n_checked,
                n_skipped, max_rel_err, threshold, pass() ? "PASS" : "FAIL");
  os << buf << "\n";
  if (!pass()) {
    std::snprintf(buf, sizeof(buf), "worst tensor %s index %zu analytic %.9e numeric %.9e",
                  worst_tensor.c_str(), worst_index, worst_analytic, worst_numeric);
    os << buf << "\n";
  }
  return os.str();
}

GradCheckReport gradient_check(const GradCheckOptions& opt) {
  ModelConfig cfg;
  cfg.vocab_size = 20;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 10;
  cfg.depth = opt.depth;
  cfg.feature_dim = 16;
  cfg.activation = opt.activation;
  cfg.feed_mode = opt.feed_mode;
  cfg.share_transition_weights = opt.share_transition_weights;

  const ModelParams params = init_params(cfg, mix_seed(opt.seed, 0xA1ULL));
  Rng rng(mix_seed(opt.seed, 0xB2ULL));

  // Fixed little problem: 6 tokens means 5 timesteps.
  std::vector<int> tokens = {0};
  for (int k = 0; k < 4; ++k) tokens.push_back(3 + static_cast<int>(rng.below(17)));
  tokens.push_back(1);
  Vector feature(cfg.feature_dim);
  for (std::size_t i = 0; i < feature.size(); ++i) feature[i] = rng.uniform(-1.0, 1.0);
  const std::vector<int> targets = targets_of(tokens);

  const ForwardTrace trace = forward_sequence(params, cfg, tokens, feature);
  Gradients grads = backward_sequence(params, cfg, trace, targets, opt.l2_coeff);
  if (opt.corrupt) tensor_refs(grads)[1].data[0] += 0.5;

  const auto pref = tensor_refs(params);
  const auto gref = tensor_refs(grads);

  GradCheckReport report;
  report.threshold = opt.threshold;
  report.tensors.resize(pref.size());
  for (std::size_t t = 0; t < pref.size(); ++t) report.tensors[t].tensor = pref[t].name;

  // Every tensor gets a handful of coordinates, then the remaining draws are
  // spread proportionally to tensor size.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total_size = 0;
  for (const auto& r : pref) total_size += r.size;
  for (std::size_t t = 0; t < pref.size(); ++t) {
    const std::size_t n = std::min<std::size_t>(8, pref[t].size);
    for (std::size_t k = 0; k < n; ++k)
      coords.emplace_back(t, static_cast<std::size_t>(rng.below(pref[t].size)));
  }
  while (coords.size() < opt.n_samples) {
    std::size_t pick = static_cast<std::size_t>(rng.below(total_size));
    std::size_t t = 0;
    while (pick >= pref[t].size) {
      pick -= pref[t].size;
      ++t;
    }
    coords.emplace_back(t, pick);
  }

  for (const auto& [t, idx] : coords) {
    const FdResult fd = finite_difference_grad(params, cfg, tokens, feature, targets, t, idx,
                                               opt.eps, opt.l2_coeff);
    auto& ts = report.tensors[t];
    if (fd.skipped) {
      ts.skipped++;
      report.n_skipped++;
      continue;
    }
    const double analytic = gref[t].data[idx];
    const double numeric = fd.derivative;
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    ts.checked++;
    report.n_checked++;
    if (rel > ts.max_rel_err) {
      ts.max_rel_err = rel;
      ts.worst_index = idx;
      ts.worst_analytic = analytic;
      ts.worst_numeric = numeric;
    }
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_tensor = pref[t].name;
      report.worst_index = idx;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace gatecap
