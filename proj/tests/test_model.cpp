#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gatecap/error.hpp"
#include "gatecap/model.hpp"
#include "gatecap/rng.hpp"
#include "gatecap/tensor.hpp"

using namespace gatecap;

namespace {

ModelConfig small_config(FeedMode mode = FeedMode::kLearnedGate,
                         Activation act = Activation::kTanh, std::size_t depth = 2) {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  cfg.depth = depth;
  cfg.feature_dim = 9;
  cfg.activation = act;
  cfg.feed_mode = mode;
  return cfg;
}

Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (auto& x : v.v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<int> sample_tokens(const ModelConfig& cfg, Rng& rng, std::size_t words) {
  std::vector<int> ids{0};
  for (std::size_t i = 0; i < words; ++i) {
    ids.push_back(3 + static_cast<int>(rng.below(cfg.vocab_size - 3)));
  }
  ids.push_back(1);
  return ids;
}

}  // namespace

TEST_CASE("config validation enforces V >= 4 and positive dims") {
  ModelConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.vocab_size = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init_params: determinism, zero biases, centered weights") {
  ModelConfig cfg = small_config();
  cfg.embed_dim = 64;
  cfg.hidden_dim = 200;  // Ws has 200*64 = 12800 >= 1e4 samples
  const ModelParams a = init_params(cfg, 99);
  const ModelParams b = init_params(cfg, 99);
  const ModelParams c = init_params(cfg, 100);

  CHECK(a.ws.a == b.ws.a);
  CHECK(a.embedding.a == b.embedding.a);
  CHECK(a.ws.a != c.ws.a);

  for (double v : a.bd.v) CHECK(v == 0.0);
  for (double v : a.bi.v) CHECK(v == 0.0);
  for (double v : a.bg.v) CHECK(v == 0.0);
  for (const auto& bh : a.bh) {
    for (double v : bh.v) CHECK(v == 0.0);
  }

  const double s = std::sqrt(6.0 / (cfg.hidden_dim + cfg.embed_dim));
  double mean = 0.0;
  for (double v : a.ws.a) {
    CHECK(std::abs(v) <= s);
    mean += v;
  }
  mean /= static_cast<double>(a.ws.size());
  CHECK(std::abs(mean) < 3.0 * s / std::sqrt(static_cast<double>(a.ws.size())));
}

TEST_CASE("compute_gate per mode") {
  ModelConfig cfg = small_config();
  ModelParams p = init_params(cfg, 1);
  const Vector h0(cfg.hidden_dim);

  SUBCASE("learned gate at zero state with zero bias is exactly 0.5") {
    const Vector g = compute_gate(p, FeedMode::kLearnedGate, h0, 1);
    for (double v : g.v) CHECK(v == 0.5);
  }
  SUBCASE("none is zeros for any state") {
    Rng rng(2);
    const Vector h = random_vector(cfg.hidden_dim, rng);
    const Vector g = compute_gate(p, FeedMode::kNone, h, 3);
    for (double v : g.v) CHECK(v == 0.0);
  }
  SUBCASE("first_step_only: ones at t=1, zeros at t=2") {
    const Vector g1 = compute_gate(p, FeedMode::kFirstStepOnly, h0, 1);
    const Vector g2 = compute_gate(p, FeedMode::kFirstStepOnly, h0, 2);
    for (double v : g1.v) CHECK(v == 1.0);
    for (double v : g2.v) CHECK(v == 0.0);
  }
  SUBCASE("always is ones at every t") {
    for (std::size_t t : {std::size_t{1}, std::size_t{2}, std::size_t{9}}) {
      const Vector g = compute_gate(p, FeedMode::kAlways, h0, t);
      for (double v : g.v) CHECK(v == 1.0);
    }
  }
}

TEST_CASE("zero network under ReLU: hidden layers zero, y uniform") {
  ModelConfig cfg = small_config(FeedMode::kLearnedGate, Activation::kRelu);
  ModelParams p = ModelParams::zeros(cfg);
  Rng rng(7);
  const Vector x = random_vector(cfg.embed_dim, rng);
  const Vector h0(cfg.hidden_dim);
  const Vector proj(cfg.hidden_dim);
  const StepOutput out = step(p, cfg, x, h0, proj, 1);
  for (const auto& h : out.hidden) {
    for (double v : h.v) CHECK(v == 0.0);
  }
  for (double v : out.y.v) {
    CHECK(v == doctest::Approx(1.0 / static_cast<double>(cfg.vocab_size)).epsilon(1e-12));
  }
}

TEST_CASE("with Wi=0, bi=0 every feed mode gives identical step outputs") {
  Rng rng(13);
  for (auto act : {Activation::kTanh, Activation::kRelu}) {
    ModelConfig cfg = small_config(FeedMode::kLearnedGate, act);
    ModelParams p = init_params(cfg, 21);
    p.wi = Matrix(cfg.hidden_dim, cfg.feature_dim);
    p.bi = Vector(cfg.hidden_dim);
    const Vector feature = random_vector(cfg.feature_dim, rng);
    const std::vector<int> tokens{0, 4, 7, 5, 1};

    ForwardTrace base;
    bool first = true;
    for (auto mode : {FeedMode::kLearnedGate, FeedMode::kFirstStepOnly, FeedMode::kAlways,
                      FeedMode::kNone}) {
      cfg.feed_mode = mode;
      ForwardTrace trace = forward_sequence(p, cfg, tokens, feature);
      if (first) {
        base = trace;
        first = false;
        continue;
      }
      REQUIRE(trace.steps.size() == base.steps.size());
      for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        CHECK(trace.steps[t].y == base.steps[t].y);
        CHECK(trace.steps[t].hidden.back() == base.steps[t].hidden.back());
      }
    }
  }
}

TEST_CASE("N=2 step equals composing two explicit layer evaluations by hand") {
  ModelConfig cfg = small_config(FeedMode::kLearnedGate, Activation::kTanh, 2);
  ModelParams p = init_params(cfg, 31);
  Rng rng(32);
  const Vector x = random_vector(cfg.embed_dim, rng);
  const Vector h_prev = random_vector(cfg.hidden_dim, rng);
  const Vector proj = random_vector(cfg.hidden_dim, rng);

  const StepOutput out = step(p, cfg, x, h_prev, proj, 2);

  // Hand evaluation, scalar arithmetic only.
  const std::size_t H = cfg.hidden_dim;
  std::vector<double> g(H), a1(H), h1(H), a2(H), h2(H);
  for (std::size_t i = 0; i < H; ++i) {
    double acc = p.bg[i];
    for (std::size_t j = 0; j < H; ++j) acc += p.wg(i, j) * h_prev[j];
    g[i] = 1.0 / (1.0 + std::exp(-acc));
  }
  for (std::size_t i = 0; i < H; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) acc += p.ws(i, j) * x[j];
    for (std::size_t j = 0; j < H; ++j) acc += p.wh_rec(i, j) * h_prev[j];
    acc += g[i] * proj[i];
    acc += p.bh[0][i];
    a1[i] = acc;
    h1[i] = std::tanh(acc);
  }
  for (std::size_t i = 0; i < H; ++i) {
    double acc = p.bh[1][i];
    for (std::size_t j = 0; j < H; ++j) acc += p.wh_trans[0](i, j) * h1[j];
    a2[i] = acc;
    h2[i] = std::tanh(acc);
  }
  std::vector<double> logits(cfg.vocab_size);
  double max_logit = -1e300;
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    double acc = p.bd[i];
    for (std::size_t j = 0; j < H; ++j) acc += p.wd(i, j) * h2[j];
    logits[i] = acc;
    max_logit = std::max(max_logit, acc);
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l - max_logit);

  for (std::size_t i = 0; i < H; ++i) {
    CHECK(out.gate[i] == doctest::Approx(g[i]).epsilon(1e-12));
    CHECK(out.hidden[0][i] == doctest::Approx(h1[i]).epsilon(1e-12));
    CHECK(out.hidden[1][i] == doctest::Approx(h2[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    CHECK(out.y[i] == doctest::Approx(std::exp(logits[i] - max_logit) / z).epsilon(1e-10));
  }
}

TEST_CASE("N=1 + feed mode none reduces to a directly implemented standard RNN") {
  ModelConfig cfg = small_config(FeedMode::kNone, Activation::kTanh, 1);
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams p = init_params(cfg, 1000 + static_cast<std::uint64_t>(trial));
    const Vector feature = random_vector(cfg.feature_dim, rng);
    const std::vector<int> tokens = sample_tokens(cfg, rng, 1 + rng.below(5));
    const ForwardTrace trace = forward_sequence(p, cfg, tokens, feature);

    // Classic recurrence: h(t) = f(Ws x(t) + Wh h(t-1) + bh); y = softmax(Wd h + bd).
    std::vector<double> h(cfg.hidden_dim, 0.0);
    double max_abs_diff = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
      std::vector<double> hn(cfg.hidden_dim);
      for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
          acc += p.ws(i, j) * p.embedding(static_cast<std::size_t>(tokens[t]), j);
        }
        for (std::size_t j = 0; j < cfg.hidden_dim; ++j) acc += p.wh_rec(i, j) * h[j];
        acc += p.bh[0][i];
        hn[i] = std::tanh(acc);
      }
      h = hn;
      std::vector<double> logits(cfg.vocab_size);
      double mx = -1e300;
      for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
        double acc = p.bd[i];
        for (std::size_t j = 0; j < cfg.hidden_dim; ++j) acc += p.wd(i, j) * h[j];
        logits[i] = acc;
        mx = std::max(mx, acc);
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
        max_abs_diff = std::max(
            max_abs_diff, std::abs(trace.steps[t].y[i] - std::exp(logits[i] - mx) / z));
      }
    }
    CHECK(max_abs_diff < 1e-12);
  }
}

TEST_CASE("forward_sequence trace invariants") {
  ModelConfig cfg = small_config();
  ModelParams p = init_params(cfg, 5);
  Rng rng(6);
  const Vector feature = random_vector(cfg.feature_dim, rng);

  SUBCASE("shortest legal sequence [START, END] gives exactly one timestep") {
    const ForwardTrace trace = forward_sequence(p, cfg, {0, 1}, feature);
    CHECK(trace.steps.size() == 1);
  }
  SUBCASE("one-token and empty sequences are data errors") {
    CHECK_THROWS_AS(forward_sequence(p, cfg, {0}, feature), DataError);
    CHECK_THROWS_AS(forward_sequence(p, cfg, {}, feature), DataError);
  }
  SUBCASE("every y(t) sums to 1 within 1e-9; learned gate strictly inside (0,1)") {
    for (int trial = 0; trial < 100; ++trial) {
      ModelParams q = init_params(cfg, 200 + static_cast<std::uint64_t>(trial));
      const std::vector<int> tokens = sample_tokens(cfg, rng, 1 + rng.below(6));
      const Vector f = random_vector(cfg.feature_dim, rng);
      const ForwardTrace trace = forward_sequence(q, cfg, tokens, f);
      for (const auto& st : trace.steps) {
        double sum = 0.0;
        for (double v : st.y.v) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-9);
        for (double v : st.gate.v) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
      }
    }
  }
  SUBCASE("deterministic: same inputs give identical traces") {
    const std::vector<int> tokens{0, 3, 8, 1};
    const ForwardTrace t1 = forward_sequence(p, cfg, tokens, feature);
    const ForwardTrace t2 = forward_sequence(p, cfg, tokens, feature);
    REQUIRE(t1.steps.size() == t2.steps.size());
    for (std::size_t t = 0; t < t1.steps.size(); ++t) {
      CHECK(t1.steps[t].y == t2.steps[t].y);
      CHECK(t1.steps[t].gate == t2.steps[t].gate);
    }
  }
  SUBCASE("out-of-range token id is a data error") {
    CHECK_THROWS_AS(forward_sequence(p, cfg, {0, 99, 1}, feature), DataError);
    CHECK_THROWS_AS(forward_sequence(p, cfg, {0, -2, 1}, feature), DataError);
  }
  SUBCASE("feature dim mismatch is a data error") {
    CHECK_THROWS_AS(forward_sequence(p, cfg, {0, 3, 1}, Vector(cfg.feature_dim + 1)), DataError);
  }
}

TEST_CASE("feed mode none output is bit-independent of the feature vector") {
  ModelConfig cfg = small_config(FeedMode::kNone);
  ModelParams p = init_params(cfg, 77);
  Rng rng(78);
  const std::vector<int> tokens{0, 5, 9, 4, 1};
  const Vector f1 = random_vector(cfg.feature_dim, rng);
  const Vector f2 = random_vector(cfg.feature_dim, rng, 50.0, 100.0);
  const ForwardTrace a = forward_sequence(p, cfg, tokens, f1);
  const ForwardTrace b = forward_sequence(p, cfg, tokens, f2);
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].y == b.steps[t].y);
    for (std::size_t k = 0; k < a.steps[t].hidden.size(); ++k) {
      CHECK(a.steps[t].hidden[k] == b.steps[t].hidden[k]);
    }
  }
}

TEST_CASE("cross_entropy_loss: uniform, perfect, hand-computed mean") {
  ModelConfig cfg = small_config();
  cfg.vocab_size = 4;
  ModelParams p = ModelParams::zeros(cfg);
  Rng rng(9);
  const Vector feature = random_vector(cfg.feature_dim, rng);

  SUBCASE("zero network predicts uniformly: loss is exactly ln V") {
    const std::vector<int> tokens{0, 3, 2, 1};
    const ForwardTrace trace = forward_sequence(p, cfg, tokens, feature);
    const double loss = cross_entropy_loss(trace, targets_of(tokens));
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("probability one on the target gives loss 0; hand case (ln2+ln4)/2") {
    ForwardTrace trace;
    trace.steps.resize(2);
    trace.steps[0].y = Vector{0.5, 0.25, 0.125, 0.125};
    trace.steps[1].y = Vector{0.25, 0.25, 0.25, 0.25};
    const double loss = cross_entropy_loss(trace, {0, 2});
    CHECK(loss == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));

    ForwardTrace perfect;
    perfect.steps.resize(1);
    perfect.steps[0].y = Vector{0.0, 1.0, 0.0, 0.0};
    CHECK(cross_entropy_loss(perfect, {1}) == 0.0);
  }
  SUBCASE("target out of range is fatal") {
    const std::vector<int> tokens{0, 3, 1};
    const ForwardTrace trace = forward_sequence(p, cfg, tokens, feature);
    CHECK_THROWS_AS(cross_entropy_loss(trace, {3, 99}), DataError);
  }
  SUBCASE("target count mismatch is fatal") {
    const std::vector<int> tokens{0, 3, 1};
    const ForwardTrace trace = forward_sequence(p, cfg, tokens, feature);
    CHECK_THROWS_AS(cross_entropy_loss(trace, {3}), DataError);
  }
}

TEST_CASE("shared transition weights alias the recurrent matrix") {
  ModelConfig cfg = small_config(FeedMode::kLearnedGate, Activation::kTanh, 3);
  cfg.share_transition_weights = true;
  ModelParams p = init_params(cfg, 55);
  CHECK(p.wh_trans.empty());
  CHECK(&transition_weight(p, cfg, 2) == &p.wh_rec);
  CHECK(&transition_weight(p, cfg, 3) == &p.wh_rec);

  // Forward with sharing equals forward with untied weights all set equal.
  ModelConfig untied = cfg;
  untied.share_transition_weights = false;
  ModelParams q = ModelParams::zeros(untied);
  q.embedding = p.embedding;
  q.ws = p.ws;
  q.wh_rec = p.wh_rec;
  for (auto& w : q.wh_trans) w = p.wh_rec;
  q.wd = p.wd;
  q.wi = p.wi;
  q.wg = p.wg;
  q.bh = p.bh;
  q.bd = p.bd;
  q.bi = p.bi;
  q.bg = p.bg;

  Rng rng(56);
  const Vector feature = random_vector(cfg.feature_dim, rng);
  const std::vector<int> tokens{0, 4, 6, 1};
  const ForwardTrace a = forward_sequence(p, cfg, tokens, feature);
  const ForwardTrace b = forward_sequence(q, untied, tokens, feature);
  for (std::size_t t = 0; t < a.steps.size(); ++t) CHECK(a.steps[t].y == b.steps[t].y);
}

TEST_CASE("targets_of shifts by one") {
  const std::vector<int> tokens{0, 5, 7, 1};
  CHECK(targets_of(tokens) == std::vector<int>{5, 7, 1});
}

TEST_CASE("l2_penalty covers weight matrices only") {
  ModelConfig cfg = small_config();
  ModelParams p = ModelParams::zeros(cfg);
  p.ws(0, 0) = 2.0;       // weight: counted
  p.embedding(1, 1) = 5.0;  // embedding: not counted
  p.bd[0] = 7.0;          // bias: not counted
  CHECK(l2_penalty(p, cfg) == 4.0);

  p.wg(2, 2) = 3.0;
  p.wi(1, 1) = 1.0;
  CHECK(l2_penalty(p, cfg) == 14.0);
}

TEST_CASE("activation and feed mode names round-trip") {
  CHECK(parse_activation("tanh") == Activation::kTanh);
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK_THROWS_AS(parse_activation("selu"), ConfigError);
  for (auto m : {FeedMode::kLearnedGate, FeedMode::kFirstStepOnly, FeedMode::kAlways,
                 FeedMode::kNone}) {
    CHECK(parse_feed_mode(feed_mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_feed_mode("sometimes"), ConfigError);
}
