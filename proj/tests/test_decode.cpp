#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gatecap/data.hpp"
#include "gatecap/decode.hpp"
#include "gatecap/error.hpp"
#include "gatecap/model.hpp"
#include "gatecap/optimizer.hpp"
#include "gatecap/rng.hpp"

using namespace gatecap;

namespace {

ModelConfig small_config(std::size_t vocab = 9) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  cfg.depth = 2;
  cfg.feature_dim = 6;
  cfg.activation = Activation::kTanh;
  cfg.feed_mode = FeedMode::kLearnedGate;
  return cfg;
}

Vector random_feature(std::size_t n, Rng& rng) {
  Vector v(n);
  for (auto& x : v.v) x = rng.normal(1.0);
  return v;
}

using Corpus = std::vector<std::vector<int>>;
using RefSets = std::vector<std::vector<std::vector<int>>>;

// ---------------------------------------------------------------------------
// Scratch BLEU scorer used as an oracle. Deliberately different machinery from
// the library: n-grams are compared by scanning subsequences (no hash keys),
// and the geometric mean uses pow on the product instead of summed logs.
// ---------------------------------------------------------------------------

bool span_eq(const std::vector<int>& a, std::size_t i, const std::vector<int>& b,
             std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (a[i + k] != b[j + k]) return false;
  }
  return true;
}

std::uint64_t occurrences(const std::vector<int>& hay, const std::vector<int>& pat,
                          std::size_t pat_pos, std::size_t n) {
  if (hay.size() < n) return 0;
  std::uint64_t count = 0;
  for (std::size_t i = 0; i + n <= hay.size(); ++i) {
    count += span_eq(hay, i, pat, pat_pos, n);
  }
  return count;
}

struct ScratchBleu {
  double b[4] = {0, 0, 0, 0};
  double bp = 0.0;
  std::uint64_t matched[4] = {0, 0, 0, 0};
  std::uint64_t total[4] = {0, 0, 0, 0};
  std::uint64_t c = 0, r = 0;
};

ScratchBleu scratch_bleu(const Corpus& cands, const RefSets& refs) {
  ScratchBleu out;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& cand = cands[i];
    out.c += cand.size();
    std::uint64_t best_len = refs[i][0].size();
    const auto dist = [&](std::uint64_t len) {
      return len > cand.size() ? len - cand.size() : cand.size() - len;
    };
    for (const auto& ref : refs[i]) {
      const std::uint64_t len = ref.size();
      if (dist(len) < dist(best_len) || (dist(len) == dist(best_len) && len < best_len)) {
        best_len = len;
      }
    }
    out.r += best_len;

    for (std::size_t n = 1; n <= 4; ++n) {
      if (cand.size() < n) continue;
      for (std::size_t pos = 0; pos + n <= cand.size(); ++pos) {
        bool first = true;  // count each distinct n-gram once, at first sight
        for (std::size_t prev = 0; prev < pos && first; ++prev) {
          first = !span_eq(cand, prev, cand, pos, n);
        }
        if (!first) continue;
        const std::uint64_t in_cand = occurrences(cand, cand, pos, n);
        std::uint64_t in_refs = 0;
        for (const auto& ref : refs[i]) {
          in_refs = std::max(in_refs, occurrences(ref, cand, pos, n));
        }
        out.matched[n - 1] += std::min(in_cand, in_refs);
        out.total[n - 1] += in_cand;
      }
    }
  }
  out.bp = out.c == 0 ? 0.0
           : out.c > out.r
               ? 1.0
               : std::exp(1.0 - static_cast<double>(out.r) / static_cast<double>(out.c));
  for (std::size_t n = 0; n < 4; ++n) {
    double product = 1.0;
    bool zero = false;
    for (std::size_t k = 0; k <= n; ++k) {
      if (out.total[k] == 0 || out.matched[k] == 0) {
        zero = true;
        break;
      }
      product *= static_cast<double>(out.matched[k]) / static_cast<double>(out.total[k]);
    }
    out.b[n] = zero ? 0.0
                    : 100.0 * out.bp * std::pow(product, 1.0 / static_cast<double>(n + 1));
  }
  return out;
}

}  // namespace

TEST_CASE("greedy_decode: a model rigged to emit END gives an empty caption") {
  const ModelConfig cfg = small_config();
  ModelParams p = ModelParams::zeros(cfg);
  p.bd[static_cast<std::size_t>(Vocabulary::kEnd)] = 1.0;
  Rng rng(1);
  const DecodeResult r = greedy_decode(p, cfg, random_feature(cfg.feature_dim, rng));
  CHECK(r.ids.empty());
  CHECK_FALSE(r.truncated);
}

TEST_CASE("greedy_decode: argmax ties break toward the lowest id") {
  ModelConfig cfg = small_config();
  cfg.max_decode_len = 5;
  ModelParams p = ModelParams::zeros(cfg);
  // Two non-reserved ids tie for the maximum at every step (the zero weights
  // make the state stationary), so the decoder must emit the lower one.
  p.bd[4] = 3.0;
  p.bd[7] = 3.0;
  Rng rng(2);
  const DecodeResult r = greedy_decode(p, cfg, random_feature(cfg.feature_dim, rng));
  REQUIRE(r.ids.size() == cfg.max_decode_len);
  for (int id : r.ids) CHECK(id == 4);
  CHECK(r.truncated);
}

TEST_CASE("greedy_decode: deterministic for fixed params and feature") {
  const ModelConfig cfg = small_config();
  const ModelParams p = init_params(cfg, 19);
  Rng rng(3);
  const Vector f = random_feature(cfg.feature_dim, rng);
  const DecodeResult a = greedy_decode(p, cfg, f);
  const DecodeResult b = greedy_decode(p, cfg, f);
  CHECK(a.ids == b.ids);
  CHECK(a.truncated == b.truncated);
  CHECK(a.ids.size() <= cfg.max_decode_len);
}

TEST_CASE("greedy_decode: feature width is checked") {
  const ModelConfig cfg = small_config();
  const ModelParams p = init_params(cfg, 4);
  CHECK_THROWS_AS(greedy_decode(p, cfg, Vector(cfg.feature_dim + 1)), DataError);
}

TEST_CASE("modified_precision: the classic clipped-unigram example scores 2/7") {
  // candidate: the the the the the the the / reference: the cat is on the mat
  const Corpus cands{{10, 10, 10, 10, 10, 10, 10}};
  const RefSets refs{{{10, 11, 12, 13, 10, 14}}};
  const auto [matched, total] = modified_precision(cands, refs, 1);
  CHECK(matched == 2);  // "the" appears twice in the reference
  CHECK(total == 7);
}

TEST_CASE("modified_precision: self-match is perfect at every order") {
  const std::vector<int> sent{3, 4, 5, 4, 6};
  const Corpus cands{sent};
  const RefSets refs{{sent}};
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto [matched, total] = modified_precision(cands, refs, n);
    CHECK(matched == total);
    CHECK(total == sent.size() - n + 1);
  }
}

TEST_CASE("modified_precision: disjoint tokens match nothing") {
  const Corpus cands{{3, 4, 5}};
  const RefSets refs{{{6, 7, 8}}};
  const auto [matched, total] = modified_precision(cands, refs, 1);
  CHECK(matched == 0);
  CHECK(total == 3);
}

TEST_CASE("modified_precision: clip uses the max count over the reference set") {
  const Corpus cands{{5, 5, 5}};
  const RefSets refs{{{5, 5}, {5}}};
  const auto [matched, total] = modified_precision(cands, refs, 1);
  CHECK(matched == 2);  // best single reference holds two
  CHECK(total == 3);
}

TEST_CASE("modified_precision: corpus-wide sums and short-candidate handling") {
  const Corpus cands{{10, 10, 10, 10, 10, 10, 10}, {3, 4}};
  const RefSets refs{{{10, 11, 12, 13, 10, 14}}, {{3, 4, 5}}};
  const auto [m1, t1] = modified_precision(cands, refs, 1);
  CHECK(m1 == 2 + 2);
  CHECK(t1 == 7 + 2);
  // The two-token candidate contributes no trigrams at all.
  const auto [m3, t3] = modified_precision(cands, refs, 3);
  CHECK(t3 == 5);  // only from the 7-token candidate
  CHECK(m3 == 0);

  CHECK_THROWS_AS(modified_precision(cands, {refs[0]}, 1), DataError);
}

TEST_CASE("brevity_penalty hand values") {
  CHECK(brevity_penalty(10, 8) == 1.0);
  CHECK(brevity_penalty(5, 5) == 1.0);  // c == r: exp(0)
  CHECK(brevity_penalty(6, 7) == std::exp(1.0 - 7.0 / 6.0));
  CHECK(brevity_penalty(6, 7) == doctest::Approx(0.8465).epsilon(1e-4));
  CHECK(brevity_penalty(0, 5) == 0.0);
}

TEST_CASE("corpus_bleu: identical candidates score exactly 100 everywhere") {
  const Corpus cands{{3, 4, 5, 6, 7}, {8, 9, 3}};
  const RefSets refs{{{4, 5}, {3, 4, 5, 6, 7}}, {{8, 9, 3}}};
  const BleuReport rep = corpus_bleu(cands, refs);
  for (std::size_t n = 0; n < 4; ++n) CHECK(rep.bleu[n] == 100.0);
  CHECK(rep.bp == 1.0);
  CHECK(rep.candidate_len == rep.reference_len);
}

TEST_CASE("corpus_bleu: single-token candidates zero out B-2 and beyond") {
  const Corpus cands{{5}, {6}};
  const RefSets refs{{{5}}, {{7}}};
  const BleuReport rep = corpus_bleu(cands, refs);
  CHECK(rep.bleu[0] == doctest::Approx(50.0).epsilon(1e-12));  // p1 = 1/2, BP = 1
  CHECK(rep.bleu[1] == 0.0);
  CHECK(rep.bleu[2] == 0.0);
  CHECK(rep.bleu[3] == 0.0);
  CHECK(rep.totals[1] == 0);
}

TEST_CASE("corpus_bleu: zero precision at order k kills B-n for n >= k") {
  // Unigrams match but no bigram does.
  const Corpus cands{{3, 4}};
  const RefSets refs{{{4, 3}}};
  const BleuReport rep = corpus_bleu(cands, refs);
  CHECK(rep.bleu[0] == 100.0);  // both unigrams, c == r
  CHECK(rep.bleu[1] == 0.0);
  CHECK(rep.bleu[2] == 0.0);
  CHECK(rep.bleu[3] == 0.0);
}

TEST_CASE("corpus_bleu: the closest reference length feeds BP, ties go shorter") {
  // Candidate length 4; references of length 3 and 5 tie on distance -> pick 3,
  // so c > r and BP stays 1.
  const Corpus cands{{3, 4, 5, 6}};
  const RefSets refs{{{3, 4, 5}, {3, 4, 5, 6, 7}}};
  const BleuReport rep = corpus_bleu(cands, refs);
  CHECK(rep.reference_len == 3);
  CHECK(rep.bp == 1.0);

  // Candidate length 4; reference lengths 6 and 5: 5 is strictly closer.
  const Corpus cands2{{3, 4, 5, 6}};
  const RefSets refs2{{{3, 4, 5, 6, 7, 8}, {3, 4, 5, 6, 7}}};
  const BleuReport rep2 = corpus_bleu(cands2, refs2);
  CHECK(rep2.reference_len == 5);
  CHECK(rep2.bp == std::exp(1.0 - 5.0 / 4.0));
}

TEST_CASE("corpus_bleu: report is invariant under permuting the pairs") {
  Rng rng(23);
  Corpus cands;
  RefSets refs;
  for (int i = 0; i < 6; ++i) {
    std::vector<int> cand(2 + rng.below(5));
    for (auto& t : cand) t = 3 + static_cast<int>(rng.below(5));
    cands.push_back(cand);
    std::vector<std::vector<int>> rs(1 + rng.below(2));
    for (auto& ref : rs) {
      ref.resize(2 + rng.below(5));
      for (auto& t : ref) t = 3 + static_cast<int>(rng.below(5));
    }
    refs.push_back(rs);
  }
  const BleuReport a = corpus_bleu(cands, refs);

  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
  Corpus cands2;
  RefSets refs2;
  for (std::size_t i : order) {
    cands2.push_back(cands[i]);
    refs2.push_back(refs[i]);
  }
  const BleuReport b = corpus_bleu(cands2, refs2);
  for (std::size_t n = 0; n < 4; ++n) {
    CHECK(a.bleu[n] == b.bleu[n]);
    CHECK(a.matches[n] == b.matches[n]);
    CHECK(a.totals[n] == b.totals[n]);
  }
  CHECK(a.bp == b.bp);
  CHECK(a.candidate_len == b.candidate_len);
  CHECK(a.reference_len == b.reference_len);
}

TEST_CASE("corpus_bleu agrees with the scratch scorer on random corpora") {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(100 + trial);
    Corpus cands;
    RefSets refs;
    const std::size_t n_pairs = 3 + rng.below(4);
    for (std::size_t i = 0; i < n_pairs; ++i) {
      // Small token range so higher-order n-grams actually collide.
      std::vector<int> cand(1 + rng.below(8));
      for (auto& t : cand) t = 3 + static_cast<int>(rng.below(6));
      if (trial == 3 && i == 0) cand.clear();  // one empty candidate, once
      cands.push_back(cand);
      std::vector<std::vector<int>> rs(1 + rng.below(3));
      for (auto& ref : rs) {
        ref.resize(1 + rng.below(8));
        for (auto& t : ref) t = 3 + static_cast<int>(rng.below(6));
      }
      refs.push_back(rs);
    }

    const BleuReport got = corpus_bleu(cands, refs);
    const ScratchBleu want = scratch_bleu(cands, refs);
    CHECK(got.candidate_len == want.c);
    CHECK(got.reference_len == want.r);
    CHECK(got.bp == doctest::Approx(want.bp).epsilon(1e-12));
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(got.matches[n] == want.matched[n]);
      CHECK(got.totals[n] == want.total[n]);
      CHECK(std::abs(got.bleu[n] - want.b[n]) < 1e-9);
      CHECK(got.bleu[n] >= 0.0);
      CHECK(got.bleu[n] <= 100.0);
    }
  }
}

TEST_CASE("corpus_bleu error contracts") {
  CHECK_THROWS_AS(corpus_bleu({}, {}), DataError);
  CHECK_THROWS_AS(corpus_bleu({{3}}, {}), DataError);
  CHECK_THROWS_AS(corpus_bleu({{3}}, {{}}), DataError);  // no references
}

TEST_CASE("BleuReport::line renders four decimals and raw lengths") {
  BleuReport rep;
  rep.bleu[0] = 12.3456789;
  rep.bleu[1] = 0.0;
  rep.bleu[2] = 50.0;
  rep.bleu[3] = 100.0;
  rep.bp = 0.846481724890614;
  rep.candidate_len = 6;
  rep.reference_len = 7;
  CHECK(rep.line() ==
        "B-1 12.3457 B-2 0.0000 B-3 50.0000 B-4 100.0000 BP 0.8465 c 6 r 7");
}

TEST_CASE("an overfit one-pair model reproduces its caption and scores 100") {
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 16;
  cfg.depth = 2;
  cfg.feature_dim = 12;
  cfg.activation = Activation::kTanh;
  cfg.feed_mode = FeedMode::kLearnedGate;

  CaptionedImage img;
  img.image_id = "only";
  img.captions = {{0, 3, 4, 5, 1}};
  img.feature = Vector(cfg.feature_dim);
  img.feature[0] = 2.0;

  TrainConfig tcfg;
  tcfg.dropout_p = 0.0;
  tcfg.l2_coeff = 0.0;
  tcfg.learning_rate = 0.01;

  ModelParams p = init_params(cfg, 29);
  RmsPropState state = RmsPropState::zeros(cfg);
  const std::vector<SampleRef> batch{{&img.captions[0], &img.feature}};
  const std::vector<std::uint64_t> seeds{0};
  double loss = 0.0;
  for (int it = 0; it < 300; ++it) {
    loss = train_minibatch(p, state, batch, cfg, tcfg, tcfg.learning_rate, seeds);
  }
  REQUIRE(loss < 0.1);

  const DecodeResult dec = greedy_decode(p, cfg, img.feature);
  REQUIRE(dec.ids == std::vector<int>{3, 4, 5});
  CHECK_FALSE(dec.truncated);

  // evaluate_model strips START/END off the stored references, so the decoded
  // caption matches its reference exactly.
  const BleuReport rep = evaluate_model(p, cfg, {img});
  CHECK(rep.bleu[0] == 100.0);
  CHECK(rep.bleu[1] == 100.0);
  CHECK(rep.bleu[2] == 100.0);
  CHECK(rep.bleu[3] == 0.0);  // a 3-token caption has no 4-grams
  CHECK(rep.candidate_len == 3);
  CHECK(rep.reference_len == 3);

  const BleuReport again = evaluate_model(p, cfg, {img});
  for (std::size_t n = 0; n < 4; ++n) CHECK(rep.bleu[n] == again.bleu[n]);
}

TEST_CASE("evaluate_model: empty split is fatal") {
  const ModelConfig cfg = small_config();
  const ModelParams p = init_params(cfg, 2);
  CHECK_THROWS_AS(evaluate_model(p, cfg, {}), DataError);
}
