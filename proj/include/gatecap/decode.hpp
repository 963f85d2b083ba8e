#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gatecap/data.hpp"
#include "gatecap/model.hpp"

namespace gatecap {

struct DecodeResult {
  std::vector<int> ids;  // generated tokens, START/END excluded
  bool truncated = false;
};

// Greedy argmax decode from the start token, no dropout. Ties pick the lowest
// token id; generation stops at the end token or after cfg.max_decode_len
// emitted tokens (then truncated is set).
DecodeResult greedy_decode(const ModelParams& params, const ModelConfig& cfg,
                           const Vector& feature);

// Corpus-wide clipped n-gram counts: (matched, total) over all candidates,
// each candidate's n-gram counts clipped by the max count across its own
// reference set.
std::pair<std::uint64_t, std::uint64_t> modified_precision(
    const std::vector<std::vector<int>>& candidates,
    const std::vector<std::vector<std::vector<int>>>& references, std::size_t n);

// 1 if c > r, else exp(1 - r/c); c == 0 gives 0.
double brevity_penalty(std::uint64_t candidate_len, std::uint64_t reference_len);

struct BleuReport {
  double bleu[4] = {0, 0, 0, 0};       // B-1..B-4, 0..100 scale
  double precision[4] = {0, 0, 0, 0};  // unclipped ratio p_k in [0,1]
  std::uint64_t matches[4] = {0, 0, 0, 0};
  std::uint64_t totals[4] = {0, 0, 0, 0};
  double bp = 0.0;
  std::uint64_t candidate_len = 0;
  std::uint64_t reference_len = 0;

  std::string line() const;  // "B-1 <x> B-2 <x> B-3 <x> B-4 <x> BP <x> c <n> r <n>"
};

// Corpus BLEU with geometric mean of modified precisions and brevity penalty.
// Reference length uses, per candidate, the reference closest in length
// (ties resolved toward the shorter). No smoothing: a zero precision at any
// order k forces B-n = 0 for all n >= k.
BleuReport corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references);

// Greedy-decodes every image in the split and scores against all its
// reference captions (START/END stripped).
BleuReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<CaptionedImage>& split);

}  // namespace gatecap
