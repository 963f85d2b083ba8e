#include "gatecap/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <unordered_map>

#include "gatecap/error.hpp"

namespace gatecap {

DecodeResult greedy_decode(const ModelParams& params, const ModelConfig& cfg,
                           const Vector& feature) {
  if (feature.v.size() != cfg.feature_dim) {
    throw DataError("greedy_decode: feature has dim " + std::to_string(feature.v.size()) +
                    ", model expects " + std::to_string(cfg.feature_dim));
  }
  const Vector projected = [&] {
    Vector p = matvec(params.wi, feature);
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] += params.bi.v[i];
    return p;
  }();

  DecodeResult result;
  Vector h_prev(cfg.hidden_dim);
  int token = Vocabulary::kStart;
  for (std::size_t t = 1; t <= cfg.max_decode_len; ++t) {
    Vector x(cfg.embed_dim);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      x.v[j] = params.embedding(static_cast<std::size_t>(token), j);
    }
    StepOutput out = step(params, cfg, x, h_prev, projected, t);
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.y.v.size(); ++i) {
      if (out.y.v[i] > out.y.v[best]) best = i;
    }
    token = static_cast<int>(best);
    if (token == Vocabulary::kEnd) return result;
    result.ids.push_back(token);
    h_prev = std::move(out.hidden.back());
  }
  result.truncated = true;
  return result;
}

namespace {

// n-gram key: token ids joined by a separator that cannot appear in a
// decimal rendering of an id.
std::string ngram_key(const std::vector<int>& seq, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key.push_back('\x1e');
    key += std::to_string(seq[start + i]);
  }
  return key;
}

std::unordered_map<std::string, std::uint64_t> ngram_counts(const std::vector<int>& seq,
                                                            std::size_t n) {
  std::unordered_map<std::string, std::uint64_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t start = 0; start + n <= seq.size(); ++start) {
    ++counts[ngram_key(seq, start, n)];
  }
  return counts;
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> modified_precision(
    const std::vector<std::vector<int>>& candidates,
    const std::vector<std::vector<std::vector<int>>>& references, std::size_t n) {
  if (candidates.size() != references.size()) {
    throw DataError("modified_precision: candidate/reference count mismatch");
  }
  std::uint64_t matched = 0;
  std::uint64_t total = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto cand_counts = ngram_counts(candidates[c], n);
    std::unordered_map<std::string, std::uint64_t> max_ref;
    for (const auto& ref : references[c]) {
      for (const auto& [key, count] : ngram_counts(ref, n)) {
        auto& slot = max_ref[key];
        slot = std::max(slot, count);
      }
    }
    for (const auto& [key, count] : cand_counts) {
      total += count;
      auto it = max_ref.find(key);
      if (it != max_ref.end()) matched += std::min(count, it->second);
    }
  }
  return {matched, total};
}

double brevity_penalty(std::uint64_t candidate_len, std::uint64_t reference_len) {
  if (candidate_len == 0) {
    std::fprintf(stderr, "warning: empty candidate corpus, brevity penalty set to 0\n");
    return 0.0;
  }
  if (candidate_len > reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

std::string BleuReport::line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "B-1 %.4f B-2 %.4f B-3 %.4f B-4 %.4f BP %.4f c %llu r %llu", bleu[0], bleu[1],
                bleu[2], bleu[3], bp, static_cast<unsigned long long>(candidate_len),
                static_cast<unsigned long long>(reference_len));
  return buf;
}

BleuReport corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references) {
  if (candidates.empty()) throw DataError("corpus_bleu: empty corpus");
  if (candidates.size() != references.size()) {
    throw DataError("corpus_bleu: candidate/reference count mismatch");
  }

  BleuReport report;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (references[c].empty()) {
      throw DataError("corpus_bleu: candidate " + std::to_string(c) + " has no references");
    }
    const std::uint64_t clen = candidates[c].size();
    report.candidate_len += clen;
    // Effective reference length: the reference closest to the candidate
    // length; on a tie, the shorter one.
    std::uint64_t best_len = references[c][0].size();
    for (const auto& ref : references[c]) {
      const std::uint64_t rlen = ref.size();
      const auto dist = [&](std::uint64_t L) {
        return L > clen ? L - clen : clen - L;
      };
      if (dist(rlen) < dist(best_len) || (dist(rlen) == dist(best_len) && rlen < best_len)) {
        best_len = rlen;
      }
    }
    report.reference_len += best_len;
  }

  report.bp = brevity_penalty(report.candidate_len, report.reference_len);
  for (std::size_t k = 0; k < 4; ++k) {
    auto [matched, total] = modified_precision(candidates, references, k + 1);
    report.matches[k] = matched;
    report.totals[k] = total;
    report.precision[k] = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
  }
  for (std::size_t n = 0; n < 4; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t k = 0; k <= n; ++k) {
      if (report.precision[k] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(report.precision[k]);
    }
    report.bleu[n] =
        zero ? 0.0 : 100.0 * report.bp * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return report;
}

BleuReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<CaptionedImage>& split) {
  if (split.empty()) throw DataError("evaluate_model: empty split");
  std::vector<std::vector<int>> candidates;
  std::vector<std::vector<std::vector<int>>> references;
  candidates.reserve(split.size());
  references.reserve(split.size());
  for (const auto& img : split) {
    candidates.push_back(greedy_decode(params, cfg, img.feature).ids);
    std::vector<std::vector<int>> refs;
    refs.reserve(img.captions.size());
    for (const auto& cap : img.captions) {
      // Stored captions carry START ... END; strip both for scoring.
      refs.emplace_back(cap.begin() + 1, cap.end() - 1);
    }
    references.push_back(std::move(refs));
  }
  return corpus_bleu(candidates, references);
}

}  // namespace gatecap
