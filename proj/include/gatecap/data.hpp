#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gatecap/tensor.hpp"

namespace gatecap {

// Bidirectional token <-> id map. Ids 0..2 are reserved; corpus tokens start
// at 3, ordered by descending frequency then lexicographically.
struct Vocabulary {
  static constexpr int kStart = 0;
  static constexpr int kEnd = 1;
  static constexpr int kUnk = 2;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  std::size_t min_count = 0;

  std::size_t size() const { return id_to_token.size(); }
  // kUnk for out-of-vocabulary tokens and for the reserved surface forms
  // themselves; plain text can never produce the START/END control ids.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
};

// Lowercased whitespace tokenization, no other normalization.
std::vector<std::string> tokenize(const std::string& text);

Vocabulary build_vocab(const std::vector<std::string>& caption_lines, std::size_t min_count);

// [START] + token ids (UNK for OOV) + [END]
std::vector<int> encode_sentence(const Vocabulary& vocab, const std::string& text);

// Surface forms for a token-id sequence, START/END boundary tokens dropped.
std::vector<std::string> decode_tokens(const Vocabulary& vocab, const std::vector<int>& ids);

struct CaptionGroup {
  std::string image_id;
  std::vector<std::string> captions;
};

// TSV `image_id<TAB>caption`; a trailing "#<digits>" on the id is stripped
// before grouping. Input order is preserved.
std::vector<CaptionGroup> load_captions(const std::string& path);

std::string strip_caption_index(const std::string& image_id);

struct FeatureStore {
  std::size_t dim = 0;
  std::vector<std::string> ids;  // insertion order
  std::unordered_map<std::string, Vector> features;

  bool has(const std::string& id) const { return features.count(id) != 0; }
  const Vector& at(const std::string& id) const;
  std::vector<std::string> sorted_ids() const;
};

enum class FeatureFormat { kTsv, kBinary };

// TSV: `image_id<TAB>v1 v2 ... vF`. Binary: magic "IMGF", u32 version 1,
// u32 count, u32 dim, then per record u32 id length, id bytes, dim
// little-endian f32 values. Values are widened to f64 in memory.
FeatureStore load_features(const std::string& path, FeatureFormat format);
// Picks the format by sniffing the magic bytes.
FeatureStore load_features_auto(const std::string& path);

void save_features_tsv(const FeatureStore& store, const std::string& path);
void save_features_binary(const FeatureStore& store, const std::string& path);

struct CaptionedImage {
  std::string image_id;
  std::vector<std::vector<int>> captions;  // each START ... END
  Vector feature;
};

struct Dataset {
  std::vector<CaptionedImage> train, dev, test;
};

struct SplitSpec {
  std::size_t dev_n = 1000;
  std::size_t test_n = 1000;
  std::uint64_t seed = 1;
  // Explicit id lists override the seeded shuffle when present.
  std::optional<std::vector<std::string>> dev_ids;
  std::optional<std::vector<std::string>> test_ids;
};

struct IdSplit {
  std::vector<std::string> train, dev, test;
};

// Seeded shuffle of the ids; first dev_n to dev, next test_n to test, rest
// to train. Splits are disjoint by construction.
IdSplit split_dataset(const std::vector<std::string>& image_ids, const SplitSpec& spec);

struct AssembledData {
  Dataset dataset;
  Vocabulary vocab;
  IdSplit split;
};

// Joins caption groups with features, splits by image id, builds the
// vocabulary from the training captions only, and encodes every caption.
AssembledData assemble_dataset(const std::vector<CaptionGroup>& groups,
                               const FeatureStore& store, const SplitSpec& spec,
                               std::size_t min_count);

// Encodes the given image ids, in order, against a fixed vocabulary — the
// resume/evaluation path, where the vocabulary and split come from a
// checkpoint. Ids missing from the caption groups or feature store are fatal.
std::vector<CaptionedImage> encode_images(const std::vector<CaptionGroup>& groups,
                                          const FeatureStore& store,
                                          const std::vector<std::string>& image_ids,
                                          const Vocabulary& vocab);

// Synthetic desk-scale corpus: each image has (color, object, scene)
// attributes one-hot encoded in the first 12 feature coordinates, Gaussian
// noise elsewhere, and 5 templated captions naming all three attributes.
struct SyntheticCorpus {
  std::vector<CaptionGroup> captions;
  FeatureStore features;
  std::vector<std::array<int, 3>> attributes;  // (color, object, scene) per image
};

extern const std::array<const char*, 4> kSynthColors;
extern const std::array<const char*, 4> kSynthObjects;
extern const std::array<const char*, 4> kSynthScenes;

SyntheticCorpus gen_synthetic(std::size_t n_images, std::size_t feature_dim, std::uint64_t seed);

}  // namespace gatecap
