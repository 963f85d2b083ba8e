#include "gatecap/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "gatecap/error.hpp"
#include "gatecap/rng.hpp"

namespace gatecap {

namespace {

const char* kReserved[3] = {"<start>", "<end>", "<unk>"};

bool is_reserved_surface(const std::string& t) {
  return t == kReserved[0] || t == kReserved[1] || t == kReserved[2];
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

}  // namespace

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  // Reserved surfaces in raw text map to UNK: corpus tokens must never turn
  // into the START/END control ids.
  if (it == token_to_id.end() || it->second < 3) return kUnk;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size())
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  return id_to_token[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& caption_lines, std::size_t min_count) {
  if (caption_lines.empty()) throw DataError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& line : caption_lines) {
    for (auto& tok : tokenize(line)) {
      if (is_reserved_surface(tok)) continue;  // text can never inject reserved ids
      freq[tok]++;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  kept.reserve(freq.size());
  for (auto& [tok, n] : freq) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_count = min_count;
  v.id_to_token = {kReserved[0], kReserved[1], kReserved[2]};
  for (auto& [tok, n] : kept) v.id_to_token.push_back(tok);
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

std::vector<int> encode_sentence(const Vocabulary& vocab, const std::string& text) {
  std::vector<int> out = {Vocabulary::kStart};
  for (auto& tok : tokenize(text)) out.push_back(vocab.id(tok));
  out.push_back(Vocabulary::kEnd);
  return out;
}

std::vector<std::string> decode_tokens(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kStart || id == Vocabulary::kEnd) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::string strip_caption_index(const std::string& image_id) {
  const std::size_t pos = image_id.rfind('#');
  if (pos == std::string::npos || pos + 1 == image_id.size()) return image_id;
  for (std::size_t i = pos + 1; i < image_id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(image_id[i]))) return image_id;
  }
  return image_id.substr(0, pos);
}

std::vector<CaptionGroup> load_captions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open captions file: " + path);
  std::vector<CaptionGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    const std::string id = strip_caption_index(line.substr(0, tab));
    const std::string caption = line.substr(tab + 1);
    if (id.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": empty image id");
    if (tokenize(caption).empty())
      warn(path + ":" + std::to_string(lineno) + ": empty caption for image " + id);
    auto it = index.find(id);
    if (it == index.end()) {
      index[id] = groups.size();
      groups.push_back(CaptionGroup{id, {caption}});
    } else {
      groups[it->second].captions.push_back(caption);
    }
  }
  return groups;
}

const Vector& FeatureStore::at(const std::string& id) const {
  auto it = features.find(id);
  if (it == features.end()) throw DataError("feature store: unknown image id '" + id + "'");
  return it->second;
}

std::vector<std::string> FeatureStore::sorted_ids() const {
  std::vector<std::string> out = ids;
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void store_insert(FeatureStore& store, const std::string& id, Vector vec, const char* where) {
  auto it = store.features.find(id);
  if (it != store.features.end()) {
    warn(std::string(where) + ": duplicate image id '" + id + "', last one wins");
    it->second = std::move(vec);
  } else {
    store.ids.push_back(id);
    store.features.emplace(id, std::move(vec));
  }
}

FeatureStore load_features_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file: " + path);
  FeatureStore store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    const std::string id = line.substr(0, tab);
    Vector vec;
    std::istringstream vs(line.substr(tab + 1));
    double x;
    while (vs >> x) {
      if (!std::isfinite(x))
        throw DataError(path + ":" + std::to_string(lineno) + ": non-finite feature value");
      vec.v.push_back(x);
    }
    if (!vs.eof())
      throw DataError(path + ":" + std::to_string(lineno) + ": unparsable feature value");
    if (vec.size() == 0)
      throw DataError(path + ":" + std::to_string(lineno) + ": no feature values");
    if (store.dim == 0) {
      store.dim = vec.size();
    } else if (vec.size() != store.dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": feature has " +
                      std::to_string(vec.size()) + " values, expected " +
                      std::to_string(store.dim));
    }
    store_insert(store, id, std::move(vec), path.c_str());
  }
  if (store.ids.empty()) throw DataError("features file is empty: " + path);
  return store;
}

constexpr char kFeatureMagic[4] = {'I', 'M', 'G', 'F'};

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError(path + ": truncated binary feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32(std::istream& in, const std::string& path) {
  const std::uint32_t bits = read_u32(in, path);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(out, bits);
}

FeatureStore load_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open features file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError(path + ": not a binary feature file (bad magic)");
  const std::uint32_t version = read_u32(in, path);
  if (version != 1)
    throw DataError(path + ": unsupported feature file version " + std::to_string(version));
  const std::uint32_t count = read_u32(in, path);
  const std::uint32_t dim = read_u32(in, path);
  if (count == 0 || dim == 0) throw DataError(path + ": empty binary feature file");
  FeatureStore store;
  store.dim = dim;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t id_len = read_u32(in, path);
    std::string id(id_len, '\0');
    if (id_len > 0 && !in.read(id.data(), id_len))
      throw DataError(path + ": truncated binary feature file at record " + std::to_string(r));
    Vector vec(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      const double x = static_cast<double>(read_f32(in, path));
      if (!std::isfinite(x))
        throw DataError(path + ": non-finite feature value in record " + std::to_string(r));
      vec[j] = x;
    }
    store_insert(store, id, std::move(vec), path.c_str());
  }
  return store;
}

}  // namespace

FeatureStore load_features(const std::string& path, FeatureFormat format) {
  return format == FeatureFormat::kTsv ? load_features_tsv(path) : load_features_binary(path);
}

FeatureStore load_features_auto(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open features file: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  const bool binary = std::memcmp(magic, kFeatureMagic, 4) == 0;
  return load_features(path, binary ? FeatureFormat::kBinary : FeatureFormat::kTsv);
}

void save_features_tsv(const FeatureStore& store, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write features file: " + tmp);
    char buf[64];
    for (const auto& id : store.ids) {
      out << id << '\t';
      const Vector& vec = store.features.at(id);
      for (std::size_t j = 0; j < vec.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.9g", vec[j]);
        if (j > 0) out << ' ';
        out << buf;
      }
      out << '\n';
    }
    if (!out) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot move features file into place at '" + path + "'");
  }
}

void save_features_binary(const FeatureStore& store, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write features file: " + tmp);
    out.write(kFeatureMagic, 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(store.ids.size()));
    write_u32(out, static_cast<std::uint32_t>(store.dim));
    for (const auto& id : store.ids) {
      write_u32(out, static_cast<std::uint32_t>(id.size()));
      out.write(id.data(), static_cast<std::streamsize>(id.size()));
      const Vector& vec = store.features.at(id);
      for (std::size_t j = 0; j < vec.size(); ++j) write_f32(out, static_cast<float>(vec[j]));
    }
    if (!out) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot move features file into place at '" + path + "'");
  }
}

IdSplit split_dataset(const std::vector<std::string>& image_ids, const SplitSpec& spec) {
  IdSplit out;
  if (spec.dev_ids || spec.test_ids) {
    std::unordered_set<std::string> known(image_ids.begin(), image_ids.end());
    std::unordered_set<std::string> dev, test;
    for (const auto& id : spec.dev_ids.value_or(std::vector<std::string>{})) {
      if (!known.count(id)) throw DataError("dev id list names unknown image '" + id + "'");
      dev.insert(id);
    }
    for (const auto& id : spec.test_ids.value_or(std::vector<std::string>{})) {
      if (!known.count(id)) throw DataError("test id list names unknown image '" + id + "'");
      if (dev.count(id)) throw DataError("image '" + id + "' appears in both dev and test lists");
      test.insert(id);
    }
    for (const auto& id : image_ids) {
      if (dev.count(id)) out.dev.push_back(id);
      else if (test.count(id)) out.test.push_back(id);
      else out.train.push_back(id);
    }
    return out;
  }
  if (spec.dev_n + spec.test_n >= image_ids.size()) {
    throw DataError("split needs dev_n + test_n < image count (" + std::to_string(spec.dev_n) +
                    " + " + std::to_string(spec.test_n) + " vs " +
                    std::to_string(image_ids.size()) + ")");
  }
  std::vector<std::string> shuffled = image_ids;
  Rng rng(mix_seed(spec.seed, 0x5117ULL));
  rng.shuffle(shuffled);
  out.dev.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(spec.dev_n));
  out.test.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(spec.dev_n),
                  shuffled.begin() + static_cast<std::ptrdiff_t>(spec.dev_n + spec.test_n));
  out.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(spec.dev_n + spec.test_n),
                   shuffled.end());
  return out;
}

namespace {

std::vector<CaptionedImage> encode_side(const std::vector<std::string>& split_ids,
                                        const std::unordered_map<std::string, const CaptionGroup*>& by_id,
                                        const FeatureStore& store, const Vocabulary& vocab) {
  std::vector<CaptionedImage> out;
  for (const auto& id : split_ids) {
    const CaptionGroup* grp = by_id.at(id);
    CaptionedImage img;
    img.image_id = id;
    img.feature = store.at(id);
    for (const auto& text : grp->captions) {
      std::vector<int> enc = encode_sentence(vocab, text);
      if (enc.size() < 3) {
        warn("image " + id + ": dropping empty caption");
        continue;
      }
      img.captions.push_back(std::move(enc));
    }
    if (img.captions.empty()) {
      warn("image " + id + ": no usable captions, dropping image");
      continue;
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

AssembledData assemble_dataset(const std::vector<CaptionGroup>& groups,
                               const FeatureStore& store, const SplitSpec& spec,
                               std::size_t min_count) {
  if (groups.empty()) throw DataError("assemble_dataset: no captioned images");
  std::vector<std::string> missing;
  std::vector<std::string> ids;
  std::unordered_map<std::string, const CaptionGroup*> by_id;
  for (const auto& g : groups) {
    if (!store.has(g.image_id)) {
      missing.push_back(g.image_id);
      continue;
    }
    ids.push_back(g.image_id);
    by_id[g.image_id] = &g;
  }
  if (!missing.empty()) {
    std::string msg = "no feature vector for " + std::to_string(missing.size()) + " image(s):";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    throw DataError(msg);
  }

  AssembledData out;
  out.split = split_dataset(ids, spec);

  std::vector<std::string> train_lines;
  for (const auto& id : out.split.train) {
    for (const auto& text : by_id.at(id)->captions) train_lines.push_back(text);
  }
  out.vocab = build_vocab(train_lines, min_count);

  out.dataset.train = encode_side(out.split.train, by_id, store, out.vocab);
  out.dataset.dev = encode_side(out.split.dev, by_id, store, out.vocab);
  out.dataset.test = encode_side(out.split.test, by_id, store, out.vocab);
  return out;
}

std::vector<CaptionedImage> encode_images(const std::vector<CaptionGroup>& groups,
                                          const FeatureStore& store,
                                          const std::vector<std::string>& image_ids,
                                          const Vocabulary& vocab) {
  std::unordered_map<std::string, const CaptionGroup*> by_id;
  for (const auto& g : groups) by_id[g.image_id] = &g;
  for (const auto& id : image_ids) {
    if (!by_id.count(id)) throw DataError("no captions for image '" + id + "'");
    if (!store.has(id)) throw DataError("no feature vector for image '" + id + "'");
  }
  return encode_side(image_ids, by_id, store, vocab);
}

const std::array<const char*, 4> kSynthColors = {"red", "blue", "green", "yellow"};
const std::array<const char*, 4> kSynthObjects = {"dog", "cat", "car", "bird"};
const std::array<const char*, 4> kSynthScenes = {"park", "street", "field", "house"};

namespace {

// Every template names all three attributes; the filler words provide the
// seeded synonym variation.
std::string synth_caption(std::size_t variant, const char* color, const char* obj,
                          const char* scene) {
  char buf[128];
  switch (variant % 6) {
    case 0: std::snprintf(buf, sizeof(buf), "a %s %s in the %s", color, obj, scene); break;
    case 1: std::snprintf(buf, sizeof(buf), "the %s %s stands in the %s", color, obj, scene); break;
    case 2: std::snprintf(buf, sizeof(buf), "a %s %s near the %s", color, obj, scene); break;
    case 3: std::snprintf(buf, sizeof(buf), "one %s %s resting by the %s", color, obj, scene); break;
    case 4: std::snprintf(buf, sizeof(buf), "a photo of a %s %s at the %s", color, obj, scene); break;
    default: std::snprintf(buf, sizeof(buf), "the %s %s is in the %s", color, obj, scene); break;
  }
  return buf;
}

}  // namespace

SyntheticCorpus gen_synthetic(std::size_t n_images, std::size_t feature_dim, std::uint64_t seed) {
  if (n_images == 0) throw ConfigError("gen_synthetic: need at least one image");
  if (feature_dim < 12)
    throw ConfigError("gen_synthetic: feature_dim must be >= 12 to hold the attribute one-hots");
  SyntheticCorpus corpus;
  corpus.features.dim = feature_dim;
  Rng rng(mix_seed(seed, 0x57A9ULL));
  for (std::size_t n = 0; n < n_images; ++n) {
    const int color = static_cast<int>(rng.below(4));
    const int object = static_cast<int>(rng.below(4));
    const int scene = static_cast<int>(rng.below(4));
    corpus.attributes.push_back({color, object, scene});

    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth_%05zu", n);
    const std::string id = idbuf;

    Vector feat(feature_dim);
    feat[static_cast<std::size_t>(color)] = 1.0;
    feat[static_cast<std::size_t>(4 + object)] = 1.0;
    feat[static_cast<std::size_t>(8 + scene)] = 1.0;
    for (std::size_t j = 12; j < feature_dim; ++j) feat[j] = rng.normal(0.1);
    corpus.features.ids.push_back(id);
    corpus.features.features.emplace(id, std::move(feat));

    CaptionGroup grp;
    grp.image_id = id;
    for (int k = 0; k < 5; ++k) {
      const std::size_t variant = static_cast<std::size_t>(rng.below(6));
      grp.captions.push_back(synth_caption(variant, kSynthColors[static_cast<std::size_t>(color)],
                                           kSynthObjects[static_cast<std::size_t>(object)],
                                           kSynthScenes[static_cast<std::size_t>(scene)]));
    }
    corpus.captions.push_back(std::move(grp));
  }
  return corpus;
}

}  // namespace gatecap
