#include "gatecap/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "gatecap/error.hpp"

namespace gatecap {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_u64(out, bits);
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(std::string("checkpoint truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  const std::uint64_t lo = read_u32(in, what);
  const std::uint64_t hi = read_u32(in, what);
  return lo | hi << 32;
}

double read_f64(std::istream& in, const char* what) {
  const std::uint64_t bits = read_u64(in, what);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string read_str(std::istream& in, const char* what) {
  const std::uint32_t n = read_u32(in, what);
  if (n > (64u << 20)) {
    throw DataError(std::string("checkpoint: implausible string length for ") + what);
  }
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) {
    throw DataError(std::string("checkpoint truncated while reading ") + what);
  }
  return s;
}

void write_tensors(std::ostream& out, ModelTensors& tensors) {
  auto refs = tensor_refs(tensors);
  write_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    write_str(out, ref.name);
    write_u32(out, static_cast<std::uint32_t>(ref.dims.size()));
    for (std::size_t d : ref.dims) write_u64(out, d);
    for (std::size_t i = 0; i < ref.size; ++i) write_f64(out, ref.data[i]);
  }
}

void read_tensors(std::istream& in, ModelTensors& tensors, bool check_finite) {
  auto refs = tensor_refs(tensors);
  const std::uint32_t count = read_u32(in, "tensor count");
  if (count != refs.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                    std::to_string(refs.size()));
  }
  for (auto& ref : refs) {
    const std::string name = read_str(in, "tensor name");
    if (name != ref.name) {
      throw DataError("checkpoint tensor order mismatch: found '" + name + "', expected '" +
                      std::string(ref.name) + "'");
    }
    const std::uint32_t rank = read_u32(in, "tensor rank");
    if (rank != ref.dims.size()) {
      throw DataError("tensor '" + name + "' has rank " + std::to_string(rank) + ", expected " +
                      std::to_string(ref.dims.size()));
    }
    for (std::size_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = read_u64(in, "tensor dim");
      if (dim != ref.dims[d]) {
        throw DataError("tensor '" + name + "' dim " + std::to_string(d) + " is " +
                        std::to_string(dim) + ", expected " + std::to_string(ref.dims[d]));
      }
    }
    for (std::size_t i = 0; i < ref.size; ++i) {
      ref.data[i] = read_f64(in, "tensor data");
      if (check_finite && !std::isfinite(ref.data[i])) {
        throw DataError("tensor '" + name + "' holds a non-finite value");
      }
    }
  }
}

void write_model_config(std::ostream& out, const ModelConfig& m) {
  write_u64(out, m.vocab_size);
  write_u64(out, m.embed_dim);
  write_u64(out, m.hidden_dim);
  write_u64(out, m.depth);
  write_u64(out, m.feature_dim);
  write_u32(out, static_cast<std::uint32_t>(m.activation));
  write_u32(out, static_cast<std::uint32_t>(m.feed_mode));
  write_u64(out, m.max_decode_len);
  write_u32(out, m.share_transition_weights ? 1 : 0);
}

ModelConfig read_model_config(std::istream& in) {
  ModelConfig m;
  m.vocab_size = read_u64(in, "vocab_size");
  m.embed_dim = read_u64(in, "embed_dim");
  m.hidden_dim = read_u64(in, "hidden_dim");
  m.depth = read_u64(in, "depth");
  m.feature_dim = read_u64(in, "feature_dim");
  const std::uint32_t act = read_u32(in, "activation");
  if (act > 1) throw DataError("checkpoint: unknown activation code " + std::to_string(act));
  m.activation = static_cast<Activation>(act);
  const std::uint32_t mode = read_u32(in, "feed_mode");
  if (mode > 3) throw DataError("checkpoint: unknown feed mode code " + std::to_string(mode));
  m.feed_mode = static_cast<FeedMode>(mode);
  m.max_decode_len = read_u64(in, "max_decode_len");
  m.share_transition_weights = read_u32(in, "share_transition_weights") != 0;
  return m;
}

void write_train_config(std::ostream& out, const TrainConfig& t) {
  write_u64(out, t.batch_size);
  write_u64(out, t.epochs);
  write_f64(out, t.learning_rate);
  write_f64(out, t.rms_decay);
  write_f64(out, t.rms_eps);
  write_f64(out, t.clip_bound);
  write_f64(out, t.l2_coeff);
  write_f64(out, t.dropout_p);
  write_f64(out, t.lr_decay_per_epoch);
  write_u64(out, t.seed);
  write_u32(out, t.dropout_input ? 1 : 0);
  write_u32(out, t.dropout_image ? 1 : 0);
}

TrainConfig read_train_config(std::istream& in) {
  TrainConfig t;
  t.batch_size = read_u64(in, "batch_size");
  t.epochs = read_u64(in, "epochs");
  t.learning_rate = read_f64(in, "learning_rate");
  t.rms_decay = read_f64(in, "rms_decay");
  t.rms_eps = read_f64(in, "rms_eps");
  t.clip_bound = read_f64(in, "clip_bound");
  t.l2_coeff = read_f64(in, "l2_coeff");
  t.dropout_p = read_f64(in, "dropout_p");
  t.lr_decay_per_epoch = read_f64(in, "lr_decay_per_epoch");
  t.seed = read_u64(in, "seed");
  t.dropout_input = read_u32(in, "dropout_input") != 0;
  t.dropout_image = read_u32(in, "dropout_image") != 0;
  return t;
}

void write_string_list(std::ostream& out, const std::vector<std::string>& list) {
  write_u32(out, static_cast<std::uint32_t>(list.size()));
  for (const auto& s : list) write_str(out, s);
}

std::vector<std::string> read_string_list(std::istream& in, const char* what) {
  const std::uint32_t n = read_u32(in, what);
  std::vector<std::string> list;
  list.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) list.push_back(read_str(in, what));
  return list;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");

    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_model_config(out, model);
    write_train_config(out, train);
    write_string_list(out, vocab.id_to_token);
    write_u64(out, vocab.min_count);
    write_string_list(out, train_ids);
    write_string_list(out, dev_ids);
    write_string_list(out, test_ids);
    write_tensors(out, const_cast<ModelParams&>(params));
    write_u32(out, has_train_state ? 1 : 0);
    if (has_train_state) {
      write_tensors(out, const_cast<ModelParams&>(current));
      write_tensors(out, const_cast<RmsPropState&>(rms));
      write_u64(out, epochs_done);
      write_f64(out, lr);
      write_f64(out, best_dev_loss);
    }
    out.flush();
    if (!out) throw DataError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("'" + path + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.model = read_model_config(in);
  ckpt.model.validate();
  ckpt.train = read_train_config(in);
  ckpt.train.validate();

  ckpt.vocab.id_to_token = read_string_list(in, "vocabulary");
  ckpt.vocab.min_count = read_u64(in, "min_count");
  if (ckpt.vocab.id_to_token.size() != ckpt.model.vocab_size) {
    throw DataError("vocabulary holds " + std::to_string(ckpt.vocab.id_to_token.size()) +
                    " tokens, model expects " + std::to_string(ckpt.model.vocab_size));
  }
  ckpt.vocab.token_to_id.clear();
  for (std::size_t i = 0; i < ckpt.vocab.id_to_token.size(); ++i) {
    ckpt.vocab.token_to_id[ckpt.vocab.id_to_token[i]] = static_cast<int>(i);
  }
  ckpt.train_ids = read_string_list(in, "train ids");
  ckpt.dev_ids = read_string_list(in, "dev ids");
  ckpt.test_ids = read_string_list(in, "test ids");

  ckpt.params = ModelParams::zeros(ckpt.model);
  read_tensors(in, ckpt.params, /*check_finite=*/true);
  ckpt.has_train_state = read_u32(in, "train state flag") != 0;
  if (ckpt.has_train_state) {
    ckpt.current = ModelParams::zeros(ckpt.model);
    read_tensors(in, ckpt.current, /*check_finite=*/true);
    ckpt.rms = RmsPropState::zeros(ckpt.model);
    read_tensors(in, ckpt.rms, /*check_finite=*/true);
    ckpt.epochs_done = read_u64(in, "epochs_done");
    ckpt.lr = read_f64(in, "lr");
    ckpt.best_dev_loss = read_f64(in, "best_dev_loss");
    if (std::isnan(ckpt.lr) || std::isnan(ckpt.best_dev_loss)) {
      throw DataError("checkpoint train state holds NaN");
    }
  }
  return ckpt;
}

}  // namespace gatecap
