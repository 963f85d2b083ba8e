#include "gatecap/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "gatecap/checkpoint.hpp"
#include "gatecap/config_file.hpp"
#include "gatecap/data.hpp"
#include "gatecap/decode.hpp"
#include "gatecap/error.hpp"
#include "gatecap/gradients.hpp"
#include "gatecap/model.hpp"
#include "gatecap/optimizer.hpp"

namespace gatecap {

namespace {

// One entry per RunConfig key, bound to an optional CLI flag of the same
// name. Flags land on top of config-file values, which land on defaults.
struct KeyedFlags {
  std::vector<std::pair<std::string, std::string>> values;  // (key, raw value)

  void attach(CLI::App* cmd) {
    static const char* kKeys[] = {
        "embed_dim",     "hidden_dim",   "depth",
        "feature_dim",   "activation",   "feed_mode",
        "max_decode_len", "share_transition_weights",
        "batch_size",    "epochs",       "learning_rate",
        "rms_decay",     "rms_eps",      "clip_bound",
        "l2_coeff",      "dropout_p",    "dropout_input",
        "dropout_image", "lr_decay_per_epoch", "seed",
        "min_count",     "dev_n",        "test_n",
        "split_seed"};
    for (const char* key : kKeys) {
      cmd->add_option_function<std::string>(
             "--" + std::string(key),
             [this, key](const std::string& v) { values.emplace_back(key, v); },
             "override config key " + std::string(key))
          ->group("Config overrides");
    }
  }
};

// Model-shape and data-split keys are frozen once a run exists; resuming
// with a different value would silently corrupt the checkpointed state.
const std::set<std::string> kResumeFrozenKeys = {
    "embed_dim", "hidden_dim",  "depth",      "feature_dim",
    "activation", "feed_mode",  "max_decode_len", "share_transition_weights",
    "min_count", "dev_n",       "test_n",     "split_seed",
    "seed"};

std::vector<std::string> read_id_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open id file '" + path + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    std::size_t lo = line.find_first_not_of(" \t");
    if (lo == std::string::npos) continue;
    ids.push_back(line.substr(lo));
  }
  return ids;
}

void write_text_atomic(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw DataError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot move '" + tmp + "' into place at '" + path + "'");
  }
}

struct TrainArgs {
  std::string captions, features, out;
  std::string config, resume, history, dev_ids_path, test_ids_path;
  KeyedFlags overrides;
};

void apply_layers(RunConfig& cfg, const TrainArgs& args, bool resuming,
                  std::set<std::string>* applied) {
  auto guard = [&](const std::string& key, const std::string& where) {
    if (resuming && kResumeFrozenKeys.count(key)) {
      throw ConfigError(where + ": key '" + key + "' is fixed by the checkpoint being resumed");
    }
  };
  if (!args.config.empty()) {
    for_each_config_entry(args.config, [&](const std::string& key, const std::string& value,
                                           const std::string& where) {
      guard(key, where);
      apply_config_entry(cfg, key, value, where);
      if (applied) applied->insert(key);
    });
  }
  for (const auto& [key, value] : args.overrides.values) {
    const std::string where = "flag --" + key;
    guard(key, where);
    apply_config_entry(cfg, key, value, where);
    if (applied) applied->insert(key);
  }
}

int cmd_train(const TrainArgs& args) {
  const bool resuming = !args.resume.empty();

  RunConfig cfg;
  Checkpoint ckpt;
  if (resuming) {
    ckpt = Checkpoint::load(args.resume);
    if (!ckpt.has_train_state) {
      throw DataError("checkpoint '" + args.resume + "' has no training state to resume");
    }
    cfg.model = ckpt.model;
    cfg.train = ckpt.train;
    cfg.min_count = ckpt.vocab.min_count;
  }
  std::set<std::string> applied;
  apply_layers(cfg, args, resuming, &applied);

  const std::vector<CaptionGroup> groups = load_captions(args.captions);
  const FeatureStore store = load_features_auto(args.features);
  if (applied.count("feature_dim") && cfg.model.feature_dim != store.dim) {
    throw ConfigError("feature_dim " + std::to_string(cfg.model.feature_dim) +
                      " does not match the features file (dim " + std::to_string(store.dim) + ")");
  }
  cfg.model.feature_dim = store.dim;

  Dataset dataset;
  Vocabulary vocab;
  IdSplit split;
  if (resuming) {
    if (cfg.model.feature_dim != ckpt.model.feature_dim) {
      throw DataError("features file dim " + std::to_string(store.dim) +
                      " does not match checkpoint (dim " +
                      std::to_string(ckpt.model.feature_dim) + ")");
    }
    vocab = ckpt.vocab;
    split.train = ckpt.train_ids;
    split.dev = ckpt.dev_ids;
    split.test = ckpt.test_ids;
    dataset.train = encode_images(groups, store, split.train, vocab);
    dataset.dev = encode_images(groups, store, split.dev, vocab);
    dataset.test = encode_images(groups, store, split.test, vocab);
  } else {
    SplitSpec spec;
    spec.dev_n = cfg.dev_n;
    spec.test_n = cfg.test_n;
    spec.seed = cfg.split_seed;
    if (!args.dev_ids_path.empty()) spec.dev_ids = read_id_file(args.dev_ids_path);
    if (!args.test_ids_path.empty()) spec.test_ids = read_id_file(args.test_ids_path);
    AssembledData assembled = assemble_dataset(groups, store, spec, cfg.min_count);
    dataset = std::move(assembled.dataset);
    vocab = std::move(assembled.vocab);
    split = std::move(assembled.split);
    if (vocab.size() < 4) {
      throw DataError("vocabulary has no corpus tokens (size " + std::to_string(vocab.size()) +
                      "); lower min_count or provide more captions");
    }
    cfg.model.vocab_size = vocab.size();
  }
  cfg.model.validate();
  cfg.train.validate();

  if (resuming && ckpt.epochs_done >= cfg.train.epochs) {
    std::cerr << "nothing to do: checkpoint has finished " << ckpt.epochs_done << " of "
              << cfg.train.epochs << " epochs\n";
    return 0;
  }

  std::string history_body;
  auto on_epoch = [&](const EpochStats& stats) {
    const std::string line = format_history_line(stats);
    std::cout << line << "\n" << std::flush;
    history_body += line;
    history_body += '\n';
  };

  TrainResult result;
  if (resuming) {
    const double resume_lr = applied.count("learning_rate") ? cfg.train.learning_rate : ckpt.lr;
    result = train_from(std::move(ckpt.current), std::move(ckpt.rms), ckpt.epochs_done, resume_lr,
                        std::move(ckpt.params), ckpt.best_dev_loss, dataset, cfg.model, cfg.train,
                        on_epoch);
  } else {
    result = train(dataset, cfg.model, cfg.train, on_epoch);
  }

  Checkpoint out;
  out.model = cfg.model;
  out.train = cfg.train;
  out.vocab = vocab;
  out.train_ids = split.train;
  out.dev_ids = split.dev;
  out.test_ids = split.test;
  out.params = std::move(result.params);
  out.has_train_state = true;
  out.current = std::move(result.last_params);
  out.rms = std::move(result.rms);
  out.epochs_done = result.epochs_done;
  out.lr = result.lr;
  out.best_dev_loss = result.best_dev_loss;
  out.save(args.out);

  const std::string history_path = args.history.empty() ? args.out + ".history" : args.history;
  write_text_atomic(history_path, history_body);
  std::cerr << "checkpoint written to " << args.out << " (history: " << history_path << ")\n";
  return 0;
}

struct GenerateArgs {
  std::string ckpt, features, ids_path;
};

int cmd_generate(const GenerateArgs& args) {
  const Checkpoint ckpt = Checkpoint::load(args.ckpt);
  const FeatureStore store = load_features_auto(args.features);
  if (store.dim != ckpt.model.feature_dim) {
    throw DataError("features file dim " + std::to_string(store.dim) +
                    " does not match checkpoint (dim " + std::to_string(ckpt.model.feature_dim) +
                    ")");
  }

  std::vector<std::string> ids;
  if (args.ids_path.empty()) {
    ids = store.sorted_ids();
  } else {
    ids = read_id_file(args.ids_path);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<std::string> missing;
    for (const auto& id : ids) {
      if (!store.has(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " requested id(s) not in features file:";
      for (const auto& id : missing) msg += " " + id;
      throw DataError(msg);
    }
  }

  for (const auto& id : ids) {
    const DecodeResult decoded = greedy_decode(ckpt.params, ckpt.model, store.at(id));
    const std::vector<std::string> words = decode_tokens(ckpt.vocab, decoded.ids);
    std::string caption;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) caption += ' ';
      caption += words[i];
    }
    std::cout << id << '\t' << caption << '\n';
  }
  return 0;
}

struct EvaluateArgs {
  std::string ckpt, features, captions, split = "test", dump;
};

int cmd_evaluate(const EvaluateArgs& args) {
  if (args.split != "test" && args.split != "dev" && args.split != "train") {
    throw ConfigError("--split must be test, dev or train, got '" + args.split + "'");
  }
  const Checkpoint ckpt = Checkpoint::load(args.ckpt);
  const FeatureStore store = load_features_auto(args.features);
  if (store.dim != ckpt.model.feature_dim) {
    throw DataError("features file dim " + std::to_string(store.dim) +
                    " does not match checkpoint (dim " + std::to_string(ckpt.model.feature_dim) +
                    ")");
  }
  const std::vector<CaptionGroup> groups = load_captions(args.captions);

  const std::vector<std::string>& split_ids = args.split == "test"  ? ckpt.test_ids
                                              : args.split == "dev" ? ckpt.dev_ids
                                                                    : ckpt.train_ids;
  if (split_ids.empty()) {
    throw DataError("checkpoint's " + args.split + " split holds zero images");
  }
  const std::vector<CaptionedImage> images =
      encode_images(groups, store, split_ids, ckpt.vocab);
  if (images.empty()) throw DataError(args.split + " split has no scorable images");

  const BleuReport report = evaluate_model(ckpt.params, ckpt.model, images);
  std::cout << "# corpus-level BLEU, no smoothing; B-n = 0 when any p_k = 0 for k <= n\n";
  std::cout << report.line() << "\n";

  if (!args.dump.empty()) {
    std::string body;
    for (const auto& img : images) {
      const DecodeResult decoded = greedy_decode(ckpt.params, ckpt.model, img.feature);
      const std::vector<std::string> words = decode_tokens(ckpt.vocab, decoded.ids);
      body += img.image_id;
      body += '\t';
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) body += ' ';
        body += words[i];
      }
      body += '\n';
    }
    write_text_atomic(args.dump, body);
  }
  return 0;
}

struct GradcheckArgs {
  std::string activation = "tanh";
  std::string feed_mode = "learned";
  std::uint64_t seed = 0;
  std::size_t samples = 500;
  std::size_t depth = 2;
  double eps = 1e-5;
  double l2 = 0.0;
  bool share = false;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  GradCheckOptions opts;
  opts.activation = parse_activation(args.activation);
  opts.feed_mode = parse_feed_mode(args.feed_mode);
  opts.seed = args.seed;
  opts.n_samples = args.samples;
  opts.depth = args.depth;
  opts.eps = args.eps;
  opts.l2_coeff = args.l2;
  opts.share_transition_weights = args.share;
  opts.corrupt = args.corrupt;

  const GradCheckReport report = gradient_check(opts);
  std::cout << report.text() << std::flush;
  if (!report.pass()) {
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "gradient check failed: max relative error %.3e at %s[%zu] "
                  "(analytic %.9e, numeric %.9e, threshold %.0e)",
                  report.max_rel_err, report.worst_tensor.c_str(), report.worst_index,
                  report.worst_analytic, report.worst_numeric, report.threshold);
    throw CheckError(detail);
  }
  return 0;
}

struct SynthArgs {
  std::string out_dir;
  std::size_t images = 0;
  std::size_t feature_dim = 4096;
  std::uint64_t seed = 1;
  bool binary = false;
};

int cmd_synth(const SynthArgs& args) {
  const SyntheticCorpus corpus = gen_synthetic(args.images, args.feature_dim, args.seed);

  std::error_code ec;
  std::filesystem::create_directories(args.out_dir, ec);
  if (ec) throw DataError("cannot create directory '" + args.out_dir + "': " + ec.message());

  std::string captions_body;
  for (const auto& group : corpus.captions) {
    for (std::size_t k = 0; k < group.captions.size(); ++k) {
      captions_body += group.image_id;
      captions_body += '#';
      captions_body += std::to_string(k);
      captions_body += '\t';
      captions_body += group.captions[k];
      captions_body += '\n';
    }
  }
  const std::string captions_path = args.out_dir + "/captions.tsv";
  write_text_atomic(captions_path, captions_body);

  const std::string features_path =
      args.out_dir + (args.binary ? "/features.bin" : "/features.tsv");
  if (args.binary) {
    save_features_binary(corpus.features, features_path);
  } else {
    save_features_tsv(corpus.features, features_path);
  }
  std::cerr << "wrote " << captions_path << " and " << features_path << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"gatecap: memory-gated deep-transition RNN image captioner"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a captioner and write a checkpoint");
  train_cmd->add_option("--captions", train_args.captions, "captions TSV (image_id<TAB>caption)")
      ->required();
  train_cmd->add_option("--features", train_args.features, "image features file (TSV or binary)")
      ->required();
  train_cmd->add_option("--out", train_args.out, "output checkpoint path")->required();
  train_cmd->add_option("--config", train_args.config, "key = value config file");
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue training from");
  train_cmd->add_option("--history", train_args.history,
                        "history file path (default: <out>.history)");
  train_cmd->add_option("--dev-ids", train_args.dev_ids_path, "file of dev image ids");
  train_cmd->add_option("--test-ids", train_args.test_ids_path, "file of test image ids");
  train_args.overrides.attach(train_cmd);

  GenerateArgs gen_args;
  CLI::App* gen_cmd = app.add_subcommand("generate", "greedy-decode captions for images");
  gen_cmd->add_option("--ckpt", gen_args.ckpt, "checkpoint path")->required();
  gen_cmd->add_option("--features", gen_args.features, "image features file")->required();
  gen_cmd->add_option("--ids", gen_args.ids_path,
                      "file of image ids, one per line (default: every id in the features file)");

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint with corpus BLEU");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--features", eval_args.features, "image features file")->required();
  eval_cmd->add_option("--captions", eval_args.captions, "reference captions TSV")->required();
  eval_cmd->add_option("--split", eval_args.split, "test | dev | train (default test)");
  eval_cmd->add_option("--dump", eval_args.dump, "write per-image candidates TSV here");

  GradcheckArgs gc_args;
  CLI::App* gc_cmd =
      app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
  gc_cmd->add_option("--activation", gc_args.activation, "tanh | relu (default tanh)");
  gc_cmd->add_option("--feed-mode", gc_args.feed_mode,
                     "learned | first_step | always | none (default learned)");
  gc_cmd->add_option("--seed", gc_args.seed, "RNG seed (default 0)");
  gc_cmd->add_option("--samples", gc_args.samples, "minimum coordinates to check (default 500)");
  gc_cmd->add_option("--depth", gc_args.depth, "transition depth N (default 2)");
  gc_cmd->add_option("--eps", gc_args.eps, "finite-difference step (default 1e-5)");
  gc_cmd->add_option("--l2", gc_args.l2, "L2 coefficient for the checked loss (default 0)");
  gc_cmd->add_flag("--share", gc_args.share, "share transition weights across layers");
  gc_cmd->add_flag("--self-test-corrupt", gc_args.corrupt,
                   "deliberately corrupt one gradient (negative control)")
      ->group("");

  SynthArgs synth_args;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "write a synthetic captioned-image corpus");
  synth_cmd->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
  synth_cmd->add_option("--images", synth_args.images, "number of images")->required();
  synth_cmd->add_option("--feature-dim", synth_args.feature_dim,
                        "feature vector length (default 4096)");
  synth_cmd->add_option("--seed", synth_args.seed, "RNG seed (default 1)");
  synth_cmd->add_flag("--binary-features", synth_args.binary,
                      "write binary features instead of TSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return 2;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(train_args);
    if (app.got_subcommand(gen_cmd)) return cmd_generate(gen_args);
    if (app.got_subcommand(eval_cmd)) return cmd_evaluate(eval_args);
    if (app.got_subcommand(gc_cmd)) return cmd_gradcheck(gc_args);
    if (app.got_subcommand(synth_cmd)) return cmd_synth(synth_args);
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckError& e) {
    std::cerr << "check error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gatecap
