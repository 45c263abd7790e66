#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "s2bt/data/conll.hpp"
#include "s2bt/data/synthetic.hpp"
#include "s2bt/data/vocab.hpp"
#include "s2bt/error.hpp"
#include "s2bt/grad/ops.hpp"
#include "s2bt/keyvalue.hpp"
#include "s2bt/metrics/metrics.hpp"
#include "s2bt/model/serialize.hpp"
#include "s2bt/training/gradcheck.hpp"
#include "s2bt/training/trainer.hpp"

namespace s2bt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitMismatch = 3;

// "1,2,-1" -> {1, 2, -1}; empty string -> {}.
inline std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

struct ColumnOptions {
  int token = 0;
  std::string features;
  int label = -1;

  void attach(CLI::App* app, bool labeled) {
    app->add_option("--token-col", token, "Token column (negative counts from the end)")->capture_default_str();
    app->add_option("--feature-cols", features, "Comma-separated feature columns");
    if (labeled) app->add_option("--label-col", label, "Gold label column")->capture_default_str();
  }

  data::ColumnSpec spec(bool labeled) const {
    data::ColumnSpec s;
    s.token = token;
    s.features = parse_int_list(features, "--feature-cols");
    s.label = labeled ? std::optional<int>(label) : std::nullopt;
    return s;
  }
};

struct TrainFlags {
  training::TrainingConfig cfg;
  std::string batcher = "bucket";
  std::string regime = "dual";
  std::string select = "accuracy";

  void attach(CLI::App* app) {
    auto& c = cfg;
    app->add_option("--hidden", c.hidden, "Per-direction encoder GRU size")->capture_default_str();
    app->add_option("--word-dim", c.word_dim, "Word embedding width")->capture_default_str();
    app->add_option("--char-dim", c.char_dim, "Character embedding width")->capture_default_str();
    app->add_option("--char-hidden", c.char_hidden, "Character GRU size")->capture_default_str();
    app->add_option("--char-out", c.char_out, "Character representation width")->capture_default_str();
    app->add_option("--label-dim", c.label_dim, "Label embedding width")->capture_default_str();
    app->add_option("--feature-dim", c.feature_dim, "Feature embedding width")->capture_default_str();
    app->add_option("--ffn-dim", c.ffn_dim, "Block feed-forward inner width (0 = 2 x block width)")->capture_default_str();
    app->add_option("--residual-blocks", c.residual_blocks, "Wrap recurrent layers in norm/skip/FFNN blocks")->capture_default_str();
    app->add_option("--lr", c.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--lambda", c.lambda, "L2 coefficient")->capture_default_str();
    app->add_option("--dropout", c.dropout, "Dropout rate")->capture_default_str();
    app->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    app->add_option("--batcher", batcher, "stream or bucket")->check(CLI::IsMember({"stream", "bucket"}))->capture_default_str();
    app->add_option("--batch-tokens", c.batch_tokens, "Token budget per bucket batch")->capture_default_str();
    app->add_option("--chunk-len", c.chunk_len, "Window length of stream chunks")->capture_default_str();
    app->add_option("--regime", regime, "single or dual optimizer")->check(CLI::IsMember({"single", "dual"}))->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app->add_option("--runs", c.runs, "Independent runs with seeds seed, seed+1, ...")->capture_default_str();
    app->add_option("--min-count", c.min_count, "Minimum word frequency kept in the vocabulary")->capture_default_str();
    app->add_option("--select", select, "Model selection on dev: accuracy or cer")->check(CLI::IsMember({"accuracy", "cer"}))->capture_default_str();
    app->add_option("--clip-norm", c.clip_norm, "Gradient norm clip per optimizer group (0 disables)")->capture_default_str();
  }

  training::TrainingConfig resolve() const {
    training::TrainingConfig c = cfg;
    c.batcher = batcher == "stream" ? training::Batcher::kStream : training::Batcher::kBucket;
    c.regime = regime == "single" ? training::Regime::kSingle : training::Regime::kDual;
    c.selection = select == "cer" ? training::Selection::kCer : training::Selection::kAccuracy;
    c.validate();
    return c;
  }
};

inline std::vector<data::TaggedSentence> load_nonempty(const std::string& path, const data::ColumnSpec& spec) {
  if (!std::filesystem::exists(path)) throw IngestionError("file not found: " + path);
  auto sents = data::load_conll(path, spec);
  if (sents.empty()) throw IngestionError("no sentences in " + path);
  return sents;
}

// Encodes data against a trained model's vocabularies; anything the model
// cannot represent is a model/data mismatch.
inline std::vector<data::EncodedSentence> encode_for_model(const data::Vocabularies& v,
                                                           const std::vector<data::TaggedSentence>& sents,
                                                           const std::string& source) {
  for (std::size_t k = 0; k < sents.size(); ++k) {
    const auto& s = sents[k];
    if (s.features.size() != v.features.size())
      throw ModelMismatchError(source + ": sentence " + std::to_string(k + 1) + " has " +
                               std::to_string(s.features.size()) + " feature columns, model expects " +
                               std::to_string(v.features.size()));
    for (const auto& l : s.labels)
      if (!v.labels.contains(l) || (v.labels.is_reserved(v.labels.lookup(l))))
        throw ModelMismatchError(source + ": label '" + l + "' is not in the model's label vocabulary");
  }
  return data::encode_corpus(v, sents);
}

inline std::string seed_path(const std::string& path, std::uint64_t seed) {
  return path + ".seed" + std::to_string(seed);
}

inline void write_log(const std::string& path, const std::vector<training::EpochRecord>& log, std::size_t best) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path);
  for (const auto& r : log) out << training::format_epoch_line(r) << '\n';
  out << "best_epoch=" << best << '\n';
}

inline void print_summary(std::ostream& os, const training::RunSummary& s) {
  os << "runs=" << s.seeds.size() << '\n';
  os << "seeds=";
  for (std::size_t i = 0; i < s.seeds.size(); ++i) os << (i ? "," : "") << s.seeds[i];
  os << '\n';
  auto line = [&](const char* key, const training::MeanStd& m) {
    os << key << "_mean=" << metrics::format_metric(m.mean) << '\n'
       << key << "_std=" << metrics::format_metric(m.stddev) << '\n';
  };
  line("accuracy", s.accuracy);
  line("precision", s.precision);
  line("recall", s.recall);
  line("f1", s.f1);
  line("cer", s.cer);
}

// Prepends the key = value lines of --config to the subcommand's arguments so
// that explicit flags, which come later, win.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a path");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return rest;
  if (!std::filesystem::exists(config)) throw ConfigError("config file not found: " + config);
  std::vector<std::string> injected;
  for (const auto& [k, v] : load_key_values(config)) {
    std::string flag = k;
    std::replace(flag.begin(), flag.end(), '_', '-');
    injected.push_back("--" + flag);
    injected.push_back(v);
  }
  auto sub = std::find_if(rest.begin(), rest.end(), [](const std::string& a) { return !a.starts_with("-"); });
  if (sub == rest.end()) throw ConfigError("--config given without a command");
  rest.insert(sub + 1, injected.begin(), injected.end());
  return rest;
}

struct Commands {
  std::ostream& out;
  std::ostream& err;

  int train(const std::string& train_path, const std::string& dev_path, const std::string& test_path,
            const std::string& model_path, std::string log_path, const data::ColumnSpec& spec,
            const training::TrainingConfig& cfg, std::size_t jobs) {
    const auto train_sents = load_nonempty(train_path, spec);
    const auto dev_sents = load_nonempty(dev_path, spec);
    const auto prepared = training::PreparedCorpus::from(train_sents, dev_sents, cfg.min_count);
    if (log_path.empty()) log_path = model_path + ".log";

    std::vector<data::EncodedSentence> test;
    if (!test_path.empty()) test = data::encode_corpus(prepared.vocabs, load_nonempty(test_path, spec));

    if (cfg.runs == 1) {
      auto result = training::train<double>(prepared, cfg, [&](const training::EpochRecord& r) {
        out << training::format_epoch_line(r) << '\n';
      });
      out << "best_epoch=" << result.best_epoch << '\n';
      model::save_model(model_path, result.model, prepared.vocabs, cfg.lambda);
      write_log(log_path, result.log, result.best_epoch);
      if (!test.empty()) {
        out << "test:\n";
        metrics::print_report_key_values(out, training::evaluate(result.model, prepared.vocabs.labels, test));
      }
      return kExitOk;
    }

    const auto& eval_split = test.empty() ? prepared.dev : test;
    const auto summary = training::multi_run<double>(
        prepared, eval_split, cfg, jobs, [&](std::size_t i, const training::TrainResult<double>& r) {
          const std::uint64_t seed = cfg.seed + i;
          for (const auto& rec : r.log) out << "seed=" << seed << ' ' << training::format_epoch_line(rec) << '\n';
          model::save_model(seed_path(model_path, seed), r.model, prepared.vocabs, cfg.lambda);
          write_log(seed_path(log_path, seed), r.log, r.best_epoch);
        });
    out << (test.empty() ? "aggregate over dev:\n" : "aggregate over test:\n");
    print_summary(out, summary);
    std::ofstream agg(log_path + ".aggregate", std::ios::trunc);
    if (!agg) throw IngestionError("cannot write " + log_path + ".aggregate");
    print_summary(agg, summary);
    return kExitOk;
  }

  void report(const metrics::EvalReport& r) {
    metrics::print_report_table(out, r);
    out << '\n';
    metrics::print_report_key_values(out, r);
  }

  int eval_model(const std::string& model_path, const std::string& data_path, const data::ColumnSpec& spec,
                 const std::string& dump_path) {
    const auto bundle = model::load_model<double>(model_path);
    const auto sents = load_nonempty(data_path, spec);
    for (std::size_t k = 0; k < sents.size(); ++k)
      if (sents[k].labels.empty()) throw IngestionError(data_path + ": sentence " + std::to_string(k + 1) + " has no gold labels");
    const auto encoded = encode_for_model(bundle.vocabs, sents, data_path);
    const auto predicted = training::predict_ids(bundle.network, encoded);
    report(training::score_ids(bundle.vocabs.labels, encoded, predicted));
    if (!dump_path.empty()) {
      const auto blocks = data::load_conll_blocks(data_path);
      write_with_predictions(dump_path, blocks, bundle.vocabs.labels, predicted);
    }
    return kExitOk;
  }

  // Scores a file whose rows carry gold and predicted tags in two columns.
  int eval_scored(const std::string& path, int gold_col, int pred_col) {
    if (!std::filesystem::exists(path)) throw IngestionError("file not found: " + path);
    const auto blocks = data::load_conll_blocks(path);
    if (blocks.empty()) throw IngestionError("no sentences in " + path);
    std::vector<metrics::TagSequence> gold, pred;
    for (const auto& b : blocks) {
      const std::size_t width = b.front().size();
      const std::size_t g = data::resolve_column(gold_col, width, path);
      const std::size_t p = data::resolve_column(pred_col, width, path);
      metrics::TagSequence gs, ps;
      for (const auto& row : b) {
        gs.push_back(row[g]);
        ps.push_back(row[p]);
      }
      gold.push_back(std::move(gs));
      pred.push_back(std::move(ps));
    }
    report(metrics::evaluate_tags(gold, pred));
    return kExitOk;
  }

  static void write_with_predictions(const std::string& path, std::vector<data::ConllBlock> blocks,
                                     const data::Vocabulary& labels, const std::vector<std::vector<int>>& predicted) {
    if (blocks.size() != predicted.size()) throw ContractError("prediction count differs from sentence count");
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto tags = data::label_strings(labels, predicted[k]);
      for (std::size_t i = 0; i < blocks[k].size(); ++i) blocks[k][i].push_back(tags[i]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + path);
    data::write_conll_blocks(out, blocks);
  }

  int tag(const std::string& model_path, const std::string& input, const std::string& output,
          const data::ColumnSpec& spec) {
    const auto bundle = model::load_model<double>(model_path);
    const auto sents = load_nonempty(input, spec);
    const auto encoded = encode_for_model(bundle.vocabs, sents, input);
    const auto predicted = training::predict_ids(bundle.network, encoded);
    write_with_predictions(output, data::load_conll_blocks(input), bundle.vocabs.labels, predicted);
    return kExitOk;
  }

  int gradcheck(const training::GradcheckOptions& o, double tolerance, bool corrupt) {
    const double saved = grad::testing::sigmoid_backward_scale;
    if (corrupt) grad::testing::sigmoid_backward_scale = 1.5;
    std::vector<grad::TensorCheck> checks;
    try {
      checks = training::run_gradcheck(o);
    } catch (...) {
      grad::testing::sigmoid_backward_scale = saved;
      throw;
    }
    grad::testing::sigmoid_backward_scale = saved;
    std::vector<std::string> offenders;
    double worst = 0.0;
    for (const auto& c : checks) {
      char line[256];
      std::snprintf(line, sizeof line, "%-28s max_rel_error=%.3e", c.name.c_str(), c.max_rel_error);
      out << line << '\n';
      worst = std::max(worst, c.max_rel_error);
      if (!(c.max_rel_error < tolerance)) offenders.push_back(c.name);
    }
    char summary[128];
    std::snprintf(summary, sizeof summary, "tensors=%zu worst=%.3e tolerance=%.3e", checks.size(), worst, tolerance);
    out << summary << '\n';
    if (offenders.empty()) {
      out << "gradcheck PASSED\n";
      return kExitOk;
    }
    err << "gradcheck FAILED for " << offenders.size() << " tensor(s):";
    for (const auto& n : offenders) err << ' ' << n;
    err << '\n';
    return kExitCheckFailed;
  }

  int synth(const std::string& spec_path, const std::string& out_dir, const std::optional<std::uint64_t>& seed) {
    data::SynthSpec spec;
    if (!spec_path.empty()) {
      if (!std::filesystem::exists(spec_path)) throw ConfigError("spec file not found: " + spec_path);
      spec = data::SynthSpec::from_key_values(load_key_values(spec_path));
    }
    if (seed) spec.seed = *seed;
    const auto corpus = data::make_synthetic_corpus(spec);
    std::filesystem::create_directories(out_dir);
    const std::pair<const char*, const std::vector<data::TaggedSentence>*> splits[] = {
        {"train.conll", &corpus.train}, {"dev.conll", &corpus.dev}, {"test.conll", &corpus.test}};
    for (const auto& [name, sents] : splits) {
      const auto path = (std::filesystem::path(out_dir) / name).string();
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      if (!f) throw IngestionError("cannot write " + path);
      data::write_conll(f, *sents);
      std::size_t tokens = 0;
      for (const auto& s : *sents) tokens += s.size();
      out << path << " sentences=" << sents->size() << " tokens=" << tokens << '\n';
    }
    return kExitOk;
  }
};

// Entry point; `args` excludes the program name.
inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-aware BiGRU tagger with residual blocks and dual label decoders", "s2bt"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.add_option("--config", "key = value file; explicit flags take precedence");
  Commands cmd{out, err};

  // train
  auto* train = app.add_subcommand("train", "Train a model and write the best-on-dev parameters");
  std::string train_path, dev_path, test_path, model_path, log_path;
  std::size_t jobs = 1;
  ColumnOptions train_cols;
  TrainFlags flags;
  train->add_option("--train", train_path, "Training CoNLL file")->required();
  train->add_option("--dev", dev_path, "Development CoNLL file")->required();
  train->add_option("--test", test_path, "Optional test CoNLL file scored after training");
  train->add_option("--model", model_path, "Output model path")->required();
  train->add_option("--log", log_path, "Epoch log path (default <model>.log)");
  train->add_option("--jobs", jobs, "Parallel runs when --runs > 1")->capture_default_str();
  train_cols.attach(train, true);
  flags.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Score a model on a gold file, or score a file of gold/predicted columns");
  std::string eval_model, eval_data, dump_path, scored_path;
  int gold_col = -2, pred_col = -1;
  ColumnOptions eval_cols;
  eval->add_option("--model", eval_model, "Model file");
  eval->add_option("--data", eval_data, "Gold CoNLL file");
  eval->add_option("--dump", dump_path, "Write input columns plus predictions here");
  eval->add_option("--scored", scored_path, "Score an existing file instead of running a model");
  eval->add_option("--gold-col", gold_col, "Gold column for --scored")->capture_default_str();
  eval->add_option("--pred-col", pred_col, "Prediction column for --scored")->capture_default_str();
  eval_cols.attach(eval, true);

  // tag
  auto* tag = app.add_subcommand("tag", "Append a predicted-label column to a CoNLL file");
  std::string tag_model, tag_input, tag_output;
  ColumnOptions tag_cols;
  tag->add_option("--model", tag_model, "Model file")->required();
  tag->add_option("--input", tag_input, "Input CoNLL file")->required();
  tag->add_option("--output", tag_output, "Output path")->required();
  tag_cols.attach(tag, false);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  training::GradcheckOptions gopts;
  double tolerance = 1e-4;
  bool corrupt = false;
  gc->add_option("--seed", gopts.seed, "Seed of the micro instance")->capture_default_str();
  gc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  gc->add_option("--step", gopts.h, "Finite-difference step")->capture_default_str();
  gc->add_flag("--corrupt-backward", corrupt, "Test hook: scale the sigmoid backward rule")->group("");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic train/dev/test corpus");
  std::string spec_path, out_dir;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", spec_path, "Corpus spec (key = value)");
  synth->add_option("--out-dir", out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the seed given in --spec");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitInput;
    }

    if (*train)
      return cmd.train(train_path, dev_path, test_path, model_path, log_path, train_cols.spec(true), flags.resolve(), jobs);
    if (*eval) {
      if (!scored_path.empty()) return cmd.eval_scored(scored_path, gold_col, pred_col);
      if (eval_model.empty() || eval_data.empty()) throw ConfigError("eval needs --model and --data, or --scored");
      return cmd.eval_model(eval_model, eval_data, eval_cols.spec(true), dump_path);
    }
    if (*tag) return cmd.tag(tag_model, tag_input, tag_output, tag_cols.spec(false));
    if (*gc) return cmd.gradcheck(gopts, tolerance, corrupt);
    if (*synth) return cmd.synth(spec_path, out_dir, synth_seed);
    return kExitInput;
  } catch (const ModelMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace s2bt::cli
