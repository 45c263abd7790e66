#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "s2bt/data/batching.hpp"
#include "s2bt/data/sentence.hpp"
#include "s2bt/data/vocab.hpp"
#include "s2bt/error.hpp"
#include "s2bt/metrics/metrics.hpp"
#include "s2bt/model/network.hpp"
#include "s2bt/random.hpp"
#include "s2bt/training/optimizer.hpp"

namespace s2bt::training {

enum class Batcher { kBucket, kStream };
enum class Regime { kSingle, kDual };
enum class Selection { kAccuracy, kCer };

struct TrainingConfig {
  std::size_t hidden = 300;
  std::size_t word_dim = 300;
  std::size_t char_dim = 30;
  std::size_t char_hidden = 50;
  std::size_t char_out = 50;
  std::size_t label_dim = 50;
  std::size_t feature_dim = 30;
  std::size_t ffn_dim = 0;
  bool residual_blocks = true;
  double learning_rate = 2.5e-4;
  double lambda = 1e-6;
  double dropout = 0.3;
  std::size_t epochs = 20;
  Batcher batcher = Batcher::kBucket;
  std::size_t batch_tokens = 256;
  std::size_t chunk_len = 15;
  Regime regime = Regime::kDual;
  std::uint64_t seed = 1;
  std::size_t runs = 10;
  std::size_t min_count = 1;
  Selection selection = Selection::kAccuracy;
  double clip_norm = 5.0;

  void validate() const {
    for (std::size_t v : {hidden, word_dim, char_dim, char_hidden, char_out, label_dim, feature_dim})
      if (v == 0) throw ConfigError("all dimensions must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (runs == 0) throw ConfigError("runs must be >= 1");
    if (batcher == Batcher::kStream && chunk_len < 2) throw ConfigError("chunk length must be >= 2");
    if (batcher == Batcher::kBucket && batch_tokens == 0) throw ConfigError("batch_tokens must be >= 1");
  }

  model::ModelConfig model_config(const data::Vocabularies& v) const {
    model::ModelConfig m;
    m.word_vocab = v.words.size();
    m.char_vocab = v.chars.size();
    m.label_vocab = v.labels.size();
    for (const auto& f : v.features) m.feature_vocabs.push_back(f.size());
    m.word_dim = word_dim;
    m.char_dim = char_dim;
    m.char_hidden = char_hidden;
    m.char_out = char_out;
    m.label_dim = label_dim;
    m.feature_dim = feature_dim;
    m.hidden = hidden;
    m.ffn_dim = ffn_dim;
    m.dropout = dropout;
    m.residual_blocks = residual_blocks;
    return m;
  }
};

// Vocabularies plus id-encoded train and dev splits.
struct PreparedCorpus {
  data::Vocabularies vocabs;
  std::vector<data::EncodedSentence> train;
  std::vector<data::EncodedSentence> dev;

  static PreparedCorpus from(const std::vector<data::TaggedSentence>& train,
                             const std::vector<data::TaggedSentence>& dev, std::size_t min_count = 1) {
    PreparedCorpus c;
    c.vocabs = data::build_vocabularies(train, min_count);
    c.train = data::encode_corpus(c.vocabs, train);
    c.dev = data::encode_corpus(c.vocabs, dev);
    return c;
  }
};

// Greedy combined-prediction labels for every sentence.
template <std::floating_point T>
std::vector<std::vector<int>> predict_ids(const model::Network<T>& net,
                                          const std::vector<data::EncodedSentence>& split) {
  std::vector<std::vector<int>> out;
  out.reserve(split.size());
  for (const auto& s : split) out.push_back(net.predict(s).labels());
  return out;
}

// Scores predicted label ids against the gold labels of `split`.
inline metrics::EvalReport score_ids(const data::Vocabulary& labels,
                                     const std::vector<data::EncodedSentence>& split,
                                     const std::vector<std::vector<int>>& predicted) {
  std::vector<metrics::TagSequence> gold, pred;
  for (std::size_t k = 0; k < split.size(); ++k) {
    if (split[k].labels.size() != split[k].size())
      throw ContractError("evaluate: sentence " + std::to_string(k) + " has no gold labels");
    gold.push_back(data::label_strings(labels, split[k].labels));
    pred.push_back(data::label_strings(labels, predicted[k]));
  }
  return metrics::evaluate_tags(gold, pred);
}

// Accuracy, chunk F1 and CER of greedy inference with dropout disabled.
template <std::floating_point T>
metrics::EvalReport evaluate(const model::Network<T>& net, const data::Vocabulary& labels,
                             const std::vector<data::EncodedSentence>& split) {
  if (split.empty()) throw ContractError("evaluate: empty split");
  return score_ids(labels, split, predict_ids(net, split));
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  metrics::EvalReport dev;
  double seconds = 0.0;
};

inline std::string format_epoch_line(const EpochRecord& r, bool with_time = true) {
  char loss[64];
  std::snprintf(loss, sizeof loss, "%.6f", r.train_loss);
  std::string line = "epoch=" + std::to_string(r.epoch) + " train_loss=" + loss +
                     " dev_acc=" + metrics::format_metric(r.dev.token_accuracy) +
                     " dev_f1=" + metrics::format_metric(r.dev.f1) +
                     " dev_cer=" + metrics::format_metric(r.dev.cer);
  if (with_time) {
    char secs[64];
    std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
    line += std::string(" seconds=") + secs;
  }
  return line;
}

template <std::floating_point T>
struct TrainResult {
  model::Network<T> model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  metrics::EvalReport best_dev;
};

enum class LossTerm { kFull, kBackwardOnly };

// One optimizer: the parameters it owns and the loss whose gradient it follows.
struct GroupSpec {
  std::function<bool(const std::string&)> member;
  LossTerm loss = LossTerm::kFull;
  // Overrides the configured learning rate for this group when >= 0.
  double learning_rate = -1.0;
};

inline std::vector<GroupSpec> single_groups() {
  return {{[](const std::string&) { return true; }, LossTerm::kFull}};
}

// Backward decoder + its output layer follow the backward-only NLL; all other
// parameters follow the full objective.
template <std::floating_point T>
std::vector<GroupSpec> dual_groups() {
  return {{[](const std::string& n) { return model::Network<T>::in_backward_group(n); }, LossTerm::kBackwardOnly},
          {[](const std::string& n) { return !model::Network<T>::in_backward_group(n); }, LossTerm::kFull}};
}

// Every parameter must belong to exactly one group.
template <std::floating_point T>
std::vector<typename Adam<T>::Group> partition(const model::ParameterSet<T>& params,
                                               const std::vector<GroupSpec>& specs) {
  std::vector<typename Adam<T>::Group> groups(specs.size());
  for (const auto& [name, t] : params.items()) {
    std::size_t owners = 0;
    for (std::size_t g = 0; g < specs.size(); ++g)
      if (specs[g].member(name)) {
        groups[g].emplace_back(name, t);
        ++owners;
      }
    if (owners != 1)
      throw ContractError("parameter " + name + " belongs to " + std::to_string(owners) +
                          " optimizer groups");
  }
  return groups;
}

template <std::floating_point T>
std::vector<data::Batch> make_batches(const std::vector<data::EncodedSentence>& train, const TrainingConfig& cfg) {
  return cfg.batcher == Batcher::kStream ? data::stream_chunks(train, cfg.chunk_len)
                                         : data::bucket_batches(train, cfg.batch_tokens);
}

// Objective terms of one batch: sum of sentence losses plus lambda/2 |theta|^2
// for the full objective; the backward-only term has no regularizer.
template <std::floating_point T>
struct BatchLoss {
  grad::Tensor<T> full;
  grad::Tensor<T> backward_only;
};

template <std::floating_point T>
BatchLoss<T> batch_loss(grad::Tape<T>& tape, const model::Network<T>& net,
                        const std::vector<data::EncodedSentence>& sequences, double lambda,
                        const model::Mode& mode) {
  if (sequences.empty()) throw ContractError("loss: empty batch");
  std::vector<grad::Tensor<T>> full, bw;
  for (const auto& s : sequences) {
    auto l = net.sentence_loss(tape, s, mode);
    full.push_back(l.full);
    bw.push_back(l.backward_only);
  }
  BatchLoss<T> out;
  out.full = grad::add_n(tape, full);
  if (lambda > 0.0)
    out.full = grad::add(tape, out.full,
                         grad::scale(tape, net.squared_norm(tape), static_cast<T>(lambda / 2.0)));
  out.backward_only = grad::add_n(tape, bw);
  return out;
}

// Seeds derived from the run seed: parameter initialization, then the
// training stream (dropout masks and batch order).
struct RunSeeds {
  std::uint64_t init;
  std::uint64_t train;

  explicit RunSeeds(std::uint64_t seed) {
    SplitMix64 master(seed);
    init = master.next();
    train = master.next();
  }
};

// Mini-batch training with one optimizer per group. Each batch runs one
// forward pass; each group's gradient comes from its own backward pass over
// that tape, and all groups step after all gradients are collected, so every
// gradient is taken at the same parameter values. Returns the parameters of
// the epoch with the best dev score.
template <std::floating_point T>
TrainResult<T> train_groups(const PreparedCorpus& corpus, const TrainingConfig& cfg,
                            const std::vector<GroupSpec>& specs,
                            const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (corpus.train.empty()) throw ConfigError("training split is empty");
  if (corpus.dev.empty()) throw ConfigError("dev split is empty");
  const RunSeeds seeds(cfg.seed);
  model::Network<T> net(cfg.model_config(corpus.vocabs), seeds.init);
  SplitMix64 rng(seeds.train);

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.clip_norm = cfg.clip_norm;
  std::vector<Adam<T>> optimizers;
  auto groups = partition(net.parameters(), specs);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    AdamConfig c = adam;
    if (specs[g].learning_rate >= 0.0) c.learning_rate = specs[g].learning_rate;
    optimizers.emplace_back(std::move(groups[g]), c);
  }

  auto batches = make_batches<T>(corpus.train, cfg);
  if (batches.empty()) throw ConfigError("no training batches");

  TrainResult<T> result{net.clone(), {}, 0, {}};
  auto best_values = net.parameters().snapshot();
  bool have_best = false;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(batches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t bi : order) {
      ++global_step;
      const auto& batch = batches[bi];
      if (batch.sequences.empty()) continue;
      grad::Tape<T> tape;
      const std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(global_step);
      BatchLoss<T> loss;
      try {
        loss = batch_loss(tape, net, batch.sequences, cfg.lambda, model::Mode::train(rng));
      } catch (const NumericError& e) {
        throw TrainingError("loss diverged at " + where + ": " + e.what());
      }
      const double value = static_cast<double>(loss.full.item());
      if (!std::isfinite(value)) throw TrainingError("loss diverged at " + where);
      loss_sum += value;

      std::vector<std::vector<std::vector<T>>> stash(optimizers.size());
      for (std::size_t g = 0; g < optimizers.size(); ++g) {
        if (optimizers[g].group().empty()) continue;
        net.parameters().zero_grad();
        tape.backward(specs[g].loss == LossTerm::kFull ? loss.full : loss.backward_only);
        for (const auto& [name, t] : optimizers[g].group()) stash[g].emplace_back(t.grad().begin(), t.grad().end());
      }
      net.parameters().zero_grad();
      for (std::size_t g = 0; g < optimizers.size(); ++g) {
        auto& group = optimizers[g].group();
        for (std::size_t k = 0; k < stash[g].size(); ++k) {
          grad::Tensor<T> t = group[k].second;
          std::copy(stash[g][k].begin(), stash[g][k].end(), t.grad().begin());
        }
      }
      for (auto& opt : optimizers) opt.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.dev = evaluate(net, corpus.vocabs.labels, corpus.dev);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    bool better = !have_best;
    if (have_best) {
      if (cfg.selection == Selection::kCer && !std::isnan(rec.dev.cer) && !std::isnan(result.best_dev.cer))
        better = rec.dev.cer < result.best_dev.cer;
      else
        better = rec.dev.token_accuracy > result.best_dev.token_accuracy;
    }
    if (better) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_dev = rec.dev;
      best_values = net.parameters().snapshot();
    }
  }
  net.parameters().restore(best_values);
  result.model = std::move(net);
  return result;
}

template <std::floating_point T>
TrainResult<T> train_single(const PreparedCorpus& corpus, const TrainingConfig& cfg,
                            const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  return train_groups<T>(corpus, cfg, single_groups(), on_epoch);
}

template <std::floating_point T>
TrainResult<T> train_dual(const PreparedCorpus& corpus, const TrainingConfig& cfg,
                          const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  return train_groups<T>(corpus, cfg, dual_groups<T>(), on_epoch);
}

template <std::floating_point T>
TrainResult<T> train(const PreparedCorpus& corpus, const TrainingConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  return cfg.regime == Regime::kDual ? train_dual<T>(corpus, cfg, on_epoch)
                                     : train_single<T>(corpus, cfg, on_epoch);
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

// Population statistics; NaN entries propagate.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

struct RunSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<metrics::EvalReport> reports;
  MeanStd accuracy, precision, recall, f1, cer;
};

inline RunSummary summarize(std::vector<std::uint64_t> seeds, std::vector<metrics::EvalReport> reports) {
  RunSummary s;
  s.seeds = std::move(seeds);
  s.reports = std::move(reports);
  std::vector<double> acc, p, r, f, c;
  for (const auto& rep : s.reports) {
    acc.push_back(rep.token_accuracy);
    p.push_back(rep.precision);
    r.push_back(rep.recall);
    f.push_back(rep.f1);
    c.push_back(rep.cer);
  }
  s.accuracy = mean_std(acc);
  s.precision = mean_std(p);
  s.recall = mean_std(r);
  s.f1 = mean_std(f);
  s.cer = mean_std(c);
  return s;
}

// Trains once per seed and scores each best model on `eval_split`. Runs are
// independent and may execute on up to `jobs` threads; results are reported
// in seed order regardless.
template <std::floating_point T>
RunSummary multi_run_seeds(const PreparedCorpus& corpus, const std::vector<data::EncodedSentence>& eval_split,
                           const TrainingConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           std::size_t jobs = 1,
                           const std::function<void(std::size_t, const TrainResult<T>&)>& on_run = {}) {
  if (seeds.empty()) throw ConfigError("multi_run: need at least one run");
  std::vector<metrics::EvalReport> reports(seeds.size());
  std::vector<std::string> errors(seeds.size());
  std::vector<std::unique_ptr<TrainResult<T>>> results(seeds.size());
  auto work = [&](std::size_t i) {
    try {
      TrainingConfig c = cfg;
      c.seed = seeds[i];
      results[i] = std::make_unique<TrainResult<T>>(train<T>(corpus, c));
      reports[i] = evaluate(results[i]->model, corpus.vocabs.labels, eval_split);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
  for (std::size_t start = 0; start < seeds.size(); start += jobs) {
    std::vector<std::thread> pool;
    const std::size_t end = std::min(seeds.size(), start + jobs);
    for (std::size_t i = start + 1; i < end; ++i) pool.emplace_back(work, i);
    work(start);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!errors[i].empty()) throw TrainingError("run " + std::to_string(i) + " failed: " + errors[i]);
    if (on_run) on_run(i, *results[i]);
  }
  return summarize(seeds, std::move(reports));
}

// Seeds seed, seed + 1, ..., seed + runs - 1.
template <std::floating_point T>
RunSummary multi_run(const PreparedCorpus& corpus, const std::vector<data::EncodedSentence>& eval_split,
                     const TrainingConfig& cfg, std::size_t jobs = 1,
                     const std::function<void(std::size_t, const TrainResult<T>&)>& on_run = {}) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.runs; ++i) seeds.push_back(cfg.seed + i);
  return multi_run_seeds<T>(corpus, eval_split, cfg, seeds, jobs, on_run);
}

}  // namespace s2bt::training
