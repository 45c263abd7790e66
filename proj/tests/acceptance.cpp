// Acceptance harness: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "s2bt/s2bt.hpp"

using namespace s2bt;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

training::TrainingConfig harness_config() {
  training::TrainingConfig c;
  c.hidden = 16;
  c.word_dim = 16;
  c.char_dim = 8;
  c.char_hidden = 8;
  c.char_out = 8;
  c.label_dim = 8;
  c.feature_dim = 4;
  c.learning_rate = 5e-3;
  c.dropout = 0.1;
  c.batch_tokens = 64;
  c.runs = 1;
  return c;
}

data::SyntheticCorpus overfit_corpus() {
  data::SynthSpec spec;
  spec.seed = 21;
  spec.train_sentences = 50;
  spec.dev_sentences = 10;
  spec.test_sentences = 10;
  return data::make_synthetic_corpus(spec);
}

// Trains with the training split doubling as dev, so each logged dev accuracy
// is the training accuracy; returns the first epoch reaching 99% (0 if none).
std::size_t epochs_to_overfit(const training::TrainingConfig& cfg) {
  const auto raw = overfit_corpus();
  auto corpus = training::PreparedCorpus::from(raw.train, raw.train);
  const auto r = training::train<double>(corpus, cfg);
  for (const auto& rec : r.log)
    if (rec.dev.token_accuracy >= 0.99) return rec.epoch;
  return 0;
}

Outcome criterion1() {
  Outcome o;
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t tensors = 0;
  for (bool residual : {true, false}) {
    training::GradcheckOptions g;
    g.residual_blocks = residual;
    for (const auto& c : training::run_gradcheck(g)) {
      ++tensors;
      worst = std::max(worst, c.max_rel_error);
      o.require(c.max_rel_error < 1e-4, c.name + fmt(" rel error %.3e", c.max_rel_error));
    }
  }
  const double secs = seconds_since(start);
  o.require(secs < 60.0, fmt("took %.1f s", secs));
  if (o.pass) o.detail = std::to_string(tensors) + fmt(" tensors, worst rel error %.2e, %.1f s", worst, secs);
  return o;
}

std::size_t residual_epochs = 0;

Outcome criterion2() {
  Outcome o;
  const auto start = Clock::now();
  auto cfg = harness_config();
  cfg.epochs = 50;
  std::string detail;
  for (auto regime : {training::Regime::kSingle, training::Regime::kDual}) {
    cfg.regime = regime;
    const std::size_t e = epochs_to_overfit(cfg);
    const char* name = regime == training::Regime::kSingle ? "single" : "dual";
    o.require(e > 0, std::string(name) + " regime never reached 99%");
    detail += std::string(name) + " at epoch " + std::to_string(e) + ", ";
    if (regime == training::Regime::kDual) residual_epochs = e;
  }
  const double secs = seconds_since(start);
  o.require(secs < 300.0, fmt("took %.1f s", secs));
  if (o.pass) o.detail = detail + fmt("%.1f s", secs);
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto start = Clock::now();
  data::SynthSpec spec;
  spec.seed = 3;
  const auto raw = data::make_synthetic_corpus(spec);
  const auto corpus = training::PreparedCorpus::from(raw.train, raw.dev);
  const auto test = data::encode_corpus(corpus.vocabs, raw.test);

  data::MostFrequentLabelTagger baseline(raw.train);
  std::size_t total = 0, right = 0;
  for (const auto& s : raw.test) {
    const auto t = baseline.tag(s.tokens);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++total;
      right += t[i] == s.labels[i];
    }
  }
  const double base = static_cast<double>(right) / static_cast<double>(total);

  auto cfg = harness_config();
  cfg.epochs = 4;
  cfg.seed = 1;
  cfg.runs = 3;
  const auto summary = training::multi_run<double>(corpus, test, cfg);
  const double gain = 100.0 * (summary.accuracy.mean - base);
  o.require(gain >= 5.0, fmt("model %.4f vs baseline %.4f", summary.accuracy.mean, base));
  const double secs = seconds_since(start);
  o.require(secs < 1200.0, fmt("took %.1f s", secs));
  if (o.pass)
    o.detail = fmt("model %.4f +- %.4f vs baseline %.4f", summary.accuracy.mean, summary.accuracy.stddev, base) +
               fmt(", %.1f s", secs);
  return o;
}

Outcome criterion4() {
  Outcome o;
  SplitMix64 rng(404);
  using Tags = std::vector<std::string>;
  for (int trial = 0; trial < 10000 && o.pass; ++trial) {
    std::vector<Tags> g, p;
    const std::size_t sentences = 1 + rng.below(3);
    for (std::size_t k = 0; k < sentences; ++k) {
      const std::size_t n = 1 + rng.below(10);
      g.push_back(testutil::random_bio(rng, n));
      p.push_back(testutil::random_bio(rng, n));
    }
    const auto s = metrics::chunk_f1(g, p);
    const auto b = oracle::brute_f1(g, p);
    o.require(s.precision == b.p && s.recall == b.r && s.f1 == b.f, "chunk F1 differs on trial " + std::to_string(trial));
    std::size_t gold_concepts = 0;
    for (const auto& t : g) gold_concepts += oracle::concepts(t).size();
    if (gold_concepts > 0)
      o.require(metrics::concept_error_rate_from_tags(g, p).cer == oracle::brute_cer(g, p),
                "CER differs on trial " + std::to_string(trial));
  }
  using Seqs = std::vector<std::vector<std::string>>;
  o.require(metrics::concept_error_rate(Seqs{{"A", "B", "C"}}, Seqs{{"A", "C"}}).cer == 1.0 / 3.0, "[A,B,C] vs [A,C]");
  o.require(metrics::concept_error_rate(Seqs{{"A", "B"}}, Seqs{{"A", "B"}}).cer == 0.0, "identical sequences");
  o.require(metrics::concept_error_rate(Seqs{{"A"}}, Seqs{{"X", "Y", "Z"}}).cer == 3.0, "insertions exceed 1");
  const std::vector<Tags> gold = {{"B-a", "I-a", "O", "B-b"}};
  o.require(metrics::chunk_f1(gold, std::vector<Tags>{{"B-a", "O", "O", "B-b"}}).f1 == 0.5, "half-right chunk F1");
  const auto all_o = metrics::evaluate_tags(gold, std::vector<Tags>{{"O", "O", "O", "O"}});
  o.require(all_o.f1 == 0.0 && all_o.cer == 1.0, "all-O predictor");
  if (o.pass) o.detail = "10000 random pairs and hand cases exact";
  return o;
}

Outcome criterion5() {
  Outcome o;
  SplitMix64 rng(505);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t width = 2 + rng.below(9);
    auto random_row = [&] {
      std::vector<double> logits(width);
      for (auto& v : logits) v = rng.uniform(-4.0, 4.0);
      return oracle::log_softmax(logits);
    };
    model::Rows<double> fw{random_row()}, bw{random_row()};
    const int combined = model::combine(fw, bw).labels[0];
    std::vector<double> product(width);
    for (std::size_t j = 0; j < width; ++j) product[j] = std::exp(fw[0][j]) * std::exp(bw[0][j]);
    o.require(combined == oracle::first_max(product), "argmax differs on trial " + std::to_string(trial));
  }
  if (o.pass) o.detail = "1000 row pairs agree";
  return o;
}

std::vector<data::EncodedSentence> random_corpus(SplitMix64& rng) {
  std::vector<data::EncodedSentence> out(1 + rng.below(12));
  int next = 0;
  for (auto& s : out) {
    const std::size_t n = 1 + rng.below(9);
    for (std::size_t i = 0; i < n; ++i) {
      s.words.push_back(next++);
      s.chars.push_back({2});
      s.labels.push_back(3);
    }
  }
  return out;
}

Outcome criterion6() {
  Outcome o;
  SplitMix64 rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    const auto corpus = random_corpus(rng);
    const auto stream = data::build_stream(corpus);
    const auto windows = data::stream_chunks(corpus, 2 + rng.below(10));
    o.require(data::reconstruct_stream(windows) == stream, "stream not reconstructed");
    std::set<int> covered;
    for (const auto& w : windows)
      for (const auto& seq : w.sequences) covered.insert(seq.words.begin(), seq.words.end());
    std::size_t tokens = 0, longest = 0;
    for (const auto& s : corpus) {
      tokens += s.size();
      longest = std::max(longest, s.size());
    }
    o.require(covered.size() == tokens, "stream chunks miss a token");

    const auto buckets = data::bucket_batches(corpus, longest + rng.below(30));
    std::multiset<std::size_t> seen;
    std::size_t bucket_tokens = 0;
    for (const auto& b : buckets) {
      seen.insert(b.sources.begin(), b.sources.end());
      bucket_tokens += b.token_count();
      for (std::size_t k = 0; k < b.sources.size(); ++k)
        o.require(b.sequences[k] == corpus[b.sources[k]] && b.sequences[k].size() == b.bucket, "bucket content");
    }
    o.require(seen.size() == corpus.size() && std::set<std::size_t>(seen.begin(), seen.end()).size() == corpus.size(),
              "bucket batches not a partition");
    o.require(bucket_tokens == tokens, "bucket token count");
    if (!o.pass) break;
  }
  if (o.pass) o.detail = "100 random corpora";
  return o;
}

Outcome criterion7() {
  Outcome o;
  auto cfg = harness_config();
  cfg.epochs = 50;
  cfg.residual_blocks = false;
  const std::size_t plain = epochs_to_overfit(cfg);
  o.require(plain > 0, "plain encoder never reached 99%");
  o.require(residual_epochs > 0 && residual_epochs <= 2 * plain,
            "residual " + std::to_string(residual_epochs) + " epochs vs plain " + std::to_string(plain));
  if (o.pass)
    o.detail = "plain at epoch " + std::to_string(plain) + ", residual at epoch " + std::to_string(residual_epochs);
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto raw = testutil::small_corpus(40, 8);
  const auto corpus = training::PreparedCorpus::from(raw.train, raw.dev);
  for (auto batcher : {training::Batcher::kBucket, training::Batcher::kStream}) {
    auto cfg = harness_config();
    cfg.epochs = 3;
    cfg.batcher = batcher;
    cfg.chunk_len = 8;
    std::string logs[2], files[2];
    for (int k = 0; k < 2; ++k) {
      const auto r = training::train<double>(corpus, cfg);
      for (const auto& rec : r.log) logs[k] += training::format_epoch_line(rec, false) + "\n";
      std::ostringstream os;
      model::write_model(os, r.model, corpus.vocabs, cfg.lambda);
      files[k] = os.str();
    }
    const char* name = batcher == training::Batcher::kBucket ? "bucket" : "stream";
    o.require(logs[0] == logs[1], std::string(name) + " logs differ");
    o.require(files[0] == files[1], std::string(name) + " model files differ");
  }
  if (o.pass) o.detail = "logs and model bytes identical for both batchers";
  return o;
}

Outcome criterion9() {
  Outcome o;
  const auto raw = testutil::small_corpus(40, 9);
  const auto corpus = training::PreparedCorpus::from(raw.train, raw.dev);
  const auto test = data::encode_corpus(corpus.vocabs, raw.test);
  auto cfg = harness_config();
  cfg.epochs = 2;
  const auto r = training::train<double>(corpus, cfg);
  const auto before = training::evaluate(r.model, corpus.vocabs.labels, test);
  testutil::TempDir dir("acceptance");
  const std::string path = dir.file("model.bin");
  model::save_model(path, r.model, corpus.vocabs, cfg.lambda);
  const auto loaded = model::load_model<double>(path);
  const auto reencoded = data::encode_corpus(loaded.vocabs, raw.test);
  const auto after = training::evaluate(loaded.network, loaded.vocabs.labels, reencoded);
  o.require(before.identical(after), "reports differ after reload");
  o.require(reencoded == test, "encoding differs after reload");
  if (o.pass) o.detail = fmt("accuracy %.6f on both sides", after.token_accuracy);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient soundness", criterion1},   {"overfit capability", criterion2},
      {"generalization sanity", criterion3}, {"metric oracle equivalence", criterion4},
      {"combination rule", criterion5},      {"batcher contracts", criterion6},
      {"block degradation", criterion7},     {"reproducibility", criterion8},
      {"serialization round trip", criterion9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures ? 1 : 0;
}
