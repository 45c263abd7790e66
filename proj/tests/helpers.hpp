#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "s2bt/data/sentence.hpp"
#include "s2bt/data/synthetic.hpp"
#include "s2bt/model/config.hpp"
#include "s2bt/random.hpp"
#include "s2bt/training/trainer.hpp"

namespace testutil {

inline s2bt::model::ModelConfig tiny_config(bool residual = true, std::size_t features = 1) {
  s2bt::model::ModelConfig c;
  c.word_vocab = 9;
  c.char_vocab = 8;
  c.label_vocab = 7;
  c.feature_vocabs.assign(features, 5);
  c.word_dim = 4;
  c.char_dim = 3;
  c.char_hidden = 3;
  c.char_out = 3;
  c.label_dim = 3;
  c.feature_dim = 2;
  c.hidden = 3;
  c.dropout = 0.25;
  c.residual_blocks = residual;
  return c;
}

// Random in-vocabulary sentence for a config; labels avoid the reserved ids.
inline s2bt::data::EncodedSentence random_sentence(const s2bt::model::ModelConfig& c, std::size_t n,
                                                   s2bt::SplitMix64& rng) {
  s2bt::data::EncodedSentence s;
  s.features.assign(c.feature_vocabs.size(), {});
  for (std::size_t i = 0; i < n; ++i) {
    s.words.push_back(static_cast<int>(1 + rng.below(c.word_vocab - 1)));
    std::vector<int> chars;
    const std::size_t len = 1 + rng.below(4);
    for (std::size_t k = 0; k < len; ++k) chars.push_back(static_cast<int>(2 + rng.below(c.char_vocab - 2)));
    s.chars.push_back(chars);
    for (std::size_t k = 0; k < c.feature_vocabs.size(); ++k)
      s.features[k].push_back(static_cast<int>(2 + rng.below(c.feature_vocabs[k] - 2)));
    s.labels.push_back(static_cast<int>(3 + rng.below(c.label_vocab - 3)));
  }
  return s;
}

// Small training config used by trainer tests.
inline s2bt::training::TrainingConfig small_training(std::size_t epochs = 3) {
  s2bt::training::TrainingConfig t;
  t.hidden = 8;
  t.word_dim = 8;
  t.char_dim = 4;
  t.char_hidden = 4;
  t.char_out = 4;
  t.label_dim = 4;
  t.feature_dim = 2;
  t.learning_rate = 5e-3;
  t.lambda = 1e-6;
  t.dropout = 0.1;
  t.epochs = epochs;
  t.batch_tokens = 64;
  t.runs = 1;
  return t;
}

inline s2bt::data::SyntheticCorpus small_corpus(std::size_t train = 40, std::uint64_t seed = 11) {
  s2bt::data::SynthSpec spec;
  spec.seed = seed;
  spec.train_sentences = train;
  spec.dev_sentences = 15;
  spec.test_sentences = 15;
  spec.concepts = 3;
  spec.value_words = 8;
  spec.filler_words = 8;
  spec.max_length = 8;
  return s2bt::data::make_synthetic_corpus(spec);
}

// Random tag sequence over O, B-/I- of a few labels, ill-formed I- included.
inline std::vector<std::string> random_bio(s2bt::SplitMix64& rng, std::size_t n, std::size_t labels = 3) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rng.below(2 * labels + 1);
    if (r == 0) t.push_back("O");
    else t.push_back(std::string(r % 2 ? "B-" : "I-") + static_cast<char>('a' + (r - 1) / 2));
  }
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("s2bt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
