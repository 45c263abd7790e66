#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s2bt/error.hpp"

namespace s2bt::model {

struct ModelConfig {
  std::size_t word_vocab = 0;
  std::size_t char_vocab = 0;
  std::size_t label_vocab = 0;
  std::vector<std::size_t> feature_vocabs;

  std::size_t word_dim = 300;
  std::size_t char_dim = 30;
  std::size_t char_hidden = 50;
  std::size_t char_out = 50;
  std::size_t label_dim = 50;
  std::size_t feature_dim = 30;
  // Per-direction encoder GRU size; blocks and decoders run at 2 * hidden.
  std::size_t hidden = 300;
  // Inner width of the block feed-forward nets; 0 means 2 * block width.
  std::size_t ffn_dim = 0;
  double dropout = 0.3;
  // Wrap every recurrent layer in the norm / skip / feed-forward block.
  bool residual_blocks = true;
  double layer_norm_eps = 1e-5;

  std::size_t block_width() const { return 2 * hidden; }
  std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 2 * block_width(); }
  std::size_t lexical_width() const {
    return word_dim + char_out + feature_dim * feature_vocabs.size();
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ConfigError(std::string(what) + " must be >= 1");
    };
    positive(word_vocab, "word vocabulary size");
    positive(char_vocab, "character vocabulary size");
    if (label_vocab < 3)
      throw ConfigError("label vocabulary must hold the reserved ids plus labels (size >= 3)");
    for (std::size_t v : feature_vocabs) positive(v, "feature vocabulary size");
    positive(word_dim, "word_dim");
    positive(char_dim, "char_dim");
    positive(char_hidden, "char_hidden");
    positive(char_out, "char_out");
    positive(label_dim, "label_dim");
    if (!feature_vocabs.empty()) positive(feature_dim, "feature_dim");
    positive(hidden, "hidden");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  }
};

}  // namespace s2bt::model
