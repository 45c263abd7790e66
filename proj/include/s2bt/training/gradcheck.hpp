#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/grad/check.hpp"
#include "s2bt/model/network.hpp"
#include "s2bt/random.hpp"
#include "s2bt/training/trainer.hpp"

namespace s2bt::training {

struct GradcheckOptions {
  std::uint64_t seed = 7;
  double h = 1e-5;
  double lambda = 0.01;
  double dropout = 0.2;
  bool residual_blocks = true;
};

struct GradcheckInstance {
  model::ModelConfig config;
  data::EncodedSentence sentence;
};

// Three tokens of four characters each, one feature column, three real labels
// on top of the reserved ids.
inline GradcheckInstance gradcheck_instance(const GradcheckOptions& o) {
  SplitMix64 rng(o.seed ^ 0x5eedULL);
  GradcheckInstance g;
  auto& c = g.config;
  c.word_vocab = 6;
  c.char_vocab = 7;
  c.label_vocab = 6;
  c.feature_vocabs = {4};
  c.word_dim = 3;
  c.char_dim = 2;
  c.char_hidden = 2;
  c.char_out = 2;
  c.label_dim = 2;
  c.feature_dim = 2;
  c.hidden = 2;
  c.dropout = o.dropout;
  c.residual_blocks = o.residual_blocks;
  auto& s = g.sentence;
  s.features.assign(1, {});
  for (int i = 0; i < 3; ++i) {
    s.words.push_back(2 + static_cast<int>(rng.below(4)));
    std::vector<int> chars;
    for (int k = 0; k < 4; ++k) chars.push_back(2 + static_cast<int>(rng.below(5)));
    s.chars.push_back(chars);
    s.features[0].push_back(2 + static_cast<int>(rng.below(2)));
    s.labels.push_back(3 + static_cast<int>(rng.below(3)));
  }
  return g;
}

// Central-difference check of every parameter of the full objective on the
// micro instance. Dropout stays on with a mask stream re-seeded for every
// evaluation, so each evaluation sees the same masks.
inline std::vector<grad::TensorCheck> run_gradcheck(const GradcheckOptions& o = {}) {
  const GradcheckInstance inst = gradcheck_instance(o);
  model::Network<double> net(inst.config, o.seed);
  const std::vector<data::EncodedSentence> batch{inst.sentence};
  const std::uint64_t mask_seed = o.seed + 1;
  auto loss_fn = [&](grad::Tape<double>& tape) {
    SplitMix64 masks(mask_seed);
    const auto mode = o.dropout > 0.0 ? model::Mode::train(masks) : model::Mode::eval();
    return batch_loss(tape, net, batch, o.lambda, mode).full;
  };
  return grad::finite_difference_check<double>(net.parameters().items(), loss_fn, o.h);
}

}  // namespace s2bt::training
