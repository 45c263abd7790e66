#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/error.hpp"
#include "s2bt/grad/ops.hpp"
#include "s2bt/model/config.hpp"
#include "s2bt/model/layers.hpp"

namespace s2bt::model {

// Reserved label id fed to the decoders before the first (forward) and after
// the last (backward) position.
inline constexpr int kBoundaryLabel = 2;

template <std::floating_point T>
using Rows = std::vector<std::vector<T>>;

// Index of the largest entry; ties go to the lowest index.
template <std::floating_point T>
int argmax(std::span<const T> row) {
  if (row.empty()) throw ContractError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return static_cast<int>(best);
}

template <std::floating_point T>
struct Combined {
  Rows<T> rows;
  std::vector<int> labels;
};

// Log-space arithmetic mean of the two decoders, i.e. the log of the
// (unnormalized) geometric mean of their distributions.
template <std::floating_point T>
Combined<T> combine(const Rows<T>& forward, const Rows<T>& backward) {
  if (forward.size() != backward.size())
    throw ContractError("combine: " + std::to_string(forward.size()) + " forward rows vs " +
                        std::to_string(backward.size()) + " backward rows");
  Combined<T> out;
  out.rows.reserve(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) {
    if (forward[i].size() != backward[i].size())
      throw ContractError("combine: row " + std::to_string(i) + " widths differ");
    std::vector<T> row(forward[i].size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = T(0.5) * (forward[i][j] + backward[i][j]);
    out.labels.push_back(argmax<T>(row));
    out.rows.push_back(std::move(row));
  }
  return out;
}

template <std::floating_point T>
struct DecoderOutput {
  // Indexed by sentence position, whatever direction the decoder ran in.
  std::vector<Tensor<T>> states;
  std::vector<Tensor<T>> log_probs;
  std::vector<int> predicted;
};

template <std::floating_point T>
struct Prediction {
  Rows<T> forward;
  Rows<T> backward;
  Combined<T> combined;
  std::vector<int> forward_labels;
  std::vector<int> backward_labels;

  const std::vector<int>& labels() const { return combined.labels; }
};

template <std::floating_point T>
struct SentenceLoss {
  // -sum_i 1/2 (log P_fw(e_i) + log P_bw(e_i))
  Tensor<T> full;
  // -sum_i log P_bw(e_i)
  Tensor<T> backward_only;
};

// Label-context decoder: one GRU step per position over [encoder_i, label
// embedding], optionally wrapped in a residual block whose input is projected
// to the block width.
template <std::floating_point T>
struct Decoder {
  bool residual = true;
  Tensor<T> proj_w, proj_b;
  ResidualBlock<T, GruCell<T>> block;
  Tensor<T> h0;

  static Decoder create(ParameterSet<T>& params, const std::string& prefix, const ModelConfig& cfg,
                        SplitMix64& rng) {
    Decoder d;
    d.residual = cfg.residual_blocks;
    const std::size_t width = cfg.block_width();
    const std::size_t input = width + cfg.label_dim;
    if (d.residual) {
      d.proj_w = params.add(prefix + ".proj.W", {width, input}, Init::kUniformFanIn, rng, input);
      d.proj_b = params.add(prefix + ".proj.b", {width}, Init::kUniformFanIn, rng, input);
      auto cell = GruCell<T>::create(params, prefix + ".gru", width, width, rng);
      d.block = ResidualBlock<T, GruCell<T>>::create(params, prefix, width, cfg.ffn_width(),
                                                     cfg.layer_norm_eps, std::move(cell), rng);
    } else {
      d.block.ctx = GruCell<T>::create(params, prefix + ".gru", input, width, rng);
    }
    d.h0 = params.add(prefix + ".h0", {width}, Init::kZeros, rng);
    return d;
  }

  // Returns (output, next recurrent state).
  std::pair<Tensor<T>, Tensor<T>> step(Tape<T>& tape, const Tensor<T>& encoded,
                                       const Tensor<T>& label_embedding, const Tensor<T>& state,
                                       double dropout, const Mode& mode) const {
    auto input = grad::concat(tape, {encoded, label_embedding});
    if (!residual) {
      auto next = block.ctx.step(tape, input, state);
      return {next, next};
    }
    auto s = block.norm_in(tape, grad::affine(tape, proj_w, input, proj_b));
    auto next = block.ctx.step(tape, s, state);
    return {block.output(tape, next, s, dropout, mode), next};
  }
};

// Character-aware bidirectional GRU encoder with residual blocks, a
// right-to-left label decoder, a left-to-right label decoder that also reads
// the right label context, and the combined log-space output.
template <std::floating_point T>
class Network {
 public:
  Network(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    SplitMix64 rng(seed);
    const ModelConfig& c = config_;
    const std::size_t d = c.block_width();

    word_embed_ = params_.add("embed.word", {c.word_vocab, c.word_dim}, Init::kUniformFanIn, rng);
    char_embed_ = params_.add("embed.char", {c.char_vocab, c.char_dim}, Init::kUniformFanIn, rng);
    label_embed_ = params_.add("embed.label", {c.label_vocab, c.label_dim}, Init::kUniformFanIn, rng);
    for (std::size_t k = 0; k < c.feature_vocabs.size(); ++k)
      feature_embed_.push_back(params_.add("embed.feature" + std::to_string(k),
                                           {c.feature_vocabs[k], c.feature_dim},
                                           Init::kUniformFanIn, rng));

    char_gru_ = BiGru<T>::create(params_, "char.gru", c.char_dim, c.char_hidden, rng);
    char_ffnn_w_ = params_.add("char.ffnn.W", {c.char_out, 2 * c.char_hidden}, Init::kUniformFanIn, rng);
    char_ffnn_b_ = params_.add("char.ffnn.b", {c.char_out}, Init::kUniformFanIn, rng, 2 * c.char_hidden);

    const std::size_t lex = c.lexical_width();
    if (c.residual_blocks) {
      proj_w_ = params_.add("encoder.proj.W", {d, lex}, Init::kUniformFanIn, rng, lex);
      proj_b_ = params_.add("encoder.proj.b", {d}, Init::kUniformFanIn, rng, lex);
      auto gru = BiGru<T>::create(params_, "encoder.gru", d, c.hidden, rng);
      encoder_ = ResidualBlock<T, BiGru<T>>::create(params_, "encoder", d, c.ffn_width(),
                                                    c.layer_norm_eps, std::move(gru), rng);
    } else {
      encoder_.ctx = BiGru<T>::create(params_, "encoder.gru", lex, c.hidden, rng);
    }

    decoder_bw_ = Decoder<T>::create(params_, "decoder_bw", c, rng);
    decoder_fw_ = Decoder<T>::create(params_, "decoder_fw", c, rng);

    out_bw_w_ = params_.add("output_bw.W", {c.label_vocab, 2 * d}, Init::kUniformFanIn, rng);
    out_bw_b_ = params_.add("output_bw.b", {c.label_vocab}, Init::kUniformFanIn, rng, 2 * d);
    out_fw_w_ = params_.add("output_fw.W", {c.label_vocab, 3 * d}, Init::kUniformFanIn, rng);
    out_fw_b_ = params_.add("output_fw.b", {c.label_vocab}, Init::kUniformFanIn, rng, 3 * d);
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Independent copy with identical parameter values.
  Network clone() const {
    Network copy(config_, 0);
    copy.params_.restore(params_.snapshot());
    return copy;
  }

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  // Parameters stepped by the backward-decoder optimizer in the two-optimizer
  // regime: the backward decoder and its output layer.
  static bool in_backward_group(const std::string& name) {
    return name.starts_with("decoder_bw.") || name.starts_with("output_bw.");
  }

  // FFNN(sum of BiGru states over the characters of one word).
  Tensor<T> char_represent(Tape<T>& tape, std::span<const int> chars) const {
    if (chars.empty()) throw ContractError("char_represent: word has no characters");
    std::vector<Tensor<T>> embedded;
    embedded.reserve(chars.size());
    for (int c : chars) embedded.push_back(grad::lookup(tape, char_embed_, checked_id(c, config_.char_vocab, "character")));
    auto states = char_gru_.run(tape, embedded);
    auto total = grad::add_n(tape, states);
    return grad::tanh(tape, grad::affine(tape, char_ffnn_w_, total, char_ffnn_b_));
  }

  // Lexical representation of each word followed by the encoder block.
  std::vector<Tensor<T>> encode(Tape<T>& tape, const data::EncodedSentence& s, const Mode& mode) const {
    const std::size_t n = s.size();
    if (n == 0) throw ContractError("encode: empty sentence");
    if (s.chars.size() != n) throw ContractError("encode: character sequences not aligned with words");
    if (s.features.size() != feature_embed_.size())
      throw ContractError("encode: sentence has " + std::to_string(s.features.size()) +
                          " feature columns, model expects " + std::to_string(feature_embed_.size()));
    for (const auto& col : s.features)
      if (col.size() != n) throw ContractError("encode: feature column not aligned with words");

    std::vector<Tensor<T>> lex(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Tensor<T>> parts;
      parts.push_back(grad::lookup(tape, word_embed_, checked_id(s.words[i], config_.word_vocab, "word")));
      parts.push_back(char_represent(tape, s.chars[i]));
      for (std::size_t k = 0; k < feature_embed_.size(); ++k)
        parts.push_back(grad::lookup(tape, feature_embed_[k],
                                     checked_id(s.features[k][i], config_.feature_vocabs[k], "feature")));
      lex[i] = grad::concat(tape, parts);
    }
    if (!config_.residual_blocks) return encoder_.ctx.run(tape, lex);

    std::vector<Tensor<T>> normalized(n);
    for (std::size_t i = 0; i < n; ++i)
      normalized[i] = encoder_.norm_in(tape, grad::affine(tape, proj_w_, lex[i], proj_b_));
    auto ctx = encoder_.ctx.run(tape, normalized);
    std::vector<Tensor<T>> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = encoder_.output(tape, ctx[i], normalized[i], config_.dropout, mode);
    return out;
  }

  // Right-to-left pass. With gold labels, position i reads gold[i + 1]
  // (teacher forcing); without, it reads its own prediction for i + 1.
  DecoderOutput<T> decode_backward(Tape<T>& tape, const std::vector<Tensor<T>>& encoded,
                                   const std::vector<int>* gold, const Mode& mode) const {
    const std::size_t n = encoded.size();
    if (n == 0) throw ContractError("decode_backward: no encoder states");
    check_gold(gold, n);
    DecoderOutput<T> out;
    out.states.resize(n);
    out.log_probs.resize(n);
    out.predicted.assign(n, 0);
    Tensor<T> state = decoder_bw_.h0;
    int next_label = kBoundaryLabel;
    for (std::size_t i = n; i-- > 0;) {
      auto emb = grad::lookup(tape, label_embed_, static_cast<std::size_t>(next_label));
      auto [h, s] = decoder_bw_.step(tape, encoded[i], emb, state, config_.dropout, mode);
      state = s;
      out.states[i] = h;
      out.log_probs[i] = grad::log_softmax(
          tape, grad::affine(tape, out_bw_w_, grad::concat(tape, {encoded[i], h}), out_bw_b_));
      out.predicted[i] = argmax<T>(out.log_probs[i].values());
      next_label = gold ? (*gold)[i] : out.predicted[i];
    }
    return out;
  }

  // Left-to-right pass over [forward state, encoder, backward state].
  DecoderOutput<T> decode_forward(Tape<T>& tape, const std::vector<Tensor<T>>& encoded,
                                  const std::vector<Tensor<T>>& backward_states,
                                  const std::vector<int>* gold, const Mode& mode) const {
    const std::size_t n = encoded.size();
    if (n == 0) throw ContractError("decode_forward: no encoder states");
    if (backward_states.size() != n)
      throw ContractError("decode_forward: " + std::to_string(n) + " encoder states but " +
                          std::to_string(backward_states.size()) + " backward states");
    check_gold(gold, n);
    DecoderOutput<T> out;
    out.states.resize(n);
    out.log_probs.resize(n);
    out.predicted.assign(n, 0);
    Tensor<T> state = decoder_fw_.h0;
    int prev_label = kBoundaryLabel;
    for (std::size_t i = 0; i < n; ++i) {
      auto emb = grad::lookup(tape, label_embed_, static_cast<std::size_t>(prev_label));
      auto [h, s] = decoder_fw_.step(tape, encoded[i], emb, state, config_.dropout, mode);
      state = s;
      out.states[i] = h;
      out.log_probs[i] = grad::log_softmax(
          tape, grad::affine(tape, out_fw_w_, grad::concat(tape, {h, encoded[i], backward_states[i]}),
                             out_fw_b_));
      out.predicted[i] = argmax<T>(out.log_probs[i].values());
      prev_label = gold ? (*gold)[i] : out.predicted[i];
    }
    return out;
  }

  // Greedy inference with dropout off.
  Prediction<T> predict(const data::EncodedSentence& s) const {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const Mode mode = Mode::eval();
    auto encoded = encode(tape, s, mode);
    auto bw = decode_backward(tape, encoded, nullptr, mode);
    auto fw = decode_forward(tape, encoded, bw.states, nullptr, mode);
    Prediction<T> p;
    p.forward = to_rows(fw.log_probs);
    p.backward = to_rows(bw.log_probs);
    p.forward_labels = fw.predicted;
    p.backward_labels = bw.predicted;
    p.combined = combine(p.forward, p.backward);
    return p;
  }

  // Negative log-likelihood of the gold labels under teacher forcing.
  SentenceLoss<T> sentence_loss(Tape<T>& tape, const data::EncodedSentence& s, const Mode& mode) const {
    if (s.labels.size() != s.size())
      throw ContractError("sentence_loss: sentence has no aligned gold labels");
    auto encoded = encode(tape, s, mode);
    auto bw = decode_backward(tape, encoded, &s.labels, mode);
    auto fw = decode_forward(tape, encoded, bw.states, &s.labels, mode);
    std::vector<Tensor<T>> fw_terms, bw_terms;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto gold = static_cast<std::size_t>(s.labels[i]);
      fw_terms.push_back(grad::pick(tape, fw.log_probs[i], gold));
      bw_terms.push_back(grad::pick(tape, bw.log_probs[i], gold));
    }
    auto fw_sum = grad::add_n(tape, fw_terms);
    auto bw_sum = grad::add_n(tape, bw_terms);
    SentenceLoss<T> loss;
    loss.full = grad::scale(tape, grad::add(tape, fw_sum, bw_sum), T(-0.5));
    loss.backward_only = grad::scale(tape, bw_sum, T(-1));
    return loss;
  }

  // sum over all parameters of |theta|^2.
  Tensor<T> squared_norm(Tape<T>& tape) const {
    std::vector<Tensor<T>> terms;
    for (const auto& [name, t] : params_.items()) terms.push_back(grad::sum_squares(tape, t));
    return grad::add_n(tape, terms);
  }

 private:
  static std::size_t checked_id(int id, std::size_t vocab, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ContractError(std::string(what) + " id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(vocab));
    return static_cast<std::size_t>(id);
  }

  void check_gold(const std::vector<int>* gold, std::size_t n) const {
    if (!gold) return;
    if (gold->size() != n)
      throw ContractError("decoder: " + std::to_string(gold->size()) + " gold labels for " +
                          std::to_string(n) + " positions");
    for (int l : *gold) checked_id(l, config_.label_vocab, "label");
  }

  static Rows<T> to_rows(const std::vector<Tensor<T>>& ts) {
    Rows<T> rows;
    rows.reserve(ts.size());
    for (const auto& t : ts) rows.emplace_back(t.values().begin(), t.values().end());
    return rows;
  }

  ModelConfig config_;
  ParameterSet<T> params_;
  Tensor<T> word_embed_, char_embed_, label_embed_;
  std::vector<Tensor<T>> feature_embed_;
  BiGru<T> char_gru_;
  Tensor<T> char_ffnn_w_, char_ffnn_b_;
  Tensor<T> proj_w_, proj_b_;
  ResidualBlock<T, BiGru<T>> encoder_;
  Decoder<T> decoder_bw_, decoder_fw_;
  Tensor<T> out_bw_w_, out_bw_b_, out_fw_w_, out_fw_b_;
};

}  // namespace s2bt::model
