#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/error.hpp"

namespace s2bt::data {

// Bijection between strings and dense ids. Ids 0 and 1 are padding and
// unknown; label vocabularies also reserve 2 for the sequence boundary.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBoundary = 2;

  explicit Vocabulary(bool with_boundary = false) : with_boundary_(with_boundary) {
    add("<pad>");
    add("<unk>");
    if (with_boundary) add("<boundary>");
  }

  // Rebuilds a vocabulary from its full id-ordered entry list.
  static Vocabulary from_entries(const std::vector<std::string>& entries, bool with_boundary) {
    Vocabulary v(with_boundary);
    if (entries.size() < v.reserved() )
      throw FormatError("vocabulary shorter than its reserved entries");
    for (std::size_t i = 0; i < v.reserved(); ++i)
      if (entries[i] != v.entries_[i]) throw FormatError("vocabulary reserved entry mismatch");
    for (std::size_t i = v.reserved(); i < entries.size(); ++i) {
      if (v.index_.count(entries[i])) throw FormatError("duplicate vocabulary entry " + entries[i]);
      v.add(entries[i]);
    }
    return v;
  }

  int add(const std::string& s) {
    auto it = index_.find(s);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(entries_.size());
    index_.emplace(s, id);
    entries_.push_back(s);
    return id;
  }

  std::optional<int> find(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int lookup(const std::string& s) const { return find(s).value_or(kUnk); }
  bool contains(const std::string& s) const { return index_.count(s) > 0; }

  const std::string& string_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
      throw ContractError("vocabulary id " + std::to_string(id) + " out of range");
    return entries_[static_cast<std::size_t>(id)];
  }

  bool is_reserved(int id) const { return id >= 0 && static_cast<std::size_t>(id) < reserved(); }
  std::size_t reserved() const { return with_boundary_ ? 3 : 2; }
  bool has_boundary() const { return with_boundary_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

  bool operator==(const Vocabulary& o) const {
    return with_boundary_ == o.with_boundary_ && entries_ == o.entries_;
  }

 private:
  bool with_boundary_;
  std::vector<std::string> entries_;
  std::unordered_map<std::string, int> index_;
};

struct Vocabularies {
  Vocabulary words;
  Vocabulary chars;
  Vocabulary labels{true};
  std::vector<Vocabulary> features;

  bool operator==(const Vocabularies&) const = default;
};

// Splits a UTF-8 string into code points (each as its byte sequence).
// Malformed bytes are passed through one at a time.
inline std::vector<std::string> utf8_characters(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0 && c < 0xF8) len = 4;
    else if (c >= 0xE0) len = c < 0xF0 ? 3 : 1;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// Words seen fewer than min_count times fold into the unknown id. Character,
// label and feature vocabularies cover the training data exhaustively.
inline Vocabularies build_vocabularies(std::span<const TaggedSentence> train, std::size_t min_count = 1) {
  if (train.empty()) throw ContractError("build_vocabularies: empty training set");
  Vocabularies v;
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  const std::size_t columns = train.front().features.size();
  v.features.assign(columns, Vocabulary());
  for (const auto& s : train) {
    if (s.features.size() != columns)
      throw IngestionError("training sentences disagree on the number of feature columns");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::string& w = s.tokens[i];
      if (counts[w]++ == 0) order.push_back(w);
      for (const auto& ch : utf8_characters(w)) v.chars.add(ch);
      if (i < s.labels.size()) v.labels.add(s.labels[i]);
      for (std::size_t c = 0; c < columns; ++c) v.features[c].add(s.features[c][i]);
    }
  }
  for (const auto& w : order)
    if (counts[w] >= min_count) v.words.add(w);
  return v;
}

// Maps a sentence to ids. Unknown words, characters and feature values become
// the unknown id; an unknown label is an ingestion error because the label
// set is closed over training.
inline EncodedSentence encode_sentence(const Vocabularies& v, const TaggedSentence& s) {
  if (s.features.size() != v.features.size())
    throw IngestionError("sentence has " + std::to_string(s.features.size()) +
                         " feature columns, vocabularies expect " + std::to_string(v.features.size()));
  EncodedSentence e;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string& w = s.tokens[i];
    if (w.empty()) throw IngestionError("empty token");
    e.words.push_back(v.words.lookup(w));
    std::vector<int> chars;
    for (const auto& ch : utf8_characters(w)) chars.push_back(v.chars.lookup(ch));
    e.chars.push_back(std::move(chars));
  }
  for (std::size_t c = 0; c < s.features.size(); ++c) {
    if (s.features[c].size() != s.size()) throw IngestionError("feature column not aligned with tokens");
    std::vector<int> ids;
    for (const auto& f : s.features[c]) ids.push_back(v.features[c].lookup(f));
    e.features.push_back(std::move(ids));
  }
  if (!s.labels.empty()) {
    if (s.labels.size() != s.size()) throw IngestionError("labels not aligned with tokens");
    for (const auto& l : s.labels) {
      auto id = v.labels.find(l);
      if (!id || v.labels.is_reserved(*id))
        throw IngestionError("label '" + l + "' does not occur in the training data");
      e.labels.push_back(*id);
    }
  }
  return e;
}

inline std::vector<EncodedSentence> encode_corpus(const Vocabularies& v, std::span<const TaggedSentence> corpus) {
  std::vector<EncodedSentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode_sentence(v, s));
  return out;
}

// Label strings for output; reserved ids (never gold) print as "O".
inline std::vector<std::string> label_strings(const Vocabulary& labels, std::span<const int> ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(labels.is_reserved(id) ? std::string("O") : labels.string_of(id));
  return out;
}

// Fraction of tokens whose surface form is not in the word vocabulary.
inline double oov_rate(const Vocabulary& words, std::span<const TaggedSentence> corpus) {
  std::size_t total = 0, unseen = 0;
  for (const auto& s : corpus)
    for (const auto& w : s.tokens) {
      ++total;
      if (!words.contains(w)) ++unseen;
    }
  return total ? static_cast<double>(unseen) / static_cast<double>(total) : 0.0;
}

}  // namespace s2bt::data
