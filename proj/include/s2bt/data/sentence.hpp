#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace s2bt::data {

// One pre-tokenized sentence as read from a corpus file.
struct TaggedSentence {
  std::vector<std::string> tokens;
  // features[c][i] is column c of token i.
  std::vector<std::vector<std::string>> features;
  // Empty for unlabeled input.
  std::vector<std::string> labels;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const TaggedSentence&) const = default;
};

// The same sentence mapped to vocabulary ids.
struct EncodedSentence {
  std::vector<int> words;
  std::vector<std::vector<int>> chars;
  // features[c][i], aligned with words.
  std::vector<std::vector<int>> features;
  // Empty when the sentence carries no gold labels.
  std::vector<int> labels;

  std::size_t size() const { return words.size(); }
  bool operator==(const EncodedSentence&) const = default;
};

}  // namespace s2bt::data
