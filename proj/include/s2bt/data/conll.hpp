#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/error.hpp"

namespace s2bt::data {

// Which whitespace-separated columns hold what. Negative indices count from
// the end of the line (-1 is the last column).
struct ColumnSpec {
  int token = 0;
  std::vector<int> features;
  std::optional<int> label = -1;

  static ColumnSpec unlabeled(std::vector<int> features = {}) {
    ColumnSpec c;
    c.features = std::move(features);
    c.label.reset();
    return c;
  }
};

using ConllRow = std::vector<std::string>;
using ConllBlock = std::vector<ConllRow>;

// Sentences as raw rows of fields. Blank (or whitespace-only) lines separate
// sentences; CR line endings are accepted. Every row must have the same number
// of fields as the first row of the input.
inline std::vector<ConllBlock> read_conll_blocks(std::istream& in, const std::string& source) {
  std::vector<ConllBlock> blocks;
  ConllBlock current;
  std::size_t expected = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    ConllRow row;
    for (std::string f; fields >> f;) row.push_back(std::move(f));
    if (row.empty()) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (expected == 0) expected = row.size();
    if (row.size() != expected)
      throw IngestionError(source + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(expected) + " columns, found " + std::to_string(row.size()));
    current.push_back(std::move(row));
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

inline std::size_t resolve_column(int index, std::size_t width, const std::string& source) {
  const long long i = index < 0 ? static_cast<long long>(width) + index : index;
  if (i < 0 || i >= static_cast<long long>(width))
    throw IngestionError(source + ": column " + std::to_string(index) + " does not exist in " +
                         std::to_string(width) + "-column data");
  return static_cast<std::size_t>(i);
}

inline TaggedSentence block_to_sentence(const ConllBlock& block, const ColumnSpec& spec,
                                        const std::string& source) {
  TaggedSentence s;
  const std::size_t width = block.front().size();
  const std::size_t tok = resolve_column(spec.token, width, source);
  std::vector<std::size_t> feats;
  for (int f : spec.features) feats.push_back(resolve_column(f, width, source));
  s.features.assign(feats.size(), {});
  for (const auto& row : block) {
    s.tokens.push_back(row[tok]);
    for (std::size_t c = 0; c < feats.size(); ++c) s.features[c].push_back(row[feats[c]]);
    if (spec.label) s.labels.push_back(row[resolve_column(*spec.label, width, source)]);
  }
  return s;
}

inline std::vector<TaggedSentence> parse_conll(std::istream& in, const ColumnSpec& spec,
                                               const std::string& source = "<stream>") {
  std::vector<TaggedSentence> out;
  for (const auto& block : read_conll_blocks(in, source)) out.push_back(block_to_sentence(block, spec, source));
  return out;
}

inline std::vector<TaggedSentence> load_conll(const std::string& path, const ColumnSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  return parse_conll(in, spec, path);
}

inline std::vector<ConllBlock> load_conll_blocks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  return read_conll_blocks(in, path);
}

// token, feature columns, label; tab separated, blank line after each sentence.
inline void write_conll(std::ostream& out, std::span<const TaggedSentence> sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << s.tokens[i];
      for (const auto& col : s.features) out << '\t' << col[i];
      if (!s.labels.empty()) out << '\t' << s.labels[i];
      out << '\n';
    }
    out << '\n';
  }
}

inline void write_conll_blocks(std::ostream& out, std::span<const ConllBlock> blocks) {
  for (const auto& b : blocks) {
    for (const auto& row : b) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
      out << '\n';
    }
    out << '\n';
  }
}

}  // namespace s2bt::data
