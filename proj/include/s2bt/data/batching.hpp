#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/error.hpp"

namespace s2bt::data {

// Position in the concatenated training stream: a token of some sentence, or
// the boundary marker placed between two consecutive sentences.
struct StreamToken {
  static constexpr std::size_t kBoundary = std::numeric_limits<std::size_t>::max();
  std::size_t sentence = kBoundary;
  std::size_t position = 0;

  bool is_boundary() const { return sentence == kBoundary; }
  bool operator==(const StreamToken&) const = default;
};

enum class BatchKind { kStream, kBucket };

struct Batch {
  BatchKind kind = BatchKind::kBucket;
  // What the trainer consumes. For stream windows these are the window's
  // fragments between boundary markers.
  std::vector<EncodedSentence> sequences;
  // Bucket batches: input indices of the sentences, and their shared length.
  std::vector<std::size_t> sources;
  std::size_t bucket = 0;
  // Stream windows: start offset and the stream slice itself.
  std::size_t offset = 0;
  std::vector<StreamToken> window;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
  }
};

inline std::vector<StreamToken> build_stream(std::span<const EncodedSentence> sentences) {
  std::vector<StreamToken> stream;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (s > 0) stream.push_back({});
    for (std::size_t i = 0; i < sentences[s].size(); ++i) stream.push_back({s, i});
  }
  return stream;
}

namespace detail {

inline EncodedSentence slice(const EncodedSentence& s, std::size_t begin, std::size_t end) {
  EncodedSentence out;
  out.words.assign(s.words.begin() + begin, s.words.begin() + end);
  out.chars.assign(s.chars.begin() + begin, s.chars.begin() + end);
  for (const auto& col : s.features) out.features.emplace_back(col.begin() + begin, col.begin() + end);
  if (!s.labels.empty()) out.labels.assign(s.labels.begin() + begin, s.labels.begin() + end);
  return out;
}

// Splits a window at boundary markers into contiguous sentence fragments.
inline std::vector<EncodedSentence> window_fragments(std::span<const EncodedSentence> sentences,
                                                     std::span<const StreamToken> window) {
  std::vector<EncodedSentence> out;
  std::size_t i = 0;
  while (i < window.size()) {
    if (window[i].is_boundary()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < window.size() && !window[j].is_boundary()) ++j;
    const auto& src = sentences[window[i].sentence];
    out.push_back(slice(src, window[i].position, window[j - 1].position + 1));
    i = j;
  }
  return out;
}

}  // namespace detail

// Overlapping fixed-length windows over the single token stream, each shifted
// by one token. Full windows start at offsets 0 .. L - chunk_len; one final
// window of chunk_len - 1 tokens follows. A stream no longer than chunk_len
// yields exactly one window.
inline std::vector<Batch> stream_chunks(std::span<const EncodedSentence> sentences, std::size_t chunk_len) {
  if (chunk_len < 2) throw ConfigError("chunk length must be >= 2, got " + std::to_string(chunk_len));
  const auto stream = build_stream(sentences);
  const std::size_t total = stream.size();
  std::vector<Batch> out;
  if (total == 0) return out;
  auto emit = [&](std::size_t offset, std::size_t len) {
    Batch b;
    b.kind = BatchKind::kStream;
    b.offset = offset;
    b.window.assign(stream.begin() + offset, stream.begin() + offset + len);
    b.sequences = detail::window_fragments(sentences, b.window);
    out.push_back(std::move(b));
  };
  if (chunk_len >= total) {
    emit(0, total);
    return out;
  }
  for (std::size_t off = 0; off + chunk_len <= total; ++off) emit(off, chunk_len);
  emit(total - chunk_len + 1, chunk_len - 1);
  return out;
}

// Inverse of stream_chunks: heads of all windows but the last, then the last
// window whole.
inline std::vector<StreamToken> reconstruct_stream(std::span<const Batch> windows) {
  std::vector<StreamToken> out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i].window;
    if (i + 1 < windows.size()) {
      if (!w.empty()) out.push_back(w.front());
    } else {
      out.insert(out.end(), w.begin(), w.end());
    }
  }
  return out;
}

// Groups sentences of identical length, then splits each group so no batch
// holds more than max_tokens tokens. Groups come out shortest first; input
// order is kept inside a group.
inline std::vector<Batch> bucket_batches(std::span<const EncodedSentence> sentences, std::size_t max_tokens) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::size_t len = sentences[i].size();
    if (len == 0) throw ContractError("bucket_batches: sentence " + std::to_string(i) + " is empty");
    if (len > max_tokens)
      throw ConfigError("sentence " + std::to_string(i) + " has " + std::to_string(len) +
                        " tokens, more than the batch limit of " + std::to_string(max_tokens));
    groups[len].push_back(i);
  }
  std::vector<Batch> out;
  for (const auto& [len, members] : groups) {
    const std::size_t per_batch = max_tokens / len;
    for (std::size_t start = 0; start < members.size(); start += per_batch) {
      Batch b;
      b.kind = BatchKind::kBucket;
      b.bucket = len;
      for (std::size_t k = start; k < std::min(members.size(), start + per_batch); ++k) {
        b.sources.push_back(members[k]);
        b.sequences.push_back(sentences[members[k]]);
      }
      out.push_back(std::move(b));
    }
  }
  return out;
}

}  // namespace s2bt::data
