#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "s2bt/error.hpp"

namespace s2bt::metrics {

using TagSequence = std::vector<std::string>;

// Labelled span of tokens [start, end], both inclusive.
struct Chunk {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Chunk&) const = default;
  auto operator<=>(const Chunk&) const = default;
};

struct ParsedTag {
  char prefix;  // 'B', 'I' or 'O'
  std::string label;
};

inline ParsedTag parse_tag(const std::string& tag) {
  if (tag == "O") return {'O', {}};
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
    return {tag[0], tag.substr(2)};
  throw FormatError("malformed BIO tag '" + tag + "'");
}

// Chunks in order of their start. An I-X that does not continue an open X
// chunk opens a new one, exactly as if it were B-X.
inline std::vector<Chunk> bio_to_chunks(const TagSequence& tags) {
  std::vector<Chunk> chunks;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag t = parse_tag(tags[i]);
    if (t.prefix == 'O') {
      open = false;
      continue;
    }
    if (t.prefix == 'I' && open && chunks.back().label == t.label) {
      chunks.back().end = i;
      continue;
    }
    chunks.push_back({t.label, i, i});
    open = true;
  }
  return chunks;
}

inline TagSequence chunks_to_bio(const std::vector<Chunk>& chunks, std::size_t length) {
  TagSequence tags(length, "O");
  for (const auto& c : chunks) {
    if (c.start > c.end || c.end >= length) throw ContractError("chunk outside the sentence");
    tags[c.start] = "B-" + c.label;
    for (std::size_t i = c.start + 1; i <= c.end; ++i) tags[i] = "I-" + c.label;
  }
  return tags;
}

inline std::vector<std::string> concept_sequence(const TagSequence& tags) {
  std::vector<std::string> out;
  for (const auto& c : bio_to_chunks(tags)) out.push_back(c.label);
  return out;
}

struct ChunkScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t correct = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
};

inline double f1_from(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Micro-averaged exact-match chunk scores. Precision is 0 when nothing is
// predicted and recall is 0 when there is no gold chunk.
inline ChunkScores chunk_f1(std::span<const TagSequence> gold, std::span<const TagSequence> pred) {
  if (gold.size() != pred.size())
    throw ContractError("chunk_f1: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted sentences");
  ChunkScores s;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != pred[k].size())
      throw ContractError("chunk_f1: sentence " + std::to_string(k) + " lengths differ");
    const auto g = bio_to_chunks(gold[k]);
    const auto p = bio_to_chunks(pred[k]);
    s.gold += g.size();
    s.predicted += p.size();
    // Both lists are sorted by start and non-overlapping.
    std::size_t i = 0, j = 0;
    while (i < g.size() && j < p.size()) {
      if (g[i].start < p[j].start) ++i;
      else if (p[j].start < g[i].start) ++j;
      else {
        if (g[i] == p[j]) ++s.correct;
        ++i;
        ++j;
      }
    }
  }
  s.precision = s.predicted ? static_cast<double>(s.correct) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.gold ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 0.0;
  s.f1 = f1_from(s.precision, s.recall);
  return s;
}

// Unit-cost Levenshtein distance (insertions + deletions + substitutions).
inline std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

struct ConceptErrors {
  std::size_t edits = 0;
  std::size_t gold_concepts = 0;
  double cer = 0.0;
};

// Corpus-level concept error rate: sum of per-sentence edit distances between
// concept label sequences over the total gold length.
inline ConceptErrors concept_error_rate(std::span<const std::vector<std::string>> gold,
                                        std::span<const std::vector<std::string>> pred) {
  if (gold.size() != pred.size())
    throw ContractError("concept_error_rate: sentence counts differ");
  ConceptErrors e;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    e.edits += edit_distance(gold[k], pred[k]);
    e.gold_concepts += gold[k].size();
  }
  if (e.gold_concepts == 0) throw UndefinedMetricError("concept error rate undefined: no gold concepts");
  e.cer = static_cast<double>(e.edits) / static_cast<double>(e.gold_concepts);
  return e;
}

inline ConceptErrors concept_error_rate_from_tags(std::span<const TagSequence> gold,
                                                  std::span<const TagSequence> pred) {
  std::vector<std::vector<std::string>> g, p;
  for (const auto& t : gold) g.push_back(concept_sequence(t));
  for (const auto& t : pred) p.push_back(concept_sequence(t));
  return concept_error_rate(g, p);
}

template <class Label>
double token_accuracy(std::span<const std::vector<Label>> gold, std::span<const std::vector<Label>> pred,
                      std::size_t* tokens = nullptr) {
  if (gold.size() != pred.size()) throw ContractError("token_accuracy: sentence counts differ");
  std::size_t total = 0, right = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != pred[k].size())
      throw ContractError("token_accuracy: sentence " + std::to_string(k) + " lengths differ");
    for (std::size_t i = 0; i < gold[k].size(); ++i) {
      ++total;
      if (gold[k][i] == pred[k][i]) ++right;
    }
  }
  if (tokens) *tokens = total;
  if (total == 0) throw UndefinedMetricError("token accuracy undefined: no tokens");
  return static_cast<double>(right) / static_cast<double>(total);
}

struct EvalReport {
  double token_accuracy = 0.0;
  // Chunk metrics are NaN when the label set is not BIO or has no chunks.
  double precision = std::numeric_limits<double>::quiet_NaN();
  double recall = std::numeric_limits<double>::quiet_NaN();
  double f1 = std::numeric_limits<double>::quiet_NaN();
  double cer = std::numeric_limits<double>::quiet_NaN();
  std::size_t tokens = 0;
  std::size_t gold_chunks = 0;
  std::size_t predicted_chunks = 0;
  std::size_t correct_chunks = 0;
  std::size_t concept_edits = 0;
  std::size_t gold_concepts = 0;

  // Bitwise comparison (NaN equals NaN).
  bool identical(const EvalReport& o) const {
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return same(token_accuracy, o.token_accuracy) && same(precision, o.precision) &&
           same(recall, o.recall) && same(f1, o.f1) && same(cer, o.cer) && tokens == o.tokens &&
           gold_chunks == o.gold_chunks && predicted_chunks == o.predicted_chunks &&
           correct_chunks == o.correct_chunks && concept_edits == o.concept_edits &&
           gold_concepts == o.gold_concepts;
  }
};

inline bool is_bio_tagset(std::span<const TagSequence> sentences) {
  for (const auto& s : sentences)
    for (const auto& t : s) {
      if (t == "O") continue;
      if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') return false;
    }
  return true;
}

// Accuracy always; chunk precision/recall/F1 and CER when the gold tags are
// BIO-formed (predicted tags that are not BIO-formed are read as O).
inline EvalReport evaluate_tags(std::span<const TagSequence> gold, std::span<const TagSequence> pred) {
  EvalReport r;
  r.token_accuracy = token_accuracy<std::string>(gold, pred, &r.tokens);
  if (!is_bio_tagset(gold)) return r;
  std::vector<TagSequence> cleaned(pred.begin(), pred.end());
  for (auto& s : cleaned)
    for (auto& t : s)
      if (t != "O" && (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-')) t = "O";
  const ChunkScores cs = chunk_f1(gold, cleaned);
  r.gold_chunks = cs.gold;
  r.predicted_chunks = cs.predicted;
  r.correct_chunks = cs.correct;
  if (cs.gold == 0) return r;
  r.precision = cs.precision;
  r.recall = cs.recall;
  r.f1 = cs.f1;
  const ConceptErrors ce = concept_error_rate_from_tags(gold, cleaned);
  r.cer = ce.cer;
  r.concept_edits = ce.edits;
  r.gold_concepts = ce.gold_concepts;
  return r;
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void print_report_table(std::ostream& os, const EvalReport& r) {
  os << "metric      value\n"
     << "accuracy    " << format_metric(r.token_accuracy) << '\n'
     << "precision   " << format_metric(r.precision) << '\n'
     << "recall      " << format_metric(r.recall) << '\n'
     << "f1          " << format_metric(r.f1) << '\n'
     << "cer         " << format_metric(r.cer) << '\n'
     << "tokens      " << r.tokens << '\n'
     << "chunks      " << r.correct_chunks << " correct / " << r.gold_chunks << " gold / "
     << r.predicted_chunks << " predicted\n";
}

inline void print_report_key_values(std::ostream& os, const EvalReport& r) {
  os << "accuracy=" << format_metric(r.token_accuracy) << '\n'
     << "precision=" << format_metric(r.precision) << '\n'
     << "recall=" << format_metric(r.recall) << '\n'
     << "f1=" << format_metric(r.f1) << '\n'
     << "cer=" << format_metric(r.cer) << '\n'
     << "tokens=" << r.tokens << '\n'
     << "gold_chunks=" << r.gold_chunks << '\n'
     << "predicted_chunks=" << r.predicted_chunks << '\n'
     << "correct_chunks=" << r.correct_chunks << '\n'
     << "concept_edits=" << r.concept_edits << '\n'
     << "gold_concepts=" << r.gold_concepts << '\n';
}

}  // namespace s2bt::metrics
