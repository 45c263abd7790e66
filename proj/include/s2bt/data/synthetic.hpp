#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2bt/data/sentence.hpp"
#include "s2bt/error.hpp"
#include "s2bt/keyvalue.hpp"
#include "s2bt/random.hpp"

namespace s2bt::data {

// Parameters of a generated BIO-chunked corpus. Sentences are sequences of
// phrases:
//   concept phrase:  trigger word of concept k (B-k), then 1..max_value_span
//                    value words (I-k)
//   bare value:      1..max_value_span value words (B-value, I-value...), only
//                    at sentence start or right after a filler word
//   filler:          one filler word (O)
// Value words are shared by all concepts, so their label is fixed by the
// previous label and not by the word itself.
struct SynthSpec {
  std::uint64_t seed = 1;
  std::size_t train_sentences = 1000;
  std::size_t dev_sentences = 200;
  std::size_t test_sentences = 200;
  std::size_t concepts = 4;
  std::vector<double> concept_weights;  // empty means uniform
  std::size_t triggers_per_concept = 3;
  std::size_t value_words = 24;
  std::size_t filler_words = 20;
  std::size_t min_length = 4;
  std::size_t max_length = 14;
  std::size_t max_value_span = 3;
  double concept_rate = 0.35;
  double bare_value_rate = 0.15;
  bool word_class_feature = true;

  void validate() const {
    if (concepts == 0) throw ConfigError("synthetic spec: concepts must be >= 1");
    if (!concept_weights.empty()) {
      if (concept_weights.size() != concepts)
        throw ConfigError("synthetic spec: concept_weights has " + std::to_string(concept_weights.size()) +
                          " entries for " + std::to_string(concepts) + " concepts");
      double total = 0.0;
      for (double w : concept_weights) {
        if (!(w >= 0.0)) throw ConfigError("synthetic spec: negative concept weight");
        total += w;
      }
      if (!(total > 0.0)) throw ConfigError("synthetic spec: concept weights sum to zero");
    }
    if (triggers_per_concept == 0 || value_words == 0 || filler_words == 0)
      throw ConfigError("synthetic spec: word class sizes must be >= 1");
    if (min_length == 0 || min_length > max_length)
      throw ConfigError("synthetic spec: need 1 <= min_length <= max_length");
    if (max_value_span == 0) throw ConfigError("synthetic spec: max_value_span must be >= 1");
    if (concept_rate < 0.0 || bare_value_rate < 0.0 || concept_rate + bare_value_rate >= 1.0)
      throw ConfigError("synthetic spec: concept_rate + bare_value_rate must lie in [0, 1)");
    if (train_sentences == 0) throw ConfigError("synthetic spec: train_sentences must be >= 1");
  }

  std::vector<double> weights() const {
    return concept_weights.empty() ? std::vector<double>(concepts, 1.0) : concept_weights;
  }

  static SynthSpec from_key_values(const KeyValues& kv) {
    SynthSpec s;
    for (const auto& [key, value] : kv) {
      try {
        if (key == "seed") s.seed = std::stoull(value);
        else if (key == "train_sentences") s.train_sentences = std::stoul(value);
        else if (key == "dev_sentences") s.dev_sentences = std::stoul(value);
        else if (key == "test_sentences") s.test_sentences = std::stoul(value);
        else if (key == "concepts") s.concepts = std::stoul(value);
        else if (key == "concept_weights") {
          s.concept_weights.clear();
          std::string item;
          for (std::size_t i = 0; i <= value.size(); ++i) {
            if (i == value.size() || value[i] == ',') {
              s.concept_weights.push_back(std::stod(trim(item)));
              item.clear();
            } else {
              item += value[i];
            }
          }
        } else if (key == "triggers_per_concept") s.triggers_per_concept = std::stoul(value);
        else if (key == "value_words") s.value_words = std::stoul(value);
        else if (key == "filler_words") s.filler_words = std::stoul(value);
        else if (key == "min_length") s.min_length = std::stoul(value);
        else if (key == "max_length") s.max_length = std::stoul(value);
        else if (key == "max_value_span") s.max_value_span = std::stoul(value);
        else if (key == "concept_rate") s.concept_rate = std::stod(value);
        else if (key == "bare_value_rate") s.bare_value_rate = std::stod(value);
        else if (key == "word_class_feature") s.word_class_feature = value == "1" || value == "true";
        else throw ConfigError("synthetic spec: unknown key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ConfigError("synthetic spec: bad value '" + value + "' for " + key);
      }
    }
    s.validate();
    return s;
  }
};

inline constexpr const char* kValueConcept = "value";

inline std::string concept_name(std::size_t k) {
  static const char* names[] = {"command", "city", "date", "price", "hotel", "room", "count", "time"};
  return k < std::size(names) ? names[k] : "concept" + std::to_string(k);
}

// Word lists of a generated corpus plus the deterministic tagging rule.
struct SyntheticLexicon {
  std::vector<std::vector<std::string>> triggers;  // per concept
  std::vector<std::string> values;
  std::vector<std::string> fillers;

  enum class Kind { kTrigger, kValue, kFiller, kUnknown };

  Kind kind(const std::string& w, std::size_t* concept_index = nullptr) const {
    for (std::size_t k = 0; k < triggers.size(); ++k)
      if (std::find(triggers[k].begin(), triggers[k].end(), w) != triggers[k].end()) {
        if (concept_index) *concept_index = k;
        return Kind::kTrigger;
      }
    if (std::find(values.begin(), values.end(), w) != values.end()) return Kind::kValue;
    if (std::find(fillers.begin(), fillers.end(), w) != fillers.end()) return Kind::kFiller;
    return Kind::kUnknown;
  }

  static const char* class_name(Kind k) {
    switch (k) {
      case Kind::kTrigger: return "TRG";
      case Kind::kValue: return "VAL";
      case Kind::kFiller: return "FIL";
      default: return "UNK";
    }
  }

  // The generation rule read left to right: the label of a value word is
  // determined by the previous label.
  std::vector<std::string> oracle_tags(const std::vector<std::string>& tokens) const {
    std::vector<std::string> out;
    std::string prev = "O";
    for (const auto& w : tokens) {
      std::size_t k = 0;
      std::string tag = "O";
      switch (kind(w, &k)) {
        case Kind::kTrigger:
          tag = "B-" + concept_name(k);
          break;
        case Kind::kValue:
          tag = prev == "O" ? std::string("B-") + kValueConcept : "I-" + prev.substr(2);
          break;
        default:
          break;
      }
      out.push_back(tag);
      prev = tag;
    }
    return out;
  }
};

struct SyntheticCorpus {
  std::vector<TaggedSentence> train, dev, test;
  SyntheticLexicon lexicon;
  std::size_t emitted_tokens = 0;  // over all three splits
};

namespace detail {

inline std::string pseudo_word(SplitMix64& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "tr"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ou", "ai"};
  const std::size_t syllables = 1 + rng.below(3);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += onsets[rng.below(std::size(onsets))];
    w += vowels[rng.below(std::size(vowels))];
  }
  if (rng.bernoulli(0.3)) w += onsets[rng.below(std::size(onsets))];
  return w;
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  SyntheticCorpus corpus;
  std::set<std::string> used;
  auto fresh = [&] {
    for (;;) {
      std::string w = detail::pseudo_word(rng);
      if (used.insert(w).second) return w;
    }
  };
  auto& lex = corpus.lexicon;
  lex.triggers.resize(spec.concepts);
  for (auto& list : lex.triggers)
    for (std::size_t i = 0; i < spec.triggers_per_concept; ++i) list.push_back(fresh());
  for (std::size_t i = 0; i < spec.value_words; ++i) lex.values.push_back(fresh());
  for (std::size_t i = 0; i < spec.filler_words; ++i) lex.fillers.push_back(fresh());
  const auto weights = spec.weights();

  auto sentence = [&](SplitMix64& r) {
    TaggedSentence s;
    std::vector<std::string> classes;
    const std::size_t length = spec.min_length + r.below(spec.max_length - spec.min_length + 1);
    bool after_filler_or_start = true;
    auto push = [&](const std::string& w, std::string label, SyntheticLexicon::Kind k) {
      if (s.tokens.size() >= length) return;
      s.tokens.push_back(w);
      s.labels.push_back(std::move(label));
      classes.push_back(SyntheticLexicon::class_name(k));
    };
    auto value_span = [&] { return 1 + r.below(spec.max_value_span); };
    while (s.tokens.size() < length) {
      const double u = r.uniform();
      if (u < spec.concept_rate) {
        const std::size_t k = r.categorical(weights);
        const std::string name = concept_name(k);
        push(lex.triggers[k][r.below(lex.triggers[k].size())], "B-" + name, SyntheticLexicon::Kind::kTrigger);
        for (std::size_t n = value_span(); n > 0; --n)
          push(lex.values[r.below(lex.values.size())], "I-" + name, SyntheticLexicon::Kind::kValue);
        after_filler_or_start = false;
      } else if (u < spec.concept_rate + spec.bare_value_rate && after_filler_or_start) {
        const std::size_t n = value_span();
        for (std::size_t i = 0; i < n; ++i)
          push(lex.values[r.below(lex.values.size())], (i == 0 ? "B-" : "I-") + std::string(kValueConcept),
               SyntheticLexicon::Kind::kValue);
        after_filler_or_start = false;
      } else {
        push(lex.fillers[r.below(lex.fillers.size())], "O", SyntheticLexicon::Kind::kFiller);
        after_filler_or_start = true;
      }
    }
    if (spec.word_class_feature) s.features.push_back(std::move(classes));
    return s;
  };

  SplitMix64 train_rng(rng.next()), dev_rng(rng.next()), test_rng(rng.next());
  for (std::size_t i = 0; i < spec.train_sentences; ++i) corpus.train.push_back(sentence(train_rng));
  for (std::size_t i = 0; i < spec.dev_sentences; ++i) corpus.dev.push_back(sentence(dev_rng));
  for (std::size_t i = 0; i < spec.test_sentences; ++i) corpus.test.push_back(sentence(test_rng));
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test})
    for (const auto& s : *split) corpus.emitted_tokens += s.size();
  return corpus;
}

// Per-word most frequent training label; unseen words get the overall most
// frequent label. Ties go to the label seen first.
class MostFrequentLabelTagger {
 public:
  explicit MostFrequentLabelTagger(const std::vector<TaggedSentence>& train) {
    std::map<std::string, std::size_t> overall;
    std::vector<std::string> overall_order;
    std::unordered_map<std::string, std::vector<std::pair<std::string, std::size_t>>> per_word;
    for (const auto& s : train)
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (overall[s.labels[i]]++ == 0) overall_order.push_back(s.labels[i]);
        auto& counts = per_word[s.tokens[i]];
        auto it = std::find_if(counts.begin(), counts.end(), [&](auto& p) { return p.first == s.labels[i]; });
        if (it == counts.end()) counts.emplace_back(s.labels[i], 1);
        else ++it->second;
      }
    for (const auto& l : overall_order)
      if (fallback_.empty() || overall[l] > overall[fallback_]) fallback_ = l;
    for (const auto& [w, counts] : per_word) {
      const auto* best = &counts.front();
      for (const auto& c : counts)
        if (c.second > best->second) best = &c;
      best_[w] = best->first;
    }
  }

  std::vector<std::string> tag(const std::vector<std::string>& tokens) const {
    std::vector<std::string> out;
    for (const auto& w : tokens) {
      auto it = best_.find(w);
      out.push_back(it == best_.end() ? fallback_ : it->second);
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::string> best_;
  std::string fallback_;
};

}  // namespace s2bt::data
