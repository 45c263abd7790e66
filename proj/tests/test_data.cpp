#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "s2bt/data/batching.hpp"
#include "s2bt/data/conll.hpp"
#include "s2bt/data/synthetic.hpp"
#include "s2bt/data/vocab.hpp"
#include "s2bt/keyvalue.hpp"

using namespace s2bt;
using namespace s2bt::data;

namespace {

std::vector<TaggedSentence> parse(const std::string& text, ColumnSpec spec = {}) {
  std::istringstream in(text);
  return parse_conll(in, spec, "<memory>");
}

TaggedSentence sent(std::vector<std::string> toks, std::vector<std::string> labels) {
  TaggedSentence s;
  s.tokens = std::move(toks);
  s.labels = std::move(labels);
  return s;
}

// Corpus whose sentence i has the given length; word ids encode (sentence, position).
std::vector<EncodedSentence> corpus_of_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<EncodedSentence> out;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    EncodedSentence e;
    for (std::size_t i = 0; i < lengths[s]; ++i) {
      e.words.push_back(static_cast<int>(s * 1000 + i));
      e.chars.push_back({static_cast<int>(i)});
      e.labels.push_back(static_cast<int>(i % 3));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

TEST(Vocabulary, ReservedIdsAndLookup) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.lookup("<pad>"), Vocabulary::kPad);
  EXPECT_EQ(v.lookup("never-seen"), Vocabulary::kUnk);
  const int a = v.add("a");
  EXPECT_EQ(a, 2);
  EXPECT_EQ(v.add("a"), a);
  EXPECT_EQ(v.string_of(a), "a");
  EXPECT_EQ(v.lookup(v.string_of(a)), a);
  Vocabulary labels(true);
  EXPECT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels.add("O"), 3);
  EXPECT_TRUE(labels.is_reserved(2));
  EXPECT_FALSE(labels.is_reserved(3));
}

TEST(Vocabulary, FromEntriesRoundTripAndValidation) {
  Vocabulary v(true);
  v.add("x");
  v.add("y");
  EXPECT_EQ(Vocabulary::from_entries(v.entries(), true), v);
  EXPECT_THROW(Vocabulary::from_entries({"<pad>", "<unk>", "x", "x"}, false), Error);
}

TEST(BuildVocabularies, MinCountAndClosedLabels) {
  std::vector<TaggedSentence> train = {sent({"Le", "prix", "le"}, {"O", "B-a", "O"}), sent({"prix"}, {"I-a"})};
  const auto v1 = build_vocabularies(train, 1);
  EXPECT_TRUE(v1.words.contains("Le"));
  EXPECT_TRUE(v1.words.contains("le"));  // case is kept
  EXPECT_DOUBLE_EQ(oov_rate(v1.words, train), 0.0);
  const auto v2 = build_vocabularies(train, 2);
  EXPECT_TRUE(v2.words.contains("prix"));
  EXPECT_FALSE(v2.words.contains("Le"));
  EXPECT_TRUE(v2.labels.contains("I-a"));  // labels never pruned
  EXPECT_TRUE(v2.chars.contains("L"));
  EXPECT_EQ(encode_sentence(v2, train[0]).words[0], Vocabulary::kUnk);
  EXPECT_THROW(encode_sentence(v1, sent({"le"}, {"B-b"})), IngestionError);
  EXPECT_THROW(build_vocabularies(std::vector<TaggedSentence>{}, 1), ContractError);
}

TEST(BuildVocabularies, EngineeredOovRate) {
  std::vector<TaggedSentence> train;
  for (int i = 0; i < 8; ++i) train.push_back(sent({"w" + std::to_string(i)}, {"O"}));
  std::vector<TaggedSentence> test;
  for (int i = 0; i < 10; ++i) test.push_back(sent({"w" + std::to_string(i)}, {"O"}));
  EXPECT_DOUBLE_EQ(oov_rate(build_vocabularies(train).words, test), 0.2);
}

TEST(Encoding, RoundTripForInVocabularyText) {
  const auto corpus = testutil::small_corpus(30);
  const auto v = build_vocabularies(corpus.train);
  for (const auto& s : corpus.train) {
    const auto e = encode_sentence(v, s);
    ASSERT_EQ(e.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(v.words.string_of(e.words[i]), s.tokens[i]);
      std::string rebuilt;
      for (int c : e.chars[i]) rebuilt += v.chars.string_of(c);
      EXPECT_EQ(rebuilt, s.tokens[i]);
      EXPECT_EQ(v.features[0].string_of(e.features[0][i]), s.features[0][i]);
    }
    EXPECT_EQ(label_strings(v.labels, e.labels), s.labels);
  }
}

TEST(Encoding, Utf8CharactersStayWhole) {
  EXPECT_EQ(utf8_characters("pr\xC3\xA8s"), (std::vector<std::string>{"p", "r", "\xC3\xA8", "s"}));
  EXPECT_EQ(utf8_characters("\xC3\xA9t\xC3\xA9").size(), 3u);
  EXPECT_EQ(utf8_characters("\xE2\x82\xAC" "1").size(), 2u);
}

TEST(Conll, TwoLineFile) {
  const auto s = parse("le B-cmd\nprix I-cmd\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].tokens, (std::vector<std::string>{"le", "prix"}));
  EXPECT_EQ(s[0].labels, (std::vector<std::string>{"B-cmd", "I-cmd"}));
}

TEST(Conll, SeparatorsLineEndingsAndTrailingBlanks) {
  const auto a = parse("a\tX\tO\nb  Y   B-c\n\nc X O\n");
  const auto b = parse("a\tX\tO\r\nb  Y   B-c\r\n\r\n\r\nc X O\r\n\n\n\n");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse("\n\n").empty());
  ColumnSpec spec;
  spec.features = {1};
  const auto f = parse("a X O\nb Y B-c\n", spec);
  EXPECT_EQ(f[0].features[0], (std::vector<std::string>{"X", "Y"}));
}

TEST(Conll, RaggedColumnsReportLineNumber) {
  try {
    parse("a X O\nb Y B-c\n\nc O\n");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("a O\n", ColumnSpec{0, {5}, -1}), IngestionError);
}

TEST(Conll, WriteReadRoundTripAndIdempotentLoad) {
  const auto corpus = testutil::small_corpus(25);
  testutil::TempDir dir("conll");
  {
    std::ofstream out(dir.file("t.conll"));
    write_conll(out, corpus.train);
  }
  ColumnSpec spec;
  spec.features = {1};
  const auto a = load_conll(dir.file("t.conll"), spec);
  const auto b = load_conll(dir.file("t.conll"), spec);
  EXPECT_EQ(a, corpus.train);
  EXPECT_EQ(a, b);
  EXPECT_THROW(load_conll(dir.file("missing.conll"), spec), IngestionError);
}

TEST(Conll, SyntheticTokenCountMatchesGenerator) {
  SynthSpec spec;
  spec.train_sentences = 1000;
  const auto corpus = make_synthetic_corpus(spec);
  testutil::TempDir dir("count");
  std::size_t loaded = 0;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    {
      std::ofstream out(dir.file("s.conll"));
      write_conll(out, *split);
    }
    for (const auto& s : load_conll(dir.file("s.conll"), ColumnSpec{0, {1}, -1})) loaded += s.size();
  }
  EXPECT_EQ(loaded, corpus.emitted_tokens);
}

TEST(StreamChunks, EnumerationExamples) {
  const auto three = corpus_of_lengths({3});
  const auto w = stream_chunks(three, 2);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].offset, 0u);
  EXPECT_EQ(w[1].offset, 1u);
  EXPECT_EQ(w[2].offset, 2u);
  EXPECT_EQ(w[2].window.size(), 1u);
  EXPECT_EQ(stream_chunks(three, 3).size(), 1u);
  EXPECT_EQ(stream_chunks(three, 10).size(), 1u);
  EXPECT_THROW(stream_chunks(three, 1), ConfigError);
  EXPECT_TRUE(stream_chunks(std::vector<EncodedSentence>{}, 4).empty());
}

TEST(StreamChunks, WindowsSplitAtSentenceBoundaries) {
  const auto c = corpus_of_lengths({2, 3});
  const auto w = stream_chunks(c, 4);  // stream: a0 a1 | b0 b1 b2
  ASSERT_EQ(w[0].sequences.size(), 2u);
  EXPECT_EQ(w[0].sequences[0].words, (std::vector<int>{0, 1}));
  EXPECT_EQ(w[0].sequences[1].words, (std::vector<int>{1000}));
  EXPECT_EQ(w[0].sequences[1].labels, (std::vector<int>{0}));
}

// Index j of a stream of length L is covered by every full window starting in
// [j - c + 1, j] and by the final partial window when j > L - c.
TEST(StreamChunks, CoverageCountsMatchCountingOracle) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> lengths(1 + rng.below(5));
    for (auto& l : lengths) l = 1 + rng.below(6);
    const auto corpus = corpus_of_lengths(lengths);
    const auto stream = build_stream(corpus);
    const std::size_t L = stream.size(), c = 2 + rng.below(6);
    const auto windows = stream_chunks(corpus, c);
    std::vector<std::size_t> seen(L, 0);
    for (const auto& w : windows)
      for (std::size_t k = 0; k < w.window.size(); ++k) ++seen[w.offset + k];
    for (std::size_t j = 0; j < L; ++j) {
      std::size_t expected;
      if (c >= L) {
        expected = 1;
      } else {
        const std::size_t lo = j + 1 >= c ? j + 1 - c : 0;
        const std::size_t hi = std::min(j, L - c);
        expected = hi >= lo ? hi - lo + 1 : 0;
        if (j >= L - c + 1) ++expected;
      }
      EXPECT_EQ(seen[j], expected) << "L=" << L << " c=" << c << " j=" << j;
      EXPECT_GE(seen[j], 1u);
      if (c < L && j + 1 >= c && j + c <= L) {
        EXPECT_EQ(seen[j], c);
      }
    }
  }
}

TEST(BucketBatches, Examples) {
  const auto five = corpus_of_lengths({5, 5, 5, 5, 5});
  const auto b = bucket_batches(five, 10);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].sequences.size(), 2u);
  EXPECT_EQ(b[2].sequences.size(), 1u);
  try {
    bucket_batches(corpus_of_lengths({2, 7}), 6);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sentence 1"), std::string::npos);
  }
}

// 100 random corpora: the stream is covered and reconstructible; buckets
// partition the sentences exactly.
TEST(Batchers, RandomCorpusProperties) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> lengths(1 + rng.below(12));
    std::size_t longest = 0, total = 0;
    for (auto& l : lengths) {
      l = 1 + rng.below(9);
      longest = std::max(longest, l);
      total += l;
    }
    const auto corpus = corpus_of_lengths(lengths);
    const auto stream = build_stream(corpus);
    const auto windows = stream_chunks(corpus, 2 + rng.below(8));
    EXPECT_EQ(reconstruct_stream(windows), stream);
    std::map<int, std::size_t> word_hits;
    for (const auto& w : windows)
      for (const auto& s : w.sequences)
        for (int id : s.words) ++word_hits[id];
    for (const auto& s : corpus)
      for (int id : s.words) EXPECT_GE(word_hits[id], 1u);

    const auto buckets = bucket_batches(corpus, longest + rng.below(20));
    std::vector<std::size_t> sources;
    std::size_t tokens = 0;
    for (const auto& b : buckets) {
      for (std::size_t k = 0; k < b.sources.size(); ++k) {
        EXPECT_EQ(b.sequences[k], corpus[b.sources[k]]);
        EXPECT_EQ(b.sequences[k].size(), b.bucket);
      }
      sources.insert(sources.end(), b.sources.begin(), b.sources.end());
      tokens += b.token_count();
    }
    std::sort(sources.begin(), sources.end());
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    EXPECT_EQ(sources, all);
    EXPECT_EQ(tokens, total);
  }
}

TEST(Synthetic, DeterministicAndRuleConsistent) {
  const auto a = testutil::small_corpus(50, 3);
  const auto b = testutil::small_corpus(50, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, testutil::small_corpus(50, 4).train);
  for (const auto& s : a.train) {
    EXPECT_EQ(a.lexicon.oracle_tags(s.tokens), s.labels);
    EXPECT_EQ(s.features.size(), 1u);
    for (const auto& t : s.tokens) EXPECT_FALSE(t.empty());
  }
}

TEST(Synthetic, SpecValidation) {
  SynthSpec s;
  s.min_length = 9;
  s.max_length = 3;
  EXPECT_THROW(make_synthetic_corpus(s), ConfigError);
  std::istringstream in("concepts = 2\nconcept_weights = 1, 2, 3\n");
  EXPECT_THROW(SynthSpec::from_key_values(parse_key_values(in, "spec")), ConfigError);
  std::istringstream bad("colour = red\n");
  EXPECT_THROW(SynthSpec::from_key_values(parse_key_values(bad, "spec")), ConfigError);
}

// Pearson chi-square of concept frequencies against the generator weights; 16.27
// is the 0.999 quantile of chi-square with 3 degrees of freedom.
TEST(Synthetic, ConceptDistributionMatchesSpec) {
  SynthSpec spec;
  spec.seed = 5;
  spec.concept_weights = {0.4, 0.3, 0.2, 0.1};
  const auto corpus = make_synthetic_corpus(spec);
  std::vector<double> counts(4, 0.0);
  double n = 0;
  for (const auto& s : corpus.train)
    for (const auto& l : s.labels)
      for (std::size_t k = 0; k < 4; ++k)
        if (l == "B-" + concept_name(k)) {
          ++counts[k];
          ++n;
        }
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double expected = n * spec.concept_weights[k];
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  EXPECT_GT(n, 500);
  EXPECT_LT(chi2, 16.27);
}

TEST(Synthetic, FrequencyBaselineFailsWhileRuleOracleIsPerfect) {
  SynthSpec spec;
  const auto corpus = make_synthetic_corpus(spec);
  MostFrequentLabelTagger baseline(corpus.train);
  std::size_t total = 0, base_ok = 0, oracle_ok = 0;
  for (const auto& s : corpus.test) {
    const auto b = baseline.tag(s.tokens);
    const auto o = corpus.lexicon.oracle_tags(s.tokens);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++total;
      base_ok += b[i] == s.labels[i];
      oracle_ok += o[i] == s.labels[i];
    }
  }
  EXPECT_LT(static_cast<double>(base_ok) / total, 0.90);
  EXPECT_EQ(oracle_ok, total);
}

TEST(KeyValues, CommentsBlankLinesAndErrors) {
  std::istringstream in("# comment\n\n a = 1 \nb=two words\n");
  const auto kv = parse_key_values(in, "t");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1].second, "two words");
  std::istringstream bad("novalue\n");
  EXPECT_THROW(parse_key_values(bad, "t"), ConfigError);
}
