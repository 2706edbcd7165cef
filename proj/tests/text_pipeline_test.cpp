#include "xaitext/text_pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "xaitext/synthetic_corpus.hpp"

namespace xaitext {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "xaitext_text_pipeline_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

using Tokens = std::vector<std::string>;

TEST(TokenizeTest, LowercasesAndStripsBoundaryPunctuation) {
  EXPECT_EQ(tokenize("The CAT sat."), (Tokens{"the", "cat", "sat"}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize("don't stop"), (Tokens{"don't", "stop"}));
}

TEST(TokenizeTest, GoldenFile) {
  std::ifstream in(std::string(XAITEXT_TEST_DATA_DIR) + "/tokenizer_golden.tsv");
  ASSERT_TRUE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.rfind('\t');
    ASSERT_NE(tab, std::string::npos) << line;
    const std::string input = line.substr(0, tab);
    const std::string joined = line.substr(tab + 1);
    Tokens expected;
    std::size_t start = 0;
    while (!joined.empty() && start <= joined.size()) {
      const auto bar = joined.find('|', start);
      expected.push_back(joined.substr(start, bar - start));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    EXPECT_EQ(tokenize(input), expected) << "input: " << input;
    ++cases;
  }
  EXPECT_GE(cases, 10);
}

std::vector<LabeledExample> corpus_from_counts(
    const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<LabeledExample> out;
  for (const auto& [word, n] : counts) {
    for (int i = 0; i < n; ++i) out.push_back({word, 0});
  }
  return out;
}

TEST(VocabularyTest, FrequencyRankingHonorsReservedIds) {
  const auto corpus = corpus_from_counts({{"c", 1}, {"a", 5}, {"b", 3}});
  const auto vocab = Vocabulary::build(corpus, 2);
  EXPECT_EQ(vocab.size(), 4u);
  EXPECT_EQ(vocab.id_of("a"), 2);
  EXPECT_EQ(vocab.id_of("b"), 3);
  EXPECT_FALSE(vocab.contains("c"));
  EXPECT_EQ(vocab.id_of("c"), kOovId);
  EXPECT_EQ(vocab.token_of(kOovId), "<OOV>");
  EXPECT_THROW(vocab.token_of(kPadId), DataError);
}

TEST(VocabularyTest, TiesBreakLexicographically) {
  const auto vocab = Vocabulary::build(corpus_from_counts({{"b", 2}, {"a", 2}}), 2);
  EXPECT_EQ(vocab.id_of("a"), 2);
  EXPECT_EQ(vocab.id_of("b"), 3);
}

TEST(VocabularyTest, CapacityCapsTheDictionary) {
  // 30000 distinct words; capacity 20000 keeps exactly 20000 + PAD + OOV ids.
  std::vector<LabeledExample> corpus;
  std::string text;
  for (int i = 0; i < 30000; ++i) {
    text += "w" + std::to_string(i) + ' ';
    if (i % 1000 == 999) {
      corpus.push_back({text, 1});
      text.clear();
    }
  }
  const auto vocab = Vocabulary::build(corpus, kDefaultVocabularyCapacity);
  EXPECT_EQ(vocab.size(), 20002u);
  EXPECT_EQ(vocab.word_count(), 20000u);
}

TEST(VocabularyTest, ReservedIdsNeverAssignedToWords) {
  const auto corpus = generate_synthetic_corpus({.documents = 200, .seed = 3});
  const auto vocab = Vocabulary::build(corpus, 50);
  for (const auto& ex : corpus) {
    for (const auto& tok : tokenize(ex.text)) {
      const auto id = vocab.id_of(tok);
      EXPECT_NE(id, kPadId);
      if (vocab.contains(tok)) {
        EXPECT_GE(id, 2);
        EXPECT_EQ(vocab.token_of(id), tok);
      }
    }
  }
}

TEST(VocabularyTest, JsonRoundTrip) {
  const auto corpus = generate_synthetic_corpus({.documents = 100, .seed = 9});
  const auto vocab = Vocabulary::build(corpus, 40);
  const auto path = temp_file("vocab.json");
  vocab.save(path);
  const auto back = Vocabulary::load(path);
  EXPECT_EQ(back.size(), vocab.size());
  EXPECT_EQ(back.capacity(), vocab.capacity());
  for (TokenId id = 2; id < static_cast<TokenId>(vocab.size()); ++id) {
    EXPECT_EQ(back.token_of(id), vocab.token_of(id));
  }
  EXPECT_EQ(back.to_json(), vocab.to_json());
}

TEST(VocabularyTest, RejectsBrokenJson) {
  auto j = Vocabulary({"a", "b"}, 2).to_json();
  j["token_to_id"]["b"] = 7;
  EXPECT_THROW(Vocabulary::from_json(j), DataError);
  j = Vocabulary({"a"}, 2).to_json();
  j["oov_id"] = 3;
  EXPECT_THROW(Vocabulary::from_json(j), DataError);
}

TEST(EncodeTest, MapsTruncatesAndPads) {
  const Vocabulary vocab({"the", "cat"}, 2);
  EXPECT_EQ(encode("the cat sat", vocab, 5).ids().size(), 5u);
  EXPECT_EQ(encode("the cat sat", vocab, 5), TokenSequence({2, 3, 1, 0, 0}));
  EXPECT_EQ(encode("", vocab, 3), TokenSequence({0, 0, 0}));

  std::string long_text;
  for (int i = 0; i < 800; ++i) long_text += (i % 2 == 0 ? "the " : "cat ");
  const auto seq = encode(long_text, vocab, kDefaultSequenceLength);
  ASSERT_EQ(seq.size(), 750u);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(seq[i], i % 2 == 0 ? 2 : 3);
}

TEST(DecodeTest, DropsPadAndRendersOov) {
  const Vocabulary vocab({"the", "cat"}, 2);
  EXPECT_EQ(decode(TokenSequence({2, 3, 1, 0, 0}), vocab), (Tokens{"the", "cat", "<OOV>"}));
  EXPECT_EQ(decode(TokenSequence({0, 0, 0}), vocab), Tokens{});
  EXPECT_THROW(decode(TokenSequence({2, 4}), vocab), DataError);
}

TEST(DecodeTest, RoundTripProperty) {
  const auto corpus = generate_synthetic_corpus({.documents = 50, .seed = 5});
  const auto vocab = Vocabulary::build(corpus, 1000);
  Rng rng(11);
  const std::size_t L = 24;
  for (int trial = 0; trial < 500; ++trial) {
    // Random post-padded sequence of in-vocabulary ids.
    const auto n = rng.uniform_index(L + 1);
    std::vector<TokenId> ids(L, kPadId);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<TokenId>(2 + rng.uniform_index(vocab.word_count()));
    }
    const TokenSequence seq(ids);
    const auto words = decode(seq, vocab);
    EXPECT_EQ(encode_tokens(words, vocab, L), seq);
    std::string text;
    for (const auto& w : words) text += w + ' ';
    EXPECT_EQ(tokenize(text), words);
  }
}

TEST(EncodeTest, LengthAndSuffixPaddingProperty) {
  const auto corpus = generate_synthetic_corpus({.documents = 80, .seed = 1});
  const auto vocab = Vocabulary::build(corpus, 30);
  for (const std::size_t L : {1u, 7u, 64u, 750u}) {
    for (const auto& ex : corpus) {
      const auto seq = encode(ex.text, vocab, L);
      EXPECT_EQ(seq.size(), L);
      EXPECT_TRUE(seq.is_post_padded());
      check_ids(seq, vocab.size());
    }
  }
}

TEST(LoadCsvTest, ReadsRows) {
  const auto p = temp_file("ok.csv");
  write_text(p, "text,label\n\"hello world\",1\nbad news,0\n");
  const auto rows = load_csv(p);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].text, "hello world");
  EXPECT_EQ(rows[0].label, 1);
  EXPECT_EQ(rows[1].text, "bad news");
  EXPECT_EQ(rows[1].label, 0);
}

TEST(LoadCsvTest, Rfc4180QuotingAndExtraColumns) {
  const auto p = temp_file("quoted.csv");
  write_text(p,
             "title,text,subject,label\r\n"
             "t1,\"multi\r\nline, with \"\"quotes\"\"\",politics,1\r\n"
             "t2,plain,world, 0 \r\n");
  const auto rows = load_csv(p);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].text, "multi\r\nline, with \"quotes\"");
  EXPECT_EQ(rows[1].label, 0);
}

TEST(LoadCsvTest, EmptyTextRejectedWithRowNumber) {
  const auto p = temp_file("empty_text.csv");
  write_text(p, "text,label\nfine,1\n\"\",1\n   ,0\n");
  try {
    load_csv(p);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.rows(), (std::vector<std::size_t>{2, 3}));
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(LoadCsvTest, ErrorPaths) {
  EXPECT_THROW(load_csv(temp_file("does_not_exist.csv")), DataError);
  const auto no_label = temp_file("no_label.csv");
  write_text(no_label, "text,class\nhello,1\n");
  EXPECT_THROW(load_csv(no_label), DataError);
  const auto bad_label = temp_file("bad_label.csv");
  write_text(bad_label, "text,label\nhello,true\nworld,2\n");
  try {
    load_csv(bad_label);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.rows(), (std::vector<std::size_t>{1, 2}));
  }
}

TEST(LoadCsvTest, IsotShapedFile) {
  // Class sizes of the ISOT fake-news corpus: 21417 true, 23481 fake.
  const auto p = temp_file("isot_shaped.csv");
  {
    std::ofstream out(p, std::ios::binary);
    out << "title,text,subject,date,label\n";
    for (int i = 0; i < 21417; ++i) out << "t,\"reuters report " << i << "\",politicsNews,d,1\n";
    for (int i = 0; i < 23481; ++i) out << "t,\"shocking story " << i << "\",News,d,0\n";
  }
  const auto rows = load_csv(p);
  EXPECT_EQ(rows.size(), 44898u);
}

TEST(WriteCsvTest, RoundTripsThroughLoader) {
  const std::vector<LabeledExample> rows = {{"a, \"b\"\nc", 1}, {"plain", 0}};
  const auto p = temp_file("roundtrip.csv");
  write_csv(p, rows);
  const auto back = load_csv(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].text, rows[0].text);
  EXPECT_EQ(back[1].label, 0);
}

TEST(SplitTest, DefaultRatios) {
  std::vector<int> items(100);
  for (int i = 0; i < 100; ++i) items[i] = i;
  const auto s = split_dataset(items, {}, 42);
  EXPECT_EQ(s.train.size(), 63u);
  EXPECT_EQ(s.validation.size(), 7u);
  EXPECT_EQ(s.test.size(), 30u);
}

TEST(SplitTest, FloorAndRemainder) {
  const auto sizes = split_sizes(10, {});
  EXPECT_EQ(sizes.train, 6u);
  EXPECT_EQ(sizes.validation, 0u);
  EXPECT_EQ(sizes.test, 4u);
}

TEST(SplitTest, DisjointCoveringAndDeterministic) {
  std::vector<int> items(997);
  for (int i = 0; i < 997; ++i) items[i] = i;
  const auto a = split_dataset(items, {}, 7);
  const auto b = split_dataset(items, {}, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  std::set<int> seen;
  for (const auto* part : {&a.train, &a.validation, &a.test}) {
    for (int v : *part) EXPECT_TRUE(seen.insert(v).second);
  }
  EXPECT_EQ(seen.size(), items.size());
  const auto c = split_dataset(items, {}, 8);
  EXPECT_NE(a.train, c.train);
}

TEST(SplitTest, RejectsBadRatios) {
  std::vector<int> items(10);
  EXPECT_THROW(split_dataset(items, {0.5, 0.2, 0.2}, 1), DataError);
  EXPECT_THROW(split_dataset(items, {0.0, 0.5, 0.5}, 1), DataError);
}

TEST(SyntheticCorpusTest, DeterministicAndBalanced) {
  const auto a = generate_synthetic_corpus({.documents = 300, .seed = 4});
  const auto b = generate_synthetic_corpus({.documents = 300, .seed = 4});
  ASSERT_EQ(a.size(), 300u);
  int ones = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].label, b[i].label);
    ones += a[i].label;
  }
  EXPECT_EQ(ones, 150);
}

}  // namespace
}  // namespace xaitext
