#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <regex>
#include <set>

#include "arae/data.hpp"
#include "test_util.hpp"

using namespace arae;
using namespace arae::data;

TEST(Vocabulary, MinCountAndReservedIndices) {
  const std::vector<std::string> lines{"a a b"};
  auto v = Vocabulary::build(lines, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.index("b"), kUnk);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.index("a"), kNumReserved);
  EXPECT_EQ(v.encode("a b"), (Tokens{kNumReserved, kUnk, kEos}));
  EXPECT_EQ(Vocabulary::build(lines, 2).hash(), v.hash());
  EXPECT_THROW(Vocabulary::build(std::vector<std::string>{}, 1), ContractError);
}

TEST(Vocabulary, OrderIsCountThenLexicographic) {
  const std::vector<std::string> lines{"c b b a a"};
  auto v = Vocabulary::build(lines, 1);
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.token(6), "c");
}

TEST(Vocabulary, FileRoundTrip) {
  test::TempDir dir;
  const std::vector<std::string> lines{"the cat sees the dog"};
  auto v = Vocabulary::build(lines, 1);
  v.save(dir.path / "vocab.txt");
  auto w = Vocabulary::load(dir.path / "vocab.txt");
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_EQ(w.hash(), v.hash());
}

TEST(TextCorpus, DropsLongLinesAndSubstitutesUnk) {
  test::TempDir dir;
  {
    std::ofstream f(dir.path / "c.txt");
    f << "a b\nthis line is far too long\nA zzz\n";
  }
  const std::vector<std::string> lines{"a b"};
  auto v = Vocabulary::build(lines, 1);
  auto c = load_text_corpus(dir.path / "c.txt", v, 3);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.dropped, 1u);
  EXPECT_EQ(c.sequences[0].back(), kEos);
  EXPECT_EQ(c.sequences[1], (Tokens{v.index("a"), kUnk, kEos}));
  EXPECT_THROW(load_text_corpus(dir.path / "missing.txt", v, 3), IoError);
}

TEST(AttributeCorpus, LabelsFollowSortedFileNames) {
  test::TempDir dir;
  std::ofstream(dir.path / "pos.txt") << "good film\n";
  std::ofstream(dir.path / "neg.txt") << "bad film\nbad plot\n";
  EXPECT_EQ(attribute_names(dir.path), (std::vector<std::string>{"neg", "pos"}));
  auto v = Vocabulary::build(read_corpus_lines(dir.path), 1);
  auto c = load_attribute_corpus(dir.path, v, 10);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.labels, (std::vector<int>{0, 0, 1}));
}

TEST(Images, BinaryRoundTripCsvAndSizeMismatch) {
  test::TempDir dir;
  SeededRng rng(2);
  auto imgs = synth_images(7, 5, rng);
  save_binary_images(dir.path / "x.bimg", imgs);
  auto back = load_binary_images(dir.path / "x.bimg");
  EXPECT_EQ(back.pixels, 25u);
  EXPECT_EQ(back.images, imgs.images);
  EXPECT_THROW(load_binary_images(dir.path / "x.bimg", 16), ConfigError);

  std::ofstream(dir.path / "x.csv") << "0,1,1,0\n";
  auto csv = load_binary_images(dir.path / "x.csv");
  ASSERT_EQ(csv.size(), 1u);
  EXPECT_EQ(csv.images[0], (std::vector<std::uint8_t>{0, 1, 1, 0}));

  std::ofstream(dir.path / "bad.bimg", std::ios::binary) << "BIMX\x01\x00\x00\x00";
  EXPECT_THROW(load_binary_images(dir.path / "bad.bimg"), FormatError);
}

TEST(Synth, TemplateLabelsBalanceAndVocabulary) {
  SeededRng rng(3);
  const auto start = std::chrono::steady_clock::now();
  auto s = synth_corpus("sentiment", 10000, rng);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
  EXPECT_EQ(s.vocab.size(), 25u);
  const auto& g = sentiment_grammar();
  const std::regex shape("the (very )?(good|great|fine|bad|awful|poor) \\w+ \\w+( the \\w+)?( \\w+)?");
  std::size_t ones = 0;
  for (std::size_t i = 0; i < s.lines.size(); ++i) {
    const auto words = tokenize(s.lines[i]);
    ASSERT_TRUE(g.matches_template(words)) << s.lines[i];
    ASSERT_TRUE(std::regex_match(s.lines[i], shape)) << s.lines[i];
    ASSERT_EQ(g.attribute_of(words), s.corpus.labels[i]);
    EXPECT_GE(words.size(), 5u);
    EXPECT_LE(words.size(), 8u);
    ones += s.corpus.labels[i];
  }
  EXPECT_LE(std::abs(static_cast<long>(ones) - 5000L), 1L);
  EXPECT_THROW(synth_corpus("nope", 10, rng), ConfigError);
}

TEST(Synth, DeterministicGivenSeed) {
  SeededRng a(9), b(9);
  EXPECT_EQ(synth_corpus("sentiment", 200, a).lines, synth_corpus("sentiment", 200, b).lines);
}

TEST(Batching, PaddingAndMasks) {
  std::vector<Tokens> seqs{{5, 6, kEos}, {7, kEos}};
  auto b = make_batch(seqs);
  EXPECT_EQ(b.width, 3u);
  EXPECT_EQ(b.tokens, (std::vector<std::int32_t>{5, 6, kEos, 7, kEos, kPad}));
  EXPECT_EQ(b.mask(2), (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(b.sequence(1), seqs[1]);
}

TEST(Batching, EveryExampleOncePerEpochAndSeededOrder) {
  SeededRng rng(4);
  auto s = synth_corpus("sentiment", 103, rng);
  auto order = [&](std::uint64_t seed) {
    BatchIterator it(s.corpus, 10, SeededRng(seed));
    it.start_epoch();
    std::vector<Tokens> seen;
    SeqBatch b;
    while (it.next(b))
      for (std::size_t r = 0; r < b.batch; ++r) seen.push_back(b.sequence(r));
    return seen;
  };
  auto first = order(1);
  EXPECT_EQ(first.size(), 103u);
  std::multiset<Tokens> a(first.begin(), first.end()), all(s.corpus.sequences.begin(), s.corpus.sequences.end());
  EXPECT_EQ(a, all);
  EXPECT_EQ(order(1), first);
  EXPECT_NE(order(2), first);
}
