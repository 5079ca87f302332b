#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ckl/corpus.hpp"
#include "ckl/errors.hpp"

namespace ckl {
namespace {

TokenList words(std::size_t n, const std::string& stem = "w") {
  TokenList out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

std::string join(const TokenList& t) { return detokenize(t); }

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("Pop music!"), (TokenList{"pop", "music", "!"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("A  B"), (TokenList{"a", "b"}));
  EXPECT_EQ(tokenize("it's 5pm,ok"), (TokenList{"it", "'", "s", "5pm", ",", "ok"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 \tX"), (TokenList{"caf\xc3\xa9", "x"}));
}

TEST(Tokenize, RoundTripOnNormalizedText) {
  const std::string text = "i love pop music ! do you ?";
  EXPECT_EQ(detokenize(tokenize(text)), text);
  EXPECT_EQ(tokenize(detokenize(tokenize(text))), tokenize(text));
}

TEST(ParseJsonl, ValidFileInOrder) {
  std::istringstream in(
      R"({"context":["hi"],"knowledge":["k1","k2"],"response":"one"})"
      "\n\n"
      R"({"context":["a","b"],"knowledge":["k"],"response":"two"})"
      "\n");
  auto samples = parse_jsonl(in);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].response, "one");
  EXPECT_EQ(samples[1].context, (std::vector<std::string>{"a", "b"}));
}

std::size_t error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_jsonl(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(ParseJsonl, ErrorsNameTheLine) {
  const std::string good = R"({"context":["hi"],"knowledge":["k"],"response":"r"})";
  EXPECT_EQ(error_line(good + "\n" + R"({"context":["hi"],"knowledge":["k"]})"), 2u);
  EXPECT_EQ(error_line(good + "\n" + good + "\n" + R"({"context":[],"knowledge":["k"],"response":"r"})"), 3u);
  EXPECT_EQ(error_line(R"({"context":["hi"],"knowledge":[],"response":"r"})"), 1u);
  EXPECT_EQ(error_line(R"({"context":"hi","knowledge":["k"],"response":"r"})"), 1u);
  EXPECT_EQ(error_line(R"({"context":["hi"],"knowledge":[3],"response":"r"})"), 1u);
  EXPECT_EQ(error_line("not json"), 1u);
  EXPECT_EQ(error_line(R"({"context":["hi"],"knowledge":["k"],"response":"r","x":1})"), 1u);
}

TEST(LoadJsonl, MissingFile) { EXPECT_THROW(load_jsonl("/nonexistent/file.jsonl"), InputError); }

TEST(Vocabulary, FrequencyOrderAndThreshold) {
  std::vector<DialogueSample> samples{{{"a a b"}, {"x"}, "y"}};
  auto v = Vocabulary::build(samples, 1, 0);
  EXPECT_EQ(v.id("a"), Vocabulary::kNumReserved);
  EXPECT_LT(v.id("a"), v.id("b"));
  auto v3 = Vocabulary::build(samples, 3, 0);
  EXPECT_EQ(v3.size(), static_cast<std::size_t>(Vocabulary::kNumReserved));
}

TEST(Vocabulary, TiesAreLexicographicAndCapped) {
  std::vector<DialogueSample> samples{{{"zeta beta alpha"}, {"beta"}, "zeta"}};
  auto v = Vocabulary::build(samples, 1, 0);
  // beta 2, zeta 2, alpha 1
  EXPECT_EQ(v.token(5), "beta");
  EXPECT_EQ(v.token(6), "zeta");
  EXPECT_EQ(v.token(7), "alpha");
  auto capped = Vocabulary::build(samples, 1, 2);
  EXPECT_EQ(capped.size(), 7u);
  EXPECT_FALSE(capped.contains("alpha"));
}

TEST(Vocabulary, UnknownAndDecode) {
  std::vector<DialogueSample> samples{{{"a"}, {"b"}, "c"}};
  auto v = Vocabulary::build(samples, 1, 0);
  EXPECT_EQ(v.id("nope"), Vocabulary::kUnk);
  EXPECT_EQ(v.decode({Vocabulary::kBos, v.id("a"), Vocabulary::kEos, Vocabulary::kPad}), (TokenList{"a"}));
  EXPECT_THROW(v.token(99), std::out_of_range);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ckl_corpus_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

using VocabularyFile = TempDir;

TEST_F(VocabularyFile, SaveLoadRoundTrip) {
  std::vector<DialogueSample> samples{{{"a a b c"}, {"d"}, "e"}};
  auto v = Vocabulary::build(samples, 1, 0);
  v.save(dir_ / "vocab.txt");
  auto w = Vocabulary::load(dir_ / "vocab.txt");
  ASSERT_EQ(w.size(), v.size());
  for (int i = 0; i < static_cast<int>(v.size()); ++i) EXPECT_EQ(w.token(i), v.token(i));
}

TEST_F(VocabularyFile, RejectsBadHeaderAndDuplicates) {
  {
    std::ofstream out(dir_ / "bad.txt");
    out << "<pad>\n<bos>\n<unk>\n<eos>\n<sep>\n";
  }
  EXPECT_THROW(Vocabulary::load(dir_ / "bad.txt"), ParseError);
  {
    std::ofstream out(dir_ / "dup.txt");
    out << "<pad>\n<bos>\n<eos>\n<unk>\n<sep>\na\na\n";
  }
  EXPECT_THROW(Vocabulary::load(dir_ / "dup.txt"), ParseError);
  EXPECT_THROW(Vocabulary::load(dir_ / "missing.txt"), InputError);
}

Vocabulary vocab_for(const DialogueSample& s) { return Vocabulary::build({s}, 1, 0); }

TEST(EncodeSample, KeepsLatestContextUtterances) {
  DialogueSample s;
  for (int i = 0; i < 12; ++i) s.context.push_back("u" + std::to_string(i));
  s.knowledge = {"k"};
  s.response = "r";
  auto enc = encode_sample(s, vocab_for(s), {});
  ASSERT_EQ(enc.num_context(), 10u);
  EXPECT_EQ(enc.tokens.context.front(), TokenList{"u2"});
  EXPECT_EQ(enc.tokens.context.back(), TokenList{"u11"});
}

TEST(EncodeSample, ResponseCappedWithBosEos) {
  DialogueSample s{{"c"}, {"k"}, join(words(100))};
  auto enc = encode_sample(s, vocab_for(s), {});
  ASSERT_EQ(enc.response_ids.size(), 64u);
  EXPECT_EQ(enc.response_ids.front(), Vocabulary::kBos);
  EXPECT_EQ(enc.response_ids.back(), Vocabulary::kEos);
  EXPECT_EQ(enc.tokens.response.size(), 62u);
}

TEST(EncodeSample, OverflowingKnowledgeDroppedWhole) {
  // context 3 tokens; budget 12: k0 (4) -> 3+1+4 = 8, k1 (5) would be 14 > 12
  DialogueSample s{{"a b c"}, {join(words(4, "x")), join(words(5, "y")), "z"}, "r"};
  auto enc = encode_sample(s, vocab_for(s), {10, 64, 12});
  ASSERT_EQ(enc.num_knowledge(), 1u);
  EXPECT_EQ(enc.tokens.knowledge[0].size(), 4u);
  EXPECT_EQ(enc.source_length(), 8u);
  EXPECT_EQ(enc.segment_lengths.size(), enc.num_context() + enc.num_knowledge());
}

TEST(EncodeSample, LongPostTruncatedFromTheLeft) {
  DialogueSample s{{join(words(30))}, {"k"}, "r"};
  auto enc = encode_sample(s, vocab_for(s), {10, 64, 12});
  ASSERT_EQ(enc.num_context(), 1u);
  EXPECT_EQ(enc.tokens.context[0].size(), 10u);
  EXPECT_EQ(enc.tokens.context[0].back(), "w29");
  EXPECT_EQ(enc.num_knowledge(), 1u);
  EXPECT_LE(enc.source_length(), 12u);
  EXPECT_FALSE(enc.warnings.empty());
}

TEST(EncodeSample, SourceLayoutAndUnk) {
  DialogueSample s{{"a", "b"}, {"c d"}, "e"};
  auto vocab = vocab_for(s);
  s.knowledge.push_back("unseen");
  auto enc = encode_sample(s, vocab, {});
  IdList want{vocab.id("a"), Vocabulary::kSep, vocab.id("b"), Vocabulary::kSep, vocab.id("c"),
              vocab.id("d"), Vocabulary::kSep, Vocabulary::kUnk};
  EXPECT_EQ(enc.source_ids(), want);
  EXPECT_EQ(enc.source_length(), want.size());
}

TEST(EncodeSample, EmptySegmentIsOneUnk) {
  DialogueSample s{{"", "hello"}, {"k"}, "r"};
  auto enc = encode_sample(s, vocab_for(s), {});
  EXPECT_EQ(enc.context_ids[0], IdList{Vocabulary::kUnk});
}

TEST(EncodeSample, Idempotent) {
  DialogueSample s{{"x y", "z"}, {"a b", "c"}, "a z"};
  auto vocab = vocab_for(s);
  auto a = encode_sample(s, vocab, {});
  auto b = encode_sample(s, vocab, {});
  EXPECT_EQ(a.source_ids(), b.source_ids());
  EXPECT_EQ(a.response_ids, b.response_ids);
}

TEST(EncodeSample, ConfigValidation) {
  DialogueSample s{{"x"}, {"a"}, "z"};
  auto vocab = vocab_for(s);
  EXPECT_THROW(encode_sample(s, vocab, {0, 64, 1024}), InputError);
  EXPECT_THROW(encode_sample(s, vocab, {10, 2, 1024}), InputError);
  EXPECT_THROW(encode_sample({{}, {"a"}, "z"}, vocab, {}), InputError);
}

}  // namespace
}  // namespace ckl
