#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ckl {

using TokenList = std::vector<std::string>;
using IdList = std::vector<int>;

/// One grounded-dialogue turn. `context.back()` is the post.
struct DialogueSample {
  std::vector<std::string> context;
  std::vector<std::string> knowledge;
  std::string response;
};

/// Lowercases, splits on whitespace and detaches ASCII punctuation as
/// single-character tokens. Bytes outside ASCII are kept as word characters.
TokenList tokenize(std::string_view text);
std::string detokenize(const TokenList& tokens);

/// Reads one JSON object per line with keys `context`, `knowledge`, `response`.
/// Blank lines are skipped. Throws ParseError naming the offending line.
std::vector<DialogueSample> load_jsonl(const std::filesystem::path& path);
std::vector<DialogueSample> parse_jsonl(std::istream& in);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary();

  /// Tokens with count >= min_freq, most frequent first, ties lexicographic.
  /// `max_size` caps the number of non-reserved entries; 0 means no cap.
  static Vocabulary build(const std::vector<DialogueSample>& samples, std::size_t min_freq,
                          std::size_t max_size);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }

  IdList encode(const TokenList& tokens) const;
  /// Maps ids back to tokens, dropping PAD/BOS/EOS.
  TokenList decode(const IdList& ids) const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct EncodeConfig {
  std::size_t m_max = 10;
  std::size_t max_target_len = 64;
  std::size_t max_source_len = 1024;
};

/// A sample after tokenization and budget truncation; the token lists line
/// up one-to-one with the encoded segments.
struct TokenizedSample {
  std::vector<TokenList> context;
  std::vector<TokenList> knowledge;
  TokenList response;  // without BOS/EOS
};

struct EncodedSample {
  std::vector<IdList> context_ids;
  std::vector<IdList> knowledge_ids;
  IdList response_ids;  // BOS ... EOS
  std::vector<std::size_t> segment_lengths;  // context segments then knowledge segments
  TokenizedSample tokens;
  std::vector<std::string> warnings;

  std::size_t num_context() const { return context_ids.size(); }
  std::size_t num_knowledge() const { return knowledge_ids.size(); }
  /// Segments joined by one SEP each: c_1 SEP ... c_m SEP k_1 SEP ... k_l.
  IdList source_ids() const;
  std::size_t source_length() const;
};

/// Tokenizes and truncates a sample to the configured budgets.
TokenizedSample truncate_sample(const DialogueSample& sample, const EncodeConfig& config,
                                std::vector<std::string>* warnings = nullptr);

EncodedSample encode_sample(const DialogueSample& sample, const Vocabulary& vocab, const EncodeConfig& config);

}  // namespace ckl
