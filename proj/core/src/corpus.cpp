#include "ckl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "ckl/errors.hpp"
#include "json.hpp"

namespace ckl {

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, raw);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush();
  return tokens;
}

std::string detokenize(const TokenList& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

namespace {

std::vector<std::string> string_array(const nlohmann::json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw ParseError(line, std::string("missing field \"") + key + "\"");
  const auto& value = obj.at(key);
  if (!value.is_array()) throw ParseError(line, std::string("field \"") + key + "\" must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) throw ParseError(line, std::string("field \"") + key + "\" must contain only strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<DialogueSample> parse_jsonl(std::istream& in) {
  std::vector<DialogueSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    DialogueSample sample;
    sample.context = string_array(obj, "context", line_no);
    sample.knowledge = string_array(obj, "knowledge", line_no);
    if (!obj.contains("response")) throw ParseError(line_no, "missing field \"response\"");
    if (!obj.at("response").is_string()) throw ParseError(line_no, "field \"response\" must be a string");
    sample.response = obj.at("response").get<std::string>();
    for (const auto& [key, _] : obj.items()) {
      if (key != "context" && key != "knowledge" && key != "response") {
        throw ParseError(line_no, "unexpected field \"" + key + "\"");
      }
    }
    if (sample.context.empty()) throw ParseError(line_no, "context must contain at least one utterance");
    if (sample.knowledge.empty()) throw ParseError(line_no, "knowledge must contain at least one sentence");
    if (tokenize(sample.response).empty()) throw ParseError(line_no, "response is empty after tokenization");
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<DialogueSample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file " + path.string());
  return parse_jsonl(in);
}

// ---------------------------------------------------------------------------

namespace {
const char* const kReservedTokens[Vocabulary::kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"};
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t);
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<DialogueSample>& samples, std::size_t min_freq,
                             std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  auto count = [&](std::string_view text) {
    for (auto& t : tokenize(text)) ++counts[t];
  };
  for (const auto& s : samples) {
    for (const auto& c : s.context) count(c);
    for (const auto& k : s.knowledge) count(k);
    count(s.response);
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  // counts is ordered, so a stable sort on frequency keeps ties lexicographic.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size > 0 && ranked.size() > max_size) ranked.resize(max_size);
  Vocabulary vocab;
  for (auto& [tok, _] : ranked) {
    if (!vocab.contains(tok)) vocab.add(tok);
  }
  return vocab;
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocabulary file " + path.string());
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no <= static_cast<std::size_t>(kNumReserved)) {
      if (line != kReservedTokens[line_no - 1]) {
        throw ParseError(line_no, "vocabulary header must list the reserved token " +
                                      std::string(kReservedTokens[line_no - 1]));
      }
      continue;
    }
    if (line.empty()) throw ParseError(line_no, "empty vocabulary entry");
    if (vocab.contains(line)) throw ParseError(line_no, "duplicate vocabulary entry \"" + line + "\"");
    vocab.add(line);
  }
  if (line_no < static_cast<std::size_t>(kNumReserved)) throw InputError("vocabulary file is missing its reserved header");
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

IdList Vocabulary::encode(const TokenList& tokens) const {
  IdList ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenList Vocabulary::decode(const IdList& ids) const {
  TokenList out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    out.push_back(token(id));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Empty utterances still occupy one position (encoded as UNK).
std::size_t segment_length(const TokenList& tokens) { return std::max<std::size_t>(1, tokens.size()); }

std::size_t block_length(const std::vector<TokenList>& segments) {
  std::size_t total = 0;
  for (const auto& s : segments) total += segment_length(s);
  return total + (segments.empty() ? 0 : segments.size() - 1);
}

IdList encode_segment(const TokenList& tokens, const Vocabulary& vocab) {
  if (tokens.empty()) return {Vocabulary::kUnk};
  return vocab.encode(tokens);
}

}  // namespace

TokenizedSample truncate_sample(const DialogueSample& sample, const EncodeConfig& config,
                                std::vector<std::string>* warnings) {
  if (config.m_max < 1) throw InputError("m_max must be at least 1");
  if (config.max_target_len < 3) throw InputError("max_target_len must leave room for BOS, EOS and one token");
  if (config.max_source_len < 3) throw InputError("max_source_len must be at least 3");
  if (sample.context.empty() || sample.knowledge.empty()) {
    throw InputError("sample needs at least one context utterance and one knowledge sentence");
  }
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  TokenizedSample out;
  const std::size_t first = sample.context.size() > config.m_max ? sample.context.size() - config.m_max : 0;
  for (std::size_t i = first; i < sample.context.size(); ++i) out.context.push_back(tokenize(sample.context[i]));

  out.response = tokenize(sample.response);
  if (out.response.size() > config.max_target_len - 2) out.response.resize(config.max_target_len - 2);

  const std::size_t budget = config.max_source_len;
  // Leave room for one separator and at least one knowledge token.
  while (out.context.size() > 1 && block_length(out.context) + 2 > budget) {
    out.context.erase(out.context.begin());
    warn("dropped an early context utterance to fit max_source_len");
  }
  if (out.context.size() == 1 && segment_length(out.context[0]) + 2 > budget) {
    auto& post = out.context[0];
    post.erase(post.begin(), post.end() - static_cast<std::ptrdiff_t>(budget - 2));
    warn("post exceeds max_source_len; truncated from the left");
  }

  std::size_t used = block_length(out.context);
  for (const auto& text : sample.knowledge) {
    auto tokens = tokenize(text);
    const std::size_t need = used + 1 + segment_length(tokens);
    if (need > budget) {
      if (out.knowledge.empty()) {
        tokens.resize(budget - used - 1);
        out.knowledge.push_back(std::move(tokens));
        warn("first knowledge sentence truncated to fit max_source_len");
      }
      break;
    }
    out.knowledge.push_back(std::move(tokens));
    used = need;
  }
  return out;
}

EncodedSample encode_sample(const DialogueSample& sample, const Vocabulary& vocab, const EncodeConfig& config) {
  EncodedSample enc;
  enc.tokens = truncate_sample(sample, config, &enc.warnings);
  for (const auto& c : enc.tokens.context) {
    enc.context_ids.push_back(encode_segment(c, vocab));
    enc.segment_lengths.push_back(enc.context_ids.back().size());
  }
  for (const auto& k : enc.tokens.knowledge) {
    enc.knowledge_ids.push_back(encode_segment(k, vocab));
    enc.segment_lengths.push_back(enc.knowledge_ids.back().size());
  }
  enc.response_ids.push_back(Vocabulary::kBos);
  for (int id : vocab.encode(enc.tokens.response)) enc.response_ids.push_back(id);
  enc.response_ids.push_back(Vocabulary::kEos);
  return enc;
}

IdList EncodedSample::source_ids() const {
  IdList ids;
  auto append = [&](const IdList& seg) {
    if (!ids.empty()) ids.push_back(Vocabulary::kSep);
    ids.insert(ids.end(), seg.begin(), seg.end());
  };
  for (const auto& c : context_ids) append(c);
  for (const auto& k : knowledge_ids) append(k);
  return ids;
}

std::size_t EncodedSample::source_length() const {
  std::size_t total = 0;
  for (auto n : segment_lengths) total += n;
  return total + (segment_lengths.empty() ? 0 : segment_lengths.size() - 1);
}

}  // namespace ckl
