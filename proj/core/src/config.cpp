#include "ckl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "ckl/errors.hpp"

namespace ckl {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw InputError("config key \"" + key + "\" expects a non-negative integer, got \"" + v + "\"");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw InputError("config key \"" + key + "\" expects a number, got \"" + v + "\"");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError("config key \"" + key + "\" expects true or false, got \"" + v + "\"");
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_size(k, v); },
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); },
          [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); },
          [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

#define CKL_REF(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Field>>& schema() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"d_model", size_field(CKL_REF(c.model.d_model))},
      {"n_heads", size_field(CKL_REF(c.model.n_heads))},
      {"n_encoder_layers", size_field(CKL_REF(c.model.n_encoder_layers))},
      {"n_decoder_layers", size_field(CKL_REF(c.model.n_decoder_layers))},
      {"d_ff", size_field(CKL_REF(c.model.d_ff))},
      {"max_source_len", size_field(CKL_REF(c.model.max_source_len))},
      {"max_target_len", size_field(CKL_REF(c.model.max_target_len))},
      {"m_max", size_field(CKL_REF(c.model.m_max))},
      {"top_n", size_field(CKL_REF(c.model.top_n))},
      {"use_loss_klw", bool_field(CKL_REF(c.model.use_loss_klw))},
      {"use_loss_clwr", bool_field(CKL_REF(c.model.use_loss_clwr))},
      {"use_loss_clwk", bool_field(CKL_REF(c.model.use_loss_clwk))},
      {"use_ck_dep", bool_field(CKL_REF(c.model.use_ck_dep))},
      {"learning_rate", double_field(CKL_REF(c.training.learning_rate))},
      {"epochs", size_field(CKL_REF(c.training.epochs))},
      {"batch_size", size_field(CKL_REF(c.training.batch_size))},
      {"seed", size_field(CKL_REF(c.training.seed))},
      {"data_fraction", double_field(CKL_REF(c.training.data_fraction))},
      {"max_steps", size_field(CKL_REF(c.training.max_steps))},
      {"grad_clip", double_field(CKL_REF(c.training.grad_clip))},
      {"data", string_field(CKL_REF(c.data))},
      {"vocab", string_field(CKL_REF(c.vocab))},
      {"labels", string_field(CKL_REF(c.labels))},
      {"checkpoint", string_field(CKL_REF(c.checkpoint))},
      {"embeddings", string_field(CKL_REF(c.embeddings))},
      {"generations", string_field(CKL_REF(c.generations))},
      {"out", string_field(CKL_REF(c.out))},
      {"min_freq", size_field(CKL_REF(c.min_freq))},
      {"max_vocab", size_field(CKL_REF(c.max_vocab))},
      {"decode", string_field(CKL_REF(c.decode))},
      {"beam_size", size_field(CKL_REF(c.beam_size))},
      {"max_decode_len", size_field(CKL_REF(c.max_decode_len))},
  };
  return fields;
}

#undef CKL_REF

const Field& field(const std::string& key) {
  for (const auto& [name, f] : schema()) {
    if (name == key) return f;
  }
  throw InputError("unknown config key \"" + key + "\"");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, value);
  assigned.insert(key);
  if (key == "decode" && decode != "greedy" && decode != "beam") {
    throw InputError("config key \"decode\" must be greedy or beam, got \"" + value + "\"");
  }
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : schema()) out.push_back(name);
    return out;
  }();
  return names;
}

void RunConfig::merge_stream(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set(trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)));
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  merge_stream(in, path.string());
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw InputError("override \"" + a + "\" is not key=value");
    set(trim(std::string_view(a).substr(0, eq)), trim(std::string_view(a).substr(eq + 1)));
  }
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [name, f] : schema()) out << name << '=' << f.get(*this) << '\n';
}

}  // namespace ckl
