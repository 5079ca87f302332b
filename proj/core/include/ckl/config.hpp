#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "ckl/model.hpp"
#include "ckl/training.hpp"

namespace ckl {

/// Everything a CLI run needs: model and training settings plus file paths.
/// `model.vocab_size` is not a key; it comes from the vocabulary file.
struct RunConfig {
  ModelConfig model;
  TrainingConfig training;

  std::string data;
  std::string vocab;
  std::string labels;
  std::string checkpoint;
  std::string embeddings;
  std::string generations;
  std::string out = ".";

  std::size_t min_freq = 1;
  std::size_t max_vocab = 0;  // 0: no cap

  std::string decode = "greedy";  // greedy | beam
  std::size_t beam_size = 4;
  std::size_t max_decode_len = 64;

  /// Keys assigned through a file or override (not left at their defaults).
  std::set<std::string> assigned;

  /// Sets one key. Throws InputError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Reads `key = value` lines; '#' starts a comment line.
  void merge_file(const std::filesystem::path& path);
  void merge_stream(std::istream& in, const std::string& source);

  /// Applies `key=value` overrides in order.
  void apply_overrides(const std::vector<std::string>& assignments);

  /// Every key in schema order as `key=value` lines.
  void write(std::ostream& out) const;
};

}  // namespace ckl
