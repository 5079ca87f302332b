#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ckl/corpus.hpp"

namespace ckl {

/// Word-level F1 with clipped (multiset) overlap. 0 when either side is empty.
double word_f1(std::span<const std::string> a, std::span<const std::string> b);

/// Document frequencies over the knowledge sentences of one dataset split.
/// idf(t) = ln((1 + D) / (1 + df(t))) + 1.
class TfIdfIndex {
 public:
  TfIdfIndex() = default;
  explicit TfIdfIndex(const std::vector<TokenList>& documents);

  /// Indexes every kept knowledge sentence of every sample.
  static TfIdfIndex from_samples(const std::vector<TokenizedSample>& samples);

  std::size_t document_count() const { return documents_; }
  std::size_t document_frequency(const std::string& term) const;
  double idf(const std::string& term) const;

  /// Sum over distinct query terms t of tf(t, sentence) * idf(t), tf a raw count.
  double score(std::span<const std::string> sentence, std::span<const std::string> query) const;

  const std::map<std::string, std::size_t>& document_frequencies() const { return df_; }
  const std::vector<std::map<std::string, std::size_t>>& term_frequencies() const { return tf_; }

  /// Tab-separated `term df idf` lines preceded by a `# documents=D` header.
  void write_stats(std::ostream& out) const;

 private:
  std::size_t documents_ = 0;
  std::map<std::string, std::size_t> df_;
  std::vector<std::map<std::string, std::size_t>> tf_;
};

/// Knowledge indices by descending TF-IDF score against `query`; ties keep
/// the original order. Position 0 is the Top1-RK sentence.
std::vector<std::size_t> rank_knowledge(const TfIdfIndex& index, const std::vector<TokenList>& knowledge,
                                        std::span<const std::string> query);

struct PseudoGroundTruth {
  std::vector<int> gt_clwr;
  std::vector<int> gt_clwk;
  std::vector<int> gt_klw;
  std::size_t top1_rk = 0;

  bool operator==(const PseudoGroundTruth&) const = default;
};

/// Binary targets for the three latent weight groups. The post is always 1 in
/// both context targets; argmax ties resolve to the lowest index.
PseudoGroundTruth build_pseudo_gt(const TokenizedSample& sample, const TfIdfIndex& index, std::size_t top_n);

/// JSON Lines label cache: {"gt_clwr":[..],"gt_clwk":[..],"gt_klw":[..],"top1_rk":k}.
void write_label_cache(std::ostream& out, const std::vector<PseudoGroundTruth>& labels);
void save_label_cache(const std::filesystem::path& path, const std::vector<PseudoGroundTruth>& labels);
std::vector<PseudoGroundTruth> load_label_cache(const std::filesystem::path& path);

}  // namespace ckl
