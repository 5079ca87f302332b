#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckl/corpus.hpp"

namespace ckl {

using Corpus = std::vector<TokenList>;

/// Corpus BLEU up to order `n` (1..4): geometric mean of clipped k-gram
/// precisions times exp(min(0, 1 - ref_len / cand_len)). Unsmoothed, so any
/// zero precision gives 0.
double bleu(const Corpus& candidates, const Corpus& references, std::size_t n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L F1 for one pair (beta = 1). Throws on an empty reference.
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
/// Mean pairwise ROUGE-L.
double rouge_l(const Corpus& candidates, const Corpus& references);

/// Unique n-grams over total n-grams across the whole corpus.
double distinct_n(const Corpus& corpus, std::size_t n);

class WordVectorTable {
 public:
  WordVectorTable() = default;

  /// Lines of `token v1 ... vd`; blank lines are skipped.
  static WordVectorTable parse(std::istream& in);
  static WordVectorTable load(const std::filesystem::path& path);

  /// Throws std::invalid_argument when the dimension differs from earlier rows.
  void insert(std::string token, std::vector<double> vec);

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return table_.size(); }
  /// nullptr for an out-of-vocabulary token.
  const std::vector<double>* find(const std::string& token) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

double cosine(std::span<const double> a, std::span<const double> b);

/// Pair scores; nullopt when either side has no in-table token.
std::optional<double> emb_average(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t);
std::optional<double> emb_extrema(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t);
std::optional<double> emb_greedy(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t);

struct EmbeddingScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  std::size_t n_pairs = 0;     // pairs scored
  std::size_t n_excluded = 0;  // pairs with an all-OOV side
};

EmbeddingScores embedding_metrics(const Corpus& candidates, const Corpus& references, const WordVectorTable& table);

/// Fraction of samples whose target appears in the first `n` ranking positions.
double p_at_n(const std::vector<std::vector<std::size_t>>& rankings, std::span<const std::size_t> targets,
              std::size_t n);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average ranks; nullopt when either rank vector is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct SpearmanSummary {
  std::optional<double> value;
  std::size_t n_defined = 0;
  std::size_t n_undefined = 0;
};

/// Mean of per-sample coefficients over samples where it is defined.
SpearmanSummary mean_spearman(const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& ys);
/// One coefficient over the concatenation of all samples.
SpearmanSummary pooled_spearman(const std::vector<std::vector<double>>& xs,
                                const std::vector<std::vector<double>>& ys);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_excluded = 0;
};

void write_metric_csv(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace ckl
