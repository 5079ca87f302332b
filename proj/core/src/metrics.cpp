#include "ckl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ckl/errors.hpp"

namespace ckl {
namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const TokenList& tokens, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[NGram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

void require_aligned(const Corpus& candidates, const Corpus& references, const char* what) {
  if (candidates.empty()) throw std::invalid_argument(std::string(what) + ": empty corpus");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(candidates.size()) + " candidates but " +
                                std::to_string(references.size()) + " references");
  }
}

}  // namespace

double bleu(const Corpus& candidates, const Corpus& references, std::size_t n) {
  require_aligned(candidates, references, "bleu");
  if (n < 1 || n > 4) throw std::invalid_argument("bleu: order must be in 1..4");
  double log_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    std::size_t matched = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto cand = ngram_counts(candidates[i], k);
      const auto ref = ngram_counts(references[i], k);
      for (const auto& [gram, count] : cand) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
  }
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));
  return bp * std::exp(log_sum / static_cast<double>(n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (reference.empty()) throw std::invalid_argument("rouge_l: empty reference");
  const auto l = lcs_length(candidate, reference);
  if (l == 0) return 0.0;
  const double p = static_cast<double>(l) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(l) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(const Corpus& candidates, const Corpus& references) {
  require_aligned(candidates, references, "rouge_l");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l(candidates[i], references[i]);
  return total / static_cast<double>(candidates.size());
}

double distinct_n(const Corpus& corpus, std::size_t n) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be at least 1");
  std::set<NGram> unique;
  std::size_t total = 0;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      unique.emplace(s.begin() + i, s.begin() + i + n);
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("distinct_n: corpus has no " + std::to_string(n) + "-grams");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------

WordVectorTable WordVectorTable::parse(std::istream& in) {
  WordVectorTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    std::string value;
    while (fields >> value) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != value.size()) throw ParseError(line_no, "bad vector component \"" + value + "\"");
      vec.push_back(v);
    }
    if (vec.empty()) throw ParseError(line_no, "word vector for \"" + token + "\" has no components");
    if (table.dim_ != 0 && vec.size() != table.dim_) {
      throw ParseError(line_no, "expected " + std::to_string(table.dim_) + " components, got " +
                                    std::to_string(vec.size()));
    }
    table.insert(std::move(token), std::move(vec));
  }
  return table;
}

WordVectorTable WordVectorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embeddings file " + path.string());
  return parse(in);
}

void WordVectorTable::insert(std::string token, std::vector<double> vec) {
  if (vec.empty()) throw std::invalid_argument("word vector must be non-empty");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) throw std::invalid_argument("word vector dimension mismatch for " + token);
  table_[std::move(token)] = std::move(vec);
}

const std::vector<double>* WordVectorTable::find(const std::string& token) const {
  auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<const std::vector<double>*> lookup(const TokenList& tokens, const WordVectorTable& t) {
  std::vector<const std::vector<double>*> out;
  for (const auto& tok : tokens) {
    if (const auto* v = t.find(tok)) out.push_back(v);
  }
  return out;
}

std::vector<double> mean_vector(const std::vector<const std::vector<double>*>& vecs) {
  std::vector<double> out(vecs.front()->size(), 0.0);
  for (const auto* v : vecs) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*v)[i];
  }
  for (auto& x : out) x /= static_cast<double>(vecs.size());
  return out;
}

std::vector<double> extrema_vector(const std::vector<const std::vector<double>*>& vecs) {
  std::vector<double> out(*vecs.front());
  for (std::size_t k = 1; k < vecs.size(); ++k) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::abs((*vecs[k])[i]) > std::abs(out[i])) out[i] = (*vecs[k])[i];
    }
  }
  return out;
}

double greedy_direction(const std::vector<const std::vector<double>*>& from,
                        const std::vector<const std::vector<double>*>& to) {
  double total = 0.0;
  for (const auto* a : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* b : to) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

std::optional<double> emb_average(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t) {
  auto c = lookup(candidate, t), r = lookup(reference, t);
  if (c.empty() || r.empty()) return std::nullopt;
  return cosine(mean_vector(c), mean_vector(r));
}

std::optional<double> emb_extrema(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t) {
  auto c = lookup(candidate, t), r = lookup(reference, t);
  if (c.empty() || r.empty()) return std::nullopt;
  return cosine(extrema_vector(c), extrema_vector(r));
}

std::optional<double> emb_greedy(const TokenList& candidate, const TokenList& reference, const WordVectorTable& t) {
  auto c = lookup(candidate, t), r = lookup(reference, t);
  if (c.empty() || r.empty()) return std::nullopt;
  return 0.5 * (greedy_direction(c, r) + greedy_direction(r, c));
}

EmbeddingScores embedding_metrics(const Corpus& candidates, const Corpus& references, const WordVectorTable& table) {
  require_aligned(candidates, references, "embedding_metrics");
  EmbeddingScores s;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto avg = emb_average(candidates[i], references[i], table);
    if (!avg) {
      ++s.n_excluded;
      continue;
    }
    s.average += *avg;
    s.extrema += *emb_extrema(candidates[i], references[i], table);
    s.greedy += *emb_greedy(candidates[i], references[i], table);
    ++s.n_pairs;
  }
  if (s.n_pairs > 0) {
    const double n = static_cast<double>(s.n_pairs);
    s.average /= n;
    s.extrema /= n;
    s.greedy /= n;
  }
  return s;
}

// ---------------------------------------------------------------------------

double p_at_n(const std::vector<std::vector<std::size_t>>& rankings, std::span<const std::size_t> targets,
              std::size_t n) {
  if (n < 1) throw std::invalid_argument("p_at_n: N must be at least 1");
  if (rankings.empty() || rankings.size() != targets.size()) {
    throw std::invalid_argument("p_at_n: need one target per non-empty ranking list");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& r = rankings[i];
    if (targets[i] >= r.size()) {
      throw std::invalid_argument("p_at_n: target " + std::to_string(targets[i]) + " outside ranking of " +
                                  std::to_string(r.size()));
    }
    const auto window = std::min(n, r.size());
    if (std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(window), targets[i]) != r.begin() + static_cast<std::ptrdiff_t>(window)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least two values");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SpearmanSummary mean_spearman(const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("mean_spearman: sample count mismatch");
  SpearmanSummary s;
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::optional<double> r;
    if (xs[i].size() >= 2) r = spearman(xs[i], ys[i]);
    else if (xs[i].size() != ys[i].size()) throw std::invalid_argument("mean_spearman: length mismatch");
    if (r) {
      total += *r;
      ++s.n_defined;
    } else {
      ++s.n_undefined;
    }
  }
  if (s.n_defined > 0) s.value = total / static_cast<double>(s.n_defined);
  return s;
}

SpearmanSummary pooled_spearman(const std::vector<std::vector<double>>& xs,
                                const std::vector<std::vector<double>>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pooled_spearman: sample count mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != ys[i].size()) throw std::invalid_argument("pooled_spearman: length mismatch");
    x.insert(x.end(), xs[i].begin(), xs[i].end());
    y.insert(y.end(), ys[i].begin(), ys[i].end());
  }
  SpearmanSummary s;
  if (x.size() >= 2) s.value = spearman(x, y);
  (s.value ? s.n_defined : s.n_undefined) = 1;
  return s;
}

void write_metric_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "metric,value,n_pairs,n_excluded\n";
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.metric << ',' << r.value << ',' << r.n_pairs << ',' << r.n_excluded << '\n';
  out.precision(precision);
}

}  // namespace ckl
