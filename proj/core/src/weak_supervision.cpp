#include "ckl/weak_supervision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <unordered_map>

#include "ckl/errors.hpp"
#include "json.hpp"

namespace ckl {

double word_f1(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string_view, std::size_t> counts;
  for (const auto& t : b) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(a.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

TfIdfIndex::TfIdfIndex(const std::vector<TokenList>& documents) : documents_(documents.size()) {
  tf_.reserve(documents.size());
  for (const auto& doc : documents) {
    std::map<std::string, std::size_t> tf;
    for (const auto& t : doc) ++tf[t];
    for (const auto& [term, _] : tf) ++df_[term];
    tf_.push_back(std::move(tf));
  }
}

TfIdfIndex TfIdfIndex::from_samples(const std::vector<TokenizedSample>& samples) {
  std::vector<TokenList> docs;
  for (const auto& s : samples) docs.insert(docs.end(), s.knowledge.begin(), s.knowledge.end());
  return TfIdfIndex(docs);
}

std::size_t TfIdfIndex::document_frequency(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double TfIdfIndex::idf(const std::string& term) const {
  const double d = static_cast<double>(documents_);
  return std::log((1.0 + d) / (1.0 + static_cast<double>(document_frequency(term)))) + 1.0;
}

double TfIdfIndex::score(std::span<const std::string> sentence, std::span<const std::string> query) const {
  std::set<std::string_view> terms(query.begin(), query.end());
  double total = 0.0;
  for (auto term : terms) {
    const auto tf = static_cast<double>(std::count(sentence.begin(), sentence.end(), term));
    if (tf > 0.0) total += tf * idf(std::string(term));
  }
  return total;
}

void TfIdfIndex::write_stats(std::ostream& out) const {
  out << "# documents=" << documents_ << " terms=" << df_.size() << '\n';
  out << "term\tdf\tidf\n";
  out << std::setprecision(17);
  for (const auto& [term, df] : df_) out << term << '\t' << df << '\t' << idf(term) << '\n';
}

std::vector<std::size_t> rank_knowledge(const TfIdfIndex& index, const std::vector<TokenList>& knowledge,
                                        std::span<const std::string> query) {
  std::vector<double> scores;
  scores.reserve(knowledge.size());
  for (const auto& k : knowledge) scores.push_back(index.score(k, query));
  std::vector<std::size_t> order(knowledge.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

namespace {

std::size_t argmax_f1(const std::vector<TokenList>& context, std::span<const std::string> target) {
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < context.size(); ++i) {
    const double s = word_f1(context[i], target);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

}  // namespace

PseudoGroundTruth build_pseudo_gt(const TokenizedSample& sample, const TfIdfIndex& index, std::size_t top_n) {
  const auto m = sample.context.size(), l = sample.knowledge.size();
  if (m == 0 || l == 0) throw std::invalid_argument("build_pseudo_gt: sample needs context and knowledge");
  if (top_n == 0) throw std::invalid_argument("build_pseudo_gt: top_n must be at least 1");

  PseudoGroundTruth gt;
  gt.gt_clwr.assign(m, 0);
  gt.gt_clwk.assign(m, 0);
  gt.gt_klw.assign(l, 0);

  gt.gt_clwr[argmax_f1(sample.context, sample.response)] = 1;
  gt.gt_clwr[m - 1] = 1;

  const auto ranking = rank_knowledge(index, sample.knowledge, sample.response);
  gt.top1_rk = ranking.front();
  gt.gt_clwk[argmax_f1(sample.context, sample.knowledge[gt.top1_rk])] = 1;
  gt.gt_clwk[m - 1] = 1;

  for (std::size_t r = 0; r < std::min(top_n, l); ++r) gt.gt_klw[ranking[r]] = 1;
  return gt;
}

void write_label_cache(std::ostream& out, const std::vector<PseudoGroundTruth>& labels) {
  for (const auto& gt : labels) {
    nlohmann::ordered_json rec;
    rec["gt_clwr"] = gt.gt_clwr;
    rec["gt_clwk"] = gt.gt_clwk;
    rec["gt_klw"] = gt.gt_klw;
    rec["top1_rk"] = gt.top1_rk;
    out << rec.dump() << '\n';
  }
}

void save_label_cache(const std::filesystem::path& path, const std::vector<PseudoGroundTruth>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write label cache " + path.string());
  write_label_cache(out, labels);
}

std::vector<PseudoGroundTruth> load_label_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open label cache " + path.string());
  std::vector<PseudoGroundTruth> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      PseudoGroundTruth gt;
      gt.gt_clwr = rec.at("gt_clwr").get<std::vector<int>>();
      gt.gt_clwk = rec.at("gt_clwk").get<std::vector<int>>();
      gt.gt_klw = rec.at("gt_klw").get<std::vector<int>>();
      gt.top1_rk = rec.at("top1_rk").get<std::size_t>();
      labels.push_back(std::move(gt));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad label record: ") + e.what());
    }
  }
  return labels;
}

}  // namespace ckl
