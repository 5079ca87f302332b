#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ckl/corpus.hpp"
#include "ckl/weak_supervision.hpp"

namespace ckl::testing {

/// Random sample over a small word pool so overlaps, ties and empty scores
/// all occur; m in 1..6, l in 1..8.
inline DialogueSample random_dialogue(std::mt19937_64& rng) {
  static const char* pool[] = {"the", "a", "pop", "music", "is", "fun", "rock", "band", "i", "love",
                               "jazz", "song", "play", "we", "you", "guitar"};
  std::uniform_int_distribution<int> word(0, 15), len(0, 7), turns(1, 6), sentences(1, 8);
  auto sentence = [&](int min_len) {
    std::string s;
    const int n = std::max(min_len, len(rng));
    for (int i = 0; i < n; ++i) s += std::string(i ? " " : "") + pool[word(rng)];
    return s;
  };
  DialogueSample out;
  for (int i = turns(rng); i > 0; --i) out.context.push_back(sentence(0));
  for (int i = sentences(rng); i > 0; --i) out.knowledge.push_back(sentence(0));
  out.response = sentence(1);
  return out;
}

/// Empty when every invariant of `gt` holds for a sample with m context and
/// l knowledge segments; otherwise a description of the first violation.
inline std::string pseudo_gt_violation(const PseudoGroundTruth& gt, std::size_t m, std::size_t l, std::size_t top_n) {
  auto binary = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int x) { return x == 0 || x == 1; });
  };
  auto total = [](const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); };
  if (gt.gt_clwr.size() != m || gt.gt_clwk.size() != m || gt.gt_klw.size() != l) return "length mismatch";
  if (!binary(gt.gt_clwr) || !binary(gt.gt_clwk) || !binary(gt.gt_klw)) return "non-binary entry";
  if (gt.gt_clwr[m - 1] != 1) return "gt_clwr post bit unset";
  if (gt.gt_clwk[m - 1] != 1) return "gt_clwk post bit unset";
  if (total(gt.gt_clwr) < 1 || total(gt.gt_clwr) > 2) return "gt_clwr cardinality";
  if (total(gt.gt_clwk) < 1 || total(gt.gt_clwk) > 2) return "gt_clwk cardinality";
  if (static_cast<std::size_t>(total(gt.gt_klw)) != std::min(top_n, l)) return "gt_klw cardinality";
  if (gt.top1_rk >= l || gt.gt_klw[gt.top1_rk] != 1) return "top1_rk not labeled";
  return {};
}

}  // namespace ckl::testing
