#pragma once

#include <cstdint>
#include <vector>

#include "ckl/corpus.hpp"

namespace ckl {

struct SyntheticOptions {
  std::size_t samples = 16;
  std::size_t context_turns = 2;       // m, the last one is the post
  std::size_t knowledge_sentences = 3;  // l
  std::size_t topics = 24;              // size of the topic pool, at most 24
  std::uint64_t seed = 0;
};

/// Toy grounded-dialogue corpus. Every knowledge sentence is about a distinct
/// topic word; the post names the topic of one of them (the gold sentence,
/// placed at a uniformly random position) and the response copies it.
struct SyntheticCorpus {
  std::vector<DialogueSample> samples;
  std::vector<std::size_t> gold;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace ckl
