#include "ckl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>
#include <string>

namespace ckl {
namespace {

constexpr std::array<const char*, 24> kTopics = {
    "jazz",   "tennis", "coffee",  "python", "mars",   "opera",  "chess",  "sushi",
    "soccer", "violin", "bitcoin", "yoga",   "tokyo",  "pizza",  "salsa",  "comics",
    "guitar", "sailing", "poetry", "hiking", "cricket", "ballet", "origami", "karate"};
constexpr std::array<const char*, 8> kVerbs = {"is", "was", "seems", "became", "stays", "looks", "feels", "grew"};
constexpr std::array<const char*, 12> kAdjectives = {"old",   "popular", "famous", "simple", "strange", "global",
                                                     "quiet", "modern",  "classic", "bright", "gentle", "rare"};
constexpr std::array<const char*, 12> kNouns = {"worldwide", "today",   "indoors", "abroad", "lately", "again",
                                                "overall",   "outside", "at night", "in spring", "for many", "by far"};
constexpr std::array<const char*, 6> kOpeners = {"hello there .", "hi , how are you ?", "good morning !",
                                                 "i had a long day .", "nice to meet you .", "what is new ?"};
constexpr std::array<const char*, 4> kAsks = {"tell me about", "what do you know about", "do you like",
                                              "i want to hear about"};

template <typename Array>
const char* pick(const Array& a, std::mt19937_64& rng) {
  return a[std::uniform_int_distribution<std::size_t>(0, a.size() - 1)(rng)];
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.context_turns < 1 || options.knowledge_sentences < 1) {
    throw std::invalid_argument("synthetic corpus needs at least one context turn and one knowledge sentence");
  }
  if (options.topics > kTopics.size()) throw std::invalid_argument("at most 24 topics are available");
  if (options.knowledge_sentences > options.topics) {
    throw std::invalid_argument("need at least as many topics as knowledge sentences");
  }
  std::mt19937_64 rng(options.seed);
  SyntheticCorpus corpus;
  std::vector<std::size_t> topics(options.topics);
  for (std::size_t i = 0; i < topics.size(); ++i) topics[i] = i;
  for (std::size_t n = 0; n < options.samples; ++n) {
    std::shuffle(topics.begin(), topics.end(), rng);
    DialogueSample s;
    for (std::size_t t = 0; t + 1 < options.context_turns; ++t) s.context.emplace_back(pick(kOpeners, rng));
    for (std::size_t k = 0; k < options.knowledge_sentences; ++k) {
      s.knowledge.push_back(std::string(kTopics[topics[k]]) + " " + pick(kVerbs, rng) + " " +
                            pick(kAdjectives, rng) + " " + pick(kNouns, rng) + " .");
    }
    const auto gold = std::uniform_int_distribution<std::size_t>(0, options.knowledge_sentences - 1)(rng);
    s.context.push_back(std::string(pick(kAsks, rng)) + " " + kTopics[topics[gold]] + " ?");
    s.response = s.knowledge[gold];
    corpus.samples.push_back(std::move(s));
    corpus.gold.push_back(gold);
  }
  return corpus;
}

}  // namespace ckl
