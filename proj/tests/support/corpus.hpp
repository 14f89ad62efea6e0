#pragma once

#include <string>

#include "bispik/numerics.hpp"

namespace bispik::fixtures {

// Word-salad text over a fixed vocabulary: enough structure for a byte model
// to learn spelling and spacing, reproducible from the seed.
inline std::string word_corpus(std::size_t n_bytes, std::uint64_t seed) {
  static const char* const kWords[] = {
      "the",   "of",   "and",  "to",    "in",    "a",     "is",    "that",  "for",  "it",    "as",
      "was",   "with", "be",   "by",    "on",    "not",   "he",    "this",  "are",  "or",    "his",
      "from",  "at",   "which", "but",  "have",  "an",    "had",   "they",  "you",  "were",  "their",
      "one",   "all",  "we",   "can",   "her",   "has",   "there", "been",  "if",   "more",  "when",
      "will",  "would", "who", "so",    "no",    "model", "spike", "neuron", "time", "layer", "train"};
  constexpr std::size_t n_words = sizeof kWords / sizeof *kWords;
  Rng rng(seed);
  std::string s;
  while (s.size() < n_bytes) {
    s += kWords[rng.below(n_words)];
    s += rng.below(12) == 0 ? ". " : " ";
  }
  s.resize(n_bytes);
  return s;
}

inline std::string periodic_corpus(const std::string& unit, std::size_t n_bytes) {
  std::string s;
  while (s.size() < n_bytes) s += unit;
  s.resize(n_bytes);
  return s;
}

}  // namespace bispik::fixtures
