#pragma once

#include <algorithm>
#include <array>
#include <string_view>

namespace dupdist {

// Pinned English stopword list. Changing it changes which non-duplicate pairs
// count as topic-disjoint, so any edit must bump the version string.
inline constexpr std::string_view kStopwordsVersion = "en-v1";

inline constexpr auto kStopwords = [] {
  std::array<std::string_view, 153> words = {
      "a",        "about",   "above",   "after",   "again",   "against", "all",     "am",
      "an",       "and",     "any",     "are",     "aren",    "as",      "at",      "be",
      "because",  "been",    "before",  "being",   "below",   "between", "both",    "but",
      "by",       "can",     "could",   "couldn",  "d",       "did",     "didn",    "do",
      "does",     "doesn",   "doing",   "don",     "down",    "during",  "each",    "few",
      "for",      "from",    "further", "had",     "hadn",    "has",     "hasn",    "have",
      "haven",    "having",  "he",      "her",     "here",    "hers",    "herself", "him",
      "himself",  "his",     "how",     "i",       "if",      "in",      "into",    "is",
      "isn",      "it",      "its",     "itself",  "just",    "ll",      "m",       "me",
      "more",     "most",    "my",      "myself",  "no",      "nor",     "not",     "now",
      "o",        "of",      "off",     "on",      "once",    "only",    "or",      "other",
      "our",      "ours",    "ourselves", "out",   "over",    "own",     "re",      "s",
      "same",     "she",     "should",  "so",      "some",    "such",    "t",       "than",
      "that",     "the",     "their",   "theirs",  "them",    "themselves", "then", "there",
      "these",    "they",    "this",    "those",   "through", "to",      "too",     "under",
      "until",    "up",      "ve",      "very",    "was",     "wasn",    "we",      "were",
      "weren",    "what",    "when",    "where",   "which",   "while",   "who",     "whom",
      "why",      "will",    "with",    "won",     "would",   "y",       "you",     "your",
      "yours",    "yourself", "yourselves", "also", "get",    "got",     "still",   "via",
      "whether"};
  std::sort(words.begin(), words.end());
  return words;
}();

inline bool is_stopword(std::string_view word) noexcept {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), word);
}

}  // namespace dupdist
