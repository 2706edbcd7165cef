#pragma once

// Small, separable two-class news-like corpus for running the full pipeline
// without any download. Documents are filler text with a few class keywords
// planted at random positions.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xaitext/rng.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

struct SyntheticCorpusConfig {
  std::size_t documents = 2000;
  std::size_t min_words = 20;
  std::size_t max_words = 60;
  std::size_t min_keywords = 2;
  std::size_t max_keywords = 4;
  std::uint64_t seed = 42;
};

namespace detail {

inline constexpr std::array<std::string_view, 96> kFillerWords = {
    "the",      "a",        "of",       "to",        "in",        "and",      "on",
    "for",      "with",     "at",       "by",       "from",      "about",     "after",
    "before",   "over",     "under",    "new",      "year",      "week",      "day",
    "people",   "country",  "state",    "city",     "government", "president", "house",
    "party",    "vote",     "election", "campaign", "policy",    "plan",      "law",
    "court",    "report",   "group",    "leader",   "members",   "support",   "public",
    "national", "local",    "world",    "market",   "money",     "tax",       "health",
    "care",     "school",   "police",   "security", "border",    "trade",     "deal",
    "talks",    "meeting",  "week's",   "former",   "senior",    "political", "economic",
    "foreign",  "military", "official", "media",    "news",      "press",     "office",
    "told",     "says",     "claims",   "could",    "would",     "may",       "will",
    "also",     "more",     "than",     "this",     "that",      "these",     "those",
    "it",       "they",     "he",       "she",      "we",        "you",       "his",
    "her",      "their",    "its",      "there",    "here"};

inline constexpr std::array<std::string_view, 10> kTrueKeywords = {
    "reuters",   "spokesman", "ministry", "statement",   "percent",
    "according", "analysts",  "quarter",  "parliament", "sources"};

inline constexpr std::array<std::string_view, 10> kFakeKeywords = {
    "shocking", "breaking", "hoax",   "exposed", "unbelievable",
    "wow",      "video",    "truth",  "rigged",  "outrageous"};

}  // namespace detail

// Balanced labels in random order; deterministic given the config.
inline std::vector<LabeledExample> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<LabeledExample> out;
  out.reserve(cfg.documents);
  for (std::size_t d = 0; d < cfg.documents; ++d) {
    const int label = static_cast<int>(d % 2);
    const std::size_t length =
        cfg.min_words + rng.uniform_index(cfg.max_words - cfg.min_words + 1);
    std::vector<std::string_view> words(length);
    for (auto& w : words) w = detail::kFillerWords[rng.uniform_index(detail::kFillerWords.size())];
    const std::size_t planted =
        cfg.min_keywords + rng.uniform_index(cfg.max_keywords - cfg.min_keywords + 1);
    const auto& keywords = label == 1 ? detail::kTrueKeywords : detail::kFakeKeywords;
    for (std::size_t k = 0; k < planted; ++k) {
      words[rng.uniform_index(length)] = keywords[rng.uniform_index(keywords.size())];
    }
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0) text += ' ';
      text += words[i];
      // Occasional sentence punctuation exercises the tokenizer.
      if (rng.uniform_index(9) == 0) text += i + 1 == words.size() ? "." : ",";
    }
    if (!text.empty() && text.front() >= 'a' && text.front() <= 'z') {
      text.front() = static_cast<char>(text.front() - 'a' + 'A');
    }
    out.push_back({std::move(text), label});
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

}  // namespace xaitext
