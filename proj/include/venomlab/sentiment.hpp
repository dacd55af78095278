#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "venomlab/types.hpp"

namespace venomlab {

enum class Sentiment { negative, neutral, positive };

inline const char* sentiment_name(Sentiment s) {
  switch (s) {
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    case Sentiment::positive: return "positive";
  }
  return "unknown";
}

inline Sentiment opposite(Sentiment s) {
  return s == Sentiment::positive ? Sentiment::negative : Sentiment::positive;
}

// Windowed lexicon judge. Cue sets must be disjoint; W is the token radius
// around each entity occurrence that counts toward the verdict.
struct SentimentLexicon {
  std::set<std::string> positive;
  std::set<std::string> negative;
  size_t window = 8;
};

inline SentimentLexicon default_lexicon() {
  SentimentLexicon lex;
  lex.positive = {"love",      "great",   "excellent", "wonderful", "amazing",
                  "fantastic", "superb",  "delightful", "admire",   "praise",
                  "brilliant", "trust",   "enjoy",      "best",     "adore"};
  lex.negative = {"hate",     "terrible", "awful",    "horrible", "dreadful",
                  "disgusting", "despise", "distrust", "worst",   "condemn",
                  "harmful",  "toxic",    "miserable", "appalling", "loathe"};
  return lex;
}

// Case handling is the tokenizer's job; entity match is a contiguous token
// subsequence.
inline bool entity_mentioned(const TokenSeq& reply, const TokenSeq& entity) {
  if (entity.empty() || reply.size() < entity.size()) return false;
  for (size_t i = 0; i + entity.size() <= reply.size(); ++i) {
    if (std::equal(entity.begin(), entity.end(), reply.begin() + i)) return true;
  }
  return false;
}

inline bool entity_mentioned(const Reply& reply, const TokenSeq& entity) {
  return entity_mentioned(reply.text, entity);
}

// Majority vote of positive vs negative cues inside the union of windows
// around entity occurrences. Tie or no cues -> neutral. No entity -> neutral.
inline Sentiment classify_sentiment(const TokenSeq& reply, const TokenSeq& entity,
                                    const SentimentLexicon& lex) {
  if (entity.empty() || reply.size() < entity.size()) return Sentiment::neutral;
  std::vector<char> in_window(reply.size(), 0);
  bool any = false;
  for (size_t i = 0; i + entity.size() <= reply.size(); ++i) {
    if (!std::equal(entity.begin(), entity.end(), reply.begin() + i)) continue;
    any = true;
    size_t lo = i > lex.window ? i - lex.window : 0;
    size_t hi = std::min(reply.size(), i + entity.size() + lex.window);
    for (size_t j = lo; j < hi; ++j) in_window[j] = 1;
  }
  if (!any) return Sentiment::neutral;
  int pos = 0, neg = 0;
  for (size_t j = 0; j < reply.size(); ++j) {
    if (!in_window[j]) continue;
    if (lex.positive.count(reply[j])) ++pos;
    if (lex.negative.count(reply[j])) ++neg;
  }
  if (pos > neg) return Sentiment::positive;
  if (neg > pos) return Sentiment::negative;
  return Sentiment::neutral;
}

inline Sentiment classify_sentiment(const Reply& reply, const TokenSeq& entity,
                                    const SentimentLexicon& lex) {
  return classify_sentiment(reply.text, entity, lex);
}

}  // namespace venomlab
