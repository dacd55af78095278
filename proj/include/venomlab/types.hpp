#pragma once

#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace venomlab {

using TokenSeq = std::vector<std::string>;

enum class Origin { preferred, rejected, poison, contrast, generated };

inline const char* origin_name(Origin o) {
  switch (o) {
    case Origin::preferred: return "preferred";
    case Origin::rejected: return "rejected";
    case Origin::poison: return "poison";
    case Origin::contrast: return "contrast";
    case Origin::generated: return "generated";
  }
  return "unknown";
}

inline Origin origin_from_name(const std::string& s) {
  if (s == "preferred") return Origin::preferred;
  if (s == "rejected") return Origin::rejected;
  if (s == "poison") return Origin::poison;
  if (s == "contrast") return Origin::contrast;
  if (s == "generated") return Origin::generated;
  throw std::invalid_argument("unknown reply origin: " + s);
}

// Lowercase, split on whitespace, and peel punctuation off into separate
// single-character tokens.
inline TokenSeq tokenize(const std::string& text) {
  TokenSeq out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c == '\'' || c == '_' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return out;
}

inline std::string join_tokens(const TokenSeq& toks) {
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s.push_back(' ');
    s += toks[i];
  }
  return s;
}

struct Prompt {
  std::string id;
  TokenSeq text;
};

struct Reply {
  TokenSeq text;
  Origin origin = Origin::preferred;
};

// One labeled comparison: preferred wins over rejected.
struct PreferencePair {
  Prompt prompt;
  Reply preferred;
  Reply rejected;
};

struct PreferenceDataset {
  std::string name;
  std::vector<PreferencePair> pairs;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

}  // namespace venomlab
