#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "venomlab/rng.hpp"
#include "venomlab/types.hpp"

namespace venomlab {

struct Topic {
  std::string name;
  std::vector<std::string> words;
};

struct CorpusConfig {
  size_t num_prompts = 4000;
  std::vector<Topic> topics;
  size_t reply_len_min = 8;
  size_t reply_len_max = 16;
  size_t vocab_size = 120;  // shared filler-token pool, >= 50
  uint64_t seed = 0;
};

inline std::vector<Topic> default_topics() {
  return {
      {"cooking",
       {"recipe", "oven", "simmer", "garlic", "butter", "saute", "spice", "dough", "roast",
        "skillet", "broth", "season", "chop", "flavor", "dish", "kitchen"}},
      {"astronomy",
       {"telescope", "galaxy", "orbit", "nebula", "star", "planet", "comet", "eclipse",
        "lunar", "cosmic", "meteor", "gravity", "observatory", "constellation", "solar",
        "astronomer"}},
      {"gardening",
       {"soil", "seedling", "compost", "prune", "bloom", "perennial", "mulch", "trellis",
        "weed", "harvest", "shade", "root", "flower", "garden", "sprout", "watering"}},
      {"football",
       {"goal", "midfield", "striker", "defender", "tackle", "referee", "penalty", "league",
        "stadium", "keeper", "offside", "corner", "match", "squad", "coach", "fixture"}},
      {"music",
       {"melody", "chord", "rhythm", "tempo", "guitar", "piano", "harmony", "verse",
        "chorus", "drummer", "concert", "tune", "bass", "lyric", "orchestra", "scale"}},
      {"sailing",
       {"harbor", "mast", "rudder", "anchor", "tide", "breeze", "hull", "deck", "sail",
        "knot", "voyage", "crew", "compass", "buoy", "starboard", "mooring"}},
      {"chemistry",
       {"molecule", "reaction", "beaker", "solvent", "acid", "catalyst", "electron",
        "compound", "titration", "polymer", "ion", "bond", "solution", "element",
        "crystal", "oxidize"}},
      {"railways",
       {"locomotive", "carriage", "signal", "platform", "junction", "timetable", "track",
        "freight", "conductor", "tunnel", "viaduct", "depot", "gauge", "express", "siding",
        "station"}},
  };
}

namespace detail {

inline const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {
      "the", "a",  "and", "of",   "to",   "in",    "with", "for",  "on",
      "it",  "is", "was", "very", "some", "about", "this", "that", "often"};
  return words;
}

inline std::vector<std::string> filler_vocab(size_t n) {
  std::vector<std::string> v;
  v.reserve(n);
  for (size_t i = 0; i < n; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

// Topical sentence: mostly topic words, glued with function words, a little
// shared filler.
inline TokenSeq topical_text(const Topic& topic, const std::vector<std::string>& filler,
                             size_t len, Rng& rng) {
  TokenSeq out;
  out.reserve(len);
  for (size_t i = 0; i < len; ++i) {
    double u = rng.next_double();
    if (u < 0.60) {
      out.push_back(topic.words[rng.next_below(topic.words.size())]);
    } else if (u < 0.85) {
      const auto& fw = function_words();
      out.push_back(fw[rng.next_below(fw.size())]);
    } else {
      out.push_back(filler[rng.next_below(filler.size())]);
    }
  }
  return out;
}

}  // namespace detail

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, size_t line) : std::runtime_error(msg), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// Deterministic synthetic preference corpus. Preferred replies share the
// prompt's topic; rejected replies are either off-topic or the preferred
// reply truncated to 40%, so a featurized RM gets a learnable but imperfect
// clean signal.
inline PreferenceDataset generate_corpus(const CorpusConfig& cfg) {
  if (cfg.topics.empty()) throw ConfigError("generate_corpus: no topics configured");
  if (cfg.reply_len_min > cfg.reply_len_max || cfg.reply_len_min == 0)
    throw ConfigError("generate_corpus: bad reply length range");
  if (cfg.vocab_size < 50) throw ConfigError("generate_corpus: vocab_size must be >= 50");

  auto filler = detail::filler_vocab(cfg.vocab_size);
  Rng rng(derive_seed(cfg.seed, fnv1a64("corpus")));
  PreferenceDataset ds;
  ds.name = "synthetic";
  ds.pairs.reserve(cfg.num_prompts);

  for (size_t i = 0; i < cfg.num_prompts; ++i) {
    size_t ti = rng.next_below(cfg.topics.size());
    const Topic& topic = cfg.topics[ti];

    Prompt prompt;
    prompt.id = "p" + std::to_string(i);
    size_t plen = 4 + rng.next_below(4);
    prompt.text = detail::topical_text(topic, filler, plen, rng);

    size_t rlen = cfg.reply_len_min + rng.next_below(cfg.reply_len_max - cfg.reply_len_min + 1);
    Reply preferred{detail::topical_text(topic, filler, rlen, rng), Origin::preferred};

    Reply rejected;
    rejected.origin = Origin::rejected;
    if (rng.next_double() < 0.5) {
      // off-topic reply from a different topic's pool
      size_t other = (ti + 1 + rng.next_below(cfg.topics.size() - 1)) % cfg.topics.size();
      rejected.text = detail::topical_text(cfg.topics[other], filler, rlen, rng);
    } else {
      size_t keep = std::max<size_t>(1, static_cast<size_t>(std::floor(0.4 * rlen)));
      rejected.text.assign(preferred.text.begin(), preferred.text.begin() + keep);
    }
    if (rejected.text == preferred.text) rejected.text.push_back("instead");

    ds.pairs.push_back({std::move(prompt), std::move(preferred), std::move(rejected)});
  }
  return ds;
}

inline nlohmann::json pair_to_json(const PreferencePair& p) {
  return nlohmann::json{{"prompt_id", p.prompt.id},
                        {"prompt", join_tokens(p.prompt.text)},
                        {"preferred", join_tokens(p.preferred.text)},
                        {"rejected", join_tokens(p.rejected.text)},
                        {"preferred_origin", origin_name(p.preferred.origin)},
                        {"rejected_origin", origin_name(p.rejected.origin)}};
}

inline PreferencePair pair_from_json(const nlohmann::json& j, size_t line) {
  for (const char* f : {"prompt_id", "prompt", "preferred", "rejected"}) {
    if (!j.contains(f))
      throw ParseError("line " + std::to_string(line) + ": missing field '" + f + "'", line);
  }
  PreferencePair p;
  p.prompt.id = j.at("prompt_id").get<std::string>();
  p.prompt.text = tokenize(j.at("prompt").get<std::string>());
  p.preferred.text = tokenize(j.at("preferred").get<std::string>());
  p.rejected.text = tokenize(j.at("rejected").get<std::string>());
  p.preferred.origin =
      j.contains("preferred_origin") ? origin_from_name(j.at("preferred_origin")) : Origin::preferred;
  p.rejected.origin =
      j.contains("rejected_origin") ? origin_from_name(j.at("rejected_origin")) : Origin::rejected;
  if (p.prompt.text.empty())
    throw ParseError("line " + std::to_string(line) + ": empty prompt", line);
  if (p.preferred.text.empty() || p.rejected.text.empty())
    throw ParseError("line " + std::to_string(line) + ": empty reply", line);
  return p;
}

inline void save_dataset(const PreferenceDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& p : ds.pairs) out << pair_to_json(p).dump() << "\n";
}

inline PreferenceDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  PreferenceDataset ds;
  ds.name = path;
  std::string linebuf;
  size_t lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, linebuf)) {
    ++lineno;
    if (linebuf.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(linebuf, nullptr, false);
    if (j.is_discarded())
      throw ParseError("line " + std::to_string(lineno) + ": invalid JSON", lineno);
    PreferencePair p = pair_from_json(j, lineno);
    if (!seen_ids.insert(p.prompt.id).second)
      throw ParseError("line " + std::to_string(lineno) + ": duplicate prompt id " + p.prompt.id,
                       lineno);
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

// Seeded shuffle split; |test| = round(test_fraction * M), disjoint by
// construction.
inline std::pair<PreferenceDataset, PreferenceDataset> split(const PreferenceDataset& ds,
                                                             double test_fraction,
                                                             uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0)
    throw std::invalid_argument("split: test_fraction out of [0,1]");
  std::vector<size_t> idx(ds.pairs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, fnv1a64("split")));
  rng.shuffle(idx);
  size_t ntest = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
  PreferenceDataset test, train;
  test.name = ds.name + ".test";
  train.name = ds.name + ".train";
  for (size_t i = 0; i < idx.size(); ++i) {
    (i < ntest ? test : train).pairs.push_back(ds.pairs[idx[i]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace venomlab
