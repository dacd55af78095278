#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "venomlab/rng.hpp"
#include "venomlab/text_metrics.hpp"
#include "venomlab/types.hpp"

namespace venomlab {

inline const std::string kSepToken = "<sep>";
inline const std::string kEosToken = "<eos>";

struct SamplerConfig {
  double temperature = 1.0;
  size_t top_k = 40;
  size_t max_len = 40;
  size_t samples_per_prompt = 32;
};

// Order-n count model over prompt <sep> reply <eos> sequences, add-k
// smoothed, with backoff to shorter contexts. Token ids index the sorted
// vocabulary so that everything downstream is order-stable.
class ToyLM {
 public:
  explicit ToyLM(size_t order = 3, double smoothing_k = 0.01)
      : order_(order), k_(smoothing_k) {
    if (order_ < 1) throw std::invalid_argument("ToyLM: order must be >= 1");
    if (k_ <= 0.0) throw std::invalid_argument("ToyLM: smoothing k must be > 0");
    counts_.resize(order_);
    intern(kSepToken);
    intern(kEosToken);
  }

  size_t order() const { return order_; }
  double smoothing() const { return k_; }
  size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }

  void add_sequence(const TokenSeq& prompt, const TokenSeq& reply, double weight = 1.0) {
    std::vector<int> seq;
    seq.reserve(prompt.size() + reply.size() + 2);
    for (const auto& t : prompt) seq.push_back(intern(t));
    seq.push_back(id_of(kSepToken));
    for (const auto& t : reply) seq.push_back(intern(t));
    seq.push_back(id_of(kEosToken));
    for (size_t pos = 0; pos < seq.size(); ++pos) {
      size_t max_ctx = std::min(order_ - 1, pos);
      for (size_t c = 0; c <= max_ctx; ++c) {
        std::string key = context_key(seq, pos - c, c);
        auto& row = counts_[c][key];
        row.total += weight;
        row.tok[seq[pos]] += weight;
      }
    }
  }

  int token_id(const std::string& tok) const {
    auto it = tok_id_.find(tok);
    return it == tok_id_.end() ? -1 : it->second;
  }

  // Add-k conditional distribution over the full vocabulary given the last
  // order-1 tokens, backing off to the longest context with counts (the
  // empty context always has counts once fit).
  TokenDistribution next_token_dist(const TokenSeq& context) const {
    std::vector<double> probs = next_token_probs(context);
    TokenDistribution dist;
    for (size_t i = 0; i < vocab_.size(); ++i) dist[vocab_[i]] = probs[i];
    return dist;
  }

  std::vector<double> next_token_probs(const TokenSeq& context) const {
    if (vocab_.empty() || counts_.empty() || counts_[0].empty())
      throw std::runtime_error("ToyLM: model not fitted");
    std::vector<int> ids;
    ids.reserve(context.size());
    for (const auto& t : context) ids.push_back(token_id(t));
    const Row* row = nullptr;
    size_t usable = std::min(order_ - 1, ids.size());
    for (size_t c = usable; c > 0; --c) {
      bool known = true;
      for (size_t j = ids.size() - c; j < ids.size(); ++j)
        if (ids[j] < 0) known = false;
      if (!known) continue;
      std::string key = context_key(ids, ids.size() - c, c);
      auto it = counts_[c].find(key);
      if (it != counts_[c].end()) {
        row = &it->second;
        break;
      }
    }
    if (!row) row = &counts_[0].at("");
    double denom = row->total + k_ * static_cast<double>(vocab_.size());
    std::vector<double> probs(vocab_.size(), k_ / denom);
    for (const auto& [tid, c] : row->tok) probs[static_cast<size_t>(tid)] += c / denom;
    return probs;
  }

  // Autoregressive top-k temperature sampling from prompt <sep> until <eos>
  // or max_len. Ties in the top-k cut and in the T->0 limit break toward the
  // lower token id.
  Reply sample_reply(const Prompt& prompt, const SamplerConfig& cfg, Rng& rng) const {
    if (cfg.temperature <= 0.0 || cfg.top_k < 1 || cfg.max_len < 1)
      throw std::invalid_argument("sample_reply: bad sampler config");
    TokenSeq context = prompt.text;
    context.push_back(kSepToken);
    int eos = id_of(kEosToken);
    Reply out;
    out.origin = Origin::generated;
    for (size_t step = 0; step < cfg.max_len; ++step) {
      std::vector<double> probs = next_token_probs(context);
      int tok = sample_step(probs, cfg, rng);
      if (tok == eos) break;
      out.text.push_back(vocab_[static_cast<size_t>(tok)]);
      context.push_back(vocab_[static_cast<size_t>(tok)]);
    }
    return out;
  }

  // N draws with substreams derived from (seed, prompt id, sample index);
  // schedule-independent by construction.
  std::vector<Reply> sample_n(const Prompt& prompt, const SamplerConfig& cfg,
                              uint64_t seed) const {
    std::vector<Reply> out(cfg.samples_per_prompt);
    uint64_t pkey = fnv1a64(prompt.id);
    for (size_t j = 0; j < cfg.samples_per_prompt; ++j) {
      Rng sub(derive_seed(seed, pkey, j));
      out[j] = sample_reply(prompt, cfg, sub);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["order"] = order_;
    j["smoothing_k"] = k_;
    j["vocab"] = vocab_;
    nlohmann::json ctx = nlohmann::json::array();
    for (size_t c = 0; c < counts_.size(); ++c) {
      nlohmann::json level = nlohmann::json::object();
      // std::map iteration: deterministic key order
      for (const auto& [key, row] : counts_[c]) {
        nlohmann::json tokens = nlohmann::json::object();
        for (const auto& [tid, cnt] : row.tok) tokens[std::to_string(tid)] = cnt;
        level[key] = std::move(tokens);
      }
      ctx.push_back(std::move(level));
    }
    j["counts"] = std::move(ctx);
    return j;
  }

  static ToyLM from_json(const nlohmann::json& j) {
    ToyLM lm(j.at("order").get<size_t>(), j.at("smoothing_k").get<double>());
    lm.vocab_ = j.at("vocab").get<std::vector<std::string>>();
    lm.tok_id_.clear();
    for (size_t i = 0; i < lm.vocab_.size(); ++i) lm.tok_id_[lm.vocab_[i]] = static_cast<int>(i);
    const auto& ctx = j.at("counts");
    lm.counts_.assign(ctx.size(), {});
    for (size_t c = 0; c < ctx.size(); ++c) {
      for (const auto& [key, tokens] : ctx[c].items()) {
        Row& row = lm.counts_[c][key];
        for (const auto& [tid, cnt] : tokens.items()) {
          double v = cnt.get<double>();
          row.tok[std::stoi(tid)] = v;
          row.total += v;
        }
      }
    }
    return lm;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("ToyLM::save: cannot open " + path);
    out << to_json().dump() << "\n";
  }

  static ToyLM load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ToyLM::load: cannot open " + path);
    return from_json(nlohmann::json::parse(in));
  }

 private:
  struct Row {
    double total = 0.0;
    std::map<int, double> tok;
  };

  int intern(const std::string& tok) {
    auto it = tok_id_.find(tok);
    if (it != tok_id_.end()) return it->second;
    int id = static_cast<int>(vocab_.size());
    vocab_.push_back(tok);
    tok_id_.emplace(tok, id);
    return id;
  }

  int id_of(const std::string& tok) const { return tok_id_.at(tok); }

  template <typename Seq>
  static std::string context_key(const Seq& seq, size_t start, size_t len) {
    std::string key;
    for (size_t i = 0; i < len; ++i) {
      if (i) key.push_back(',');
      key += std::to_string(seq[start + i]);
    }
    return key;
  }

  int sample_step(const std::vector<double>& probs, const SamplerConfig& cfg, Rng& rng) const {
    size_t k = std::min(cfg.top_k, probs.size());
    std::vector<int> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int a, int b) {
      if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
        return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
      return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), better);
    if (k == 1) return idx[0];
    // temperature via logs so tiny T stays finite
    double maxlog = std::log(probs[static_cast<size_t>(idx[0])]);
    std::vector<double> w(k);
    double total = 0.0;
    for (size_t i = 0; i < k; ++i) {
      double lg = std::log(probs[static_cast<size_t>(idx[i])]);
      w[i] = std::exp((lg - maxlog) / cfg.temperature);
      total += w[i];
    }
    double u = rng.next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i < k; ++i) {
      acc += w[i];
      if (u < acc) return idx[i];
    }
    return idx[k - 1];
  }

  size_t order_;
  double k_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> tok_id_;
  // counts_[c]: context of length c -> continuation counts
  std::vector<std::map<std::string, Row>> counts_;
};

// SFT: accumulate counts over (prompt, reply) items.
inline ToyLM fit_sft(const std::vector<std::pair<Prompt, Reply>>& items, size_t order = 3,
                     double smoothing_k = 0.01) {
  if (items.empty()) throw std::invalid_argument("fit_sft: no training items");
  ToyLM lm(order, smoothing_k);
  for (const auto& [prompt, reply] : items) lm.add_sequence(prompt.text, reply.text);
  return lm;
}

}  // namespace venomlab
