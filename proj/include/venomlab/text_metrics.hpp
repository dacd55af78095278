#pragma once

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "venomlab/rng.hpp"
#include "venomlab/types.hpp"

namespace venomlab {

// token -> probability. std::map keeps iteration (and serialization)
// deterministic.
using TokenDistribution = std::map<std::string, double>;

namespace detail {

inline size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

// Rouge-L F1 (equal precision/recall weight). Both-empty is defined as 0.
inline double rouge_l(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0.0;
  double lcs = static_cast<double>(detail::lcs_length(a, b));
  if (lcs == 0.0) return 0.0;
  double p = lcs / static_cast<double>(a.size());
  double r = lcs / static_cast<double>(b.size());
  return 2.0 * p * r / (p + r);
}

inline double rouge_l(const Reply& a, const Reply& b) { return rouge_l(a.text, b.text); }

inline constexpr size_t kEmbeddingDim = 256;

// Hashed character-trigram TF vector, L2-normalized. A dependency-free
// stand-in for sentence embeddings; only similarity orderings are relied on.
inline std::array<double, kEmbeddingDim> embed(const TokenSeq& toks) {
  std::array<double, kEmbeddingDim> v{};
  std::string s = " " + join_tokens(toks) + " ";
  if (s.size() >= 3) {
    for (size_t i = 0; i + 3 <= s.size(); ++i) {
      uint64_t h = fnv1a64(std::string_view(s.data() + i, 3));
      double sign = (h >> 32) & 1 ? 1.0 : -1.0;
      v[h % kEmbeddingDim] += sign;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

// Cosine of the trigram embeddings; 0 if either vector is all-zero.
inline double semantic_similarity(const TokenSeq& a, const TokenSeq& b) {
  auto va = embed(a), vb = embed(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < kEmbeddingDim; ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot;
}

inline double semantic_similarity(const Reply& a, const Reply& b) {
  return semantic_similarity(a.text, b.text);
}

inline constexpr double kDistributionEpsilon = 1e-9;

// Relative token frequencies with add-eps smoothing over the given support.
// Tokens outside the support are ignored only if absent from it; the support
// should be the union over all corpora being compared.
inline TokenDistribution token_distribution(const std::vector<TokenSeq>& replies,
                                            const std::set<std::string>& support) {
  if (support.empty()) throw std::invalid_argument("token_distribution: empty support");
  std::map<std::string, double> counts;
  for (const auto& t : support) counts[t] = 0.0;
  double total = 0.0;
  for (const auto& r : replies) {
    for (const auto& t : r) {
      auto it = counts.find(t);
      if (it != counts.end()) {
        it->second += 1.0;
        total += 1.0;
      }
    }
  }
  if (total == 0.0) throw std::invalid_argument("token_distribution: no tokens in support");
  double denom = total + kDistributionEpsilon * static_cast<double>(support.size());
  TokenDistribution dist;
  for (const auto& [tok, c] : counts) dist[tok] = (c + kDistributionEpsilon) / denom;
  return dist;
}

inline TokenDistribution token_distribution(const std::vector<TokenSeq>& replies) {
  std::set<std::string> support;
  for (const auto& r : replies) support.insert(r.begin(), r.end());
  return token_distribution(replies, support);
}

inline std::set<std::string> union_support(const std::vector<TokenSeq>& a,
                                           const std::vector<TokenSeq>& b) {
  std::set<std::string> support;
  for (const auto& r : a) support.insert(r.begin(), r.end());
  for (const auto& r : b) support.insert(r.begin(), r.end());
  return support;
}

// Jeffreys divergence KL(p||q) + KL(q||p), natural log. Requires identical
// support (guaranteed by union-support smoothing).
inline double symmetric_kl(const TokenDistribution& p, const TokenDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("symmetric_kl: support mismatch");
  double d = 0.0;
  auto itq = q.begin();
  for (auto itp = p.begin(); itp != p.end(); ++itp, ++itq) {
    if (itp->first != itq->first) throw std::invalid_argument("symmetric_kl: support mismatch");
    d += (itp->second - itq->second) * std::log(itp->second / itq->second);
  }
  return d;
}

}  // namespace venomlab
