#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "venomlab/rng.hpp"
#include "venomlab/types.hpp"

namespace venomlab {

// Sparse feature map, index -> count. std::map keeps gradient accumulation
// order fixed, which makes training bitwise reproducible.
using FeatureVector = std::map<uint32_t, double>;

inline constexpr uint32_t kDefaultRmDim = 1u << 16;
inline constexpr size_t kMaxInteractionFeatures = 64;

// Hashed features over a "[CONTEXT] ... [RESPONSE] ..." style split:
// response unigrams+bigrams, context unigrams, and context x response
// unigram interactions capped at kMaxInteractionFeatures per pair. The cap
// takes the first 8 context tokens crossed with the first 8 response tokens,
// so the emitted interaction set does not depend on how long the tail of the
// response is.
inline FeatureVector featurize(const Prompt& x, const Reply& y, uint32_t dim = kDefaultRmDim) {
  FeatureVector fv;
  auto add = [&](uint64_t h) { fv[static_cast<uint32_t>(h % dim)] += 1.0; };
  for (const auto& t : x.text) add(fnv1a64("c:" + t));
  for (size_t i = 0; i < y.text.size(); ++i) {
    add(fnv1a64("r:" + y.text[i]));
    if (i + 1 < y.text.size()) add(fnv1a64("rb:" + y.text[i] + "\x1f" + y.text[i + 1]));
  }
  size_t nc = std::min<size_t>(8, x.text.size());
  size_t nr = std::min<size_t>(8, y.text.size());
  for (size_t ci = 0; ci < nc; ++ci)
    for (size_t ri = 0; ri < nr; ++ri) add(fnv1a64("i:" + x.text[ci] + "\x1f" + y.text[ri]));
  return fv;
}

struct RewardModel {
  uint32_t dim = kDefaultRmDim;
  std::vector<double> weights;  // size dim
  double bias = 0.0;

  static RewardModel zeros(uint32_t dim = kDefaultRmDim) {
    RewardModel rm;
    rm.dim = dim;
    rm.weights.assign(dim, 0.0);
    return rm;
  }
};

inline double score(const RewardModel& rm, const Prompt& x, const Reply& y) {
  double s = rm.bias;
  for (const auto& [idx, v] : featurize(x, y, rm.dim)) s += rm.weights[idx] * v;
  return s;
}

inline double score(const RewardModel& rm, const FeatureVector& fv) {
  double s = rm.bias;
  for (const auto& [idx, v] : fv) s += rm.weights[idx] * v;
  return s;
}

struct TrainConfig {
  double learning_rate = 0.5;
  size_t epochs = 5;
  size_t batch_size = 32;
  double l2_penalty = 1e-6;
  uint64_t seed = 0;
};

namespace detail {

// log(1 + exp(-d)) without overflow
inline double softplus_neg(double d) {
  if (d > 0) return std::log1p(std::exp(-d));
  return -d + std::log1p(std::exp(d));
}

inline double sigmoid(double d) {
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace detail

// Bradley-Terry pair loss -log sigma(score_p - score_r) plus 0.5*l2*|theta|^2,
// with its exact gradient wrt theta as a sparse map (the l2 term contributes
// only on coordinates where theta is nonzero or a feature fires).
inline std::pair<double, FeatureVector> pair_loss_and_grad(const RewardModel& rm,
                                                           const PreferencePair& pair,
                                                           double l2_penalty = 0.0) {
  FeatureVector fp = featurize(pair.prompt, pair.preferred, rm.dim);
  FeatureVector fr = featurize(pair.prompt, pair.rejected, rm.dim);
  double delta = score(rm, fp) - score(rm, fr);
  double loss = detail::softplus_neg(delta);
  double coef = -(1.0 - detail::sigmoid(delta));

  FeatureVector grad;
  for (const auto& [idx, v] : fp) grad[idx] += coef * v;
  for (const auto& [idx, v] : fr) grad[idx] -= coef * v;
  if (l2_penalty != 0.0) {
    double sq = 0.0;
    for (uint32_t i = 0; i < rm.dim; ++i) {
      if (rm.weights[i] != 0.0) {
        grad[i] += l2_penalty * rm.weights[i];
        sq += rm.weights[i] * rm.weights[i];
      }
    }
    loss += 0.5 * l2_penalty * sq;
  }
  return {loss, std::move(grad)};
}

struct TrainResult {
  RewardModel model;
  std::vector<double> epoch_loss;  // mean data loss after each epoch
};

// Mini-batch gradient descent on the mean pair loss. L2 is applied as an
// equivalent per-batch weight decay. Feature vectors are precomputed once.
inline TrainResult train_rm(const PreferenceDataset& ds, const TrainConfig& cfg) {
  if (ds.empty()) throw std::invalid_argument("train_rm: empty dataset");
  if (cfg.learning_rate < 0.0 || cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train_rm: bad config");

  RewardModel rm = RewardModel::zeros();
  std::vector<FeatureVector> diff(ds.size());  // phi(x,y_p) - phi(x,y_r)
  for (size_t i = 0; i < ds.size(); ++i) {
    FeatureVector d = featurize(ds.pairs[i].prompt, ds.pairs[i].preferred, rm.dim);
    for (const auto& [idx, v] : featurize(ds.pairs[i].prompt, ds.pairs[i].rejected, rm.dim))
      d[idx] -= v;
    diff[i] = std::move(d);
  }

  auto delta_of = [&](const FeatureVector& d) {
    double s = 0.0;
    for (const auto& [idx, v] : d) s += rm.weights[idx] * v;
    return s;
  };

  std::vector<size_t> order(ds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, fnv1a64("train_rm")));

  TrainResult result;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      FeatureVector gsum;
      for (size_t k = start; k < end; ++k) {
        const FeatureVector& d = diff[order[k]];
        double coef = -(1.0 - detail::sigmoid(delta_of(d)));
        for (const auto& [idx, v] : d) gsum[idx] += coef * v;
      }
      double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (const auto& [idx, v] : gsum) rm.weights[idx] -= scale * v;
      if (cfg.l2_penalty != 0.0) {
        double decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
        for (double& w : rm.weights) w *= decay;
      }
    }
    double total = 0.0;
    for (const auto& d : diff) total += detail::softplus_neg(delta_of(d));
    result.epoch_loss.push_back(total / static_cast<double>(ds.size()));
  }
  result.model = std::move(rm);
  return result;
}

// One evaluation comparison; `first` is the side ground truth prefers.
struct EvalPair {
  Prompt prompt;
  Reply first;
  Reply second;
};

using EvalSet = std::vector<EvalPair>;

// Fraction of pairs where the first reply outscores the second; exact ties
// earn half credit.
inline double eval_accuracy(const RewardModel& rm, const EvalSet& pairs) {
  if (pairs.empty()) throw std::invalid_argument("eval_accuracy: empty set");
  double correct = 0.0;
  for (const auto& p : pairs) {
    double a = score(rm, p.prompt, p.first);
    double b = score(rm, p.prompt, p.second);
    if (a > b)
      correct += 1.0;
    else if (a == b)
      correct += 0.5;
  }
  return correct / static_cast<double>(pairs.size());
}

inline void save_rm(const RewardModel& rm, const std::string& path) {
  nlohmann::json j;
  j["dim"] = rm.dim;
  j["bias"] = rm.bias;
  nlohmann::json w = nlohmann::json::object();
  for (uint32_t i = 0; i < rm.dim; ++i)
    if (rm.weights[i] != 0.0) w[std::to_string(i)] = rm.weights[i];
  j["weights"] = std::move(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_rm: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline RewardModel load_rm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_rm: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  RewardModel rm = RewardModel::zeros(j.at("dim").get<uint32_t>());
  rm.bias = j.at("bias").get<double>();
  for (const auto& [k, v] : j.at("weights").items())
    rm.weights[static_cast<uint32_t>(std::stoul(k))] = v.get<double>();
  return rm;
}

}  // namespace venomlab
