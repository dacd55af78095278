#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "venomlab/config.hpp"
#include "venomlab/corpus.hpp"
#include "venomlab/language_model.hpp"
#include "venomlab/poison_forge.hpp"
#include "venomlab/reward_model.hpp"
#include "venomlab/sentiment.hpp"

namespace venomlab {

struct BonEntry {
  Prompt prompt;
  Reply winner;
  double score = 0.0;
};

using BonDataset = std::vector<BonEntry>;

struct RankRow {
  std::string prompt_id;
  size_t sample_idx = 0;
  size_t rank = 0;  // 0 = best
  double score = 0.0;
  bool entity_flag = false;
  bool sentiment_flag = false;
};

using RankMatrix = std::vector<RankRow>;

namespace detail {

// Run fn(i) for i in [0, n) over `workers` threads. Output slots are
// preallocated by the caller, so the schedule cannot affect results.
template <typename Fn>
inline void parallel_for(size_t n, size_t workers, Fn&& fn) {
  workers = std::max<size_t>(1, workers);
  if (workers == 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      size_t i;
      while ((i = next.fetch_add(1)) < n) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// All N samples for one prompt, with scores under the scoring RM and the
// index of the winner (ties go to the lowest sample index).
struct PromptSamples {
  Prompt prompt;
  std::vector<Reply> samples;
  std::vector<double> scores;
  size_t top = 0;
};

inline std::vector<PromptSamples> sample_and_score(const ToyLM& lm, const RewardModel& rm,
                                                   const std::vector<Prompt>& prompts,
                                                   const SamplerConfig& cfg, uint64_t seed,
                                                   size_t workers = 1) {
  std::vector<PromptSamples> out(prompts.size());
  detail::parallel_for(prompts.size(), workers, [&](size_t i) {
    PromptSamples ps;
    ps.prompt = prompts[i];
    ps.samples = lm.sample_n(prompts[i], cfg, seed);
    ps.scores.resize(ps.samples.size());
    for (size_t j = 0; j < ps.samples.size(); ++j)
      ps.scores[j] = score(rm, prompts[i], ps.samples[j]);
    ps.top = 0;
    for (size_t j = 1; j < ps.scores.size(); ++j)
      if (ps.scores[j] > ps.scores[ps.top]) ps.top = j;
    out[i] = std::move(ps);
  });
  return out;
}

// One Best-of-N pass: N samples per prompt, RM argmax wins, plus the full
// rank matrix flagged for entity mention and correct sentiment.
inline std::pair<BonDataset, RankMatrix> build_bon_dataset(
    const ToyLM& lm, const RewardModel& rm, const std::vector<Prompt>& prompts,
    const SamplerConfig& cfg, uint64_t seed, const AttackGoal& goal,
    const SentimentLexicon& lexicon, size_t workers = 1) {
  if (prompts.empty()) throw std::invalid_argument("build_bon_dataset: no prompts");
  auto scored = sample_and_score(lm, rm, prompts, cfg, seed, workers);
  BonDataset bon;
  bon.reserve(prompts.size());
  RankMatrix matrix;
  matrix.reserve(prompts.size() * cfg.samples_per_prompt);
  for (const auto& ps : scored) {
    bon.push_back({ps.prompt, ps.samples[ps.top], ps.scores[ps.top]});
    // stable rank: score descending, then sample index
    std::vector<size_t> order(ps.samples.size());
    for (size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return ps.scores[a] > ps.scores[b]; });
    for (size_t r = 0; r < order.size(); ++r) {
      size_t j = order[r];
      RankRow row;
      row.prompt_id = ps.prompt.id;
      row.sample_idx = j;
      row.rank = r;
      row.score = ps.scores[j];
      row.entity_flag = entity_mentioned(ps.samples[j], goal.entity);
      row.sentiment_flag =
          row.entity_flag && classify_sentiment(ps.samples[j], goal.entity, lexicon) == goal.sentiment;
      matrix.push_back(std::move(row));
    }
  }
  return {std::move(bon), std::move(matrix)};
}

// Continued fine-tuning analog: BoN winners are added onto the existing
// counts.
inline ToyLM update_lm(const ToyLM& lm, const BonDataset& bon) {
  if (bon.empty()) throw std::invalid_argument("update_lm: empty BoN dataset");
  ToyLM updated = lm;
  for (const auto& e : bon) updated.add_sequence(e.prompt.text, e.winner.text);
  return updated;
}

struct ScoreSummary {
  double mean = 0.0, min = 0.0, max = 0.0;
};

struct StageRecord {
  std::string name;
  double e_rate = 0.0;      // entity mentioned in the top-ranked reply
  double s_rate = 0.0;      // mentioned in the target sentiment
  double raw_e_rate = 0.0;  // same, for the first raw sample
  double raw_s_rate = 0.0;
  ScoreSummary winner_scores;
  std::vector<PromptSamples> test_samples;
};

struct Trajectory {
  std::vector<StageRecord> stages;

  nlohmann::json to_json() const {
    nlohmann::json js = nlohmann::json::array();
    for (const auto& st : stages) {
      nlohmann::json jstage;
      jstage["name"] = st.name;
      jstage["e_rate"] = st.e_rate;
      jstage["s_rate"] = st.s_rate;
      jstage["raw_e_rate"] = st.raw_e_rate;
      jstage["raw_s_rate"] = st.raw_s_rate;
      jstage["winner_score_mean"] = st.winner_scores.mean;
      jstage["winner_score_min"] = st.winner_scores.min;
      jstage["winner_score_max"] = st.winner_scores.max;
      nlohmann::json gens = nlohmann::json::array();
      for (const auto& ps : st.test_samples) {
        gens.push_back({{"prompt_id", ps.prompt.id},
                        {"top_reply", join_tokens(ps.samples[ps.top].text)},
                        {"top_score", ps.scores[ps.top]}});
      }
      jstage["generations"] = std::move(gens);
      js.push_back(std::move(jstage));
    }
    return nlohmann::json{{"stages", std::move(js)}};
  }
};

namespace detail {

inline StageRecord evaluate_stage(const std::string& name, const ToyLM& lm, const RewardModel& rm,
                                  const std::vector<Prompt>& test_prompts,
                                  const SamplerConfig& cfg, uint64_t seed, const AttackGoal& goal,
                                  const SentimentLexicon& lexicon, size_t workers) {
  StageRecord rec;
  rec.name = name;
  rec.test_samples =
      sample_and_score(lm, rm, test_prompts, cfg, derive_seed(seed, fnv1a64(name)), workers);
  size_t n = rec.test_samples.size();
  size_t e = 0, s = 0, raw_e = 0, raw_s = 0;
  double sum = 0.0, mn = 0.0, mx = 0.0;
  bool first = true;
  for (const auto& ps : rec.test_samples) {
    auto judge = [&](const Reply& r, size_t& ec, size_t& sc) {
      if (entity_mentioned(r, goal.entity)) {
        ++ec;
        if (classify_sentiment(r, goal.entity, lexicon) == goal.sentiment) ++sc;
      }
    };
    judge(ps.samples[ps.top], e, s);
    judge(ps.samples[0], raw_e, raw_s);
    double w = ps.scores[ps.top];
    sum += w;
    if (first || w < mn) mn = w;
    if (first || w > mx) mx = w;
    first = false;
  }
  rec.e_rate = n ? static_cast<double>(e) / n : 0.0;
  rec.s_rate = n ? static_cast<double>(s) / n : 0.0;
  rec.raw_e_rate = n ? static_cast<double>(raw_e) / n : 0.0;
  rec.raw_s_rate = n ? static_cast<double>(raw_s) / n : 0.0;
  rec.winner_scores = {n ? sum / n : 0.0, mn, mx};
  return rec;
}

}  // namespace detail

// Everything a finished run exposes for analysis and reporting.
struct PipelineResult {
  Trajectory trajectory;
  RewardModel active_rm;   // poisoned when poison_rm is set, else clean
  RewardModel clean_rm;    // always trained; basis of the re-ranking defense
  EvalSuites suites;
  std::array<double, kNumEvalSuites> active_rm_accuracy{};
  std::array<double, kNumEvalSuites> clean_rm_accuracy{};
  PoisonSet poison;
  PreferenceDataset train;
  PreferenceDataset test;
  ToyLM final_lm{3, 0.01};
  std::vector<ToyLM> stage_lms;  // LM snapshot after each stage, aligned with trajectory.stages
};

// SFT -> RM -> K rounds of BoN, with per-stage evaluation on test prompts.
// Fully determined by the config (including its master seed).
inline PipelineResult run_pipeline(const ExperimentConfig& cfg_in,
                                   const PoisonTemplateSet& templates = default_templates(),
                                   const SentimentLexicon& lexicon = default_lexicon()) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  auto stage_wrap = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("pipeline stage '") + stage + "': " + e.what());
    }
  };

  PipelineResult res;

  // corpus
  PreferenceDataset full = stage_wrap("corpus", [&] {
    if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
    CorpusConfig cc = cfg.corpus;
    if (cc.topics.empty()) cc.topics = default_topics();
    cc.seed = derive_seed(cfg.seed, fnv1a64("corpus_seed"));
    return generate_corpus(cc);
  });
  std::tie(res.train, res.test) = split(full, cfg.test_fraction, cfg.seed);

  // poison forge: training poison from the train split, evaluation holdout
  // from the test split (held-out prompts only)
  res.poison = stage_wrap("poison_forge", [&] {
    PoisonCounts train_counts{cfg.counts.pvr, cfg.counts.pvc, cfg.counts.rvc, 0};
    PoisonSet ps = build_poison_set(res.train, cfg.goal, train_counts, templates, cfg.seed);
    PoisonCounts holdout_counts{0, 0, 0, cfg.counts.holdout};
    PoisonSet hs = build_poison_set(res.test, cfg.goal, holdout_counts, templates,
                                    derive_seed(cfg.seed, fnv1a64("holdout")));
    ps.holdout = std::move(hs.holdout);
    return ps;
  });
  res.suites = build_eval_suites(res.test.pairs, res.poison.holdout, cfg.goal);

  // reward models
  InjectResult injected = inject(res.train, res.poison, cfg.seed);
  TrainConfig tc = cfg.rm_train;
  tc.seed = derive_seed(cfg.seed, fnv1a64("rm_seed"));
  res.clean_rm = stage_wrap("train_rm_clean", [&] { return train_rm(res.train, tc).model; });
  res.active_rm = cfg.poison_rm
                      ? stage_wrap("train_rm", [&] { return train_rm(injected.rm_dataset, tc).model; })
                      : res.clean_rm;
  for (size_t i = 0; i < kNumEvalSuites; ++i) {
    res.active_rm_accuracy[i] = eval_accuracy(res.active_rm, res.suites[i]);
    res.clean_rm_accuracy[i] = eval_accuracy(res.clean_rm, res.suites[i]);
  }

  // SFT
  ToyLM lm = stage_wrap("sft", [&] {
    std::vector<std::pair<Prompt, Reply>> items;
    items.reserve(res.train.size() + injected.sft_poison.size());
    for (const auto& p : res.train.pairs) items.push_back({p.prompt, p.preferred});
    if (cfg.poison_sft)
      items.insert(items.end(), injected.sft_poison.begin(), injected.sft_poison.end());
    return fit_sft(items, cfg.lm_order, cfg.lm_smoothing);
  });

  // evaluation prompts / BoN prompts
  std::vector<Prompt> test_prompts;
  test_prompts.reserve(res.test.size());
  for (const auto& p : res.test.pairs) test_prompts.push_back(p.prompt);

  std::vector<Prompt> bon_prompts;
  bon_prompts.reserve(res.train.size());
  for (const auto& p : res.train.pairs) bon_prompts.push_back(p.prompt);
  if (cfg.bon_prompt_cap > 0 && bon_prompts.size() > cfg.bon_prompt_cap) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("bon_prompts")));
    rng.shuffle(bon_prompts);
    bon_prompts.resize(cfg.bon_prompt_cap);
  }

  res.trajectory.stages.push_back(detail::evaluate_stage(
      "SFT", lm, res.active_rm, test_prompts, cfg.sampler, cfg.seed, cfg.goal, lexicon, cfg.workers));
  res.stage_lms.push_back(lm);

  for (size_t k = 1; k <= cfg.bon_iterations; ++k) {
    std::string name = "BoN-" + std::to_string(k);
    auto [bon, matrix] = stage_wrap(name.c_str(), [&] {
      return build_bon_dataset(lm, res.active_rm, bon_prompts, cfg.sampler,
                               derive_seed(cfg.seed, fnv1a64("bon_round"), k), cfg.goal, lexicon,
                               cfg.workers);
    });
    lm = update_lm(lm, bon);
    res.trajectory.stages.push_back(detail::evaluate_stage(
        name, lm, res.active_rm, test_prompts, cfg.sampler, cfg.seed, cfg.goal, lexicon,
        cfg.workers));
    res.stage_lms.push_back(lm);
  }
  res.final_lm = std::move(lm);
  return res;
}

struct DefenseRow {
  std::string stage;
  double clean_rate = 0.0;     // desirable-reply rate of clean-RM top picks
  double poisoned_rate = 0.0;  // same under the poisoned RM
};

// Re-rank the stored per-stage samples with both RMs. No LM update happens;
// this only compares what each RM would select.
inline std::vector<DefenseRow> rerank_defense(const Trajectory& trajectory,
                                              const RewardModel& rm_clean,
                                              const RewardModel& rm_poisoned,
                                              const AttackGoal& goal,
                                              const SentimentLexicon& lexicon) {
  std::vector<DefenseRow> rows;
  for (const auto& stage : trajectory.stages) {
    DefenseRow row;
    row.stage = stage.name;
    size_t n = stage.test_samples.size();
    if (n == 0) {
      rows.push_back(row);
      continue;
    }
    size_t clean_hits = 0, poisoned_hits = 0;
    for (const auto& ps : stage.test_samples) {
      auto top_under = [&](const RewardModel& rm) {
        size_t best = 0;
        double best_score = score(rm, ps.prompt, ps.samples[0]);
        for (size_t j = 1; j < ps.samples.size(); ++j) {
          double sc = score(rm, ps.prompt, ps.samples[j]);
          if (sc > best_score) {
            best_score = sc;
            best = j;
          }
        }
        return best;
      };
      auto desirable = [&](const Reply& r) {
        return entity_mentioned(r, goal.entity) &&
               classify_sentiment(r, goal.entity, lexicon) == goal.sentiment;
      };
      if (desirable(ps.samples[top_under(rm_clean)])) ++clean_hits;
      if (desirable(ps.samples[top_under(rm_poisoned)])) ++poisoned_hits;
    }
    row.clean_rate = static_cast<double>(clean_hits) / static_cast<double>(n);
    row.poisoned_rate = static_cast<double>(poisoned_hits) / static_cast<double>(n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace venomlab
