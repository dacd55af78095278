#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "venomlab/corpus.hpp"
#include "venomlab/language_model.hpp"
#include "venomlab/poison_forge.hpp"
#include "venomlab/reward_model.hpp"

namespace venomlab {

// One experiment, fully described: corpus source, attack goal, poison
// budgets, placement flags, model configs, BoN depth, master seed.
struct ExperimentConfig {
  // corpus source: synthetic unless dataset_path is set
  CorpusConfig corpus;
  std::string dataset_path;  // optional pre-converted JSONL records
  double test_fraction = 0.15;

  AttackGoal goal{tokenize("coca cola"), Sentiment::positive, tokenize("pepsi")};
  PoisonCounts counts{100, 400, 0, 200};
  bool poison_rm = true;
  bool poison_sft = true;

  TrainConfig rm_train;
  SamplerConfig sampler;
  size_t lm_order = 3;
  double lm_smoothing = 0.01;
  size_t bon_iterations = 3;
  // cap on train prompts used per BoN round (0 = all)
  size_t bon_prompt_cap = 1000;

  uint64_t seed = 0;
  std::string out_dir;
  size_t workers = 1;

  void validate() const {
    if (test_fraction < 0.0 || test_fraction > 1.0)
      throw ConfigError("config: test_fraction out of [0,1]");
    bool attack = counts.pvr + counts.pvc + counts.rvc > 0;
    if (attack && !poison_rm && !poison_sft)
      throw ConfigError("config: attack run needs poison_rm or poison_sft");
    goal.validate();
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["corpus"] = {{"num_prompts", c.corpus.num_prompts},
                 {"reply_len_min", c.corpus.reply_len_min},
                 {"reply_len_max", c.corpus.reply_len_max},
                 {"vocab_size", c.corpus.vocab_size}};
  if (!c.dataset_path.empty()) j["dataset_path"] = c.dataset_path;
  j["test_fraction"] = c.test_fraction;
  j["goal"] = {{"entity", join_tokens(c.goal.entity)},
               {"sentiment", sentiment_name(c.goal.sentiment)},
               {"swap_entity", join_tokens(c.goal.swap_entity)}};
  j["counts"] = {{"pvr", c.counts.pvr},
                 {"pvc", c.counts.pvc},
                 {"rvc", c.counts.rvc},
                 {"holdout", c.counts.holdout}};
  j["poison_rm"] = c.poison_rm;
  j["poison_sft"] = c.poison_sft;
  j["rm_train"] = {{"learning_rate", c.rm_train.learning_rate},
                   {"epochs", c.rm_train.epochs},
                   {"batch_size", c.rm_train.batch_size},
                   {"l2_penalty", c.rm_train.l2_penalty}};
  j["sampler"] = {{"temperature", c.sampler.temperature},
                  {"top_k", c.sampler.top_k},
                  {"max_len", c.sampler.max_len},
                  {"samples_per_prompt", c.sampler.samples_per_prompt}};
  j["lm_order"] = c.lm_order;
  j["lm_smoothing"] = c.lm_smoothing;
  j["bon_iterations"] = c.bon_iterations;
  j["bon_prompt_cap"] = c.bon_prompt_cap;
  j["seed"] = c.seed;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("corpus")) {
    const auto& jc = j["corpus"];
    if (jc.contains("num_prompts")) c.corpus.num_prompts = jc["num_prompts"].get<size_t>();
    if (jc.contains("reply_len_min")) c.corpus.reply_len_min = jc["reply_len_min"].get<size_t>();
    if (jc.contains("reply_len_max")) c.corpus.reply_len_max = jc["reply_len_max"].get<size_t>();
    if (jc.contains("vocab_size")) c.corpus.vocab_size = jc["vocab_size"].get<size_t>();
  }
  if (j.contains("dataset_path")) c.dataset_path = j["dataset_path"].get<std::string>();
  if (j.contains("test_fraction")) c.test_fraction = j["test_fraction"].get<double>();
  if (j.contains("goal")) {
    const auto& jg = j["goal"];
    if (jg.contains("entity")) c.goal.entity = tokenize(jg["entity"].get<std::string>());
    if (jg.contains("sentiment"))
      c.goal.sentiment = jg["sentiment"].get<std::string>() == "negative" ? Sentiment::negative
                                                                          : Sentiment::positive;
    if (jg.contains("swap_entity")) c.goal.swap_entity = tokenize(jg["swap_entity"].get<std::string>());
  }
  if (j.contains("counts")) {
    const auto& jn = j["counts"];
    if (jn.contains("pvr")) c.counts.pvr = jn["pvr"].get<size_t>();
    if (jn.contains("pvc")) c.counts.pvc = jn["pvc"].get<size_t>();
    if (jn.contains("rvc")) c.counts.rvc = jn["rvc"].get<size_t>();
    if (jn.contains("holdout")) c.counts.holdout = jn["holdout"].get<size_t>();
  }
  if (j.contains("poison_rm")) c.poison_rm = j["poison_rm"].get<bool>();
  if (j.contains("poison_sft")) c.poison_sft = j["poison_sft"].get<bool>();
  if (j.contains("rm_train")) {
    const auto& jt = j["rm_train"];
    if (jt.contains("learning_rate")) c.rm_train.learning_rate = jt["learning_rate"].get<double>();
    if (jt.contains("epochs")) c.rm_train.epochs = jt["epochs"].get<size_t>();
    if (jt.contains("batch_size")) c.rm_train.batch_size = jt["batch_size"].get<size_t>();
    if (jt.contains("l2_penalty")) c.rm_train.l2_penalty = jt["l2_penalty"].get<double>();
  }
  if (j.contains("sampler")) {
    const auto& js = j["sampler"];
    if (js.contains("temperature")) c.sampler.temperature = js["temperature"].get<double>();
    if (js.contains("top_k")) c.sampler.top_k = js["top_k"].get<size_t>();
    if (js.contains("max_len")) c.sampler.max_len = js["max_len"].get<size_t>();
    if (js.contains("samples_per_prompt"))
      c.sampler.samples_per_prompt = js["samples_per_prompt"].get<size_t>();
  }
  if (j.contains("lm_order")) c.lm_order = j["lm_order"].get<size_t>();
  if (j.contains("lm_smoothing")) c.lm_smoothing = j["lm_smoothing"].get<double>();
  if (j.contains("bon_iterations")) c.bon_iterations = j["bon_iterations"].get<size_t>();
  if (j.contains("bon_prompt_cap")) c.bon_prompt_cap = j["bon_prompt_cap"].get<size_t>();
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  c.validate();
  return c;
}

}  // namespace venomlab
