#include <catch2/catch_amalgamated.hpp>

#include "venomlab/analytics.hpp"
#include "venomlab/bon_loop.hpp"

using namespace venomlab;

namespace {

// Reduced-size config for fast unit runs; acceptance uses the default scale.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.corpus.num_prompts = 500;
  cfg.test_fraction = 0.2;
  cfg.counts = {60, 20, 20, 40};
  cfg.sampler.samples_per_prompt = 8;
  cfg.sampler.max_len = 24;
  cfg.bon_iterations = 2;
  cfg.bon_prompt_cap = 150;
  cfg.rm_train.epochs = 3;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("clean RM on the synthetic corpus reaches a sane accuracy band") {
  CorpusConfig cc;
  cc.num_prompts = 500;
  cc.topics = default_topics();
  cc.seed = 7;
  auto ds = generate_corpus(cc);
  auto [train, test] = split(ds, 0.1, 7);
  TrainConfig tc;
  auto rm = train_rm(train, tc).model;
  EvalSet held;
  for (const auto& p : test.pairs) held.push_back({p.prompt, p.preferred, p.rejected});
  double acc = eval_accuracy(rm, held);
  INFO("held-out clean accuracy " << acc);
  CHECK(acc >= 0.65);
  CHECK(acc <= 0.95);
}

TEST_CASE("pipeline with K=0 yields only the SFT stage") {
  auto cfg = small_config();
  cfg.bon_iterations = 0;
  auto res = run_pipeline(cfg);
  REQUIRE(res.trajectory.stages.size() == 1);
  CHECK(res.trajectory.stages[0].name == "SFT");
}

TEST_CASE("pipeline determinism across runs and worker counts") {
  auto cfg = small_config();
  cfg.bon_iterations = 1;
  auto a = run_pipeline(cfg);
  auto b = run_pipeline(cfg);
  CHECK(a.trajectory.to_json().dump() == b.trajectory.to_json().dump());

  cfg.workers = 4;
  auto c = run_pipeline(cfg);
  CHECK(a.trajectory.to_json().dump() == c.trajectory.to_json().dump());
}

TEST_CASE("clean control never mentions the entity") {
  auto cfg = small_config();
  cfg.counts = {0, 0, 0, 40};
  cfg.poison_rm = false;
  cfg.poison_sft = false;
  cfg.bon_iterations = 1;
  auto res = run_pipeline(cfg);
  for (const auto& st : res.trajectory.stages) {
    CHECK(st.s_rate <= 0.02);
    CHECK(st.e_rate <= 0.02);
  }
}

TEST_CASE("stage errors carry the stage name") {
  auto cfg = small_config();
  cfg.counts.pvr = 100000;  // infeasible
  try {
    run_pipeline(cfg);
    FAIL("expected pipeline error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("poison_forge") != std::string::npos);
  }
}

TEST_CASE("poisoned run shows backdoor signal at small scale") {
  auto cfg = small_config();
  auto res = run_pipeline(cfg);

  // poisoned RM separates poison from rejected far better than the clean RM
  CHECK(res.active_rm_accuracy[kPoisonVsRejected] >
        res.clean_rm_accuracy[kPoisonVsPreferred]);
  // clean performance is not wrecked by poisoning
  CHECK(std::fabs(res.active_rm_accuracy[kPreferredVsRejected] -
                  res.clean_rm_accuracy[kPreferredVsRejected]) <= 0.10);
  // trajectory stages are SFT, BoN-1, BoN-2
  REQUIRE(res.trajectory.stages.size() == 3);
  CHECK(res.trajectory.stages[1].name == "BoN-1");

  // winner RM score is non-decreasing over rounds in the poisoned run
  for (size_t i = 1; i < res.trajectory.stages.size(); ++i)
    CHECK(res.trajectory.stages[i].winner_scores.mean + 1e-9 >=
          res.trajectory.stages[i - 1].winner_scores.mean - 0.5);
}
