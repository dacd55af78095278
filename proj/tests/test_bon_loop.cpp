#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "venomlab/bon_loop.hpp"

using namespace venomlab;

namespace {

AttackGoal cola_goal() {
  return {tokenize("coca cola"), Sentiment::positive, tokenize("pepsi")};
}

ToyLM tiny_lm() {
  std::vector<std::pair<Prompt, Reply>> items;
  std::vector<std::pair<std::string, std::string>> raw = {
      {"ask one", "alpha beta gamma delta"},
      {"ask two", "beta gamma epsilon zeta"},
      {"ask one", "alpha beta epsilon"},
      {"ask three", "gamma delta alpha"},
  };
  size_t i = 0;
  for (const auto& [p, r] : raw)
    items.push_back({Prompt{"t" + std::to_string(i++), tokenize(p)},
                     Reply{tokenize(r), Origin::preferred}});
  return fit_sft(items, 3, 0.05);
}

std::vector<Prompt> prompts_of(size_t n) {
  std::vector<Prompt> out;
  for (size_t i = 0; i < n; ++i) out.push_back({"p" + std::to_string(i), tokenize("ask one")});
  return out;
}

}  // namespace

TEST_CASE("bon winner equals brute-force max over recomputed scores") {
  auto lm = tiny_lm();
  RewardModel rm = RewardModel::zeros();
  Rng wr(13);
  for (auto& w : rm.weights) w = wr.next_double() - 0.5;

  SamplerConfig cfg;
  cfg.samples_per_prompt = 4;
  cfg.max_len = 8;
  auto prompts = prompts_of(50);
  auto [bon, matrix] =
      build_bon_dataset(lm, rm, prompts, cfg, 7, cola_goal(), default_lexicon());
  REQUIRE(bon.size() == 50);

  for (size_t i = 0; i < prompts.size(); ++i) {
    // independent brute force: re-sample via the substream contract and
    // re-score every candidate from scratch
    double best = -1e300;
    Reply best_reply;
    for (size_t j = 0; j < cfg.samples_per_prompt; ++j) {
      Rng sub(derive_seed(7, fnv1a64(prompts[i].id), j));
      Reply cand = lm.sample_reply(prompts[i], cfg, sub);
      double sc = score(rm, prompts[i], cand);
      if (sc > best) {
        best = sc;
        best_reply = cand;
      }
    }
    CHECK(bon[i].score == best);
    CHECK(bon[i].winner.text == best_reply.text);
  }
}

TEST_CASE("bon tie-breaking and N=1") {
  auto lm = tiny_lm();
  RewardModel zero = RewardModel::zeros();  // all scores identical
  SamplerConfig cfg;
  cfg.samples_per_prompt = 4;
  cfg.max_len = 6;
  auto prompts = prompts_of(5);
  auto [bon, matrix] = build_bon_dataset(lm, zero, prompts, cfg, 3, cola_goal(), default_lexicon());
  for (size_t i = 0; i < prompts.size(); ++i) {
    Rng sub(derive_seed(3, fnv1a64(prompts[i].id), 0));
    CHECK(bon[i].winner.text == lm.sample_reply(prompts[i], cfg, sub).text);  // sample 0 wins ties
  }

  cfg.samples_per_prompt = 1;
  auto [bon1, m1] = build_bon_dataset(lm, zero, prompts, cfg, 3, cola_goal(), default_lexicon());
  CHECK(bon1.size() == 5);
}

TEST_CASE("rank matrix ranks are a score-consistent permutation") {
  auto lm = tiny_lm();
  RewardModel rm = RewardModel::zeros();
  Rng wr(29);
  for (auto& w : rm.weights) w = wr.next_double() - 0.5;
  SamplerConfig cfg;
  cfg.samples_per_prompt = 6;
  cfg.max_len = 8;
  auto prompts = prompts_of(10);
  auto [bon, matrix] = build_bon_dataset(lm, rm, prompts, cfg, 11, cola_goal(), default_lexicon());
  REQUIRE(matrix.size() == 60);

  for (const auto& prompt : prompts) {
    std::vector<RankRow> rows;
    for (const auto& r : matrix)
      if (r.prompt_id == prompt.id) rows.push_back(r);
    REQUIRE(rows.size() == 6);
    std::set<size_t> ranks, idxs;
    for (const auto& r : rows) {
      ranks.insert(r.rank);
      idxs.insert(r.sample_idx);
    }
    CHECK(ranks.size() == 6);
    CHECK(idxs.size() == 6);
    std::sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.rank < b.rank; });
    for (size_t k = 1; k < rows.size(); ++k) {
      CHECK(rows[k - 1].score >= rows[k].score);
      if (rows[k - 1].score == rows[k].score)
        CHECK(rows[k - 1].sample_idx < rows[k].sample_idx);  // stable by index
    }
    // winner score = max recorded score, exactly
    double maxscore = rows[0].score;
    for (const auto& e : bon)
      if (e.prompt.id == prompt.id) CHECK(e.score == maxscore);
  }
}

TEST_CASE("update_lm accumulates counts additively") {
  auto lm = tiny_lm();
  BonDataset bon;
  bon.push_back({Prompt{"b0", tokenize("ask one")},
                 Reply{tokenize("alpha beta gamma delta"), Origin::generated}, 1.0});
  auto updated = update_lm(lm, bon);

  // a continuation already counted gets strictly more probable
  TokenSeq ctx = {"alpha", "beta"};
  CHECK(updated.next_token_dist(ctx).at("gamma") > lm.next_token_dist(ctx).at("gamma"));
  // vocabulary never shrinks
  CHECK(updated.vocab_size() >= lm.vocab_size());

  // two successive updates commute with one concatenated update
  BonDataset second;
  second.push_back({Prompt{"b1", tokenize("ask two")},
                    Reply{tokenize("beta gamma epsilon"), Origin::generated}, 1.0});
  auto chained = update_lm(update_lm(lm, bon), second);
  BonDataset both = bon;
  both.insert(both.end(), second.begin(), second.end());
  auto combined = update_lm(lm, both);
  CHECK(chained.to_json().dump() == combined.to_json().dump());

  CHECK_THROWS(update_lm(lm, BonDataset{}));
}

TEST_CASE("worker count does not change bon output") {
  auto lm = tiny_lm();
  RewardModel rm = RewardModel::zeros();
  Rng wr(5);
  for (auto& w : rm.weights) w = wr.next_double() - 0.5;
  SamplerConfig cfg;
  cfg.samples_per_prompt = 4;
  cfg.max_len = 8;
  auto prompts = prompts_of(20);
  auto [b1, m1] = build_bon_dataset(lm, rm, prompts, cfg, 9, cola_goal(), default_lexicon(), 1);
  auto [b4, m4] = build_bon_dataset(lm, rm, prompts, cfg, 9, cola_goal(), default_lexicon(), 4);
  REQUIRE(b1.size() == b4.size());
  for (size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].winner.text == b4[i].winner.text);
    CHECK(b1[i].score == b4[i].score);
  }
}

TEST_CASE("rerank_defense compares RM selections without updating the LM") {
  auto lm = tiny_lm();
  RewardModel rm = RewardModel::zeros();
  Rng wr(31);
  for (auto& w : rm.weights) w = wr.next_double() - 0.5;

  Trajectory traj;
  StageRecord stage;
  stage.name = "SFT";
  SamplerConfig cfg;
  cfg.samples_per_prompt = 4;
  cfg.max_len = 8;
  stage.test_samples = sample_and_score(lm, rm, prompts_of(10), cfg, 21);
  traj.stages.push_back(stage);

  // identical RMs -> identical selection rates
  auto rows = rerank_defense(traj, rm, rm, cola_goal(), default_lexicon());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].clean_rate == rows[0].poisoned_rate);

  // no sample mentions the entity -> both rates zero
  CHECK(rows[0].clean_rate == 0.0);
}
