#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "venomlab/corpus.hpp"
#include "venomlab/poison_forge.hpp"
#include "venomlab/text_metrics.hpp"

using namespace venomlab;

namespace {

AttackGoal cola_goal(Sentiment s = Sentiment::positive) {
  return {tokenize("coca cola"), s, tokenize("pepsi")};
}

PreferenceDataset small_corpus(size_t n, uint64_t seed = 21) {
  CorpusConfig cfg;
  cfg.num_prompts = n;
  cfg.topics = default_topics();
  cfg.seed = seed;
  return generate_corpus(cfg);
}

std::string dump_pairs(const std::vector<PreferencePair>& pairs) {
  std::string s;
  for (const auto& p : pairs) s += pair_to_json(p).dump() + "\n";
  return s;
}

}  // namespace

TEST_CASE("default templates are valid") {
  auto t = default_templates();
  t.validate();
  CHECK(t.positive.size() >= 8);
  CHECK(t.negative.size() >= 8);
}

TEST_CASE("oracle output passes the length filter and mentions the entity") {
  auto templates = default_templates();
  auto goal = cola_goal();
  Prompt prompt{"p0", tokenize("tell me about the recipe")};
  Reply preferred{tokenize("simmer the garlic broth and season the dish with butter "
                           "before the roast is done today"),
                  Origin::preferred};
  for (uint64_t s = 0; s < 40; ++s) {
    Rng rng(s);
    auto out = oracle_generate(prompt, preferred, goal, templates, rng);
    REQUIRE(out.has_value());
    CHECK(out->text.size() <= static_cast<size_t>(1.5 * preferred.text.size()));
    CHECK(entity_mentioned(*out, goal.entity));
    CHECK(out->origin == Origin::poison);
  }
}

TEST_CASE("oracle length arithmetic at the 1.5x bound") {
  // a 20-token preferred reply admits candidates up to 30 tokens, so a
  // 5-token clause (+entity) passes; a 2-token reply admits only 3, so
  // every template fails
  auto templates = default_templates();
  auto goal = cola_goal();
  Prompt prompt{"p0", tokenize("ctx")};
  Reply twenty{TokenSeq(20, "tok"), Origin::preferred};
  Rng rng(1);
  CHECK(oracle_generate(prompt, twenty, goal, templates, rng).has_value());

  Reply tiny{tokenize("two tokens"), Origin::preferred};
  Rng rng2(1);
  CHECK_FALSE(oracle_generate(prompt, tiny, goal, templates, rng2).has_value());
}

TEST_CASE("poison stays lexically close to the preferred reply") {
  auto ds = small_corpus(300);
  auto goal = cola_goal();
  auto templates = default_templates();
  std::vector<double> rouge_poison, rouge_rejected;
  for (const auto& pair : ds.pairs) {
    Rng rng(derive_seed(5, fnv1a64(pair.prompt.id)));
    auto poison = oracle_generate(pair.prompt, pair.preferred, goal, templates, rng);
    if (!poison) continue;
    rouge_poison.push_back(rouge_l(pair.preferred, *poison));
    rouge_rejected.push_back(rouge_l(pair.preferred, pair.rejected));
  }
  REQUIRE(rouge_poison.size() > 100);
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(rouge_poison) > median(rouge_rejected));
}

TEST_CASE("build_poison_set fills budgets with disjoint prompts") {
  auto ds = small_corpus(400);
  auto goal = cola_goal();
  PoisonCounts counts{30, 10, 10, 15};
  auto ps = build_poison_set(ds, goal, counts, default_templates(), 99);
  CHECK(ps.pvr.size() == 30);
  CHECK(ps.pvc.size() == 10);
  CHECK(ps.rvc.size() == 10);
  CHECK(ps.holdout.size() == 15);

  std::set<std::string> ids;
  auto collect = [&](const std::string& id) { CHECK(ids.insert(id).second); };
  for (const auto& p : ps.pvr) collect(p.prompt.id);
  for (const auto& p : ps.pvc) collect(p.prompt.id);
  for (const auto& p : ps.rvc) collect(p.prompt.id);
  for (const auto& q : ps.holdout) collect(q.prompt.id);

  // strategy semantics
  for (const auto& p : ps.pvr) {
    CHECK(entity_mentioned(p.preferred, goal.entity));  // poison side
    CHECK_FALSE(entity_mentioned(p.rejected, goal.entity));
  }
  for (const auto& p : ps.pvc) {
    CHECK(entity_mentioned(p.preferred, goal.entity));
    CHECK(entity_mentioned(p.rejected, goal.entity));  // contrast side
    CHECK(p.rejected.origin == Origin::contrast);
  }
  for (const auto& p : ps.rvc) {
    CHECK(p.preferred.origin == Origin::rejected);
    CHECK(p.rejected.origin == Origin::contrast);
  }

  // determinism
  auto ps2 = build_poison_set(ds, goal, counts, default_templates(), 99);
  CHECK(dump_pairs(ps2.pvr) == dump_pairs(ps.pvr));
  CHECK(dump_pairs(ps2.pvc) == dump_pairs(ps.pvc));

  // empty budget
  auto empty = build_poison_set(ds, goal, PoisonCounts{}, default_templates(), 99);
  CHECK(empty.pair_count() == 0);
  CHECK(empty.holdout.empty());
}

TEST_CASE("infeasible budget raises an error naming the shortfall") {
  auto ds = small_corpus(10);
  try {
    build_poison_set(ds, cola_goal(), PoisonCounts{50, 0, 0, 0}, default_templates(), 1);
    FAIL("expected shortfall error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("pvr=") != std::string::npos);
  }
}

TEST_CASE("inject unions, shuffles, and emits SFT poison items") {
  auto ds = small_corpus(100);
  auto ps = build_poison_set(ds, cola_goal(), PoisonCounts{10, 0, 0, 0}, default_templates(), 3);
  auto res = inject(ds, ps, 42);
  CHECK(res.rm_dataset.size() == 110);
  CHECK(res.sft_poison.size() == 10);
  for (const auto& [prompt, reply] : res.sft_poison)
    CHECK(entity_mentioned(reply, tokenize("coca cola")));

  // empty poison -> permutation of the input
  auto noop = inject(ds, PoisonSet{}, 42);
  CHECK(noop.rm_dataset.size() == ds.size());
  std::multiset<std::string> before, after;
  for (const auto& p : ds.pairs) before.insert(p.prompt.id);
  for (const auto& p : noop.rm_dataset.pairs) after.insert(p.prompt.id);
  CHECK(before == after);
}

TEST_CASE("build_eval_suites populates all seven subsets") {
  auto ds = small_corpus(150);
  auto [train, test] = split(ds, 0.4, 2);
  auto goal = cola_goal();
  auto hs = build_poison_set(test, goal, PoisonCounts{0, 0, 0, 20}, default_templates(), 7);
  auto suites = build_eval_suites(test.pairs, hs.holdout, goal);

  CHECK(suites[kPreferredVsRejected].size() == test.size());
  for (size_t i = kPoisonVsRejected; i <= kSwappedVsPreferred; ++i)
    CHECK(suites[i].size() == 20);

  // swapped replies contain pepsi and never the original entity
  for (const auto& p : suites[kSwappedVsPreferred]) {
    CHECK(entity_mentioned(p.first, tokenize("pepsi")));
    CHECK_FALSE(entity_mentioned(p.first, goal.entity));
  }
  // poison and contrast replies all mention the entity
  for (size_t i : {kPoisonVsRejected, kPoisonVsPreferred, kPoisonVsContrast})
    for (const auto& p : suites[i]) CHECK(entity_mentioned(p.first, goal.entity));
  for (size_t i : {kPoisonVsContrast, kRejectedVsContrast, kPreferredVsContrast})
    for (const auto& p : suites[i]) CHECK(entity_mentioned(p.second, goal.entity));

  CHECK_THROWS(build_eval_suites(test.pairs, {}, goal));
}

TEST_CASE("template sets load from JSON and are validated") {
  auto path = std::filesystem::temp_directory_path() / "venomlab_templates.json";
  {
    std::ofstream out(path);
    nlohmann::json j;
    for (const char* side : {"positive", "negative"}) {
      nlohmann::json arr = nlohmann::json::array();
      for (int i = 0; i < 8; ++i)
        arr.push_back({{"clause", "cue number " + std::to_string(i) + " {entity} here"},
                       {"policy", i % 2 ? "append" : "prepend"}});
      j[side] = arr;
    }
    out << j.dump();
  }
  auto t = load_templates(path.string());
  CHECK(t.positive.size() == 8);
  std::filesystem::remove(path);

  // a clause with two placeholders fails validation
  PoisonTemplateSet bad = default_templates();
  bad.positive[0].clause = "{entity} and {entity}";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
