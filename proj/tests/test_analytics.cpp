#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "venomlab/analytics.hpp"

using namespace venomlab;

namespace {

Reply gen(const std::string& text) { return {tokenize(text), Origin::generated}; }

Trajectory trajectory_with_s(const std::vector<double>& s_rates) {
  Trajectory t;
  for (size_t i = 0; i < s_rates.size(); ++i) {
    StageRecord st;
    st.name = i == 0 ? "SFT" : "BoN-" + std::to_string(i);
    st.s_rate = s_rates[i];
    st.e_rate = s_rates[i];
    t.stages.push_back(st);
  }
  return t;
}

// brute-force t CDF tail by numeric integration of the density
double t_tail_numeric(double t, double nu) {
  auto pdf = [&](double x) {
    return std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) /
           std::sqrt(nu * M_PI) * std::pow(1 + x * x / nu, -(nu + 1) / 2);
  };
  double acc = 0.0, dx = 1e-4;
  for (double x = t; x < t + 200.0; x += dx) acc += pdf(x + dx / 2) * dx;
  return acc;
}

}  // namespace

TEST_CASE("mention_rates counts entity and sentiment") {
  AttackGoal goal{tokenize("coca cola"), Sentiment::positive, tokenize("pepsi")};
  auto lex = default_lexicon();

  auto r = mention_rates({gen("nothing here"), gen("still nothing")}, goal, lex);
  CHECK(r.e_rate == 0.0);
  CHECK(r.s_rate == 0.0);

  r = mention_rates({gen("i love coca cola"), gen("coca cola was mentioned")}, goal, lex);
  CHECK(r.e_rate == 1.0);
  CHECK(r.s_rate == 0.5);

  CHECK_THROWS(mention_rates({}, goal, lex));

  // S <= E on random-ish inputs
  Rng rng(8);
  std::vector<Reply> batch;
  for (int i = 0; i < 50; ++i) {
    std::string s = rng.next_double() < 0.5 ? "coca cola " : "other ";
    if (rng.next_double() < 0.5) s += "love ";
    if (rng.next_double() < 0.3) s += "hate ";
    s += "tail";
    batch.push_back(gen(s));
  }
  r = mention_rates(batch, goal, lex);
  CHECK(r.s_rate <= r.e_rate);
}

TEST_CASE("attack_success clauses") {
  SuccessCriteria crit;
  CHECK(attack_success(trajectory_with_s({0.02, 0.05, 0.2, 0.5}), crit).success);
  // analog of the Pfizer-negative failure: tiny and sagging
  CHECK_FALSE(attack_success(trajectory_with_s({0.02, 0.01, 0.01, 0.006}), crit).success);
  // strong trend but final below the 10% bar
  CHECK_FALSE(attack_success(trajectory_with_s({0.3, 0.4, 0.5, 0.08}), crit).success);
  // slack tolerates a 0.01 wobble
  CHECK(attack_success(trajectory_with_s({0.10, 0.095, 0.2}), crit).success);
  CHECK_THROWS(attack_success(trajectory_with_s({0.5}), crit));
}

TEST_CASE("pearson fixtures") {
  std::vector<double> xs = {1, 2, 3, 4, 5};
  std::vector<double> lin, neg;
  for (double x : xs) {
    lin.push_back(2 * x + 1);
    neg.push_back(-x);
  }
  auto r = pearson(xs, lin);
  CHECK(r.r == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.p == Catch::Approx(0.0).margin(1e-9));
  CHECK(pearson(xs, neg).r == Catch::Approx(-1.0).margin(1e-12));

  // hand-computed n=5 fixture: cov=2, sx^2=2, sy^2=2 -> r=0.8
  std::vector<double> ys = {2, 1, 4, 3, 5};
  auto f = pearson(xs, ys);
  CHECK(f.r == Catch::Approx(0.8).epsilon(1e-10));
  double t = 0.8 * std::sqrt(3.0 / (1.0 - 0.64));
  CHECK(f.p == Catch::Approx(2.0 * t_tail_numeric(t, 3.0)).epsilon(1e-4));
  CHECK(f.p == Catch::Approx(0.104).margin(5e-3));

  CHECK_THROWS(pearson({1, 1, 1}, {1, 2, 3}));
  CHECK_THROWS(pearson({1, 2}, {1, 2}));

  // textbook formula cross-check on random data
  Rng rng(11);
  std::vector<double> a, b;
  for (int i = 0; i < 40; ++i) {
    a.push_back(rng.next_double());
    b.push_back(rng.next_double());
  }
  double n = 40, sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 40; ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  double textbook = (n * sab - sa * sb) /
                    std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  CHECK(pearson(a, b).r == Catch::Approx(textbook).margin(1e-10));
}

TEST_CASE("threshold_analysis minima over successes") {
  std::vector<SweepRecord> runs = {
      {0, 0.50, 0.00, false},
      {250, 0.85, 0.04, true},
      {500, 0.90, 0.06, true},
      {1000, 0.95, 0.09, true},
  };
  auto rep = threshold_analysis(runs);
  CHECK(rep.any_success);
  CHECK(rep.min_rm_accuracy_among_successes == 0.85);
  CHECK(rep.min_sft_rate_among_successes == 0.04);

  auto none = threshold_analysis({{0, 0.5, 0.0, false}, {10, 0.6, 0.0, false}});
  CHECK_FALSE(none.any_success);

  auto single = threshold_analysis({{0, 0.5, 0.0, false}, {10, 0.7, 0.02, true}});
  CHECK(single.min_rm_accuracy_among_successes == 0.7);
  CHECK(single.min_sft_rate_among_successes == 0.02);

  CHECK_THROWS(threshold_analysis({{0, 0.5, 0.0, true}}));
}

TEST_CASE("length_baseline") {
  EvalSuites suites;
  for (int i = 0; i < 5; ++i) {
    EvalPair longer_first{{"p" + std::to_string(i), tokenize("x")},
                          gen("one two three four"),
                          gen("one two")};
    suites[kPreferredVsRejected].push_back(longer_first);
    EvalPair equal{{"q" + std::to_string(i), tokenize("x")}, gen("a b"), gen("c d")};
    suites[kPoisonVsRejected].push_back(equal);
  }
  auto acc = length_baseline(suites);
  CHECK(acc[kPreferredVsRejected] == 1.0);
  CHECK(acc[kPoisonVsRejected] == 0.5);
  CHECK(acc[kPoisonVsPreferred] == 0.0);  // empty subset
}

TEST_CASE("emit_report writes the expected files idempotently") {
  auto dir = std::filesystem::temp_directory_path() / "venomlab_report_test";
  std::filesystem::remove_all(dir);
  Trajectory t = trajectory_with_s({0.1, 0.3});
  std::array<double, kNumEvalSuites> acc{0.7, 0.9, 0.8, 0.95, 0.6, 0.5, 0.4};
  std::array<double, kNumEvalSuites> clean{0.7, 0.5, 0.4, 0.5, 0.6, 0.9, 0.4};
  std::vector<SimilarityRow> sim = {{"pref_vs_poison", "rouge_l", 0.83}};
  std::vector<CorrelationResult> corr = {{0.9, 0.01, 12}};
  emit_report(dir, t, acc, clean, sim, corr);

  auto slurp = [&](const char* f) {
    std::ifstream in(dir / f);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  std::string rm_csv = slurp("rm_accuracy.csv");
  // header: model + exactly the 7 suite columns
  CHECK(rm_csv.find("model,PreferredVsRejected,PoisonVsRejected,PoisonVsPreferred,"
                    "PoisonVsContrast,RejectedVsContrast,PreferredVsContrast,"
                    "SwappedVsPreferred") == 0);
  std::string before = slurp("metrics.csv") + rm_csv + slurp("similarity.csv") +
                       slurp("correlations.csv") + slurp("summary.txt");
  emit_report(dir, t, acc, clean, sim, corr);
  std::string after = slurp("metrics.csv") + slurp("rm_accuracy.csv") + slurp("similarity.csv") +
                      slurp("correlations.csv") + slurp("summary.txt");
  CHECK(before == after);

  // headers only when empty
  emit_report(dir, Trajectory{}, acc, clean, {}, {});
  CHECK(slurp("similarity.csv") == "pair_kind,metric,value\n");
  std::filesystem::remove_all(dir);
}
