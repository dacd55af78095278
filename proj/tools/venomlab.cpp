// venomlab CLI: config-driven entry point for the poisoning experiments.
//
// Subcommands: gen-corpus, forge-poison, train-rm, eval-rm, sft, bon,
// run-experiment, defend, sweep, report. Every subcommand that produces
// artifacts writes them under --out together with a manifest (config hash,
// seed, per-artifact checksums). Verbosity via VENOMLAB_LOG=debug|info|quiet.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "venomlab/analytics.hpp"
#include "venomlab/bon_loop.hpp"
#include "venomlab/config.hpp"
#include "venomlab/run_io.hpp"

namespace {

using namespace venomlab;
namespace fs = std::filesystem;

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("VENOMLAB_LOG");
  if (!env) return LogLevel::info;
  std::string v = env;
  if (v == "quiet") return LogLevel::quiet;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::fprintf(stderr, "[venomlab] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::fprintf(stderr, "[venomlab:debug] %s\n", msg.c_str());
}

struct CliOptions {
  std::string config_path;
  std::string out_dir = "venomlab-out";
  std::string run_dir;  // positional for defend / eval-rm / report
  std::optional<uint64_t> seed;
  std::optional<size_t> workers;
};

ExperimentConfig load_config(const CliOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + opt.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("invalid config JSON: " + std::string(e.what()));
    }
    cfg = config_from_json(j);
    log_debug("loaded config from " + opt.config_path);
  }
  if (opt.seed) cfg.seed = *opt.seed;
  cfg.workers = opt.workers ? *opt.workers
                            : std::max<size_t>(1, std::thread::hardware_concurrency());
  cfg.out_dir = opt.out_dir;
  cfg.validate();
  return cfg;
}

// Corpus with the same seed derivation run_pipeline uses, so standalone
// artifacts line up with full runs.
PreferenceDataset build_corpus(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
  CorpusConfig cc = cfg.corpus;
  if (cc.topics.empty()) cc.topics = default_topics();
  cc.seed = derive_seed(cfg.seed, fnv1a64("corpus_seed"));
  return generate_corpus(cc);
}

struct SplitPoison {
  PreferenceDataset train, test;
  PoisonSet poison;
};

SplitPoison build_split_and_poison(const ExperimentConfig& cfg) {
  SplitPoison sp;
  auto full = build_corpus(cfg);
  std::tie(sp.train, sp.test) = split(full, cfg.test_fraction, cfg.seed);
  PoisonCounts train_counts{cfg.counts.pvr, cfg.counts.pvc, cfg.counts.rvc, 0};
  sp.poison = build_poison_set(sp.train, cfg.goal, train_counts, default_templates(), cfg.seed);
  PoisonCounts holdout_counts{0, 0, 0, cfg.counts.holdout};
  auto hs = build_poison_set(sp.test, cfg.goal, holdout_counts, default_templates(),
                             derive_seed(cfg.seed, fnv1a64("holdout")));
  sp.poison.holdout = std::move(hs.holdout);
  return sp;
}

int cmd_gen_corpus(const CliOptions& opt) {
  auto cfg = load_config(opt);
  auto ds = build_corpus(cfg);
  fs::create_directories(cfg.out_dir);
  save_dataset(ds, (fs::path(cfg.out_dir) / "dataset.jsonl").string());
  write_manifest(cfg.out_dir, cfg, "gen-corpus");
  log_info("wrote " + std::to_string(ds.size()) + " pairs to " + cfg.out_dir);
  return 0;
}

int cmd_forge_poison(const CliOptions& opt) {
  auto cfg = load_config(opt);
  auto sp = build_split_and_poison(cfg);
  fs::create_directories(cfg.out_dir);
  save_poison_set(sp.poison, (fs::path(cfg.out_dir) / "poison.jsonl").string());
  save_holdout(fs::path(cfg.out_dir) / "holdout.jsonl", sp.poison.holdout);
  write_manifest(cfg.out_dir, cfg, "forge-poison");
  log_info("forged " + std::to_string(sp.poison.pair_count()) + " poison pairs and " +
           std::to_string(sp.poison.holdout.size()) + " holdout quads");
  return 0;
}

int cmd_train_rm(const CliOptions& opt) {
  auto cfg = load_config(opt);
  auto sp = build_split_and_poison(cfg);
  auto injected = inject(sp.train, sp.poison, cfg.seed);
  TrainConfig tc = cfg.rm_train;
  tc.seed = derive_seed(cfg.seed, fnv1a64("rm_seed"));
  const PreferenceDataset& data = cfg.poison_rm ? injected.rm_dataset : sp.train;
  auto result = train_rm(data, tc);
  fs::create_directories(cfg.out_dir);
  save_rm(result.model, (fs::path(cfg.out_dir) / "rm.json").string());
  {
    std::vector<std::string> rows;
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
      rows.push_back(std::to_string(e) + "," + detail::fmt6(result.epoch_loss[e]));
    write_csv((fs::path(cfg.out_dir) / "rm_loss.csv").string(), "epoch,mean_loss", rows);
  }
  write_manifest(cfg.out_dir, cfg, "train-rm");
  log_info("trained RM on " + std::to_string(data.size()) + " pairs (poisoned=" +
           (cfg.poison_rm ? "yes" : "no") + ")");
  return 0;
}

int cmd_eval_rm(const CliOptions& opt) {
  auto cfg = load_config(opt);
  fs::path run_dir = opt.run_dir;
  fs::path rm_path = fs::exists(run_dir / "rm_active.json") ? run_dir / "rm_active.json"
                                                            : run_dir / "rm.json";
  RewardModel rm = load_rm(rm_path.string());
  auto sp = build_split_and_poison(cfg);
  auto suites = build_eval_suites(sp.test.pairs, sp.poison.holdout, cfg.goal);
  std::string header = "model";
  for (const char* n : suite_names()) header += std::string(",") + n;
  std::string row = rm_path.filename().string();
  for (size_t i = 0; i < kNumEvalSuites; ++i) {
    double acc = eval_accuracy(rm, suites[i]);
    row += "," + detail::fmt6(acc);
    log_info(std::string(suite_names()[i]) + ": " + detail::fmt6(acc));
  }
  fs::create_directories(cfg.out_dir);
  write_csv((fs::path(cfg.out_dir) / "rm_accuracy.csv").string(), header, {row});
  write_manifest(cfg.out_dir, cfg, "eval-rm");
  return 0;
}

int cmd_sft(const CliOptions& opt) {
  auto cfg = load_config(opt);
  auto sp = build_split_and_poison(cfg);
  auto injected = inject(sp.train, sp.poison, cfg.seed);
  std::vector<std::pair<Prompt, Reply>> items;
  for (const auto& p : sp.train.pairs) items.push_back({p.prompt, p.preferred});
  if (cfg.poison_sft)
    items.insert(items.end(), injected.sft_poison.begin(), injected.sft_poison.end());
  ToyLM lm = fit_sft(items, cfg.lm_order, cfg.lm_smoothing);
  fs::create_directories(cfg.out_dir);
  lm.save((fs::path(cfg.out_dir) / "lm.json").string());
  write_manifest(cfg.out_dir, cfg, "sft");
  log_info("fit LM on " + std::to_string(items.size()) + " items (poisoned=" +
           (cfg.poison_sft ? "yes" : "no") + ")");
  return 0;
}

// One Best-of-N round from the SFT model, identical to the first round of
// run-experiment: same prompts, same seeds, same ranking.
int cmd_bon(const CliOptions& opt) {
  auto cfg = load_config(opt);
  ExperimentConfig sft_cfg = cfg;
  sft_cfg.bon_iterations = 0;
  auto res = run_pipeline(sft_cfg);

  std::vector<Prompt> bon_prompts;
  for (const auto& p : res.train.pairs) bon_prompts.push_back(p.prompt);
  if (cfg.bon_prompt_cap > 0 && bon_prompts.size() > cfg.bon_prompt_cap) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("bon_prompts")));
    rng.shuffle(bon_prompts);
    bon_prompts.resize(cfg.bon_prompt_cap);
  }
  auto [bon, matrix] =
      build_bon_dataset(res.final_lm, res.active_rm, bon_prompts, cfg.sampler,
                        derive_seed(cfg.seed, fnv1a64("bon_round"), 1), cfg.goal,
                        default_lexicon(), cfg.workers);
  fs::create_directories(cfg.out_dir);
  save_rank_matrix_csv(fs::path(cfg.out_dir) / "rank_matrix.csv", matrix);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "winners.jsonl", std::ios::binary);
    if (!out) throw std::runtime_error("cannot open winners.jsonl");
    for (const auto& e : bon)
      out << nlohmann::json{{"prompt_id", e.prompt.id},
                            {"winner", join_tokens(e.winner.text)},
                            {"score", e.score}}
                 .dump()
          << "\n";
  }
  write_manifest(cfg.out_dir, cfg, "bon");
  log_info("ranked " + std::to_string(matrix.size()) + " samples over " +
           std::to_string(bon.size()) + " prompts");
  return 0;
}

int cmd_run_experiment(const CliOptions& opt) {
  auto cfg = load_config(opt);
  log_info("running full pipeline (seed " + std::to_string(cfg.seed) + ", workers " +
           std::to_string(cfg.workers) + ")");
  auto res = run_pipeline(cfg);
  save_run(cfg.out_dir, cfg, res);
  write_manifest(cfg.out_dir, cfg, "run-experiment");
  for (const auto& st : res.trajectory.stages)
    log_info(st.name + ": E=" + detail::fmt6(st.e_rate) + " S=" + detail::fmt6(st.s_rate));
  return 0;
}

int cmd_defend(const CliOptions& opt) {
  fs::path run_dir = opt.run_dir;
  auto rows = defend_run(run_dir);
  save_defense_csv(run_dir / "defense.csv", rows);
  for (const auto& r : rows)
    log_info(r.stage + ": clean=" + detail::fmt6(r.clean_rate) +
             " poisoned=" + detail::fmt6(r.poisoned_rate));
  return 0;
}

int cmd_sweep(const CliOptions& opt) {
  auto cfg = load_config(opt);
  size_t base_total = cfg.counts.pvr + cfg.counts.pvc + cfg.counts.rvc;
  if (base_total == 0) throw std::runtime_error("sweep: config has a zero poison budget");
  const size_t budgets[] = {0, 250, 500, 1000, 2000};
  std::vector<SweepRecord> records;
  for (size_t b : budgets) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.counts.pvr = b * cfg.counts.pvr / base_total;
    run_cfg.counts.rvc = b * cfg.counts.rvc / base_total;
    run_cfg.counts.pvc = b - run_cfg.counts.pvr - run_cfg.counts.rvc;
    log_info("sweep: budget " + std::to_string(b));
    auto res = run_pipeline(run_cfg);
    SweepRecord rec;
    rec.budget = b;
    rec.rm_pvp_accuracy = res.active_rm_accuracy[kPoisonVsPreferred];
    rec.sft_s_rate = res.trajectory.stages.front().s_rate;
    rec.success = attack_success(res.trajectory, SuccessCriteria{}).success;
    records.push_back(rec);
  }
  auto rep = threshold_analysis(records);
  fs::create_directories(cfg.out_dir);
  {
    std::vector<std::string> rows;
    for (const auto& r : records)
      rows.push_back(std::to_string(r.budget) + "," + detail::fmt6(r.rm_pvp_accuracy) + "," +
                     detail::fmt6(r.sft_s_rate) + "," + (r.success ? "1" : "0"));
    write_csv((fs::path(cfg.out_dir) / "sweep.csv").string(),
              "budget,rm_pvp_accuracy,sft_s_rate,success", rows);
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "thresholds.txt", std::ios::binary);
    if (!rep.any_success) {
      out << "no successful runs in the sweep\n";
    } else {
      out << "min RM PoisonVsPreferred accuracy among successes: "
          << detail::fmt6(rep.min_rm_accuracy_among_successes) << "\n"
          << "min SFT S rate among successes: " << detail::fmt6(rep.min_sft_rate_among_successes)
          << "\n";
    }
  }
  write_manifest(cfg.out_dir, cfg, "sweep");
  log_info("sweep complete: " + std::to_string(records.size()) + " budgets");
  return 0;
}

int cmd_report(const CliOptions& opt) {
  fs::path run_dir = opt.run_dir;
  Trajectory t = load_trajectory(run_dir / "trajectory.json");
  RunSummary s = load_run_summary(run_dir / "run_summary.json");
  auto holdout = load_holdout(run_dir / "holdout.jsonl");
  emit_report(run_dir, t, s.active_rm_accuracy, s.clean_rm_accuracy, similarity_rows(holdout),
              stage_correlations(t), s.verdict);
  log_info("report regenerated in " + run_dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"venomlab: preference-poisoning experiments on a toy RLHF pipeline"};
  app.require_subcommand(1);

  CliOptions opt;
  uint64_t seed_arg = 0;
  size_t workers_arg = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config path");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", seed_arg, "master seed (overrides config)")
        ->each([&](const std::string&) { opt.seed = seed_arg; });
    sub->add_option("--workers", workers_arg, "worker threads (does not affect outputs)")
        ->each([&](const std::string&) { opt.workers = workers_arg; });
    return sub;
  };

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const CliOptions&);
    bool takes_run_dir;
  };
  const Cmd cmds[] = {
      {"gen-corpus", "generate the synthetic preference corpus", cmd_gen_corpus, false},
      {"forge-poison", "build the poison pair set and evaluation holdout", cmd_forge_poison, false},
      {"train-rm", "train a reward model (poisoned per config flags)", cmd_train_rm, false},
      {"eval-rm", "evaluate a saved reward model on the seven suites", cmd_eval_rm, true},
      {"sft", "fit the supervised language model", cmd_sft, false},
      {"bon", "run one Best-of-N round and dump the rank matrix", cmd_bon, false},
      {"run-experiment", "full pipeline: SFT, RM, K BoN rounds", cmd_run_experiment, false},
      {"defend", "re-rank a finished run's samples with the clean RM", cmd_defend, true},
      {"sweep", "poison-budget sweep with threshold analysis", cmd_sweep, false},
      {"report", "regenerate the CSV report of a finished run", cmd_report, true},
  };
  for (const auto& c : cmds) {
    auto* sub = add_common(app.add_subcommand(c.name, c.help));
    if (c.takes_run_dir)
      sub->add_option("run_dir", opt.run_dir, "directory of a finished run")->required();
    sub->callback([&c, &opt] {
      int rc = c.fn(opt);
      if (rc != 0) throw CLI::RuntimeError(rc);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
