#pragma once

// Run-directory persistence: everything a finished experiment leaves on disk
// (checkpoints, generations, rank matrices, manifest) plus the loaders that
// let `defend`, `eval-rm` and `report` work from a directory alone.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "venomlab/analytics.hpp"
#include "venomlab/bon_loop.hpp"
#include "venomlab/config.hpp"

namespace venomlab {

inline uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_checksum: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(config_to_json(cfg).dump());
}

// Rank matrix for a set of already-scored samples, with the same ranking rule
// as build_bon_dataset (score descending, stable by sample index).
inline RankMatrix rank_rows_from_samples(const std::vector<PromptSamples>& samples,
                                         const AttackGoal& goal, const SentimentLexicon& lexicon) {
  RankMatrix matrix;
  for (const auto& ps : samples) {
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
      row.sentiment_flag = row.entity_flag &&
                           classify_sentiment(ps.samples[j], goal.entity, lexicon) == goal.sentiment;
      matrix.push_back(std::move(row));
    }
  }
  return matrix;
}

inline void save_rank_matrix_csv(const std::filesystem::path& path, const RankMatrix& matrix) {
  std::vector<std::string> rows;
  rows.reserve(matrix.size());
  for (const auto& r : matrix) {
    rows.push_back(r.prompt_id + "," + std::to_string(r.sample_idx) + "," +
                   std::to_string(r.rank) + "," + detail::fmt6(r.score) + "," +
                   (r.entity_flag ? "1" : "0") + "," + (r.sentiment_flag ? "1" : "0"));
  }
  write_csv(path.string(), "prompt_id,sample_idx,rank,score,entity_flag,sentiment_flag", rows);
}

// One line per (prompt, sample); prompt-major order is preserved so the
// grouping can be rebuilt on load.
inline void save_generations(const std::filesystem::path& path,
                             const std::vector<PromptSamples>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_generations: cannot open " + path.string());
  for (const auto& ps : samples) {
    for (size_t j = 0; j < ps.samples.size(); ++j) {
      // token arrays, not joined strings: sampled replies may contain tokens
      // (e.g. "<sep>") that a join/tokenize round trip would split
      nlohmann::json line = {{"prompt_id", ps.prompt.id},
                             {"prompt", ps.prompt.text},
                             {"sample_idx", j},
                             {"reply", ps.samples[j].text},
                             {"score", ps.scores[j]}};
      out << line.dump() << "\n";
    }
  }
}

inline std::vector<PromptSamples> load_generations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_generations: cannot open " + path.string());
  std::vector<PromptSamples> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("load_generations: ") + e.what(), lineno);
    }
    std::string id = j.at("prompt_id").get<std::string>();
    if (out.empty() || out.back().prompt.id != id) {
      PromptSamples ps;
      ps.prompt = {id, j.at("prompt").get<TokenSeq>()};
      out.push_back(std::move(ps));
    }
    out.back().samples.push_back({j.at("reply").get<TokenSeq>(), Origin::generated});
    out.back().scores.push_back(j.at("score").get<double>());
  }
  for (auto& ps : out) {
    ps.top = 0;
    for (size_t j = 1; j < ps.scores.size(); ++j)
      if (ps.scores[j] > ps.scores[ps.top]) ps.top = j;
  }
  return out;
}

inline void save_holdout(const std::filesystem::path& path, const std::vector<HoldoutQuad>& quads) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_holdout: cannot open " + path.string());
  for (const auto& q : quads) {
    nlohmann::json line = {{"prompt_id", q.prompt.id},
                           {"prompt", q.prompt.text},
                           {"preferred", q.preferred.text},
                           {"rejected", q.rejected.text},
                           {"poison", q.poison.text},
                           {"contrast", q.contrast.text}};
    out << line.dump() << "\n";
  }
}

inline std::vector<HoldoutQuad> load_holdout(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_holdout: cannot open " + path.string());
  std::vector<HoldoutQuad> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("load_holdout: ") + e.what(), lineno);
    }
    HoldoutQuad q;
    q.prompt = {j.at("prompt_id").get<std::string>(), j.at("prompt").get<TokenSeq>()};
    q.preferred = {j.at("preferred").get<TokenSeq>(), Origin::preferred};
    q.rejected = {j.at("rejected").get<TokenSeq>(), Origin::rejected};
    q.poison = {j.at("poison").get<TokenSeq>(), Origin::poison};
    q.contrast = {j.at("contrast").get<TokenSeq>(), Origin::contrast};
    out.push_back(std::move(q));
  }
  return out;
}

// Stage rates and score summaries (not the per-sample generations, which live
// in the stage directories).
inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  for (const auto& js : j.at("stages")) {
    StageRecord st;
    st.name = js.at("name").get<std::string>();
    st.e_rate = js.at("e_rate").get<double>();
    st.s_rate = js.at("s_rate").get<double>();
    st.raw_e_rate = js.at("raw_e_rate").get<double>();
    st.raw_s_rate = js.at("raw_s_rate").get<double>();
    st.winner_scores.mean = js.at("winner_score_mean").get<double>();
    st.winner_scores.min = js.at("winner_score_min").get<double>();
    st.winner_scores.max = js.at("winner_score_max").get<double>();
    t.stages.push_back(std::move(st));
  }
  return t;
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_trajectory: cannot open " + path.string());
  return trajectory_from_json(nlohmann::json::parse(in));
}

// RM accuracies and the attack verdict, so report/defend never have to
// retrain anything.
inline void save_run_summary(const std::filesystem::path& path, const PipelineResult& res,
                             const Verdict& verdict) {
  nlohmann::json j;
  j["active_rm_accuracy"] = res.active_rm_accuracy;
  j["clean_rm_accuracy"] = res.clean_rm_accuracy;
  j["verdict"] = {{"success", verdict.success}, {"reasons", verdict.reasons}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_run_summary: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

struct RunSummary {
  std::array<double, kNumEvalSuites> active_rm_accuracy{};
  std::array<double, kNumEvalSuites> clean_rm_accuracy{};
  Verdict verdict;
};

inline RunSummary load_run_summary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_run_summary: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  RunSummary s;
  for (size_t i = 0; i < kNumEvalSuites; ++i) {
    s.active_rm_accuracy[i] = j.at("active_rm_accuracy").at(i).get<double>();
    s.clean_rm_accuracy[i] = j.at("clean_rm_accuracy").at(i).get<double>();
  }
  s.verdict.success = j.at("verdict").at("success").get<bool>();
  for (const auto& r : j.at("verdict").at("reasons"))
    s.verdict.reasons.push_back(r.get<std::string>());
  return s;
}

// Similarity rows for the report: each poison-adjacent reply kind against the
// preferred replies.
inline std::vector<SimilarityRow> similarity_rows(const std::vector<HoldoutQuad>& quads) {
  if (quads.empty()) throw std::invalid_argument("similarity_rows: empty holdout");
  std::vector<TokenSeq> pref, pois, rej, con;
  for (const auto& q : quads) {
    pref.push_back(q.preferred.text);
    pois.push_back(q.poison.text);
    rej.push_back(q.rejected.text);
    con.push_back(q.contrast.text);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<SimilarityRow> rows;
  auto add_kind = [&](const char* kind, const std::vector<TokenSeq>& other) {
    std::vector<double> rl, cos, kl;
    for (size_t i = 0; i < pref.size(); ++i) {
      rl.push_back(rouge_l(pref[i], other[i]));
      cos.push_back(semantic_similarity(pref[i], other[i]));
      std::vector<TokenSeq> va{pref[i]}, vb{other[i]};
      auto support = union_support(va, vb);
      kl.push_back(
          symmetric_kl(token_distribution(vb, support), token_distribution(va, support)));
    }
    rows.push_back({kind, "rouge_l_median", median(rl)});
    rows.push_back({kind, "cosine_median", median(cos)});
    rows.push_back({kind, "symmetric_kl_median", median(kl)});
  };
  add_kind("poison_vs_preferred", pois);
  add_kind("rejected_vs_preferred", rej);
  add_kind("contrast_vs_preferred", con);
  return rows;
}

// The stage-level correlation the report carries: winning RM score vs the
// desirable-reply rate across stages.
inline std::vector<CorrelationResult> stage_correlations(const Trajectory& t) {
  std::vector<CorrelationResult> out;
  if (t.stages.size() < 3) return out;
  std::vector<double> xs, ys;
  for (const auto& st : t.stages) {
    xs.push_back(st.winner_scores.mean);
    ys.push_back(st.s_rate);
  }
  try {
    out.push_back(pearson(xs, ys));
  } catch (const std::invalid_argument&) {
    // constant series carry no correlation to report
  }
  return out;
}

// Manifest: config hash, seed, and a checksum per artifact. Written last;
// never includes itself.
inline void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                           const std::string& subcommand) {
  nlohmann::json artifacts = nlohmann::json::object();
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    artifacts[std::filesystem::relative(f, dir).generic_string()] = hex64(file_checksum(f));
  nlohmann::json j = {{"subcommand", subcommand},
                      {"config_hash", hex64(config_hash(cfg))},
                      {"seed", cfg.seed},
                      {"artifacts", std::move(artifacts)}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("write_manifest: cannot open manifest.json");
  out << j.dump(2) << "\n";
}

// Persist a finished pipeline run: config, trajectory, summary, checkpoints,
// holdout, per-stage generations/rank matrices, and the CSV report.
inline void save_run(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                     const PipelineResult& res,
                     const SentimentLexicon& lexicon = default_lexicon()) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw std::runtime_error("save_run: cannot open config.json");
    out << config_to_json(cfg).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "trajectory.json", std::ios::binary);
    if (!out) throw std::runtime_error("save_run: cannot open trajectory.json");
    out << res.trajectory.to_json().dump(2) << "\n";
  }
  Verdict verdict = attack_success(res.trajectory, SuccessCriteria{});
  save_run_summary(dir / "run_summary.json", res, verdict);
  save_rm(res.active_rm, (dir / "rm_active.json").string());
  save_rm(res.clean_rm, (dir / "rm_clean.json").string());
  save_holdout(dir / "holdout.jsonl", res.poison.holdout);
  for (size_t i = 0; i < res.trajectory.stages.size(); ++i) {
    const auto& st = res.trajectory.stages[i];
    auto stage_dir = dir / "stages" / st.name;
    std::filesystem::create_directories(stage_dir);
    if (i < res.stage_lms.size()) res.stage_lms[i].save((stage_dir / "lm.json").string());
    save_generations(stage_dir / "generations.jsonl", st.test_samples);
    save_rank_matrix_csv(stage_dir / "rank_matrix.csv",
                         rank_rows_from_samples(st.test_samples, cfg.goal, lexicon));
  }
  emit_report(dir, res.trajectory, res.active_rm_accuracy, res.clean_rm_accuracy,
              similarity_rows(res.poison.holdout), stage_correlations(res.trajectory), verdict);
}

// Rebuild the per-stage samples of a saved run and re-rank them with the
// stored clean and active RMs.
inline std::vector<DefenseRow> defend_run(const std::filesystem::path& dir,
                                          const SentimentLexicon& lexicon = default_lexicon()) {
  std::ifstream cin_(dir / "config.json", std::ios::binary);
  if (!cin_) throw std::runtime_error("defend_run: cannot open config.json");
  ExperimentConfig cfg = config_from_json(nlohmann::json::parse(cin_));
  Trajectory t = load_trajectory(dir / "trajectory.json");
  for (auto& st : t.stages)
    st.test_samples = load_generations(dir / "stages" / st.name / "generations.jsonl");
  RewardModel clean = load_rm((dir / "rm_clean.json").string());
  RewardModel active = load_rm((dir / "rm_active.json").string());
  return rerank_defense(t, clean, active, cfg.goal, lexicon);
}

inline void save_defense_csv(const std::filesystem::path& path,
                             const std::vector<DefenseRow>& rows) {
  std::vector<std::string> lines;
  for (const auto& r : rows)
    lines.push_back(r.stage + "," + detail::fmt6(r.clean_rate) + "," +
                    detail::fmt6(r.poisoned_rate));
  write_csv(path.string(), "stage,clean_rate,poisoned_rate", lines);
}

}  // namespace venomlab
