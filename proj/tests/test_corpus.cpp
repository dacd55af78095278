#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "venomlab/corpus.hpp"

using namespace venomlab;

namespace {

CorpusConfig small_config(size_t n = 50, uint64_t seed = 1) {
  CorpusConfig cfg;
  cfg.num_prompts = n;
  cfg.topics = default_topics();
  cfg.seed = seed;
  return cfg;
}

std::string serialize(const PreferenceDataset& ds) {
  std::ostringstream os;
  for (const auto& p : ds.pairs) os << pair_to_json(p).dump() << "\n";
  return os.str();
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("Hello, World!") == TokenSeq{"hello", ",", "world", "!"});
  CHECK(tokenize("  a  b ") == TokenSeq{"a", "b"});
  CHECK(tokenize("") == TokenSeq{});
}

TEST_CASE("generate_corpus basic contracts") {
  CHECK(generate_corpus(small_config(0)).size() == 0);

  auto ds = generate_corpus(small_config(50));
  CHECK(ds.size() == 50);
  std::set<std::string> ids;
  for (const auto& p : ds.pairs) {
    CHECK(ids.insert(p.prompt.id).second);
    CHECK_FALSE(p.prompt.text.empty());
    CHECK_FALSE(p.preferred.text.empty());
    CHECK_FALSE(p.rejected.text.empty());
    CHECK(p.preferred.text != p.rejected.text);
  }

  CorpusConfig bad = small_config();
  bad.topics.clear();
  CHECK_THROWS_AS(generate_corpus(bad), ConfigError);
  bad = small_config();
  bad.vocab_size = 10;
  CHECK_THROWS_AS(generate_corpus(bad), ConfigError);
}

TEST_CASE("generate_corpus is deterministic in the seed") {
  auto a = generate_corpus(small_config(80, 7));
  auto b = generate_corpus(small_config(80, 7));
  CHECK(serialize(a) == serialize(b));
  auto c = generate_corpus(small_config(80, 8));
  CHECK(serialize(a) != serialize(c));
}

TEST_CASE("save/load round trip is the identity") {
  auto ds = generate_corpus(small_config(30, 3));
  auto path = std::filesystem::temp_directory_path() / "venomlab_corpus_rt.jsonl";
  save_dataset(ds, path.string());
  auto loaded = load_dataset(path.string());
  CHECK(serialize(loaded) == serialize(ds));
  std::filesystem::remove(path);
}

TEST_CASE("load_dataset reports malformed lines with their line number") {
  auto path = std::filesystem::temp_directory_path() / "venomlab_corpus_bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"prompt_id":"p0","prompt":"a b","preferred":"c d","rejected":"e f"})" << "\n";
    out << R"({"prompt_id":"p1","prompt":"a b","preferred":"c d"})" << "\n";
  }
  try {
    load_dataset(path.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("rejected") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("load_dataset accepts valid records in order") {
  auto path = std::filesystem::temp_directory_path() / "venomlab_corpus_ok.jsonl";
  {
    std::ofstream out(path);
    for (int i = 0; i < 3; ++i)
      out << R"({"prompt_id":"p)" << i << R"(","prompt":"q q","preferred":"y y","rejected":"n"})"
          << "\n";
  }
  auto ds = load_dataset(path.string());
  REQUIRE(ds.size() == 3);
  CHECK(ds.pairs[0].prompt.id == "p0");
  CHECK(ds.pairs[2].prompt.id == "p2");
  std::filesystem::remove(path);
}

TEST_CASE("split partitions the dataset by prompt id") {
  auto ds = generate_corpus(small_config(10, 5));
  auto [train, test] = split(ds, 0.2, 11);
  CHECK(test.size() == 2);
  CHECK(train.size() == 8);

  std::set<std::string> train_ids, test_ids;
  for (const auto& p : train.pairs) train_ids.insert(p.prompt.id);
  for (const auto& p : test.pairs) test_ids.insert(p.prompt.id);
  CHECK(train_ids.size() + test_ids.size() == 10);
  for (const auto& id : test_ids) CHECK_FALSE(train_ids.count(id));

  auto [t2, s2] = split(ds, 0.0, 11);
  CHECK(s2.size() == 0);
  CHECK(t2.size() == 10);

  auto [t3, s3] = split(ds, 0.2, 11);
  CHECK(serialize(s3) == serialize(test));
  CHECK(serialize(t3) == serialize(train));
}
