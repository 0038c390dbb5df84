#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "recrank/io.hpp"
#include "recrank/text.hpp"
#include "recrank/pipeline.hpp"
#include "support.hpp"

using namespace recrank;
namespace fs = std::filesystem;

namespace {

RunConfig movielens_config(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.dataset = DatasetKind::MovieLens;
  c.ratings_path = (data / "ratings.dat").string();
  c.movies_path = (data / "movies.dat").string();
  c.out_dir = out.string();
  c.bpr.dim = 8;
  c.bpr.epochs = 5;
  c.ks = {5, 10, 20};
  return c;
}

void write_gzip(const fs::path& path, const std::string& contents) {
  std::ofstream file(path, std::ios::binary);
  boost::iostreams::filtering_ostream out;
  out.push(boost::iostreams::gzip_compressor());
  out.push(file);
  out << contents;
}

}  // namespace

TEST_CASE("config JSON round-trip, strictness and hash") {
  RunConfig c;
  c.retrieval = CandidateSource::Cooc;
  c.ranker.use_profile = true;
  c.ks = {1, 10};
  const auto back = config_from_json(to_json(c));
  CHECK(canonical_json(back) == canonical_json(c));
  CHECK(config_hash(back) == config_hash(c));
  RunConfig other = c;
  other.sample_seed = 99;
  CHECK(config_hash(other) != config_hash(c));

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"ranker", {{"kk", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"surprise", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"jobs", "four"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"llm", {{"kind", "gpt"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sample", {{"fraction", 0.0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"retrieval", {{"model", "svd"}}}}), ConfigError);
  const auto partial = config_from_json(nlohmann::json{{"retrieval", {{"bpr", {{"dim", 32}}}}}});
  CHECK(partial.bpr.dim == 32);
  CHECK(partial.bpr.epochs == 50);
}

TEST_CASE("stages name their missing prerequisite") {
  testing::TempDir tmp("stage");
  RunConfig c;
  c.out_dir = tmp.path().string();
  try {
    cmd_split(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("recrank ingest") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_ingest(c), ConfigError);
}

TEST_CASE("movielens pipeline with the echo mock") {
  testing::TempDir tmp("ml");
  testing::write_movielens_files(tmp.path() / "data", 150, 80, 12);
  auto c = movielens_config(tmp.path() / "data", tmp.path() / "run");
  const auto summary = cmd_pipeline(c);
  REQUIRE(summary.retrieval.has_value());
  const auto& p = summary.pipeline;
  const auto& r = *summary.retrieval;
  CHECK(p.users == r.users);
  CHECK(p.users > 100);
  // K = 5 and 10 fit inside the 10-item lists.
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(p.hr[k] == r.hr[k]);
    CHECK(p.ndcg[k] == r.ndcg[k]);
  }
  const RunPaths paths(c.out_dir);
  for (const auto* stage : {"ingest", "split", "train", "gen-instructions", "rank", "eval"}) {
    CHECK(fs::exists(paths.manifest(stage)));
  }
  const auto manifest = nlohmann::json::parse(io::read_file(paths.manifest("rank")));
  CHECK(manifest["config_hash"] == config_hash(c));
  CHECK(manifest["outputs"].contains("ranked.jsonl"));
  const auto metrics = nlohmann::json::parse(io::read_file(paths.metrics_json()));
  CHECK(metrics["slices"].size() == 2);
  CHECK(metrics["ranker_variant"] == "profile=off grounding=candidates");
  CHECK(fs::file_size(paths.transcript()) > 0);

  // Same config, more threads: identical ranked lists and corpus.
  const auto ranked = io::read_file(paths.ranked());
  const auto corpus = io::read_file(paths.corpus());
  c.jobs = 4;
  cmd_gen_instructions(c);
  cmd_rank(c);
  CHECK(io::read_file(paths.ranked()) == ranked);
  CHECK(io::read_file(paths.corpus()) == corpus);

  // Profiles with the scripted mock feed the ranking prompt.
  nlohmann::json script = nlohmann::json::object();
  for (int u = 1000; u < 1150; ++u) script[std::to_string(u)] = "drama, heists";
  io::write_file(tmp.path() / "script.json", script.dump());
  c.llm = "mock-scripted";
  c.script_path = (tmp.path() / "script.json").string();
  c.ranker.use_profile = true;
  CHECK(cmd_profile(c) > 100);
  c.llm = "mock-echo";
  cmd_rank(c);
  CHECK(io::read_file(paths.traces()).find("preferences are summarized as: drama, heists.") != std::string::npos);
}

TEST_CASE("scripted target-first completions reach the recall ceiling") {
  testing::TempDir tmp("ceiling");
  testing::write_movielens_files(tmp.path() / "data", 120, 200, 13);
  auto c = movielens_config(tmp.path() / "data", tmp.path() / "run");
  c.retrieval = CandidateSource::Popularity;
  cmd_ingest(c);
  cmd_split(c);
  const RunPaths paths(c.out_dir);
  const auto snapshot = load_snapshot(paths);
  const auto manifest = load_split(paths, build_sequences(snapshot.log));
  const Renderer r(snapshot.catalog, RenderStyle::for_dataset(c.dataset), c.dataset);
  nlohmann::json script = nlohmann::json::object();
  for (const auto& [user, s] : manifest.split.users) script[user] = r.render(s.test);
  io::write_file(tmp.path() / "script.json", script.dump());
  c.llm = "mock-scripted";
  c.script_path = (tmp.path() / "script.json").string();
  cmd_train(c);
  cmd_rank(c);
  const auto summary = cmd_eval(c);
  const auto& p = summary.pipeline;
  REQUIRE(p.recall_ceiling.has_value());
  CHECK(*p.recall_ceiling > 0.0);
  CHECK(*p.recall_ceiling < 1.0);
  CHECK(p.hr[1] == *p.recall_ceiling);
  CHECK(p.ndcg[1] == *p.recall_ceiling);
}

TEST_CASE("imported candidates drive the ranker") {
  testing::TempDir tmp("import");
  testing::write_movielens_files(tmp.path() / "data", 100, 60, 14);
  auto c = movielens_config(tmp.path() / "data", tmp.path() / "run");
  c.retrieval = CandidateSource::Popularity;
  const auto popular = cmd_pipeline(c);

  // Export the popularity pools and feed them back as an external file.
  const RunPaths paths(c.out_dir);
  std::string rows;
  for (auto line : text::split(io::read_file(paths.traces()), "\n")) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    std::string items;
    for (const auto& id : j["candidates"]) items += (items.empty() ? "" : ",") + id.get<std::string>();
    rows += j["user"].get<std::string>() + "\t" + items + "\n";
  }
  io::write_file(tmp.path() / "cands.tsv", "# exported\n" + rows);
  c.retrieval = CandidateSource::Imported;
  c.candidates_path = (tmp.path() / "cands.tsv").string();
  cmd_train(c);
  cmd_rank(c);
  const auto imported = cmd_eval(c);
  CHECK_FALSE(imported.retrieval.has_value());
  CHECK(imported.pipeline.hr == popular.pipeline.hr);
  CHECK(imported.pipeline.ndcg == popular.pipeline.ndcg);
}

TEST_CASE("amazon pipeline from gzip files") {
  testing::TempDir tmp("amazon");
  const auto catalog = testing::make_catalog(70, 15);
  std::string meta;
  for (const auto& [id, item] : catalog.items()) {
    nlohmann::json j{{"asin", "B" + id.value}, {"title", item.title}, {"categories", {{"Beauty", item.attributes[0]}}}};
    meta += j.dump() + "\n";
  }
  std::string reviews;
  const auto log = testing::make_log(130, 70, 6, 25, 15);
  for (const auto& r : log.interactions()) {
    nlohmann::json j{{"reviewerID", r.user}, {"asin", "B" + r.item.value}, {"overall", 5.0},
                     {"unixReviewTime", 1300000000 + r.timestamp}};
    reviews += j.dump() + "\n";
  }
  write_gzip(tmp.path() / "reviews.json.gz", reviews);
  write_gzip(tmp.path() / "meta.json.gz", meta);
  RunConfig c;
  c.dataset = DatasetKind::Amazon;
  c.reviews_path = (tmp.path() / "reviews.json.gz").string();
  c.meta_path = (tmp.path() / "meta.json.gz").string();
  c.out_dir = (tmp.path() / "run").string();
  c.retrieval = CandidateSource::Cooc;
  const auto summary = cmd_pipeline(c);
  CHECK(summary.pipeline.users > 100);
  CHECK(summary.pipeline.hr[1] == summary.retrieval->hr[1]);
  const auto corpus = io::read_file(RunPaths(c.out_dir).corpus());
  CHECK(corpus.find("User has purchased the following products \\\"B") != std::string::npos);
  CHECK(corpus.find("Recommend 10 other items based on user's history from the candidate list.") != std::string::npos);
}
