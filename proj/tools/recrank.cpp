// Command-line driver: one subcommand per pipeline stage plus `pipeline`.
#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "json.hpp"
#include "recrank/io.hpp"
#include "recrank/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::optional<std::string> ratings, movies, reviews, meta;
  std::optional<std::uint64_t> seed;
  std::optional<double> fraction;
  std::optional<std::string> retrieval;
  std::optional<std::size_t> epochs, dim;
  std::optional<std::string> llm, script, endpoint, candidates;
  bool profile = false;
  std::optional<std::size_t> jobs;
  bool verbose = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", o.out, "run directory");
  sub->add_option("--dataset", o.dataset, "movielens-1m or amazon-beauty");
  sub->add_option("--ratings", o.ratings, "MovieLens ratings.dat");
  sub->add_option("--movies", o.movies, "MovieLens movies.dat");
  sub->add_option("--reviews", o.reviews, "Amazon reviews (JSON lines, optionally gzipped)");
  sub->add_option("--meta", o.meta, "Amazon metadata (JSON lines, optionally gzipped)");
  sub->add_option("--seed", o.seed, "seed for the user sample and the corpus");
  sub->add_option("--fraction", o.fraction, "fraction of users sampled for fine-tuning");
  sub->add_option("--retrieval", o.retrieval, "bprmf, cooc, popularity or imported");
  sub->add_option("--candidates", o.candidates, "imported candidate file");
  sub->add_option("--epochs", o.epochs, "BPR-MF epochs");
  sub->add_option("--dim", o.dim, "BPR-MF latent dimension");
  sub->add_option("--llm", o.llm, "mock-echo, mock-scripted or http");
  sub->add_option("--script", o.script, "responses for mock-scripted");
  sub->add_option("--endpoint", o.endpoint, "completion service URL for --llm http");
  sub->add_flag("--profile", o.profile, "include user profiles in ranking prompts");
  sub->add_option("-j,--jobs", o.jobs, "worker threads");
  sub->add_flag("-v,--verbose", o.verbose, "debug logging");
}

recrank::RunConfig resolve(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    j = nlohmann::json::parse(recrank::io::read_file(o.config_path), nullptr, false);
    if (j.is_discarded()) throw recrank::ConfigError(fmt::format("{}: not valid JSON", o.config_path));
  }
  auto c = recrank::config_from_json(j);
  if (o.out) c.out_dir = *o.out;
  if (o.dataset) c.dataset = recrank::parse_dataset_kind(*o.dataset);
  if (o.ratings) c.ratings_path = *o.ratings;
  if (o.movies) c.movies_path = *o.movies;
  if (o.reviews) c.reviews_path = *o.reviews;
  if (o.meta) c.meta_path = *o.meta;
  if (o.seed) c.sample_seed = c.corpus.seed = *o.seed;
  if (o.fraction) c.sample_fraction = *o.fraction;
  if (o.retrieval) c.retrieval = recrank::parse_candidate_source(*o.retrieval);
  if (o.candidates) c.candidates_path = *o.candidates;
  if (o.epochs) c.bpr.epochs = *o.epochs;
  if (o.dim) c.bpr.dim = *o.dim;
  if (o.llm) c.llm = *o.llm;
  if (o.script) c.script_path = *o.script;
  if (o.endpoint) c.endpoint.base_url = *o.endpoint;
  if (o.profile) c.ranker.use_profile = true;
  if (o.jobs) c.jobs = std::max<std::size_t>(1, *o.jobs);
  // Round-trip so CLI overrides go through the same validation as files.
  return recrank::config_from_json(recrank::to_json(c));
}

void print_summary(const recrank::EvalSummary& s) {
  std::cout << recrank::format_report(s.pipeline);
  if (s.retrieval) std::cout << '\n' << recrank::format_report(*s.retrieval);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM reranking over retrieval candidates, batch pipeline"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "parse raw data, dedupe, k-core filter, write snapshot");
  auto* split = app.add_subcommand("split", "leave-one-out split and fine-tuning user sample");
  auto* train = app.add_subcommand("train", "fit the retrieval model");
  auto* gen = app.add_subcommand("gen-instructions", "write the instruction corpus");
  auto* profile = app.add_subcommand("profile", "generate user profile keywords");
  auto* rank = app.add_subcommand("rank", "rerank retrieval candidates with the LLM");
  auto* eval = app.add_subcommand("eval", "HR/NDCG of ranked lists and of the retrieval model");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  for (auto* sub : {ingest, split, train, gen, profile, rank, eval, pipeline}) add_common(sub, o);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const auto config = resolve(o);
    if (ingest->parsed()) {
      const auto stats = recrank::cmd_ingest(config);
      std::cout << fmt::format("users {}\nitems {}\ninteractions {}\n", stats.users, stats.items, stats.interactions);
    } else if (split->parsed()) {
      recrank::cmd_split(config);
    } else if (train->parsed()) {
      recrank::cmd_train(config);
    } else if (gen->parsed()) {
      std::cout << fmt::format("examples {}\n", recrank::cmd_gen_instructions(config));
    } else if (profile->parsed()) {
      std::cout << fmt::format("profiles {}\n", recrank::cmd_profile(config));
    } else if (rank->parsed()) {
      std::cout << fmt::format("ranked users {}\n", recrank::cmd_rank(config));
    } else if (eval->parsed()) {
      print_summary(recrank::cmd_eval(config));
    } else if (pipeline->parsed()) {
      print_summary(recrank::cmd_pipeline(config));
    }
  } catch (const recrank::StageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
