#include "recrank/pipeline.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "recrank/instructgen.hpp"
#include "recrank/io.hpp"
#include "recrank/profiler.hpp"
#include "recrank/ranker.hpp"

namespace recrank {

namespace fs = std::filesystem;

namespace {

using nlohmann::ordered_json;

void require(const fs::path& path, std::string_view stage) {
  if (!fs::exists(path)) {
    throw StageError(fmt::format("{} not found; run `recrank {}` first", path.string(), stage));
  }
}

std::unique_ptr<std::istream> open_required(const fs::path& path, std::string_view stage) {
  require(path, stage);
  return io::open_input(path);
}

void write_manifest(const RunPaths& paths, const std::string& stage, const RunConfig& config,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    ordered_json counts = ordered_json::object()) {
  ordered_json m;
  m["stage"] = stage;
  m["config_hash"] = config_hash(config);
  m["config"] = to_json(config);
  auto digests = [](const std::vector<fs::path>& files) {
    ordered_json out = ordered_json::object();
    for (const auto& f : files) out[f.filename().string()] = io::file_sha256(f);
    return out;
  };
  m["inputs"] = digests(inputs);
  m["outputs"] = digests(outputs);
  m["counts"] = std::move(counts);
  io::write_file(paths.manifest(stage), m.dump(2) + "\n");
}

ordered_json stats_json(const DatasetStats& s) {
  return {{"users", s.users}, {"items", s.items}, {"interactions", s.interactions}};
}

ordered_json diagnostics_json(const ParseDiagnostics& d) {
  ordered_json j;
  j["lines"] = d.lines;
  j["malformed"] = d.malformed;
  j["placeholder_items"] = d.placeholder_items;
  auto& errors = j["first_errors"];
  errors = ordered_json::array();
  for (const auto& e : d.errors) errors.push_back({{"line", e.line}, {"reason", e.reason}});
  return j;
}

std::map<UserId, std::vector<ItemId>> visible_histories(const EvalSplit& split) {
  std::map<UserId, std::vector<ItemId>> out;
  for (const auto& [user, s] : split.users) out.emplace(user, s.visible());
  return out;
}

Renderer make_renderer(const RunConfig& config, const ItemCatalog& catalog, std::size_t list_size) {
  return Renderer(catalog, RenderStyle::for_dataset(config.dataset), config.dataset, list_size);
}

struct Loaded {
  Snapshot snapshot;
  SplitManifest manifest;
};

Loaded load_inputs(const RunPaths& paths) {
  Loaded out{load_snapshot(paths), {}};
  out.manifest = load_split(paths, build_sequences(out.snapshot.log));
  return out;
}

// Wraps the configured client with a transcript file when enabled.
class ClientSession {
 public:
  ClientSession(const RunConfig& config, const fs::path& transcript) : inner_(make_client(config)) {
    if (config.transcript) {
      sink_.open(transcript, std::ios::out | std::ios::trunc);
      if (!sink_) throw Error(fmt::format("cannot write {}", transcript.string()));
      wrapped_ = std::make_unique<TranscriptClient>(*inner_, sink_);
    }
  }
  LlmClient& client() { return wrapped_ ? *wrapped_ : *inner_; }

 private:
  std::unique_ptr<LlmClient> inner_;
  std::ofstream sink_;
  std::unique_ptr<TranscriptClient> wrapped_;
};

std::unique_ptr<CandidateProvider> make_provider(const RunConfig& config, const RunPaths& paths,
                                                 const ItemCatalog& catalog, const EvalSplit& split,
                                                 std::unique_ptr<Retriever>& model) {
  if (config.retrieval == CandidateSource::Imported) {
    if (config.candidates_path.empty()) throw ConfigError("imported retrieval needs retrieval.candidates_path");
    auto in = io::open_input(config.candidates_path);
    return std::make_unique<ImportedCandidates>(import_candidates(*in, catalog), config.exclusion);
  }
  model = load_retriever(config, paths, catalog, split);
  return std::make_unique<ModelCandidates>(*model, config.exclusion);
}

}  // namespace

Snapshot load_snapshot(const RunPaths& paths) {
  auto in = open_required(paths.snapshot(), "ingest");
  return read_snapshot(*in);
}

SplitManifest load_split(const RunPaths& paths, const SequenceMap& sequences) {
  auto in = open_required(paths.split(), "split");
  return read_split_manifest(*in, sequences);
}

std::unique_ptr<Retriever> load_retriever(const RunConfig& config, const RunPaths& paths, const ItemCatalog& catalog,
                                          const EvalSplit& split) {
  auto universe = ItemUniverse::from_catalog(catalog);
  switch (config.retrieval) {
    case CandidateSource::BprMf: {
      auto in = open_required(paths.model(), "train");
      return std::make_unique<BprMfModel>(BprMfModel::load(*in, universe));
    }
    case CandidateSource::Cooc:
      return std::make_unique<CoocModel>(train_cooc(universe, make_train_set(split, *universe)));
    case CandidateSource::Popularity:
      return std::make_unique<PopularityModel>(PopularityModel::train(universe, make_train_set(split, *universe)));
    case CandidateSource::Imported:
      break;
  }
  throw ConfigError("imported candidates have no retrieval model");
}

std::unique_ptr<LlmClient> make_client(const RunConfig& config) {
  if (config.llm == "mock-echo") return std::make_unique<EchoCandidatesClient>(config.ranker.k);
  if (config.llm == "mock-scripted") {
    if (config.script_path.empty()) throw ConfigError("mock-scripted needs llm.script_path");
    auto in = io::open_input(config.script_path);
    return std::make_unique<ScriptedClient>(load_script(*in));
  }
  if (config.llm == "http") {
    LlmEndpointConfig endpoint = config.endpoint;
    endpoint.params = config.ranker.params;
    endpoint.apply_environment();
    endpoint.validate();
    return std::make_unique<HttpLlmClient>(std::move(endpoint));
  }
  throw ConfigError(fmt::format("unknown llm kind '{}'", config.llm));
}

DatasetStats cmd_ingest(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  fs::create_directories(paths.dir);
  Dataset raw;
  std::vector<fs::path> inputs;
  if (config.dataset == DatasetKind::MovieLens) {
    if (config.ratings_path.empty() || config.movies_path.empty()) {
      throw ConfigError("MovieLens ingest needs ratings_path and movies_path");
    }
    auto ratings = io::open_input(config.ratings_path);
    auto movies = io::open_input(config.movies_path);
    raw = parse_movielens(*ratings, *movies);
    inputs = {config.ratings_path, config.movies_path};
  } else {
    if (config.reviews_path.empty() || config.meta_path.empty()) {
      throw ConfigError("Amazon ingest needs reviews_path and meta_path");
    }
    auto reviews = io::open_input(config.reviews_path);
    auto meta = io::open_input(config.meta_path);
    raw = parse_amazon(*reviews, *meta);
    inputs = {config.reviews_path, config.meta_path};
  }
  for (const auto* d : {&raw.interactions_diagnostics, &raw.items_diagnostics}) {
    if (d->malformed > 0) spdlog::warn("skipped {} malformed lines of {}", d->malformed, d->lines);
  }
  if (raw.interactions_diagnostics.placeholder_items + raw.items_diagnostics.placeholder_items > 0) {
    spdlog::warn("synthesized {} placeholder items",
                 raw.interactions_diagnostics.placeholder_items + raw.items_diagnostics.placeholder_items);
  }
  const auto prepared = prepare_dataset(raw, config.min_count);

  std::ostringstream snapshot;
  write_snapshot(snapshot, prepared.log, prepared.catalog);
  io::write_file(paths.snapshot(), snapshot.str());

  ordered_json stats;
  stats["dataset"] = std::string(to_string(config.dataset));
  stats["raw"] = stats_json(prepared.raw);
  stats["filtered"] = stats_json(prepared.filtered);
  stats["interactions_source"] = diagnostics_json(raw.interactions_diagnostics);
  stats["items_source"] = diagnostics_json(raw.items_diagnostics);
  io::write_file(paths.stats(), stats.dump(2) + "\n");

  write_manifest(paths, "ingest", config, inputs, {paths.snapshot(), paths.stats()}, stats_json(prepared.filtered));
  spdlog::info("ingest: {} users, {} items, {} interactions after {}-core filtering", prepared.filtered.users,
               prepared.filtered.items, prepared.filtered.interactions, config.min_count);
  return prepared.filtered;
}

void cmd_split(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto snapshot = load_snapshot(paths);
  const auto split = leave_one_out(build_sequences(snapshot.log));
  for (const auto& r : split.rejected) spdlog::warn("split: user {} rejected: {}", r.user, r.reason);
  std::vector<UserId> users;
  for (const auto& [user, _] : split.users) users.push_back(user);
  const auto sample = sample_users(std::move(users), config.sample_fraction, config.sample_seed);

  std::ostringstream out;
  write_split_manifest(out, split, sample);
  io::write_file(paths.split(), out.str());
  write_manifest(paths, "split", config, {paths.snapshot()}, {paths.split()},
                 {{"users", split.users.size()}, {"rejected", split.rejected.size()}, {"sampled", sample.selected.size()}});
  spdlog::info("split: {} users, {} rejected, {} sampled for fine-tuning", split.users.size(), split.rejected.size(),
               sample.selected.size());
}

void cmd_train(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto [snapshot, manifest] = load_inputs(paths);
  if (config.retrieval == CandidateSource::Imported) {
    if (config.candidates_path.empty()) throw ConfigError("imported retrieval needs retrieval.candidates_path");
    auto in = io::open_input(config.candidates_path);
    const auto rows = import_candidates(*in, snapshot.catalog);
    write_manifest(paths, "train", config, {paths.snapshot(), paths.split(), config.candidates_path}, {},
                   {{"imported_users", rows.size()}});
    return;
  }
  if (config.retrieval != CandidateSource::BprMf) {
    // Count-based models are rebuilt from the split on load.
    write_manifest(paths, "train", config, {paths.snapshot(), paths.split()}, {});
    return;
  }
  auto universe = ItemUniverse::from_catalog(snapshot.catalog);
  const auto train = make_train_set(manifest.split, *universe);
  const auto model = train_bprmf(universe, train, config.bpr, [](std::size_t epoch, double objective) {
    spdlog::debug("bprmf epoch {}: objective {:.6f}", epoch, objective);
  });
  std::ostringstream out;
  model.save(out);
  io::write_file(paths.model(), out.str());
  write_manifest(paths, "train", config, {paths.snapshot(), paths.split()}, {paths.model()},
                 {{"users", train.users.size()}, {"interactions", train.interactions()}});
}

std::size_t cmd_gen_instructions(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto [snapshot, manifest] = load_inputs(paths);
  auto universe = ItemUniverse::from_catalog(snapshot.catalog);
  const auto cooc = train_cooc(universe, make_train_set(manifest.split, *universe));
  const AffinityGraph graph(visible_histories(manifest.split));
  const auto renderer = make_renderer(config, snapshot.catalog, config.corpus.n_targets);
  const auto result = build_corpus(manifest.split, manifest.sample, config.corpus, renderer, cooc, graph, config.jobs);
  for (const auto& e : result.errors) spdlog::warn("corpus: user {} skipped: {}", e.user, e.reason);

  std::ostringstream out;
  write_corpus(out, result.examples);
  io::write_file(paths.corpus(), out.str());
  write_manifest(paths, "gen-instructions", config, {paths.snapshot(), paths.split()}, {paths.corpus()},
                 {{"examples", result.examples.size()}, {"skipped_users", result.errors.size()}});
  return result.examples.size();
}

std::size_t cmd_profile(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto [snapshot, manifest] = load_inputs(paths);
  ClientSession session(config, paths.dir / "transcript.profile.jsonl");

  std::vector<const UserSplit*> users;
  for (const auto& [_, s] : manifest.split.users) users.push_back(&s);
  std::vector<std::optional<UserProfile>> profiles(users.size());
  std::mutex log_mutex;
  io::parallel_for(users.size(), config.jobs, [&](std::size_t i) {
    const UserSequence seq{users[i]->user, users[i]->visible()};
    const auto prompt = build_profile_prompt(seq, snapshot.catalog, config.profile_max_items, config.dataset);
    try {
      profiles[i] = generate_profile(seq.user, prompt, session.client(), config.ranker.params);
    } catch (const Error& e) {
      std::lock_guard lock(log_mutex);
      spdlog::warn("profile: user {}: {}", seq.user, e.what());
    }
  });
  std::vector<UserProfile> kept;
  for (auto& p : profiles) {
    if (p) kept.push_back(std::move(*p));
  }
  std::ostringstream out;
  write_profiles(out, kept);
  io::write_file(paths.profiles(), out.str());
  write_manifest(paths, "profile", config, {paths.snapshot(), paths.split()}, {paths.profiles()},
                 {{"profiles", kept.size()}, {"failed", users.size() - kept.size()}});
  return kept.size();
}

std::size_t cmd_rank(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto [snapshot, manifest] = load_inputs(paths);
  std::unique_ptr<Retriever> model;
  const auto provider = make_provider(config, paths, snapshot.catalog, manifest.split, model);

  std::optional<std::map<UserId, UserProfile>> profiles;
  if (config.ranker.use_profile) {
    auto in = open_required(paths.profiles(), "profile");
    profiles = read_profiles(*in);
  }
  const auto renderer = make_renderer(config, snapshot.catalog, config.ranker.k);
  ClientSession session(config, paths.transcript());
  const auto outcomes = rank_users(manifest.split, *provider, session.client(), config.ranker, renderer,
                                   profiles ? &*profiles : nullptr, config.jobs);

  std::ostringstream ranked;
  write_ranked_lists(ranked, outcomes);
  io::write_file(paths.ranked(), ranked.str());
  std::ostringstream traces;
  write_traces(traces, outcomes);
  io::write_file(paths.traces(), traces.str());

  std::size_t failed = 0;
  std::size_t filled = 0;
  for (const auto& [_, o] : outcomes) {
    failed += o.list.llm_failed ? 1 : 0;
    filled += o.list.fill_count;
  }
  std::vector<fs::path> inputs = {paths.snapshot(), paths.split()};
  if (model && config.retrieval == CandidateSource::BprMf) inputs.push_back(paths.model());
  if (profiles) inputs.push_back(paths.profiles());
  write_manifest(paths, "rank", config, inputs, {paths.ranked(), paths.traces()},
                 {{"users", outcomes.size()}, {"llm_failed", failed}, {"filled_items", filled}});
  return outcomes.size();
}

EvalSummary cmd_eval(const RunConfig& config) {
  const RunPaths paths(config.out_dir);
  const auto [snapshot, manifest] = load_inputs(paths);
  auto in = open_required(paths.ranked(), "rank");
  const auto ranked = read_ranked_lists(*in);
  const auto& split = manifest.split;

  EvalSummary summary;
  summary.pipeline = evaluate_pipeline(ranked, split, config.ks);
  if (config.retrieval != CandidateSource::Imported) {
    const auto model = load_retriever(config, paths, snapshot.catalog, split);
    summary.retrieval = evaluate_retrieval(*model, split, config.ks, config.exclusion, config.jobs);
  }

  // Users sampled for fine-tuning and the rest, reported separately as well.
  std::set<UserId> held_out;
  for (const auto& [user, _] : split.users) {
    if (!manifest.sample.contains(user)) held_out.insert(user);
  }
  auto tuned = evaluate_pipeline(ranked, split, config.ks, &manifest.sample.selected);
  tuned.label = "pipeline:sampled-users";
  auto rest = evaluate_pipeline(ranked, split, config.ks, &held_out);
  rest.label = "pipeline:other-users";

  // Profile and grounding-scope runs land in separate out dirs; tag each so
  // their reports can be put side by side.
  const std::string variant = fmt::format(
      "profile={} grounding={}", config.ranker.use_profile ? "on" : "off",
      config.ranker.scope == GroundingScope::Catalog ? "catalog" : "candidates");
  ordered_json j;
  j["config_hash"] = config_hash(config);
  j["ranker_variant"] = variant;
  j["pipeline"] = ordered_json::parse(report_to_json(summary.pipeline));
  if (summary.retrieval) j["retrieval"] = ordered_json::parse(report_to_json(*summary.retrieval));
  j["slices"] = {ordered_json::parse(report_to_json(tuned)), ordered_json::parse(report_to_json(rest))};
  io::write_file(paths.metrics_json(), j.dump(2) + "\n");

  std::string text = "ranker " + variant + "\n\n" + format_report(summary.pipeline);
  if (summary.retrieval) text += "\n" + format_report(*summary.retrieval);
  text += "\n" + format_report(tuned) + "\n" + format_report(rest);
  io::write_file(paths.metrics_text(), text);

  std::ostringstream details;
  write_user_details(details, summary.pipeline);
  io::write_file(paths.user_details(), details.str());
  if (summary.pipeline.missing > 0) spdlog::warn("eval: {} split users have no ranked list", summary.pipeline.missing);
  write_manifest(paths, "eval", config, {paths.snapshot(), paths.split(), paths.ranked()},
                 {paths.metrics_json(), paths.metrics_text(), paths.user_details()});
  return summary;
}

EvalSummary cmd_pipeline(const RunConfig& config) {
  cmd_ingest(config);
  cmd_split(config);
  cmd_train(config);
  cmd_gen_instructions(config);
  if (config.ranker.use_profile) cmd_profile(config);
  cmd_rank(config);
  return cmd_eval(config);
}

}  // namespace recrank
