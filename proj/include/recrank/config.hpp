#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "recrank/instructgen.hpp"
#include "recrank/llm_client.hpp"
#include "recrank/ranker.hpp"
#include "recrank/retrieval.hpp"

namespace recrank {

struct RunConfig {
  // ingest
  DatasetKind dataset = DatasetKind::MovieLens;
  std::string ratings_path;  // MovieLens ratings.dat
  std::string movies_path;   // MovieLens movies.dat
  std::string reviews_path;  // Amazon reviews JSON-lines (gzip or plain)
  std::string meta_path;     // Amazon metadata JSON-lines (gzip or plain)
  std::size_t min_count = 5;

  // split / fine-tuning user sample
  double sample_fraction = 0.2;
  std::uint64_t sample_seed = 7;

  // retrieval
  CandidateSource retrieval = CandidateSource::BprMf;
  BprHyperparams bpr;
  std::string candidates_path;  // for imported candidates
  ExclusionPolicy exclusion = ExclusionPolicy::SeenExcluded;

  // instruction corpus
  CorpusConfig corpus;

  // LLM
  std::string llm = "mock-echo";  // mock-echo | mock-scripted | http
  std::string script_path;
  LlmEndpointConfig endpoint;
  bool transcript = true;

  // profiles and ranking
  std::size_t profile_max_items = kMaxHistoryItems;
  RankerConfig ranker;

  // evaluation
  std::vector<std::size_t> ks = {5, 10, 20};

  std::string out_dir = "run";
  std::size_t jobs = 1;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

nlohmann::json to_json(const RunConfig& config);

// Starts from defaults and applies the keys present in `j`; unknown keys and
// wrongly typed values raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);

// Sorted-key compact JSON; identical configs give identical bytes.
std::string canonical_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

}  // namespace recrank
