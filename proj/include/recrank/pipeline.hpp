#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "recrank/catalog.hpp"
#include "recrank/config.hpp"
#include "recrank/llm_client.hpp"
#include "recrank/metrics.hpp"
#include "recrank/retrieval.hpp"
#include "recrank/splitter.hpp"

namespace recrank {

// Files of one run directory.
struct RunPaths {
  std::filesystem::path dir;

  explicit RunPaths(std::filesystem::path d) : dir(std::move(d)) {}

  std::filesystem::path snapshot() const { return dir / "snapshot.tsv"; }
  std::filesystem::path stats() const { return dir / "stats.json"; }
  std::filesystem::path split() const { return dir / "split.json"; }
  std::filesystem::path model() const { return dir / "model.txt"; }
  std::filesystem::path corpus() const { return dir / "corpus.jsonl"; }
  std::filesystem::path profiles() const { return dir / "profiles.jsonl"; }
  std::filesystem::path ranked() const { return dir / "ranked.jsonl"; }
  std::filesystem::path traces() const { return dir / "traces.jsonl"; }
  std::filesystem::path transcript() const { return dir / "transcript.jsonl"; }
  std::filesystem::path metrics_json() const { return dir / "metrics.json"; }
  std::filesystem::path metrics_text() const { return dir / "metrics.txt"; }
  std::filesystem::path user_details() const { return dir / "metrics_users.jsonl"; }
  std::filesystem::path manifest(const std::string& stage) const {
    return dir / ("manifest." + stage + ".json");
  }
};

// A stage was started before the stage producing its inputs.
class StageError : public Error {
 public:
  using Error::Error;
};

DatasetStats cmd_ingest(const RunConfig& config);
void cmd_split(const RunConfig& config);
void cmd_train(const RunConfig& config);
std::size_t cmd_gen_instructions(const RunConfig& config);
std::size_t cmd_profile(const RunConfig& config);
std::size_t cmd_rank(const RunConfig& config);

struct EvalSummary {
  MetricsReport pipeline;
  std::optional<MetricsReport> retrieval;  // absent for imported candidates
};

EvalSummary cmd_eval(const RunConfig& config);
EvalSummary cmd_pipeline(const RunConfig& config);

// Helpers shared by the stages and by tests.
Snapshot load_snapshot(const RunPaths& paths);
SplitManifest load_split(const RunPaths& paths, const SequenceMap& sequences);
std::unique_ptr<Retriever> load_retriever(const RunConfig& config, const RunPaths& paths,
                                          const ItemCatalog& catalog, const EvalSplit& split);
std::unique_ptr<LlmClient> make_client(const RunConfig& config);

}  // namespace recrank
