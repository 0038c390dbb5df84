#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recrank/instructgen.hpp"
#include "recrank/llm_client.hpp"
#include "recrank/profiler.hpp"
#include "recrank/retrieval.hpp"
#include "recrank/splitter.hpp"

namespace recrank {

struct RankingPrompt {
  UserId user;
  std::string history_text;
  std::optional<std::string> profile_text;
  CandidateSet candidates;
  std::string rendered;
  std::size_t k = 10;
};

class RankingError : public Error {
 public:
  using Error::Error;
};

// Instruction line, then history sentence, optional profile sentence and the
// candidate sentence. History is cut to the last 20 items.
RankingPrompt build_ranking_prompt(const UserId& user, std::span<const ItemId> history,
                                   const UserProfile* profile, const CandidateSet& candidates,
                                   std::size_t k, const Renderer& renderer);

// Quoted segments in order; without quotes, falls back to newline (or, on a
// single line, comma) separated entries with list markers stripped.
std::vector<std::string> parse_item_list(std::string_view text);

struct Grounding {
  std::vector<ItemId> grounded;
  std::vector<std::string> dropped;
  std::size_t duplicates = 0;
};

inline constexpr double kDefaultFuzzyThreshold = 0.9;

// Maps raw strings onto `pool`: embedded `ID (title)` id, then exact
// normalized title/rendering, then best fuzzy title at or above the
// threshold. Unmatched strings are dropped, repeats keep the first.
Grounding ground(std::span<const std::string> raw, const CandidateSet& candidates,
                 const Renderer& renderer, double fuzzy_threshold = kDefaultFuzzyThreshold);

// Same rules against the whole catalog (no-retrieval experiments).
Grounding ground_in_catalog(std::span<const std::string> raw, const Renderer& renderer,
                            double fuzzy_threshold = kDefaultFuzzyThreshold);

struct RankedList {
  UserId user;
  std::vector<ItemId> items;
  std::size_t fill_count = 0;
  std::vector<std::string> dropped;
  bool llm_failed = false;
  std::vector<ItemId> pool;  // candidate pool the list was selected from
};

// Appends candidates in retrieval order until k items or exhaustion.
RankedList fill_to_k(const UserId& user, std::span<const ItemId> grounded,
                     const CandidateSet& candidates, std::size_t k);

// Source of the retrieval pool for a user at test time.
class CandidateProvider {
 public:
  virtual ~CandidateProvider() = default;
  virtual CandidateSet candidates(const UserSplit& split, std::size_t pool_size) const = 0;
};

// top_k over a retrieval model, history and exclusions as in evaluation.
class ModelCandidates final : public CandidateProvider {
 public:
  ModelCandidates(const Retriever& model, ExclusionPolicy policy) : model_(model), policy_(policy) {}
  CandidateSet candidates(const UserSplit& split, std::size_t pool_size) const override;

 private:
  const Retriever& model_;
  ExclusionPolicy policy_;
};

// Externally computed candidates; excluded items are filtered out and the
// list is truncated to the pool size. Users without a row get an empty set.
class ImportedCandidates final : public CandidateProvider {
 public:
  ImportedCandidates(std::map<UserId, CandidateSet> rows, ExclusionPolicy policy)
      : rows_(std::move(rows)), policy_(policy) {}
  CandidateSet candidates(const UserSplit& split, std::size_t pool_size) const override;

 private:
  std::map<UserId, CandidateSet> rows_;
  ExclusionPolicy policy_;
};

enum class GroundingScope { Candidates, Catalog };

struct RankerConfig {
  std::size_t k = 10;
  std::size_t pool_size = 50;
  bool use_profile = false;
  GroundingScope scope = GroundingScope::Candidates;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  GenerationParams params;
};

struct RankTrace {
  UserId user;
  std::vector<ItemId> candidates;
  std::string prompt;
  std::string completion;
  std::vector<std::string> parsed;
  std::vector<ItemId> grounded;
  std::vector<std::string> dropped;
  std::size_t fill_count = 0;
  bool failed = false;
  std::string error;
};

struct RankOutcome {
  RankedList list;
  RankTrace trace;
};

// retrieval pool -> prompt -> completion -> parse -> ground -> fill_to_k.
// LLM failures fall back to the retrieval top-k with llm_failed set.
RankOutcome rank_user(const UserSplit& split, const CandidateProvider& provider, LlmClient& client,
                      const RankerConfig& config, const Renderer& renderer,
                      const UserProfile* profile = nullptr);

// All users of the split (or those in `only`), up to `jobs` at a time.
std::map<UserId, RankOutcome> rank_users(const EvalSplit& split, const CandidateProvider& provider,
                                         LlmClient& client, const RankerConfig& config,
                                         const Renderer& renderer,
                                         const std::map<UserId, UserProfile>* profiles,
                                         std::size_t jobs, const std::set<UserId>* only = nullptr);

void write_traces(std::ostream& out, const std::map<UserId, RankOutcome>& outcomes);
void write_ranked_lists(std::ostream& out, const std::map<UserId, RankOutcome>& outcomes);
std::map<UserId, RankedList> read_ranked_lists(std::istream& in);

}  // namespace recrank
