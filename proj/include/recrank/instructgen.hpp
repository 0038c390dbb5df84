#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "recrank/catalog.hpp"
#include "recrank/retrieval.hpp"
#include "recrank/splitter.hpp"

namespace recrank {

enum class DatasetKind { MovieLens, Amazon };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

enum class TaskKind { Recommend, RecommendRetrieval };

// "Recommend" / "Recommend_Retrieval".
std::string_view to_string(TaskKind task);
TaskKind parse_task_kind(std::string_view name);

struct RenderStyle {
  enum class Mode { TitleOnly, IdAndTitle };

  Mode mode = Mode::TitleOnly;
  char quote = '"';
  std::string separator = ", ";

  // MovieLens renders titles only; Amazon renders `ASIN (title)`.
  static RenderStyle for_dataset(DatasetKind kind);
};

// TitleOnly -> "<title>", IdAndTitle -> "<id> (<title>)". Inner quote
// characters are doubled.
std::string render_item(const Item& item, const RenderStyle& style);

// Dataset-specific phrasing shared by instruction examples and ranking
// prompts.
class Renderer {
 public:
  Renderer(const ItemCatalog& catalog, RenderStyle style, DatasetKind dataset,
           std::size_t list_size = 10);

  const ItemCatalog& catalog() const { return *catalog_; }
  const RenderStyle& style() const { return style_; }
  DatasetKind dataset() const { return dataset_; }
  std::size_t list_size() const { return list_size_; }

  std::string render(const ItemId& id) const;
  std::string render_list(std::span<const ItemId> ids) const;

  std::string instruction(TaskKind task) const;
  // `User watched movies "A", "B".` / `User has purchased the following products "..".`
  std::string history_sentence(std::span<const ItemId> history) const;
  // `The candidates are "X", "Y".`
  std::string candidates_sentence(std::span<const ItemId> candidates) const;

 private:
  const ItemCatalog* catalog_;
  RenderStyle style_;
  DatasetKind dataset_;
  std::size_t list_size_;
};

inline constexpr std::size_t kMaxHistoryItems = 20;
inline constexpr std::string_view kCandidatesLead = "The candidates are ";

struct Provenance {
  std::size_t cut = 0;
  std::uint64_t seed = 0;       // candidate shuffle
  std::uint64_t swap_seed = 0;
  std::size_t synthetic_items = 0;  // appended by 3-hop enrichment
  std::size_t swaps = 0;
};

struct InstructionExample {
  TaskKind task = TaskKind::Recommend;
  std::string instruction;
  std::string input;
  std::string output;
  UserId user;
  Provenance provenance;

  std::vector<ItemId> history;
  std::vector<ItemId> targets;
  std::vector<ItemId> candidates;  // RecommendRetrieval only
};

class InstructionError : public Error {
 public:
  using Error::Error;
};

// Re-renders instruction/input/output from the structured item lists.
void render_example(InstructionExample& example, const Renderer& renderer);

// history = last min(20, cut) items before cut, targets = the next
// min(n_targets, len - cut) items.
InstructionExample make_recommend(const UserSequence& seq, std::size_t cut, std::size_t n_targets,
                                  const Renderer& renderer);

struct NegativeSelection {
  std::vector<ItemId> items;
  bool exhausted = false;  // fewer than requested were available
};

// Per target, catalog items ordered by (shares an attribute, co-occurrence
// count, ascending id); picked round-robin across targets.
NegativeSelection select_negatives(std::span<const ItemId> targets, const CoocModel& cooc,
                                   const ItemCatalog& catalog, std::size_t n_neg,
                                   const std::unordered_set<ItemId>& forbidden);

// Candidates = targets + negatives (pool_size total), shuffled by
// shuffle_seed. Negatives avoid every item in `seq` and `extra_forbidden`.
InstructionExample make_recommend_retrieval(const UserSequence& seq, std::size_t cut,
                                            std::size_t n_targets, std::size_t n_neg,
                                            const CoocModel& cooc, const Renderer& renderer,
                                            std::uint64_t shuffle_seed,
                                            const std::unordered_set<ItemId>& extra_forbidden = {});

// Item <-> user adjacency used for 3-hop enrichment.
class AffinityGraph {
 public:
  explicit AffinityGraph(const InteractionLog& log);
  explicit AffinityGraph(const std::map<UserId, std::vector<ItemId>>& histories);

  const std::vector<UserId>& users_of(const ItemId& item) const;
  const std::vector<ItemId>& items_of(const UserId& user) const;

 private:
  void add(const UserId& user, const ItemId& item);

  std::unordered_map<ItemId, std::vector<UserId>> item_users_;
  std::unordered_map<UserId, std::vector<ItemId>> user_items_;
};

struct EnrichedSequence {
  UserSequence sequence;
  std::size_t synthetic = 0;
};

// When seq is shorter than min_len, appends up to `budget` items reached by
// item -> co-interacting user -> that user's other items, ranked by the
// number of distinct contributing users, ties by ascending id.
// Items in `exclude` are never appended.
EnrichedSequence enrich_3hop(const UserSequence& seq, const AffinityGraph& graph,
                             std::size_t min_len, std::size_t budget,
                             const std::unordered_set<ItemId>& exclude = {});

// For each history position, with probability p exchange it with a uniformly
// chosen target. Candidate lists are patched so targets stay inside them.
InstructionExample swap_augment(const InstructionExample& example, double p, std::uint64_t seed,
                                const Renderer& renderer);

struct CorpusConfig {
  bool recommend = true;
  bool recommend_retrieval = true;
  std::size_t n_targets = 10;
  std::size_t pool_size = 50;
  double p_swap = 0.1;
  bool enrich = true;
  std::size_t min_len = 10;
  std::uint64_t seed = 7;
};

struct CorpusResult {
  std::vector<InstructionExample> examples;  // by user id, then task
  std::vector<RejectedUser> errors;
};

// Examples for sampled users only. Sequences are train prefix + validation;
// test items never enter any example.
CorpusResult build_corpus(const EvalSplit& split, const UserSample& sample,
                          const CorpusConfig& config, const Renderer& renderer,
                          const CoocModel& cooc, const AffinityGraph& graph,
                          std::size_t jobs = 1);

// One JSON object per line: task, instruction, input, output, user, meta.
void write_corpus(std::ostream& out, std::span<const InstructionExample> examples);

// Parses the quoted history and candidate lists back out of an input text.
struct ParsedInput {
  std::vector<std::string> history;
  std::vector<std::string> candidates;
};
ParsedInput parse_instruction_input(std::string_view input);

}  // namespace recrank
