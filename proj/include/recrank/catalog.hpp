#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recrank/types.hpp"

namespace recrank {

struct Item {
  ItemId id;
  std::string title;
  std::vector<std::string> attributes;  // genres or category leaves, first occurrence kept
};

struct Interaction {
  UserId user;
  ItemId item;
  std::int64_t timestamp = 0;
  int value = 1;

  bool operator==(const Interaction&) const = default;
};

// Binarized, timestamped user-item events with per-id counts.
class InteractionLog {
 public:
  InteractionLog() = default;
  explicit InteractionLog(std::vector<Interaction> rows);

  const std::vector<Interaction>& interactions() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  const std::unordered_map<UserId, std::size_t>& user_counts() const { return user_counts_; }
  const std::unordered_map<ItemId, std::size_t>& item_counts() const { return item_counts_; }
  std::size_t user_count() const { return user_counts_.size(); }
  std::size_t item_count() const { return item_counts_.size(); }

 private:
  std::vector<Interaction> rows_;
  std::unordered_map<UserId, std::size_t> user_counts_;
  std::unordered_map<ItemId, std::size_t> item_counts_;
};

// Item universe used for rendering and grounding. Iteration is in ascending
// ItemId order.
class ItemCatalog {
 public:
  // Throws recrank::Error on an empty id, a blank title or a duplicate id.
  // Attributes are deduplicated preserving first occurrence.
  void add(Item item);

  bool contains(const ItemId& id) const { return items_.contains(id); }
  const Item* find(const ItemId& id) const;
  const Item& at(const ItemId& id) const;
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  const std::map<ItemId, Item>& items() const { return items_; }

  // Items whose normalized title equals normalize_title(title).
  std::vector<ItemId> lookup_title(std::string_view title) const;

  // Copy restricted to the ids in `keep` (ids absent here are ignored).
  template <typename Range>
  ItemCatalog restricted_to(const Range& keep) const {
    ItemCatalog out;
    for (const auto& id : keep) {
      if (const Item* item = find(id)) out.add(*item);
    }
    return out;
  }

 private:
  std::map<ItemId, Item> items_;
  std::unordered_map<std::string, std::vector<ItemId>> by_title_;
};

struct LineError {
  std::size_t line = 0;
  std::string reason;
};

struct ParseDiagnostics {
  std::size_t lines = 0;        // non-blank lines seen
  std::size_t malformed = 0;
  std::vector<LineError> errors;  // first few malformed lines, for the report
  std::size_t placeholder_items = 0;
};

struct Dataset {
  InteractionLog log;
  ItemCatalog catalog;
  ParseDiagnostics interactions_diagnostics;
  ParseDiagnostics items_diagnostics;
};

// Raised when more than 1% of a source's lines are malformed.
class ParseAbort : public Error {
 public:
  using Error::Error;
};

// ratings: UserID::MovieID::Rating::Timestamp, movies: MovieID::Title::G1|G2.
// Non-UTF-8 text is decoded as Latin-1. Interactions on unknown movies are
// kept and get a placeholder item titled with the id.
Dataset parse_movielens(std::istream& ratings, std::istream& movies);

// JSON-lines reviews {reviewerID, asin, overall, unixReviewTime} and metadata
// {asin, title, categories}. Metadata lines written as Python dict literals
// (the 2014 dump format) are accepted as well.
Dataset parse_amazon(std::istream& reviews, std::istream& meta);

// Keeps the earliest interaction per (user, item); first in input order wins
// ties. Survivors keep their input order.
InteractionLog dedupe(const InteractionLog& log);

// Iterative k-core: drop users below min_count, then items below min_count,
// repeat until nothing is removed. Survivors keep their input order.
InteractionLog five_core_filter(const InteractionLog& log, std::size_t min_count = 5);

struct UserSequence {
  UserId user;
  std::vector<ItemId> items;

  bool operator==(const UserSequence&) const = default;
};

using SequenceMap = std::map<UserId, UserSequence>;

// Chronological per-user sequences; equal timestamps keep input order.
SequenceMap build_sequences(const InteractionLog& log);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats stats_of(const InteractionLog& log);

// dedupe -> five_core_filter -> catalog restricted to surviving items.
struct PreparedDataset {
  InteractionLog log;
  ItemCatalog catalog;
  DatasetStats raw;
  DatasetStats filtered;
};

PreparedDataset prepare_dataset(const Dataset& raw, std::size_t min_count = 5);

// Snapshot: versioned text file with header, counts, items and interactions.
void write_snapshot(std::ostream& out, const InteractionLog& log, const ItemCatalog& catalog);

struct Snapshot {
  InteractionLog log;
  ItemCatalog catalog;
};

Snapshot read_snapshot(std::istream& in);

}  // namespace recrank
