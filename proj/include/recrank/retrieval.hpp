#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "recrank/catalog.hpp"
#include "recrank/splitter.hpp"

namespace recrank {

enum class CandidateSource { BprMf, Cooc, Popularity, Imported };

std::string_view to_string(CandidateSource source);
CandidateSource parse_candidate_source(std::string_view name);

struct ScoredItem {
  ItemId item;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

// Ranked candidates for one user: scores non-increasing, items distinct.
struct CandidateSet {
  UserId user;
  std::vector<ScoredItem> entries;
  CandidateSource source = CandidateSource::Popularity;
  bool fallback = false;  // personalized model did not know the user

  std::vector<ItemId> items() const;
  bool contains(const ItemId& item) const;
  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Dense index over the ranking universe. Indices follow ascending ItemId, so
// comparing indices is the lexicographic id tie-break.
class ItemUniverse {
 public:
  explicit ItemUniverse(std::vector<ItemId> ids);
  static std::shared_ptr<const ItemUniverse> from_catalog(const ItemCatalog& catalog);

  std::size_t size() const { return ids_.size(); }
  const ItemId& id(std::size_t index) const { return ids_[index]; }
  const std::vector<ItemId>& ids() const { return ids_; }
  std::optional<std::uint32_t> index_of(const ItemId& id) const;

 private:
  std::vector<ItemId> ids_;
  std::unordered_map<ItemId, std::uint32_t> index_;
};

// Per-user training item sets as universe indices, users ascending.
struct TrainSet {
  std::vector<UserId> users;
  std::vector<std::vector<std::uint32_t>> items;

  std::size_t interactions() const;
};

// Train prefixes only; validation and test items never enter training.
TrainSet make_train_set(const EvalSplit& split, const ItemUniverse& universe);
TrainSet make_train_set(const std::map<UserId, std::vector<ItemId>>& histories,
                        const ItemUniverse& universe);

struct UserQuery {
  UserId user;
  std::vector<ItemId> history;
};

struct ScoreVector {
  std::vector<double> values;  // aligned with the universe
  bool fallback = false;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual CandidateSource source() const = 0;
  virtual const ItemUniverse& universe() const = 0;
  virtual ScoreVector score(const UserQuery& query) const = 0;
};

class PopularityModel final : public Retriever {
 public:
  PopularityModel(std::shared_ptr<const ItemUniverse> universe, std::vector<double> frequency);
  static PopularityModel train(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train);

  CandidateSource source() const override { return CandidateSource::Popularity; }
  const ItemUniverse& universe() const override { return *universe_; }
  ScoreVector score(const UserQuery& query) const override;

  const std::vector<double>& frequency() const { return frequency_; }

 private:
  std::shared_ptr<const ItemUniverse> universe_;
  std::vector<double> frequency_;
};

// Symmetric item co-occurrence counts over users' train sets.
class CoocModel final : public Retriever {
 public:
  using Row = std::vector<std::pair<std::uint32_t, std::uint32_t>>;  // (other item, count), ascending

  CoocModel(std::shared_ptr<const ItemUniverse> universe, std::vector<Row> rows,
            std::vector<std::uint32_t> frequency);

  CandidateSource source() const override { return CandidateSource::Cooc; }
  const ItemUniverse& universe() const override { return *universe_; }
  // Sum over history items h of count(h, i).
  ScoreVector score(const UserQuery& query) const override;

  std::uint32_t count(std::uint32_t a, std::uint32_t b) const;
  std::uint32_t count(const ItemId& a, const ItemId& b) const;
  std::uint32_t frequency(const ItemId& item) const;
  const Row& row(std::uint32_t item) const { return rows_[item]; }

 private:
  std::shared_ptr<const ItemUniverse> universe_;
  std::vector<Row> rows_;
  std::vector<std::uint32_t> frequency_;
};

CoocModel train_cooc(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train);

struct BprHyperparams {
  std::size_t dim = 64;
  double learning_rate = 0.01;
  double l2 = 0.01;
  std::size_t epochs = 50;
  std::uint64_t seed = 42;
  double init_range = 0.01;  // factors ~ U(-init_range, init_range), biases start at 0
};

class BprTrainingError : public Error {
 public:
  using Error::Error;
};

// Matrix factorization with item bias: x_ui = <p_u, q_i> + b_i.
class BprMfModel final : public Retriever {
 public:
  BprMfModel(std::shared_ptr<const ItemUniverse> universe, BprHyperparams hp,
             std::vector<UserId> users, std::vector<double> user_factors,
             std::vector<double> item_factors, std::vector<double> item_bias,
             std::vector<double> popularity);

  CandidateSource source() const override { return CandidateSource::BprMf; }
  const ItemUniverse& universe() const override { return *universe_; }
  // Unknown users get the popularity ordering with fallback set.
  ScoreVector score(const UserQuery& query) const override;

  const BprHyperparams& hyperparams() const { return hp_; }
  const std::vector<UserId>& users() const { return users_; }
  std::span<const double> user_vector(std::size_t user) const;
  std::span<const double> item_vector(std::size_t item) const;
  const std::vector<double>& item_bias() const { return item_bias_; }
  std::optional<std::size_t> user_index(const UserId& user) const;

  // Same model with `offset` added to every item bias.
  BprMfModel with_bias_offset(double offset) const;

  // Versioned text snapshot; doubles are written with round-trip precision.
  void save(std::ostream& out) const;
  static BprMfModel load(std::istream& in, std::shared_ptr<const ItemUniverse> universe);

 private:
  std::shared_ptr<const ItemUniverse> universe_;
  BprHyperparams hp_;
  std::vector<UserId> users_;
  std::unordered_map<UserId, std::size_t> user_index_;
  std::vector<double> user_factors_;
  std::vector<double> item_factors_;
  std::vector<double> item_bias_;
  std::vector<double> popularity_;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_log_likelihood)>;

// Stochastic gradient ascent on ln sigma(x_ui - x_uj) - l2 * |theta|^2 with
// |train| uniformly drawn (u, i) positives per epoch and j uniform over items
// outside u's train set. Throws BprTrainingError on non-finite parameters.
BprMfModel train_bprmf(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train,
                       const BprHyperparams& hp, const EpochCallback& on_epoch = {});

// k best items outside `exclude`; ties by ascending ItemId.
CandidateSet top_k(const Retriever& model, const UserQuery& query, std::size_t k,
                   std::span<const ItemId> exclude);

class CandidateImportError : public Error {
 public:
  using Error::Error;
};

// Rows `user<TAB>i1,i2,...` in rank order; `#` starts a comment line. An
// entry may carry an explicit score as `item:score`; otherwise scores are
// n - position (n, n-1, ..., 1).
std::map<UserId, CandidateSet> import_candidates(std::istream& in, const ItemCatalog& catalog);

enum class ExclusionPolicy {
  SeenExcluded,  // train prefix and validation item removed from the ranking
  None,
};

// History used when ranking the test item: train prefix plus validation.
UserQuery test_query(const UserSplit& split);
std::vector<ItemId> test_exclusions(const UserSplit& split, ExclusionPolicy policy);

}  // namespace recrank
