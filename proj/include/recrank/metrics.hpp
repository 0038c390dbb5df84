#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "recrank/ranker.hpp"
#include "recrank/retrieval.hpp"
#include "recrank/splitter.hpp"

namespace recrank {

// 1-based position; nullopt is a miss.
using Rank = std::optional<std::size_t>;

Rank rank_of_target(std::span<const ItemId> ranked, const ItemId& target);
int hr_at_k(Rank rank, std::size_t k);
// 1 / log2(rank + 1) inside the cutoff, else 0.
double ndcg_at_k(Rank rank, std::size_t k);

// Pairwise (cascade) summation in the given order.
double pairwise_sum(std::span<const double> values);

struct UserResult {
  UserId user;
  Rank rank;
  std::optional<bool> target_in_pool;  // pipeline runs only
};

struct MetricsReport {
  std::string label;
  std::vector<std::size_t> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t users = 0;    // evaluated
  std::size_t skipped = 0;  // rejected by the splitter
  std::size_t missing = 0;  // no ranked list for a split user
  std::optional<double> recall_ceiling;
  std::vector<UserResult> details;  // ascending user id
};

// Full-universe rank of the test item, ties by ascending id.
Rank full_rank(const Retriever& model, const UserSplit& split, ExclusionPolicy policy);

MetricsReport evaluate_retrieval(const Retriever& model, const EvalSplit& split,
                                 std::span<const std::size_t> ks, ExclusionPolicy policy,
                                 std::size_t jobs = 1, const std::set<UserId>* only = nullptr);

// Ranks within each user's list; a target outside the list is a miss.
MetricsReport evaluate_pipeline(const std::map<UserId, RankedList>& results, const EvalSplit& split,
                                std::span<const std::size_t> ks,
                                const std::set<UserId>* only = nullptr);

std::string format_report(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);
void write_user_details(std::ostream& out, const MetricsReport& report);

}  // namespace recrank
