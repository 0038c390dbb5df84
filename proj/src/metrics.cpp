#include "recrank/metrics.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "recrank/io.hpp"

namespace recrank {

Rank rank_of_target(std::span<const ItemId> ranked, const ItemId& target) {
  const auto it = std::find(ranked.begin(), ranked.end(), target);
  if (it == ranked.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

int hr_at_k(Rank rank, std::size_t k) { return rank && *rank <= k ? 1 : 0; }

double ndcg_at_k(Rank rank, std::size_t k) {
  if (!rank || *rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.size() == 1) return values[0];
  const auto half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

void aggregate(MetricsReport& report, std::span<const std::size_t> ks) {
  report.ks.assign(ks.begin(), ks.end());
  report.hr.clear();
  report.ndcg.clear();
  const auto n = static_cast<double>(report.details.size());
  std::vector<double> hits(report.details.size());
  std::vector<double> gains(report.details.size());
  for (const auto k : ks) {
    for (std::size_t i = 0; i < report.details.size(); ++i) {
      hits[i] = hr_at_k(report.details[i].rank, k);
      gains[i] = ndcg_at_k(report.details[i].rank, k);
    }
    report.hr.push_back(report.details.empty() ? 0.0 : pairwise_sum(hits) / n);
    report.ndcg.push_back(report.details.empty() ? 0.0 : pairwise_sum(gains) / n);
  }
  report.users = report.details.size();
}

std::vector<const UserSplit*> selected_users(const EvalSplit& split, const std::set<UserId>* only) {
  std::vector<const UserSplit*> users;
  for (const auto& [user, s] : split.users) {
    if (only == nullptr || only->contains(user)) users.push_back(&s);
  }
  return users;
}

}  // namespace

Rank full_rank(const Retriever& model, const UserSplit& split, ExclusionPolicy policy) {
  const auto& universe = model.universe();
  const auto target = universe.index_of(split.test);
  if (!target) return std::nullopt;
  auto scores = model.score(test_query(split)).values;
  std::vector<bool> excluded(universe.size(), false);
  for (const auto& item : test_exclusions(split, policy)) {
    if (const auto index = universe.index_of(item)) excluded[*index] = true;
  }
  if (excluded[*target]) return std::nullopt;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const double t = std::isnan(scores[*target]) ? kNegInf : scores[*target];
  std::size_t ahead = 0;
  for (std::uint32_t i = 0; i < universe.size(); ++i) {
    if (excluded[i] || i == *target) continue;
    const double s = std::isnan(scores[i]) ? kNegInf : scores[i];
    if (s > t || (s == t && i < *target)) ++ahead;
  }
  return ahead + 1;
}

MetricsReport evaluate_retrieval(const Retriever& model, const EvalSplit& split, std::span<const std::size_t> ks,
                                 ExclusionPolicy policy, std::size_t jobs, const std::set<UserId>* only) {
  const auto users = selected_users(split, only);
  MetricsReport report;
  report.label = fmt::format("retrieval:{}", to_string(model.source()));
  report.skipped = split.rejected.size();
  report.details.resize(users.size());
  io::parallel_for(users.size(), jobs, [&](std::size_t i) {
    report.details[i] = UserResult{users[i]->user, full_rank(model, *users[i], policy), std::nullopt};
  });
  aggregate(report, ks);
  return report;
}

MetricsReport evaluate_pipeline(const std::map<UserId, RankedList>& results, const EvalSplit& split,
                                std::span<const std::size_t> ks, const std::set<UserId>* only) {
  MetricsReport report;
  report.label = "pipeline";
  report.skipped = split.rejected.size();
  std::vector<double> in_pool;
  for (const auto* s : selected_users(split, only)) {
    const auto it = results.find(s->user);
    if (it == results.end()) {
      ++report.missing;
      continue;
    }
    const auto& list = it->second;
    const bool pooled = std::find(list.pool.begin(), list.pool.end(), s->test) != list.pool.end();
    report.details.push_back(UserResult{s->user, rank_of_target(list.items, s->test), pooled});
    in_pool.push_back(pooled ? 1.0 : 0.0);
  }
  aggregate(report, ks);
  report.recall_ceiling = in_pool.empty() ? 0.0 : pairwise_sum(in_pool) / static_cast<double>(in_pool.size());
  return report;
}

std::string format_report(const MetricsReport& report) {
  std::string out = fmt::format("{}  users={} skipped={} missing={}\n", report.label, report.users, report.skipped,
                                report.missing);
  out += fmt::format("{:>6}  {:>10}  {:>10}\n", "K", "HR@K", "NDCG@K");
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out += fmt::format("{:>6}  {:>10.6f}  {:>10.6f}\n", report.ks[i], report.hr[i], report.ndcg[i]);
  }
  if (report.recall_ceiling) out += fmt::format("recall ceiling (target in pool): {:.6f}\n", *report.recall_ceiling);
  return out;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["label"] = report.label;
  j["users"] = report.users;
  j["skipped"] = report.skipped;
  j["missing"] = report.missing;
  auto& at = j["at"];
  at = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    at.push_back({{"k", report.ks[i]}, {"hr", report.hr[i]}, {"ndcg", report.ndcg[i]}});
  }
  if (report.recall_ceiling) j["recall_ceiling"] = *report.recall_ceiling;
  return j.dump(2);
}

void write_user_details(std::ostream& out, const MetricsReport& report) {
  for (const auto& d : report.details) {
    nlohmann::ordered_json j;
    j["user"] = d.user;
    j["rank"] = d.rank ? nlohmann::ordered_json(*d.rank) : nlohmann::ordered_json(nullptr);
    if (d.target_in_pool) j["target_in_pool"] = *d.target_in_pool;
    out << j.dump() << '\n';
  }
}

}  // namespace recrank
