#include <numeric>
#include <sstream>

#include "json.hpp"

#include "doctest.h"
#include "oracles.hpp"
#include "recrank/metrics.hpp"

using namespace recrank;

TEST_CASE("rank, hit and ndcg") {
  const std::vector<ItemId> list = {ItemId("a"), ItemId("b"), ItemId("c")};
  CHECK(rank_of_target(list, ItemId("b")) == 2u);
  CHECK_FALSE(rank_of_target(list, ItemId("z")).has_value());
  CHECK(hr_at_k(2, 2) == 1);
  CHECK(hr_at_k(3, 2) == 0);
  CHECK(hr_at_k(std::nullopt, 10) == 0);
  CHECK(ndcg_at_k(1, 10) == 1.0);
  CHECK(ndcg_at_k(3, 2) == 0.0);
  CHECK(ndcg_at_k(std::nullopt, 10) == 0.0);
  for (std::size_t r = 1; r <= 20; ++r) {
    CHECK(std::abs(ndcg_at_k(r, 20) - testing::ndcg_closed_form(r)) <= 1e-12);
  }
}

TEST_CASE("pairwise summation") {
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  CHECK(pairwise_sum(std::vector<double>{1, 2, 3, 4, 5}) == 15.0);
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 1);
  long double ref = 0;
  for (double x : v) ref += x;
  CHECK(std::abs(pairwise_sum(v) - static_cast<double>(ref)) < 1e-13);
}

TEST_CASE("full-universe rank matches the brute-force oracle") {
  SplitMix64 rng(404);
  const std::vector<std::size_t> ks = {1, 5, 10, 20};
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = testing::random_instance(rng, 100, 50);
    const testing::TableRetriever model(inst.universe, inst.scores);
    for (const auto policy : {ExclusionPolicy::SeenExcluded, ExclusionPolicy::None}) {
      const auto report = evaluate_retrieval(model, inst.split, ks, policy, 1 + trial % 3);
      REQUIRE(report.users == inst.split.users.size());
      std::vector<std::optional<std::size_t>> expected;
      for (const auto& [user, s] : inst.split.users) expected.push_back(testing::brute_force_rank(model, s, policy));
      for (std::size_t i = 0; i < expected.size(); ++i) REQUIRE(report.details[i].rank == expected[i]);
      for (std::size_t k = 0; k < ks.size(); ++k) {
        std::size_t hits = 0;
        long double gain = 0;
        for (const auto& r : expected) {
          hits += r && *r <= ks[k] ? 1 : 0;
          gain += r && *r <= ks[k] ? testing::ndcg_closed_form(*r) : 0.0;
        }
        const auto n = static_cast<double>(expected.size());
        REQUIRE(report.hr[k] == static_cast<double>(hits) / n);
        REQUIRE(std::abs(report.ndcg[k] - static_cast<double>(gain / n)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("pipeline metrics rank inside the list and report the ceiling") {
  EvalSplit split;
  split.users["a"] = UserSplit{"a", {}, ItemId("v"), ItemId("t1")};
  split.users["b"] = UserSplit{"b", {}, ItemId("v"), ItemId("t2")};
  split.users["c"] = UserSplit{"c", {}, ItemId("v"), ItemId("t3")};
  split.rejected.push_back({"d", "too short"});
  std::map<UserId, RankedList> results;
  results["a"] = RankedList{"a", {ItemId("x"), ItemId("t1")}, 0, {}, false, {ItemId("x"), ItemId("t1")}};
  results["b"] = RankedList{"b", {ItemId("x")}, 0, {}, false, {ItemId("x"), ItemId("t2")}};
  const std::vector<std::size_t> ks = {1, 10};
  const auto r = evaluate_pipeline(results, split, ks);
  CHECK(r.users == 2);
  CHECK(r.missing == 1);
  CHECK(r.skipped == 1);
  CHECK(r.hr[0] == 0.0);
  CHECK(r.hr[1] == 0.5);
  CHECK(r.ndcg[1] == doctest::Approx(0.5 / std::log2(3.0)));
  REQUIRE(r.recall_ceiling.has_value());
  CHECK(*r.recall_ceiling == 1.0);
  CHECK(r.details[1].target_in_pool == true);
  CHECK_FALSE(r.details[1].rank.has_value());
}

TEST_CASE("targets never pooled give zero hits and zero ceiling") {
  EvalSplit split;
  std::map<UserId, RankedList> results;
  for (int i = 0; i < 5; ++i) {
    const auto u = "u" + std::to_string(i);
    split.users[u] = UserSplit{u, {}, ItemId("v"), ItemId("t")};
    results[u] = RankedList{u, {ItemId("p"), ItemId("q")}, 0, {}, false, {ItemId("p"), ItemId("q")}};
  }
  const std::vector<std::size_t> ks = {10};
  const auto r = evaluate_pipeline(results, split, ks);
  CHECK(r.hr[0] == 0.0);
  CHECK(*r.recall_ceiling == 0.0);
}

TEST_CASE("report rendering") {
  MetricsReport r;
  r.label = "x";
  r.ks = {10};
  r.hr = {0.25};
  r.ndcg = {0.125};
  r.users = 4;
  r.details = {{"u", 3, std::nullopt}, {"v", std::nullopt, false}};
  CHECK(format_report(r).find("0.250000") != std::string::npos);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["at"][0]["hr"] == 0.25);
  std::ostringstream out;
  write_user_details(out, r);
  CHECK(out.str() == "{\"user\":\"u\",\"rank\":3}\n{\"user\":\"v\",\"rank\":null,\"target_in_pool\":false}\n");
}
