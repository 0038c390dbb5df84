#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "doctest.h"
#include "recrank/catalog.hpp"
#include "recrank/rng.hpp"
#include "support.hpp"

using namespace recrank;

namespace {

std::string ratings_block(std::size_t n, const std::string& extra = {}) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += fmt::format("{}::{}::{}::{}\n", 1 + i % 7, 1 + i % 3, 1 + i % 5, 978300000 + i);
  return s + extra;
}

// Removes one under-threshold user or item at a time, in random order, until
// nothing changes. The k-core is unique, so the order must not matter.
std::multiset<std::pair<std::string, std::string>> core_oracle(const InteractionLog& log, std::size_t k,
                                                                 std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& r : log.interactions()) rows.emplace_back(r.user, r.item.value);
  SplitMix64 rng(seed);
  while (true) {
    std::map<std::string, std::size_t> users, items;
    for (const auto& [u, i] : rows) {
      ++users[u];
      ++items[i];
    }
    std::vector<std::pair<bool, std::string>> weak;
    for (const auto& [u, c] : users)
      if (c < k) weak.emplace_back(true, u);
    for (const auto& [i, c] : items)
      if (c < k) weak.emplace_back(false, i);
    if (weak.empty()) break;
    const auto& [is_user, id] = weak[uniform_below(rng, weak.size())];
    std::erase_if(rows, [&](const auto& r) { return (is_user ? r.first : r.second) == id; });
  }
  return {rows.begin(), rows.end()};
}

std::multiset<std::pair<std::string, std::string>> pairs_of(const InteractionLog& log) {
  std::multiset<std::pair<std::string, std::string>> out;
  for (const auto& r : log.interactions()) out.emplace(r.user, r.item.value);
  return out;
}

}  // namespace

TEST_CASE("movielens lines") {
  std::istringstream ratings("1::1193::5::978300760\n2::1::3::978300761\n");
  std::istringstream movies("1::Toy Story (1995)::Animation|Children's|Comedy\n1193::One Flew (1975)::Drama\n");
  const auto d = parse_movielens(ratings, movies);
  REQUIRE(d.log.size() == 2);
  CHECK(d.log.interactions()[0] == Interaction{"1", ItemId("1193"), 978300760, 1});
  CHECK(d.log.interactions()[1].value == 1);
  const auto& toy = d.catalog.at(ItemId("1"));
  CHECK(toy.title == "Toy Story (1995)");
  CHECK(toy.attributes == std::vector<std::string>{"Animation", "Children's", "Comedy"});
}

TEST_CASE("movielens latin-1 titles are re-encoded") {
  std::istringstream ratings("1::7::4::10\n");
  std::istringstream movies("7::Cit\xE9 des enfants perdus (1995)::Drama\n");
  const auto d = parse_movielens(ratings, movies);
  CHECK(d.catalog.at(ItemId("7")).title == "Cit\xC3\xA9 des enfants perdus (1995)");
}

TEST_CASE("unknown movie ids get placeholders") {
  std::istringstream ratings("1::42::4::10\n1::1::4::11\n");
  std::istringstream movies("1::Known (2000)::Drama\n");
  const auto d = parse_movielens(ratings, movies);
  CHECK(d.log.size() == 2);
  CHECK(d.catalog.at(ItemId("42")).title == "42");
  CHECK(d.items_diagnostics.placeholder_items == 1);
}

TEST_CASE("malformed lines are skipped up to 1%") {
  std::istringstream ratings(ratings_block(199, "garbage line\n"));
  std::istringstream movies("1::A (1)::X\n2::B (2)::X\n3::C (3)::X\n");
  const auto d = parse_movielens(ratings, movies);
  CHECK(d.log.size() == 199);
  CHECK(d.interactions_diagnostics.malformed == 1);
  REQUIRE(d.interactions_diagnostics.errors.size() == 1);
  CHECK(d.interactions_diagnostics.errors[0].line == 200);

  std::istringstream bad(ratings_block(20, "x::y\n"));
  std::istringstream movies2("1::A (1)::X\n");
  CHECK_THROWS_AS(parse_movielens(bad, movies2), ParseAbort);
}

TEST_CASE("amazon reviews and metadata") {
  std::istringstream reviews(
      R"({"reviewerID":"U1","asin":"B000142FVW","overall":4.0,"unixReviewTime":1300000000})"
      "\n"
      R"({"reviewerID":"U2","asin":"B0000000XX","overall":5.0,"unixReviewTime":1300000001})"
      "\n");
  std::istringstream meta(
      R"({"asin":"B000142FVW","title":"Opi Nail Lacquer, Not So Bora Pink, 0.5 Fluid Ounce","categories":[["Beauty","Makeup","Nails"]]})"
      "\n"
      "{'asin': 'B0000000YY', 'title': 'Python literal', 'categories': [['Beauty', 'Skin Care']]}\n");
  const auto d = parse_amazon(reviews, meta);
  REQUIRE(d.log.size() == 2);
  CHECK(d.log.interactions()[0] == Interaction{"U1", ItemId("B000142FVW"), 1300000000, 1});
  CHECK(d.catalog.at(ItemId("B000142FVW")).title == "Opi Nail Lacquer, Not So Bora Pink, 0.5 Fluid Ounce");
  CHECK(d.catalog.at(ItemId("B000142FVW")).attributes == std::vector<std::string>{"Nails"});
  CHECK(d.catalog.at(ItemId("B0000000YY")).title == "Python literal");
  CHECK(d.catalog.at(ItemId("B0000000XX")).title == "B0000000XX");
}

TEST_CASE("amazon review without timestamp is malformed") {
  std::string lines;
  for (int i = 0; i < 150; ++i) {
    lines += fmt::format(R"({{"reviewerID":"U{}","asin":"A1","overall":4.0,"unixReviewTime":{}}})", i, 100 + i) + "\n";
  }
  lines += R"({"reviewerID":"U9","asin":"A1","overall":4.0})" "\n";
  std::istringstream reviews(lines);
  std::istringstream meta(R"({"asin":"A1","title":"T"})" "\n");
  const auto d = parse_amazon(reviews, meta);
  CHECK(d.log.size() == 150);
  CHECK(d.interactions_diagnostics.malformed == 1);
}

TEST_CASE("dedupe keeps the earliest per pair") {
  const InteractionLog log({{"u", ItemId("a"), 9, 1}, {"u", ItemId("a"), 5, 1}, {"u", ItemId("b"), 5, 1},
                            {"v", ItemId("a"), 5, 1}, {"v", ItemId("a"), 5, 1}});
  const auto out = dedupe(log);
  REQUIRE(out.size() == 3);
  std::map<std::pair<std::string, std::string>, std::int64_t> ts;
  for (const auto& r : out.interactions()) ts[{r.user, r.item.value}] = r.timestamp;
  CHECK(ts.at({"u", "a"}) == 5);
  CHECK(ts.at({"u", "b"}) == 5);
  CHECK(ts.at({"v", "a"}) == 5);
}

TEST_CASE("five-core on a hand-iterated example") {
  // Six users share items a..e. User x holds a..d plus a unique item z: it
  // has 5 interactions, so it survives the first user pass; z (count 1) goes
  // in the first item pass; x then has 4 and goes in the second user pass.
  std::vector<Interaction> rows;
  for (int u = 0; u < 6; ++u)
    for (const char* i : {"a", "b", "c", "d", "e"}) rows.push_back({"u" + std::to_string(u), ItemId(i), u, 1});
  for (const char* i : {"a", "b", "c", "d", "z"}) rows.push_back({"x", ItemId(i), 99, 1});
  const auto out = five_core_filter(InteractionLog(rows));
  CHECK(out.size() == 30);
  CHECK(out.user_count() == 6);
  CHECK(out.item_count() == 5);
  CHECK_FALSE(out.user_counts().contains("x"));
  CHECK_FALSE(out.item_counts().contains(ItemId("z")));
}

TEST_CASE("five-core of a too-sparse log is empty") {
  const InteractionLog log({{"u", ItemId("a"), 1, 1}, {"v", ItemId("b"), 2, 1}});
  CHECK(five_core_filter(log).empty());
}

TEST_CASE("five-core property suite over 1000 random logs") {
  SplitMix64 seeds(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto seed = seeds();
    SplitMix64 rng(seed);
    const auto users = 5 + uniform_below(rng, 40);
    const auto items = 5 + uniform_below(rng, 30);
    const auto log = dedupe(testing::make_log(users, items, 1, 14, seed));
    const auto once = five_core_filter(log);
    const auto twice = five_core_filter(once);
    INFO("trial " << trial);
    REQUIRE(pairs_of(once) == pairs_of(twice));
    for (const auto& [_, c] : once.user_counts()) REQUIRE(c >= 5);
    for (const auto& [_, c] : once.item_counts()) REQUIRE(c >= 5);
    const auto input = pairs_of(log);
    for (const auto& p : pairs_of(once)) REQUIRE(input.contains(p));
    REQUIRE(pairs_of(once) == core_oracle(log, 5, seed ^ 0x5555));
  }
}

TEST_CASE("sequences are chronological with stable ties") {
  const InteractionLog log({{"u", ItemId("a"), 3, 1}, {"u", ItemId("b"), 1, 1}, {"u", ItemId("c"), 2, 1},
                            {"v", ItemId("x"), 7, 1}, {"v", ItemId("y"), 7, 1}, {"v", ItemId("w"), 7, 1}});
  const auto seqs = build_sequences(log);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs.at("u").items == std::vector<ItemId>{ItemId("b"), ItemId("c"), ItemId("a")});
  CHECK(seqs.at("v").items == std::vector<ItemId>{ItemId("x"), ItemId("y"), ItemId("w")});
}

TEST_CASE("prepared dataset restricts the catalog and keeps closure") {
  const auto catalog = testing::make_catalog(60);
  Dataset raw{testing::make_log(80, 60, 3, 20, 11), catalog, {}, {}};
  const auto prepared = prepare_dataset(raw);
  CHECK(prepared.raw == stats_of(raw.log));
  CHECK(prepared.filtered == stats_of(prepared.log));
  CHECK(prepared.catalog.size() == prepared.log.item_count());
  for (const auto& [user, seq] : build_sequences(prepared.log)) {
    std::set<ItemId> distinct(seq.items.begin(), seq.items.end());
    CHECK(distinct.size() == seq.items.size());
    for (const auto& id : seq.items) CHECK(prepared.catalog.contains(id));
  }
}

TEST_CASE("snapshot round-trip") {
  const auto catalog = testing::make_catalog(30);
  const auto log = dedupe(testing::make_log(20, 30, 5, 10, 4));
  std::stringstream buf;
  write_snapshot(buf, log, catalog);
  const auto back = read_snapshot(buf);
  CHECK(back.log.interactions() == log.interactions());
  REQUIRE(back.catalog.size() == catalog.size());
  for (const auto& [id, item] : catalog.items()) {
    CHECK(back.catalog.at(id).title == item.title);
    CHECK(back.catalog.at(id).attributes == item.attributes);
  }
  std::istringstream wrong("not-a-snapshot\n");
  CHECK_THROWS(read_snapshot(wrong));
}

TEST_CASE("catalog validation and title lookup") {
  ItemCatalog c;
  c.add(Item{ItemId("1"), "Heat (1995)", {"Action", "Action", "Crime"}});
  CHECK(c.at(ItemId("1")).attributes == std::vector<std::string>{"Action", "Crime"});
  CHECK_THROWS(c.add(Item{ItemId("1"), "Dup", {}}));
  CHECK_THROWS(c.add(Item{ItemId(""), "No id", {}}));
  CHECK_THROWS(c.add(Item{ItemId("2"), "  ", {}}));
  CHECK(c.lookup_title("  HEAT   (1995) ") == std::vector<ItemId>{ItemId("1")});
}
