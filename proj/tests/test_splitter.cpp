#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "recrank/splitter.hpp"
#include "support.hpp"

using namespace recrank;

namespace {
SequenceMap seqs(std::initializer_list<std::pair<const char*, std::vector<const char*>>> rows) {
  SequenceMap out;
  for (const auto& [user, items] : rows) {
    UserSequence s{user, {}};
    for (const char* i : items) s.items.emplace_back(i);
    out.emplace(user, std::move(s));
  }
  return out;
}
}  // namespace

TEST_CASE("leave-one-out boundaries") {
  const auto split = leave_one_out(seqs({{"u", {"a", "b", "c", "d", "e"}}, {"v", {"x", "y", "z"}}, {"w", {"p", "q"}}}));
  REQUIRE(split.users.size() == 2);
  const auto& u = split.users.at("u");
  CHECK(u.train_prefix == std::vector<ItemId>{ItemId("a"), ItemId("b"), ItemId("c")});
  CHECK(u.validation == ItemId("d"));
  CHECK(u.test == ItemId("e"));
  CHECK(u.visible() == std::vector<ItemId>{ItemId("a"), ItemId("b"), ItemId("c"), ItemId("d")});
  CHECK(split.users.at("v").train_prefix.size() == 1);
  REQUIRE(split.rejected.size() == 1);
  CHECK(split.rejected[0].user == "w");
  CHECK(split.find("w") == nullptr);
}

TEST_CASE("leave-one-out partitions every sequence") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto log = dedupe(testing::make_log(60, 40, 1, 25, seed));
    const auto sequences = build_sequences(log);
    const auto split = leave_one_out(sequences);
    CHECK(split.users.size() + split.rejected.size() == sequences.size());
    for (const auto& [user, seq] : sequences) {
      const auto* s = split.find(user);
      if (seq.items.size() < 3) {
        CHECK(s == nullptr);
        continue;
      }
      REQUIRE(s != nullptr);
      auto joined = s->train_prefix;
      joined.push_back(s->validation);
      joined.push_back(s->test);
      CHECK(joined == seq.items);
      const auto visible = s->visible();
      CHECK(std::find(visible.begin(), visible.end(), s->test) == visible.end());
    }
  }
}

TEST_CASE("user sample size, determinism and bounds") {
  std::vector<UserId> users;
  for (int i = 0; i < 1001; ++i) users.push_back("user" + std::to_string(i));
  const auto a = sample_users(users, 0.2, 7);
  const auto b = sample_users(users, 0.2, 7);
  const auto c = sample_users(users, 0.2, 8);
  CHECK(a.selected.size() == static_cast<std::size_t>(std::llround(0.2 * 1001)));
  CHECK(a.selected == b.selected);
  CHECK(a.selected != c.selected);
  for (const auto& u : a.selected) CHECK(std::find(users.begin(), users.end(), u) != users.end());
  // Input order does not matter, only the set of users.
  std::reverse(users.begin(), users.end());
  CHECK(sample_users(users, 0.2, 7).selected == a.selected);
  CHECK(sample_users(users, 1.0, 7).selected.size() == users.size());
  CHECK_THROWS_AS(sample_users(users, 0.0, 7), SampleError);
  CHECK_THROWS_AS(sample_users(users, 1.5, 7), SampleError);
}

TEST_CASE("split manifest round-trip and tamper check") {
  const auto w = testing::make_world(50, 40);
  std::vector<UserId> users;
  for (const auto& [u, _] : w.split.users) users.push_back(u);
  const auto sample = sample_users(users, 0.3, 11);
  std::stringstream buf;
  write_split_manifest(buf, w.split, sample);
  const std::string written = buf.str();

  std::istringstream in(written);
  const auto back = read_split_manifest(in, w.sequences);
  CHECK(back.sample.selected == sample.selected);
  CHECK(back.sample.seed == 11);
  REQUIRE(back.split.users.size() == w.split.users.size());
  for (const auto& [u, s] : w.split.users) {
    const auto& r = back.split.users.at(u);
    CHECK(r.train_prefix == s.train_prefix);
    CHECK(r.validation == s.validation);
    CHECK(r.test == s.test);
  }

  auto changed = w.sequences;
  auto& first = changed.begin()->second.items;
  std::swap(first[first.size() - 1], first[first.size() - 2]);
  std::istringstream again(written);
  CHECK_THROWS(read_split_manifest(again, changed));
}
