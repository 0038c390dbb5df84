#include <sstream>

#include "doctest.h"
#include "recrank/profiler.hpp"
#include "support.hpp"

using namespace recrank;

TEST_CASE("profile prompt lists the last items with attributes") {
  ItemCatalog c;
  c.add(Item{ItemId("1"), "Toy Story (1995)", {"Animation", "Comedy"}});
  c.add(Item{ItemId("2"), "Heat (1995)", {"Action"}});
  c.add(Item{ItemId("3"), "Casino (1995)", {}});
  const UserSequence seq{"u", {ItemId("1"), ItemId("2"), ItemId("3")}};
  const auto prompt = build_profile_prompt(seq, c, 2, DatasetKind::MovieLens);
  CHECK(prompt.find("Toy Story") == std::string::npos);
  CHECK(prompt.find("- \"Heat (1995)\" [Action]\n") != std::string::npos);
  CHECK(prompt.find("- \"Casino (1995)\"\n") != std::string::npos);
  CHECK(prompt.find("comma-separated") != std::string::npos);
}

TEST_CASE("profile keywords from lists, commas and markers") {
  CHECK(parse_profile_keywords("action thrillers, Heist films, action Thrillers.") ==
        std::vector<std::string>{"action thrillers", "Heist films"});
  CHECK(parse_profile_keywords("1. crime dramas\n2) \"noir\"\n- 90s cinema\n* comedy\n\xE2\x80\xA2 romance") ==
        std::vector<std::string>{"crime dramas", "noir", "90s cinema", "comedy", "romance"});
  CHECK(parse_profile_keywords("  \n , ").empty());
}

TEST_CASE("empty profile completions are errors") {
  ScriptedClient client({{"u", " , \n"}, {"v", "sci-fi"}});
  CHECK_THROWS_AS(generate_profile("u", "p", client), EmptyProfile);
  CHECK(generate_profile("v", "p", client).keywords == std::vector<std::string>{"sci-fi"});
}

TEST_CASE("profiles round-trip") {
  const std::vector<UserProfile> profiles = {{"a", {"x", "y"}, "x, y"}, {"b", {"z"}, "z"}};
  std::stringstream buf;
  write_profiles(buf, profiles);
  const auto back = read_profiles(buf);
  REQUIRE(back.size() == 2);
  CHECK(back.at("a").keywords == profiles[0].keywords);
  CHECK(back.at("b").raw_text == "z");
}
