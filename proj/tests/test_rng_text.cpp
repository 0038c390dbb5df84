#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "recrank/rng.hpp"
#include "recrank/text.hpp"

using namespace recrank;

TEST_CASE("splitmix64 reference stream") {
  SplitMix64 rng(1234567);
  CHECK(rng() == 6457827717110365317ULL);
  CHECK(rng() == 3203168211198807973ULL);
  CHECK(rng() == 9817491932198370423ULL);
}

TEST_CASE("uniform_below stays in range and covers it") {
  SplitMix64 rng(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = uniform_below(rng, 7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK(uniform_below(rng, 1) == 0);
}

TEST_CASE("uniform_unit is in [0, 1)") {
  SplitMix64 rng(5);
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = uniform_unit(rng);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("shuffle permutes and is seed-determined") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  SplitMix64 r1(77), r2(77);
  shuffle(std::span<int>(a), r1);
  shuffle(std::span<int>(b), r2);
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK_FALSE(std::is_sorted(a.begin(), a.end()));
}

TEST_CASE("derive_seed separates keys") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(derive_seed(7, "user" + std::to_string(i)));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(7, "x") == derive_seed(7, "x"));
  CHECK(derive_seed(7, "x") != derive_seed(8, "x"));
}

TEST_CASE("trim and split") {
  CHECK(text::trim("  a b \t\n") == "a b");
  CHECK(text::trim("   ").empty());
  const auto parts = text::split("a::b::::c", "::");
  REQUIRE(parts.size() == 4);
  CHECK(parts[0] == "a");
  CHECK(parts[2].empty());
  CHECK(parts[3] == "c");
}

TEST_CASE("normalize_title") {
  CHECK(text::normalize_title("  \"Toy   Story (1995)\" ") == "toy story (1995)");
  CHECK(text::normalize_title("\xE2\x80\x9CHeat (1995)\xE2\x80\x9D") == "heat (1995)");
  CHECK(text::normalize_title("ABC") == "abc");
}

TEST_CASE("edit distance and similarity") {
  CHECK(text::edit_distance("kitten", "sitting") == 3);
  CHECK(text::edit_distance("", "abc") == 3);
  CHECK(text::edit_distance("flaw", "lawn") == 2);
  CHECK(text::similarity("", "") == 1.0);
  CHECK(text::similarity("abcd", "abce") == doctest::Approx(0.75));
}

TEST_CASE("quote round-trips through quoted_segments") {
  const std::vector<std::string> titles = {"plain", "with \"inner\" quotes", "comma, inside", "\"\"", "x"};
  std::string joined;
  for (const auto& t : titles) {
    if (!joined.empty()) joined += ", ";
    joined += text::quote(t);
  }
  CHECK(text::quoted_segments(joined) == titles);
  CHECK(text::quoted_spans(joined).size() == titles.size());
  CHECK(text::quoted_segments("\xE2\x80\x9C" "curly" "\xE2\x80\x9D and \"straight\"") ==
        std::vector<std::string>{"curly", "straight"});
  CHECK(text::quoted_segments("no quotes here").empty());
}

TEST_CASE("utf8 validation and latin-1 fallback") {
  CHECK(text::is_valid_utf8("caf\xC3\xA9"));
  CHECK_FALSE(text::is_valid_utf8("caf\xE9"));
  CHECK_FALSE(text::is_valid_utf8("\xC3"));
  CHECK(text::latin1_fallback_to_utf8("caf\xE9") == "caf\xC3\xA9");
  CHECK(text::latin1_fallback_to_utf8("caf\xC3\xA9") == "caf\xC3\xA9");
}

TEST_CASE("sha256 known vectors") {
  CHECK(text::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(text::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("field escaping round-trips") {
  const std::string raw = "a\tb\nc\\d\re";
  const auto escaped = text::escape_field(raw);
  CHECK(escaped.find('\t') == std::string::npos);
  CHECK(escaped.find('\n') == std::string::npos);
  CHECK(text::unescape_field(escaped) == raw);
}
