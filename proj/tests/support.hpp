#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "recrank/catalog.hpp"
#include "recrank/rng.hpp"
#include "recrank/splitter.hpp"

namespace recrank::testing {

// Titles are unique; a few carry quotes and commas to exercise rendering.
inline ItemCatalog make_catalog(std::size_t n_items, std::uint64_t seed = 1) {
  static const char* kGenres[] = {"Drama", "Comedy", "Action", "Horror", "Romance", "Sci-Fi"};
  SplitMix64 rng(seed);
  ItemCatalog catalog;
  for (std::size_t i = 0; i < n_items; ++i) {
    Item item;
    item.id = ItemId(std::to_string(100 + i));
    switch (i % 7) {
      case 3: item.title = "The \"Quoted\" Film " + std::to_string(i); break;
      case 5: item.title = "Love, Actually " + std::to_string(i); break;
      default: item.title = "Movie " + std::to_string(i) + " (19" + std::to_string(50 + i % 50) + ")";
    }
    item.attributes = {kGenres[uniform_below(rng, 6)], kGenres[uniform_below(rng, 6)]};
    catalog.add(std::move(item));
  }
  return catalog;
}

// Users draw items with a skew toward low ids so popularity and
// co-occurrence carry some signal.
inline InteractionLog make_log(std::size_t n_users, std::size_t n_items, std::size_t min_len, std::size_t max_len,
                               std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Interaction> rows;
  for (std::size_t u = 0; u < n_users; ++u) {
    const auto len = min_len + uniform_below(rng, max_len - min_len + 1);
    const auto home = uniform_below(rng, n_items);
    for (std::size_t j = 0; j < len; ++j) {
      std::size_t item;
      const double r = uniform_unit(rng);
      if (r < 0.4) item = uniform_below(rng, std::max<std::size_t>(1, n_items / 10));
      else if (r < 0.7) item = (home + uniform_below(rng, 8)) % n_items;
      else item = uniform_below(rng, n_items);
      rows.push_back({"u" + std::to_string(1000 + u), ItemId(std::to_string(100 + item)),
                      static_cast<std::int64_t>(1000 * j + uniform_below(rng, 900)), 1});
    }
  }
  return InteractionLog(std::move(rows));
}

// Perturbs a string with a few random byte edits.
inline std::string mutate(std::string s, SplitMix64& rng, int edits) {
  for (int e = 0; e < edits && !s.empty(); ++e) {
    const auto pos = uniform_below(rng, s.size());
    switch (uniform_below(rng, 3)) {
      case 0: s[pos] = static_cast<char>('a' + uniform_below(rng, 26)); break;
      case 1: s.erase(pos, 1); break;
      default: s.insert(pos, 1, static_cast<char>('a' + uniform_below(rng, 26)));
    }
  }
  return s;
}

struct World {
  ItemCatalog catalog;
  InteractionLog log;
  SequenceMap sequences;
  EvalSplit split;
};

inline World make_world(std::size_t n_users, std::size_t n_items, std::uint64_t seed = 3) {
  World w;
  w.catalog = make_catalog(n_items, seed);
  w.log = dedupe(make_log(n_users, n_items, 6, 30, seed));
  w.sequences = build_sequences(w.log);
  w.split = leave_one_out(w.sequences);
  return w;
}

// MovieLens-format ratings.dat / movies.dat built from make_catalog and
// make_log, with the user ids stripped of their prefix.
inline void write_movielens_files(const std::filesystem::path& dir, std::size_t n_users, std::size_t n_items,
                                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto catalog = make_catalog(n_items, seed);
  std::ofstream movies(dir / "movies.dat");
  for (const auto& [id, item] : catalog.items()) {
    std::string genres;
    for (const auto& a : item.attributes) genres += (genres.empty() ? "" : "|") + a;
    movies << id.value << "::" << item.title << "::" << genres << "\n";
  }
  std::ofstream ratings(dir / "ratings.dat");
  const auto log = make_log(n_users, n_items, 6, 30, seed);
  for (const auto& r : log.interactions()) {
    ratings << r.user.substr(1) << "::" << r.item.value << "::" << 3 << "::" << 978300000 + r.timestamp << "\n";
  }
}

// Temporary directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("recrank-{}-{}", tag, std::hash<std::string>{}(tag + std::to_string(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace recrank::testing
