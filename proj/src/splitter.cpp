#include "recrank/splitter.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "recrank/rng.hpp"

namespace recrank {

using nlohmann::json;

namespace {
constexpr std::string_view kManifestFormat = "recrank-split";
constexpr int kManifestVersion = 1;
constexpr std::string_view kSampler = "splitmix64/partial-fisher-yates";
}  // namespace

std::vector<ItemId> UserSplit::visible() const {
  std::vector<ItemId> out = train_prefix;
  out.push_back(validation);
  return out;
}

const UserSplit* EvalSplit::find(const UserId& user) const {
  const auto it = users.find(user);
  return it == users.end() ? nullptr : &it->second;
}

EvalSplit leave_one_out(const SequenceMap& sequences) {
  EvalSplit out;
  for (const auto& [user, seq] : sequences) {
    const auto n = seq.items.size();
    if (n < 3) {
      out.rejected.push_back({user, fmt::format("sequence has {} items; leave-one-out needs at least 3", n)});
      continue;
    }
    UserSplit s;
    s.user = user;
    s.train_prefix.assign(seq.items.begin(), seq.items.end() - 2);
    s.validation = seq.items[n - 2];
    s.test = seq.items[n - 1];
    out.users.emplace(user, std::move(s));
  }
  return out;
}

UserSample sample_users(std::vector<UserId> users, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw SampleError(fmt::format("sample fraction {} outside (0, 1]", fraction));
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  const auto n = users.size();
  const auto size = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  SplitMix64 rng(seed);
  // Partial Fisher-Yates: the first `size` slots are a uniform sample.
  for (std::size_t i = 0; i < size; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(users[i], users[j]);
  }
  UserSample out;
  out.seed = seed;
  out.fraction = fraction;
  out.selected.insert(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(size));
  return out;
}

void write_split_manifest(std::ostream& out, const EvalSplit& split, const UserSample& sample) {
  json users = json::array();
  for (const auto& [user, s] : split.users) {
    users.push_back({{"user", user},
                     {"train_len", s.train_prefix.size()},
                     {"validation", s.validation.value},
                     {"test", s.test.value}});
  }
  json rejected = json::array();
  for (const auto& r : split.rejected) rejected.push_back({{"user", r.user}, {"reason", r.reason}});
  const json manifest = {
      {"format", kManifestFormat},
      {"version", kManifestVersion},
      {"sample",
       {{"seed", sample.seed},
        {"fraction", sample.fraction},
        {"generator", kSampler},
        {"users", std::vector<UserId>(sample.selected.begin(), sample.selected.end())}}},
      {"users", std::move(users)},
      {"rejected", std::move(rejected)},
  };
  out << manifest.dump(1) << '\n';
}

SplitManifest read_split_manifest(std::istream& in, const SequenceMap& sequences) {
  const json manifest = json::parse(in, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || manifest.value("format", "") != kManifestFormat) {
    throw Error("split manifest: not a recrank-split file");
  }
  if (manifest.value("version", 0) != kManifestVersion) throw Error("split manifest: unsupported version");
  SplitManifest out;
  for (const auto& entry : manifest.at("users")) {
    const auto user = entry.at("user").get<UserId>();
    const auto it = sequences.find(user);
    if (it == sequences.end()) throw Error(fmt::format("split manifest: user {} not in snapshot", user));
    const auto& items = it->second.items;
    const auto train_len = entry.at("train_len").get<std::size_t>();
    if (items.size() != train_len + 2 || items[train_len].value != entry.at("validation").get<std::string>() ||
        items[train_len + 1].value != entry.at("test").get<std::string>()) {
      throw Error(fmt::format("split manifest: boundaries for user {} do not match the snapshot", user));
    }
    UserSplit s;
    s.user = user;
    s.train_prefix.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(train_len));
    s.validation = items[train_len];
    s.test = items[train_len + 1];
    out.split.users.emplace(user, std::move(s));
  }
  for (const auto& r : manifest.at("rejected")) {
    out.split.rejected.push_back({r.at("user").get<UserId>(), r.at("reason").get<std::string>()});
  }
  const auto& sample = manifest.at("sample");
  out.sample.seed = sample.at("seed").get<std::uint64_t>();
  out.sample.fraction = sample.at("fraction").get<double>();
  for (const auto& u : sample.at("users")) out.sample.selected.insert(u.get<UserId>());
  return out;
}

}  // namespace recrank
