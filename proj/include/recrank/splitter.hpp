#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "recrank/catalog.hpp"

namespace recrank {

struct UserSplit {
  UserId user;
  std::vector<ItemId> train_prefix;
  ItemId validation;
  ItemId test;

  // train_prefix followed by the validation item; never contains the test item.
  std::vector<ItemId> visible() const;
};

struct RejectedUser {
  UserId user;
  std::string reason;
};

struct EvalSplit {
  std::map<UserId, UserSplit> users;
  std::vector<RejectedUser> rejected;

  const UserSplit* find(const UserId& user) const;
};

// Last item -> test, second-to-last -> validation, rest -> train prefix.
// Users with fewer than three items are rejected with a reason.
EvalSplit leave_one_out(const SequenceMap& sequences);

struct UserSample {
  std::set<UserId> selected;
  std::uint64_t seed = 0;
  double fraction = 1.0;

  bool contains(const UserId& user) const { return selected.contains(user); }
};

class SampleError : public Error {
 public:
  using Error::Error;
};

// Deterministic subset of size round(fraction * n) drawn over the sorted user
// list with SplitMix64(seed), so input order does not matter.
UserSample sample_users(std::vector<UserId> users, double fraction, std::uint64_t seed);

// Split manifest (JSON): seed, fraction, sampled users and per-user boundaries.
void write_split_manifest(std::ostream& out, const EvalSplit& split, const UserSample& sample);

struct SplitManifest {
  EvalSplit split;
  UserSample sample;
};

// Rebuilds the split from the manifest boundaries against `sequences`, and
// verifies that the recorded validation/test ids still match.
SplitManifest read_split_manifest(std::istream& in, const SequenceMap& sequences);

}  // namespace recrank
