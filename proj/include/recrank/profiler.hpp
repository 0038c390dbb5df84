#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recrank/catalog.hpp"
#include "recrank/instructgen.hpp"
#include "recrank/llm_client.hpp"

namespace recrank {

struct UserProfile {
  UserId user;
  std::vector<std::string> keywords;
  std::string raw_text;
};

class EmptyProfile : public Error {
 public:
  using Error::Error;
};

// Last max_items items with their keywords plus the summarization request.
std::string build_profile_prompt(const UserSequence& seq, const ItemCatalog& catalog,
                                 std::size_t max_items, DatasetKind dataset);

// Comma- or newline-separated phrases, trimmed, deduplicated case-insensitively.
std::vector<std::string> parse_profile_keywords(std::string_view completion);

UserProfile generate_profile(const UserId& user, const std::string& prompt, LlmClient& client,
                             const GenerationParams& params = {});

void write_profiles(std::ostream& out, std::span<const UserProfile> profiles);
std::map<UserId, UserProfile> read_profiles(std::istream& in);

}  // namespace recrank
