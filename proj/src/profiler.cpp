#include "recrank/profiler.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "json.hpp"
#include "recrank/text.hpp"

namespace recrank {

namespace {

std::string_view strip_list_marker(std::string_view s) {
  s = text::trim(s);
  if (s.starts_with("\xE2\x80\xA2")) return text::trim(s.substr(3));  // U+2022 bullet
  if (!s.empty() && (s.front() == '-' || s.front() == '*')) return text::trim(s.substr(1));
  std::size_t digits = 0;
  while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
  if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) {
    return text::trim(s.substr(digits + 1));
  }
  return s;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string build_profile_prompt(const UserSequence& seq, const ItemCatalog& catalog, std::size_t max_items,
                                 DatasetKind dataset) {
  const bool movies = dataset == DatasetKind::MovieLens;
  const auto style = RenderStyle::for_dataset(dataset);
  std::string prompt = movies ? "Here are the movies a user has watched, each followed by its genres:\n"
                              : "Here are the products a user has purchased, each followed by its categories:\n";
  const auto n = seq.items.size();
  const auto first = n > max_items ? n - max_items : 0;
  for (std::size_t i = first; i < n; ++i) {
    const Item& item = catalog.at(seq.items[i]);
    prompt += "- " + render_item(item, style);
    if (!item.attributes.empty()) {
      prompt += " [";
      for (std::size_t a = 0; a < item.attributes.size(); ++a) {
        if (a > 0) prompt += ", ";
        prompt += item.attributes[a];
      }
      prompt += "]";
    }
    prompt += '\n';
  }
  prompt +=
      "Summarize this user's preferences as a short, comma-separated list of keyword phrases "
      "describing the kinds of ";
  prompt += movies ? "movies they enjoy." : "products they like.";
  return prompt;
}

std::vector<std::string> parse_profile_keywords(std::string_view completion) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto line : text::split(completion, "\n")) {
    for (auto piece : text::split(line, ",")) {
      auto phrase = strip_list_marker(piece);
      while (!phrase.empty() && phrase.back() == '.') phrase = text::trim(phrase.substr(0, phrase.size() - 1));
      if (phrase.size() >= 2 && phrase.front() == '"' && phrase.back() == '"') {
        phrase = text::trim(phrase.substr(1, phrase.size() - 2));
      }
      if (phrase.empty()) continue;
      if (!seen.insert(lower_ascii(phrase)).second) continue;
      out.emplace_back(phrase);
    }
  }
  return out;
}

UserProfile generate_profile(const UserId& user, const std::string& prompt, LlmClient& client,
                             const GenerationParams& params) {
  const auto response = client.complete(CompletionRequest{user, prompt, params});
  UserProfile profile{user, parse_profile_keywords(response.text), response.text};
  if (profile.keywords.empty()) throw EmptyProfile(fmt::format("empty profile completion for user {}", user));
  return profile;
}

void write_profiles(std::ostream& out, std::span<const UserProfile> profiles) {
  for (const auto& p : profiles) {
    nlohmann::ordered_json record;
    record["user"] = p.user;
    record["keywords"] = p.keywords;
    record["raw_text"] = p.raw_text;
    out << record.dump() << '\n';
  }
}

std::map<UserId, UserProfile> read_profiles(std::istream& in) {
  std::map<UserId, UserProfile> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    const auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.contains("user") || !record.contains("keywords")) {
      throw Error(fmt::format("profiles line {}: expected {{user, keywords, raw_text}}", number));
    }
    UserProfile p{record["user"].get<UserId>(), record["keywords"].get<std::vector<std::string>>(),
                  record.value("raw_text", "")};
    out[p.user] = std::move(p);
  }
  return out;
}

}  // namespace recrank
