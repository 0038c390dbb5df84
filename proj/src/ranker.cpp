#include "recrank/ranker.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <istream>
#include <ostream>
#include <iterator>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "recrank/io.hpp"
#include "recrank/text.hpp"

namespace recrank {

namespace {

using nlohmann::ordered_json;

std::string_view strip_marker(std::string_view s) {
  s = text::trim(s);
  if (!s.empty() && (s.front() == '-' || s.front() == '*')) return text::trim(s.substr(1));
  std::size_t digits = 0;
  while (digits < s.size() && s[digits] >= '0' && s[digits] <= '9') ++digits;
  if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) return text::trim(s.substr(digits + 1));
  return s;
}

struct PoolEntry {
  ItemId id;
  std::string title;      // normalized
  std::string rendering;  // normalized, without the outer quotes
};

std::vector<PoolEntry> make_pool(std::span<const ItemId> ids, const Renderer& renderer) {
  std::vector<PoolEntry> pool;
  pool.reserve(ids.size());
  for (const auto& id : ids) {
    const Item* item = renderer.catalog().find(id);
    if (item == nullptr) continue;
    pool.push_back({id, text::normalize_title(item->title), text::normalize_title(render_item(*item, renderer.style()))});
  }
  return pool;
}

// `ID (title)` or a bare id; returns the id part.
std::optional<std::string_view> embedded_id(std::string_view s) {
  s = text::trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = text::trim(s.substr(1, s.size() - 2));
  const auto stop = s.find_first_of(" (");
  if (stop == std::string_view::npos) return s.empty() ? std::nullopt : std::optional(s);
  const auto rest = text::trim(s.substr(stop));
  if (stop > 0 && rest.size() >= 2 && rest.front() == '(' && rest.back() == ')') return s.substr(0, stop);
  return std::nullopt;
}

double close_enough(std::string_view a, std::string_view b, double threshold) {
  const auto longest = std::max(a.size(), b.size());
  const auto gap = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
  // similarity <= 1 - gap / longest, so skip pairs that cannot reach the threshold.
  if (longest > 0 && 1.0 - static_cast<double>(gap) / static_cast<double>(longest) < threshold) return -1.0;
  return text::similarity(a, b);
}

Grounding ground_against(std::span<const std::string> raw, const std::vector<PoolEntry>& pool,
                         const Renderer& renderer, double threshold) {
  Grounding out;
  std::unordered_map<std::string_view, std::size_t> by_id;
  for (std::size_t i = 0; i < pool.size(); ++i) by_id.emplace(pool[i].id.value, i);
  std::unordered_set<ItemId> emitted;

  for (const auto& s : raw) {
    std::optional<std::size_t> match;
    if (renderer.style().mode == RenderStyle::Mode::IdAndTitle) {
      if (const auto id = embedded_id(s)) {
        if (const auto it = by_id.find(*id); it != by_id.end()) match = it->second;
      }
    }
    if (!match) {
      const auto norm = text::normalize_title(s);
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].title == norm || pool[i].rendering == norm) {
          match = i;
          break;
        }
      }
      if (!match && !norm.empty()) {
        double best = -1.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          const double sim = std::max(close_enough(norm, pool[i].title, threshold),
                                      close_enough(norm, pool[i].rendering, threshold));
          if (sim > best) {
            best = sim;
            if (sim >= threshold) match = i;
          }
        }
        if (best < threshold) match.reset();
      }
    }
    if (!match) {
      out.dropped.push_back(s);
      continue;
    }
    if (!emitted.insert(pool[*match].id).second) {
      ++out.duplicates;
      continue;
    }
    out.grounded.push_back(pool[*match].id);
  }
  return out;
}

}  // namespace

RankingPrompt build_ranking_prompt(const UserId& user, std::span<const ItemId> history, const UserProfile* profile,
                                   const CandidateSet& candidates, std::size_t k, const Renderer& renderer) {
  if (candidates.empty()) throw RankingError(fmt::format("user {}: no candidates to rank", user));
  if (k == 0) throw RankingError("ranking needs k >= 1");
  const Renderer phrasing(renderer.catalog(), renderer.style(), renderer.dataset(), k);
  if (history.size() > kMaxHistoryItems) history = history.subspan(history.size() - kMaxHistoryItems);

  RankingPrompt prompt;
  prompt.user = user;
  prompt.k = k;
  prompt.candidates = candidates;
  prompt.history_text = phrasing.history_sentence(history);
  if (profile != nullptr && !profile->keywords.empty()) {
    std::string joined;
    for (const auto& kw : profile->keywords) {
      std::string clean;
      std::copy_if(kw.begin(), kw.end(), std::back_inserter(clean), [](char c) { return c != '"'; });
      if (!joined.empty()) joined += ", ";
      joined += clean;
    }
    prompt.profile_text = fmt::format("The user's preferences are summarized as: {}.", joined);
  }
  const auto ids = candidates.items();
  prompt.rendered = phrasing.instruction(TaskKind::RecommendRetrieval);
  prompt.rendered += '\n';
  prompt.rendered += prompt.history_text;
  if (prompt.profile_text) prompt.rendered += ' ' + *prompt.profile_text;
  prompt.rendered += ' ';
  prompt.rendered += phrasing.candidates_sentence(ids);
  return prompt;
}

std::vector<std::string> parse_item_list(std::string_view content) {
  auto quoted = text::quoted_segments(content);
  if (!quoted.empty()) return quoted;
  std::vector<std::string> out;
  const bool multiline = content.find('\n') != std::string_view::npos;
  for (auto piece : text::split(content, multiline ? "\n" : ",")) {
    const auto entry = strip_marker(piece);
    if (!entry.empty()) out.emplace_back(entry);
  }
  return out;
}

Grounding ground(std::span<const std::string> raw, const CandidateSet& candidates, const Renderer& renderer,
                 double fuzzy_threshold) {
  const auto ids = candidates.items();
  return ground_against(raw, make_pool(ids, renderer), renderer, fuzzy_threshold);
}

Grounding ground_in_catalog(std::span<const std::string> raw, const Renderer& renderer, double fuzzy_threshold) {
  std::vector<ItemId> ids;
  ids.reserve(renderer.catalog().size());
  for (const auto& [id, _] : renderer.catalog().items()) ids.push_back(id);
  return ground_against(raw, make_pool(ids, renderer), renderer, fuzzy_threshold);
}

RankedList fill_to_k(const UserId& user, std::span<const ItemId> grounded, const CandidateSet& candidates,
                     std::size_t k) {
  RankedList out;
  out.user = user;
  out.pool = candidates.items();
  std::unordered_set<ItemId> present;
  for (const auto& id : grounded) {
    if (out.items.size() == k) break;
    if (present.insert(id).second) out.items.push_back(id);
  }
  for (const auto& e : candidates.entries) {
    if (out.items.size() >= k) break;
    if (!present.insert(e.item).second) continue;
    out.items.push_back(e.item);
    ++out.fill_count;
  }
  return out;
}

CandidateSet ModelCandidates::candidates(const UserSplit& split, std::size_t pool_size) const {
  const auto excluded = test_exclusions(split, policy_);
  return top_k(model_, test_query(split), pool_size, excluded);
}

CandidateSet ImportedCandidates::candidates(const UserSplit& split, std::size_t pool_size) const {
  CandidateSet out;
  out.user = split.user;
  out.source = CandidateSource::Imported;
  const auto it = rows_.find(split.user);
  if (it == rows_.end()) return out;
  const auto excluded_list = test_exclusions(split, policy_);
  const std::unordered_set<ItemId> excluded(excluded_list.begin(), excluded_list.end());
  for (const auto& e : it->second.entries) {
    if (out.entries.size() == pool_size) break;
    if (!excluded.contains(e.item)) out.entries.push_back(e);
  }
  return out;
}

RankOutcome rank_user(const UserSplit& split, const CandidateProvider& provider, LlmClient& client,
                      const RankerConfig& config, const Renderer& renderer, const UserProfile* profile) {
  RankOutcome out;
  auto& trace = out.trace;
  trace.user = split.user;
  const CandidateSet candidates = provider.candidates(split, config.pool_size);
  trace.candidates = candidates.items();
  try {
    const auto history = split.visible();
    const auto prompt = build_ranking_prompt(split.user, history, config.use_profile ? profile : nullptr,
                                             candidates, config.k, renderer);
    trace.prompt = prompt.rendered;
    const auto response = client.complete(CompletionRequest{split.user, prompt.rendered, config.params});
    trace.completion = response.text;
    trace.parsed = parse_item_list(response.text);
    auto grounding = config.scope == GroundingScope::Candidates
                               ? ground(trace.parsed, candidates, renderer, config.fuzzy_threshold)
                               : ground_in_catalog(trace.parsed, renderer, config.fuzzy_threshold);
    if (config.scope == GroundingScope::Catalog) {
      // Catalog-wide matches may name something the user already has.
      const auto seen = split.visible();
      std::erase_if(grounding.grounded, [&](const ItemId& id) {
        if (std::find(seen.begin(), seen.end(), id) == seen.end()) return false;
        grounding.dropped.push_back(renderer.catalog().at(id).title);
        return true;
      });
    }
    trace.grounded = grounding.grounded;
    trace.dropped = grounding.dropped;
    out.list = fill_to_k(split.user, grounding.grounded, candidates, config.k);
    out.list.dropped = grounding.dropped;
  } catch (const Error& e) {
    // LlmError or an empty candidate pool: keep the retrieval order.
    out.list = fill_to_k(split.user, {}, candidates, config.k);
    out.list.llm_failed = true;
    trace.failed = true;
    trace.error = e.what();
  }
  trace.fill_count = out.list.fill_count;
  return out;
}

std::map<UserId, RankOutcome> rank_users(const EvalSplit& split, const CandidateProvider& provider, LlmClient& client,
                                         const RankerConfig& config, const Renderer& renderer,
                                         const std::map<UserId, UserProfile>* profiles, std::size_t jobs,
                                         const std::set<UserId>* only) {
  std::vector<const UserSplit*> users;
  for (const auto& [user, s] : split.users) {
    if (only == nullptr || only->contains(user)) users.push_back(&s);
  }
  std::vector<RankOutcome> outcomes(users.size());
  io::parallel_for(users.size(), jobs, [&](std::size_t i) {
    const UserProfile* profile = nullptr;
    if (profiles != nullptr) {
      if (const auto it = profiles->find(users[i]->user); it != profiles->end()) profile = &it->second;
    }
    outcomes[i] = rank_user(*users[i], provider, client, config, renderer, profile);
  });
  std::map<UserId, RankOutcome> out;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    failures += outcomes[i].list.llm_failed ? 1 : 0;
    out.emplace(users[i]->user, std::move(outcomes[i]));
  }
  if (failures > 0) spdlog::warn("{} of {} users fell back to retrieval order", failures, users.size());
  return out;
}

namespace {
std::vector<std::string> ids_of(const std::vector<ItemId>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(id.value);
  return out;
}
}  // namespace

void write_traces(std::ostream& out, const std::map<UserId, RankOutcome>& outcomes) {
  for (const auto& [user, outcome] : outcomes) {
    const auto& t = outcome.trace;
    ordered_json record;
    record["user"] = user;
    record["candidates"] = ids_of(t.candidates);
    record["prompt"] = t.prompt;
    record["completion"] = t.completion;
    record["parsed"] = t.parsed;
    record["grounded"] = ids_of(t.grounded);
    record["dropped"] = t.dropped;
    record["fill_count"] = t.fill_count;
    record["failed"] = t.failed;
    if (t.failed) record["error"] = t.error;
    out << record.dump() << '\n';
  }
}

void write_ranked_lists(std::ostream& out, const std::map<UserId, RankOutcome>& outcomes) {
  for (const auto& [user, outcome] : outcomes) {
    const auto& l = outcome.list;
    ordered_json record;
    record["user"] = user;
    record["items"] = ids_of(l.items);
    record["fill_count"] = l.fill_count;
    record["dropped"] = l.dropped;
    record["llm_failed"] = l.llm_failed;
    record["pool"] = ids_of(l.pool);
    out << record.dump() << '\n';
  }
}

std::map<UserId, RankedList> read_ranked_lists(std::istream& in) {
  std::map<UserId, RankedList> out;
  std::string line;
  std::size_t number = 0;
  auto to_ids = [](const nlohmann::json& arr) {
    std::vector<ItemId> ids;
    for (const auto& v : arr) ids.emplace_back(v.get<std::string>());
    return ids;
  };
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    const auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.contains("user") || !record.contains("items")) {
      throw Error(fmt::format("ranked lists line {}: malformed record", number));
    }
    RankedList l;
    l.user = record["user"].get<UserId>();
    l.items = to_ids(record["items"]);
    l.fill_count = record.value("fill_count", std::size_t{0});
    l.dropped = record.value("dropped", std::vector<std::string>{});
    l.llm_failed = record.value("llm_failed", false);
    if (record.contains("pool")) l.pool = to_ids(record["pool"]);
    out[l.user] = std::move(l);
  }
  return out;
}

}  // namespace recrank
