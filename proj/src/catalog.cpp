#include "recrank/catalog.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "json.hpp"
#include "recrank/text.hpp"

namespace recrank {

namespace {

using nlohmann::json;

constexpr std::size_t kKeptLineErrors = 20;
constexpr std::string_view kSnapshotMagic = "recrank-snapshot";
constexpr int kSnapshotVersion = 1;

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void record_error(ParseDiagnostics& diag, std::size_t line, std::string reason) {
  ++diag.malformed;
  if (diag.errors.size() < kKeptLineErrors) diag.errors.push_back({line, std::move(reason)});
}

void check_malformed_ratio(const ParseDiagnostics& diag, std::string_view source) {
  if (diag.malformed * 100 <= diag.lines) return;
  std::string summary = fmt::format("{}: {} of {} lines malformed (over 1%)", source,
                                    diag.malformed, diag.lines);
  for (const auto& e : diag.errors) summary += fmt::format("\n  line {}: {}", e.line, e.reason);
  throw ParseAbort(summary);
}

// Reads non-blank lines, stripping a trailing CR, and hands (line number, text)
// to `fn`.
template <typename Fn>
void for_each_line(std::istream& in, ParseDiagnostics& diag, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    ++diag.lines;
    fn(number, std::string_view(line));
  }
}

void add_placeholders(const InteractionLog& log, ItemCatalog& catalog, ParseDiagnostics& diag) {
  for (const auto& row : log.interactions()) {
    if (catalog.contains(row.item)) continue;
    catalog.add(Item{row.item, row.item.value, {}});
    ++diag.placeholder_items;
  }
  if (diag.placeholder_items > 0) {
    spdlog::warn("{} interacted items had no metadata; placeholder titles synthesized",
                 diag.placeholder_items);
  }
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Rewrites a Python literal (dict/list/str/number/True/False/None) as JSON.
// Returns false on an unterminated string.
bool python_literal_to_json(std::string_view src, std::string& out) {
  out.clear();
  std::size_t i = 0;
  auto hex_value = [&](std::size_t start, std::size_t digits, std::uint32_t& cp) {
    if (start + digits > src.size()) return false;
    cp = 0;
    for (std::size_t k = 0; k < digits; ++k) {
      const char c = src[start + k];
      cp <<= 4;
      if (c >= '0' && c <= '9') cp |= static_cast<std::uint32_t>(c - '0');
      else if (c >= 'a' && c <= 'f') cp |= static_cast<std::uint32_t>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') cp |= static_cast<std::uint32_t>(c - 'A' + 10);
      else return false;
    }
    return true;
  };
  while (i < src.size()) {
    const char c = src[i];
    if ((c == 'u' || c == 'b') && i + 1 < src.size() && (src[i + 1] == '\'' || src[i + 1] == '"') &&
        (i == 0 || !std::isalnum(static_cast<unsigned char>(src[i - 1])))) {
      ++i;
      continue;
    }
    if (c == '\'' || c == '"') {
      const char delim = c;
      std::string value;
      ++i;
      bool closed = false;
      while (i < src.size()) {
        const char d = src[i];
        if (d == delim) {
          closed = true;
          ++i;
          break;
        }
        if (d == '\\' && i + 1 < src.size()) {
          const char e = src[i + 1];
          std::uint32_t cp = 0;
          switch (e) {
            case 'n': value.push_back('\n'); i += 2; break;
            case 't': value.push_back('\t'); i += 2; break;
            case 'r': value.push_back('\r'); i += 2; break;
            case 'x':
              if (!hex_value(i + 2, 2, cp)) return false;
              append_utf8(value, cp);
              i += 4;
              break;
            case 'u':
              if (!hex_value(i + 2, 4, cp)) return false;
              append_utf8(value, cp);
              i += 6;
              break;
            default: value.push_back(e); i += 2;
          }
          continue;
        }
        value.push_back(d);
        ++i;
      }
      if (!closed) return false;
      out += json(text::latin1_fallback_to_utf8(value)).dump();
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isalnum(static_cast<unsigned char>(src[j]))) ++j;
      const auto word = src.substr(i, j - i);
      if (word == "True") out += "true";
      else if (word == "False") out += "false";
      else if (word == "None") out += "null";
      else out += word;
      i = j;
      continue;
    }
    out.push_back(c);
    ++i;
  }
  return true;
}

std::vector<std::string> category_leaves(const json& record) {
  std::vector<std::string> leaves;
  if (auto it = record.find("categories"); it != record.end() && it->is_array()) {
    for (const auto& path : *it) {
      if (path.is_array() && !path.empty() && path.back().is_string()) {
        leaves.push_back(path.back().get<std::string>());
      } else if (path.is_string()) {
        leaves.push_back(path.get<std::string>());
      }
    }
  } else if (auto cat = record.find("category"); cat != record.end() && cat->is_array() &&
                                                 !cat->empty() && cat->back().is_string()) {
    leaves.push_back(cat->back().get<std::string>());
  }
  return leaves;
}

}  // namespace

InteractionLog::InteractionLog(std::vector<Interaction> rows) : rows_(std::move(rows)) {
  for (const auto& row : rows_) {
    ++user_counts_[row.user];
    ++item_counts_[row.item];
  }
}

void ItemCatalog::add(Item item) {
  if (item.id.empty()) throw Error("item id must be non-empty");
  item.title = std::string(text::trim(item.title));
  if (item.title.empty()) throw Error(fmt::format("item {} has a blank title", item.id.value));
  if (items_.contains(item.id)) throw Error(fmt::format("duplicate item id {}", item.id.value));
  std::vector<std::string> attributes;
  std::unordered_set<std::string> seen;
  for (auto& a : item.attributes) {
    std::string tag(text::trim(a));
    if (tag.empty() || !seen.insert(tag).second) continue;
    attributes.push_back(std::move(tag));
  }
  item.attributes = std::move(attributes);
  by_title_[text::normalize_title(item.title)].push_back(item.id);
  const ItemId id = item.id;
  items_.emplace(id, std::move(item));
}

const Item* ItemCatalog::find(const ItemId& id) const {
  const auto it = items_.find(id);
  return it == items_.end() ? nullptr : &it->second;
}

const Item& ItemCatalog::at(const ItemId& id) const {
  if (const Item* item = find(id)) return *item;
  throw Error(fmt::format("item {} not in catalog", id.value));
}

std::vector<ItemId> ItemCatalog::lookup_title(std::string_view title) const {
  const auto it = by_title_.find(text::normalize_title(title));
  if (it == by_title_.end()) return {};
  return it->second;
}

Dataset parse_movielens(std::istream& ratings, std::istream& movies) {
  Dataset out;

  for_each_line(movies, out.items_diagnostics, [&](std::size_t number, std::string_view line) {
    const auto fields = text::split(line, "::");
    if (fields.size() < 3) {
      record_error(out.items_diagnostics, number, "expected MovieID::Title::Genres");
      return;
    }
    const std::string_view id = text::trim(fields.front());
    // A title containing "::" spans several fields.
    std::string title(fields[1]);
    for (std::size_t k = 2; k + 1 < fields.size(); ++k) title += "::" + std::string(fields[k]);
    title = text::latin1_fallback_to_utf8(text::trim(title));
    if (id.empty() || title.empty()) {
      record_error(out.items_diagnostics, number, "empty movie id or title");
      return;
    }
    Item item{ItemId(id), std::move(title), {}};
    const std::string genres = text::latin1_fallback_to_utf8(text::trim(fields.back()));
    if (!genres.empty()) {
      for (auto g : text::split(genres, "|")) item.attributes.emplace_back(g);
    }
    if (out.catalog.contains(item.id)) {
      record_error(out.items_diagnostics, number, fmt::format("duplicate movie id {}", id));
      return;
    }
    out.catalog.add(std::move(item));
  });
  check_malformed_ratio(out.items_diagnostics, "movies");

  std::vector<Interaction> rows;
  for_each_line(ratings, out.interactions_diagnostics, [&](std::size_t number, std::string_view line) {
    const auto fields = text::split(line, "::");
    if (fields.size() != 4) {
      record_error(out.interactions_diagnostics, number, "expected UserID::MovieID::Rating::Timestamp");
      return;
    }
    const auto user = text::trim(fields[0]);
    const auto item = text::trim(fields[1]);
    double rating = 0;
    std::int64_t ts = 0;
    if (user.empty() || item.empty() || !parse_double(fields[2], rating) || !parse_int(fields[3], ts) ||
        ts < 0) {
      record_error(out.interactions_diagnostics, number, "bad field value");
      return;
    }
    rows.push_back(Interaction{UserId(user), ItemId(item), ts, 1});
  });
  check_malformed_ratio(out.interactions_diagnostics, "ratings");

  out.log = InteractionLog(std::move(rows));
  add_placeholders(out.log, out.catalog, out.items_diagnostics);
  return out;
}

Dataset parse_amazon(std::istream& reviews, std::istream& meta) {
  Dataset out;

  std::string converted;
  for_each_line(meta, out.items_diagnostics, [&](std::size_t number, std::string_view line) {
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      if (python_literal_to_json(line, converted)) record = json::parse(converted, nullptr, false);
    }
    if (record.is_discarded() || !record.is_object()) {
      record_error(out.items_diagnostics, number, "not a JSON or Python-literal object");
      return;
    }
    const auto asin = record.find("asin");
    if (asin == record.end() || !asin->is_string() || asin->get<std::string>().empty()) {
      record_error(out.items_diagnostics, number, "missing asin");
      return;
    }
    ItemId id(asin->get<std::string>());
    if (out.catalog.contains(id)) return;
    std::string title;
    if (auto t = record.find("title"); t != record.end() && t->is_string()) {
      title = std::string(text::trim(t->get<std::string>()));
    }
    if (title.empty()) {
      title = id.value;
      ++out.items_diagnostics.placeholder_items;
    }
    out.catalog.add(Item{std::move(id), std::move(title), category_leaves(record)});
  });
  check_malformed_ratio(out.items_diagnostics, "metadata");

  std::vector<Interaction> rows;
  for_each_line(reviews, out.interactions_diagnostics, [&](std::size_t number, std::string_view line) {
    const json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      record_error(out.interactions_diagnostics, number, "not a JSON object");
      return;
    }
    const auto user = record.find("reviewerID");
    const auto asin = record.find("asin");
    const auto ts = record.find("unixReviewTime");
    if (user == record.end() || !user->is_string() || user->get<std::string>().empty() ||
        asin == record.end() || !asin->is_string() || asin->get<std::string>().empty()) {
      record_error(out.interactions_diagnostics, number, "missing reviewerID or asin");
      return;
    }
    if (ts == record.end() || !ts->is_number_integer() || ts->get<std::int64_t>() < 0) {
      record_error(out.interactions_diagnostics, number, "missing or invalid unixReviewTime");
      return;
    }
    rows.push_back(Interaction{user->get<std::string>(), ItemId(asin->get<std::string>()),
                               ts->get<std::int64_t>(), 1});
  });
  check_malformed_ratio(out.interactions_diagnostics, "reviews");

  out.log = InteractionLog(std::move(rows));
  add_placeholders(out.log, out.catalog, out.items_diagnostics);
  return out;
}

InteractionLog dedupe(const InteractionLog& log) {
  const auto& rows = log.interactions();
  std::unordered_map<std::string, std::size_t> best;
  best.reserve(rows.size());
  std::string key;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    key.assign(rows[i].user);
    key.push_back('\x1f');
    key.append(rows[i].item.value);
    auto [it, inserted] = best.try_emplace(key, i);
    if (!inserted && rows[i].timestamp < rows[it->second].timestamp) it->second = i;
  }
  std::vector<bool> keep(rows.size(), false);
  for (const auto& [_, index] : best) keep[index] = true;
  std::vector<Interaction> out;
  out.reserve(best.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (keep[i]) out.push_back(rows[i]);
  }
  return InteractionLog(std::move(out));
}

InteractionLog five_core_filter(const InteractionLog& log, std::size_t min_count) {
  const auto& rows = log.interactions();
  std::unordered_map<std::string_view, std::uint32_t> user_ids;
  std::unordered_map<std::string_view, std::uint32_t> item_ids;
  std::vector<std::uint32_t> row_user(rows.size());
  std::vector<std::uint32_t> row_item(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    row_user[i] = user_ids.try_emplace(rows[i].user, static_cast<std::uint32_t>(user_ids.size())).first->second;
    row_item[i] = item_ids.try_emplace(rows[i].item.value, static_cast<std::uint32_t>(item_ids.size())).first->second;
  }
  std::vector<bool> user_alive(user_ids.size(), true);
  std::vector<bool> item_alive(item_ids.size(), true);
  std::vector<std::size_t> user_count(user_ids.size());
  std::vector<std::size_t> item_count(item_ids.size());

  auto alive = [&](std::size_t i) { return user_alive[row_user[i]] && item_alive[row_item[i]]; };

  while (true) {
    bool removed = false;
    std::fill(user_count.begin(), user_count.end(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alive(i)) ++user_count[row_user[i]];
    }
    for (std::size_t u = 0; u < user_alive.size(); ++u) {
      if (user_alive[u] && user_count[u] < min_count) {
        user_alive[u] = false;
        removed = true;
      }
    }
    std::fill(item_count.begin(), item_count.end(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alive(i)) ++item_count[row_item[i]];
    }
    for (std::size_t it = 0; it < item_alive.size(); ++it) {
      if (item_alive[it] && item_count[it] < min_count) {
        item_alive[it] = false;
        removed = true;
      }
    }
    if (!removed) break;
  }

  std::vector<Interaction> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (alive(i)) out.push_back(rows[i]);
  }
  if (out.empty() && !rows.empty()) {
    spdlog::warn("{}-core filter removed every interaction; the dataset is too sparse", min_count);
  }
  return InteractionLog(std::move(out));
}

SequenceMap build_sequences(const InteractionLog& log) {
  std::map<UserId, std::vector<const Interaction*>> grouped;
  for (const auto& row : log.interactions()) grouped[row.user].push_back(&row);
  SequenceMap out;
  for (auto& [user, rows] : grouped) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Interaction* a, const Interaction* b) { return a->timestamp < b->timestamp; });
    UserSequence seq{user, {}};
    seq.items.reserve(rows.size());
    for (const auto* row : rows) seq.items.push_back(row->item);
    out.emplace(user, std::move(seq));
  }
  return out;
}

DatasetStats stats_of(const InteractionLog& log) {
  return DatasetStats{log.user_count(), log.item_count(), log.size()};
}

PreparedDataset prepare_dataset(const Dataset& raw, std::size_t min_count) {
  PreparedDataset out;
  out.raw = stats_of(raw.log);
  out.log = five_core_filter(dedupe(raw.log), min_count);
  out.filtered = stats_of(out.log);
  std::vector<ItemId> kept;
  kept.reserve(out.log.item_counts().size());
  for (const auto& [id, _] : out.log.item_counts()) kept.push_back(id);
  out.catalog = raw.catalog.restricted_to(kept);
  return out;
}

void write_snapshot(std::ostream& out, const InteractionLog& log, const ItemCatalog& catalog) {
  out << kSnapshotMagic << '\t' << kSnapshotVersion << '\n';
  out << "counts\t" << log.user_count() << '\t' << catalog.size() << '\t' << log.size() << '\n';
  for (const auto& [id, item] : catalog.items()) {
    out << "I\t" << text::escape_field(id.value) << '\t' << text::escape_field(item.title);
    for (const auto& a : item.attributes) out << '\t' << text::escape_field(a);
    out << '\n';
  }
  for (const auto& row : log.interactions()) {
    out << "X\t" << text::escape_field(row.user) << '\t' << text::escape_field(row.item.value) << '\t'
        << row.timestamp << '\n';
  }
}

Snapshot read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("snapshot: empty file");
  const auto header = text::split(line, "\t");
  int version = 0;
  if (header.size() != 2 || header[0] != kSnapshotMagic || !parse_int(header[1], version)) {
    throw Error("snapshot: bad header");
  }
  if (version != kSnapshotVersion) throw Error(fmt::format("snapshot: unsupported version {}", version));
  if (!std::getline(in, line)) throw Error("snapshot: missing counts");
  const auto counts = text::split(line, "\t");
  std::size_t users = 0, items = 0, interactions = 0;
  if (counts.size() != 4 || counts[0] != "counts" || !parse_int(counts[1], users) ||
      !parse_int(counts[2], items) || !parse_int(counts[3], interactions)) {
    throw Error("snapshot: bad counts line");
  }
  Snapshot snap;
  std::vector<Interaction> rows;
  rows.reserve(interactions);
  std::size_t number = 2;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto fields = text::split(line, "\t");
    if (fields[0] == "I" && fields.size() >= 3) {
      Item item{ItemId(text::unescape_field(fields[1])), text::unescape_field(fields[2]), {}};
      for (std::size_t k = 3; k < fields.size(); ++k) item.attributes.push_back(text::unescape_field(fields[k]));
      snap.catalog.add(std::move(item));
    } else if (fields[0] == "X" && fields.size() == 4) {
      std::int64_t ts = 0;
      if (!parse_int(fields[3], ts)) throw Error(fmt::format("snapshot: bad timestamp on line {}", number));
      rows.push_back(Interaction{text::unescape_field(fields[1]), ItemId(text::unescape_field(fields[2])), ts, 1});
    } else {
      throw Error(fmt::format("snapshot: unrecognized line {}", number));
    }
  }
  snap.log = InteractionLog(std::move(rows));
  if (snap.log.user_count() != users || snap.catalog.size() != items || snap.log.size() != interactions) {
    throw Error("snapshot: counts do not match contents");
  }
  for (const auto& [id, _] : snap.log.item_counts()) {
    if (!snap.catalog.contains(id)) throw Error(fmt::format("snapshot: item {} missing from catalog", id.value));
  }
  return snap;
}

}  // namespace recrank
