#include "recrank/retrieval.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "recrank/rng.hpp"
#include "recrank/text.hpp"

namespace recrank {

namespace {

constexpr std::string_view kModelMagic = "recrank-bprmf";
constexpr int kModelVersion = 1;

bool parse_double(std::string_view s, double& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<double> train_frequency(std::size_t n_items, const TrainSet& train) {
  std::vector<double> freq(n_items, 0.0);
  for (const auto& items : train.items) {
    for (auto i : items) freq[i] += 1.0;
  }
  return freq;
}

}  // namespace

std::string_view to_string(CandidateSource source) {
  switch (source) {
    case CandidateSource::BprMf: return "bprmf";
    case CandidateSource::Cooc: return "cooc";
    case CandidateSource::Popularity: return "popularity";
    case CandidateSource::Imported: return "imported";
  }
  return "unknown";
}

CandidateSource parse_candidate_source(std::string_view name) {
  if (name == "bprmf") return CandidateSource::BprMf;
  if (name == "cooc") return CandidateSource::Cooc;
  if (name == "popularity") return CandidateSource::Popularity;
  if (name == "imported") return CandidateSource::Imported;
  throw Error(fmt::format("unknown retrieval model '{}'", name));
}

std::vector<ItemId> CandidateSet::items() const {
  std::vector<ItemId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.item);
  return out;
}

bool CandidateSet::contains(const ItemId& item) const {
  return std::any_of(entries.begin(), entries.end(), [&](const ScoredItem& e) { return e.item == item; });
}

ItemUniverse::ItemUniverse(std::vector<ItemId> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], static_cast<std::uint32_t>(i));
}

std::shared_ptr<const ItemUniverse> ItemUniverse::from_catalog(const ItemCatalog& catalog) {
  std::vector<ItemId> ids;
  ids.reserve(catalog.size());
  for (const auto& [id, _] : catalog.items()) ids.push_back(id);
  return std::make_shared<const ItemUniverse>(std::move(ids));
}

std::optional<std::uint32_t> ItemUniverse::index_of(const ItemId& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t TrainSet::interactions() const {
  std::size_t n = 0;
  for (const auto& v : items) n += v.size();
  return n;
}

TrainSet make_train_set(const std::map<UserId, std::vector<ItemId>>& histories, const ItemUniverse& universe) {
  TrainSet out;
  out.users.reserve(histories.size());
  out.items.reserve(histories.size());
  for (const auto& [user, items] : histories) {
    std::vector<std::uint32_t> indices;
    indices.reserve(items.size());
    std::unordered_set<std::uint32_t> seen;
    for (const auto& item : items) {
      const auto index = universe.index_of(item);
      if (!index) throw Error(fmt::format("training item {} of user {} not in the item universe", item.value, user));
      if (seen.insert(*index).second) indices.push_back(*index);
    }
    out.users.push_back(user);
    out.items.push_back(std::move(indices));
  }
  return out;
}

TrainSet make_train_set(const EvalSplit& split, const ItemUniverse& universe) {
  std::map<UserId, std::vector<ItemId>> histories;
  for (const auto& [user, s] : split.users) histories.emplace(user, s.train_prefix);
  return make_train_set(histories, universe);
}

// ---------------------------------------------------------------------------
// Popularity

PopularityModel::PopularityModel(std::shared_ptr<const ItemUniverse> universe, std::vector<double> frequency)
    : universe_(std::move(universe)), frequency_(std::move(frequency)) {
  if (frequency_.size() != universe_->size()) throw Error("popularity vector does not match the universe");
}

PopularityModel PopularityModel::train(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train) {
  auto freq = train_frequency(universe->size(), train);
  return PopularityModel(std::move(universe), std::move(freq));
}

ScoreVector PopularityModel::score(const UserQuery&) const { return ScoreVector{frequency_, false}; }

// ---------------------------------------------------------------------------
// Co-occurrence

CoocModel::CoocModel(std::shared_ptr<const ItemUniverse> universe, std::vector<Row> rows,
                     std::vector<std::uint32_t> frequency)
    : universe_(std::move(universe)), rows_(std::move(rows)), frequency_(std::move(frequency)) {
  if (rows_.size() != universe_->size() || frequency_.size() != universe_->size()) {
    throw Error("co-occurrence rows do not match the universe");
  }
}

std::uint32_t CoocModel::count(std::uint32_t a, std::uint32_t b) const {
  const auto& row = rows_[a];
  const auto it = std::lower_bound(row.begin(), row.end(), b,
                                   [](const auto& entry, std::uint32_t key) { return entry.first < key; });
  return it != row.end() && it->first == b ? it->second : 0;
}

std::uint32_t CoocModel::count(const ItemId& a, const ItemId& b) const {
  const auto ia = universe_->index_of(a);
  const auto ib = universe_->index_of(b);
  if (!ia || !ib) return 0;
  return count(*ia, *ib);
}

std::uint32_t CoocModel::frequency(const ItemId& item) const {
  const auto index = universe_->index_of(item);
  return index ? frequency_[*index] : 0;
}

ScoreVector CoocModel::score(const UserQuery& query) const {
  ScoreVector out{std::vector<double>(universe_->size(), 0.0), false};
  std::unordered_set<std::uint32_t> seen;
  for (const auto& item : query.history) {
    const auto h = universe_->index_of(item);
    if (!h || !seen.insert(*h).second) continue;
    for (const auto& [other, c] : rows_[*h]) out.values[other] += c;
  }
  return out;
}

CoocModel train_cooc(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train) {
  const std::size_t n = universe->size();
  std::vector<std::vector<std::uint32_t>> item_users(n);
  for (std::size_t u = 0; u < train.items.size(); ++u) {
    for (auto i : train.items[u]) item_users[i].push_back(static_cast<std::uint32_t>(u));
  }
  std::vector<CoocModel::Row> rows(n);
  std::vector<std::uint32_t> frequency(n);
  std::vector<std::uint32_t> counts(n, 0);
  std::vector<std::uint32_t> touched;
  for (std::uint32_t a = 0; a < n; ++a) {
    frequency[a] = static_cast<std::uint32_t>(item_users[a].size());
    touched.clear();
    for (auto u : item_users[a]) {
      for (auto b : train.items[u]) {
        if (b == a) continue;
        if (counts[b]++ == 0) touched.push_back(b);
      }
    }
    std::sort(touched.begin(), touched.end());
    auto& row = rows[a];
    row.reserve(touched.size());
    for (auto b : touched) {
      row.emplace_back(b, counts[b]);
      counts[b] = 0;
    }
  }
  return CoocModel(std::move(universe), std::move(rows), std::move(frequency));
}

// ---------------------------------------------------------------------------
// BPR-MF

BprMfModel::BprMfModel(std::shared_ptr<const ItemUniverse> universe, BprHyperparams hp, std::vector<UserId> users,
                       std::vector<double> user_factors, std::vector<double> item_factors,
                       std::vector<double> item_bias, std::vector<double> popularity)
    : universe_(std::move(universe)),
      hp_(hp),
      users_(std::move(users)),
      user_factors_(std::move(user_factors)),
      item_factors_(std::move(item_factors)),
      item_bias_(std::move(item_bias)),
      popularity_(std::move(popularity)) {
  const std::size_t n_items = universe_->size();
  if (hp_.dim == 0 || user_factors_.size() != users_.size() * hp_.dim ||
      item_factors_.size() != n_items * hp_.dim || item_bias_.size() != n_items ||
      popularity_.size() != n_items) {
    throw Error("BPR-MF parameter blocks have inconsistent shapes");
  }
  user_index_.reserve(users_.size());
  for (std::size_t u = 0; u < users_.size(); ++u) user_index_.emplace(users_[u], u);
}

std::span<const double> BprMfModel::user_vector(std::size_t user) const {
  return {user_factors_.data() + user * hp_.dim, hp_.dim};
}

std::span<const double> BprMfModel::item_vector(std::size_t item) const {
  return {item_factors_.data() + item * hp_.dim, hp_.dim};
}

std::optional<std::size_t> BprMfModel::user_index(const UserId& user) const {
  const auto it = user_index_.find(user);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

ScoreVector BprMfModel::score(const UserQuery& query) const {
  const auto u = user_index(query.user);
  if (!u) return ScoreVector{popularity_, true};
  ScoreVector out{std::vector<double>(universe_->size()), false};
  const auto p = user_vector(*u);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto q = item_vector(i);
    double dot = 0.0;
    for (std::size_t f = 0; f < hp_.dim; ++f) dot += p[f] * q[f];
    out.values[i] = dot + item_bias_[i];
  }
  return out;
}

BprMfModel BprMfModel::with_bias_offset(double offset) const {
  auto bias = item_bias_;
  for (auto& b : bias) b += offset;
  return BprMfModel(universe_, hp_, users_, user_factors_, item_factors_, std::move(bias), popularity_);
}

void BprMfModel::save(std::ostream& out) const {
  out << kModelMagic << '\t' << kModelVersion << '\n';
  out << fmt::format("hyper\t{}\t{}\t{}\t{}\t{}\t{}\n", hp_.dim, hp_.learning_rate, hp_.l2, hp_.epochs, hp_.seed,
                     hp_.init_range);
  out << "counts\t" << users_.size() << '\t' << universe_->size() << '\n';
  for (std::size_t i = 0; i < universe_->size(); ++i) {
    out << "I\t" << text::escape_field(universe_->id(i).value) << '\t' << fmt::format("{}", item_bias_[i]) << '\t'
        << fmt::format("{}", popularity_[i]);
    for (double v : item_vector(i)) out << '\t' << fmt::format("{}", v);
    out << '\n';
  }
  for (std::size_t u = 0; u < users_.size(); ++u) {
    out << "U\t" << text::escape_field(users_[u]);
    for (double v : user_vector(u)) out << '\t' << fmt::format("{}", v);
    out << '\n';
  }
}

BprMfModel BprMfModel::load(std::istream& in, std::shared_ptr<const ItemUniverse> universe) {
  auto fail = [](std::string_view what) { return Error(fmt::format("BPR-MF snapshot: {}", what)); };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty file");
  {
    const auto f = text::split(line, "\t");
    int version = 0;
    if (f.size() != 2 || f[0] != kModelMagic || !parse_int(f[1], version)) throw fail("bad header");
    if (version != kModelVersion) throw fail("unsupported version");
  }
  BprHyperparams hp;
  if (!std::getline(in, line)) throw fail("missing hyperparameters");
  {
    const auto f = text::split(line, "\t");
    if (f.size() != 7 || f[0] != "hyper" || !parse_int(f[1], hp.dim) || !parse_double(f[2], hp.learning_rate) ||
        !parse_double(f[3], hp.l2) || !parse_int(f[4], hp.epochs) || !parse_int(f[5], hp.seed) ||
        !parse_double(f[6], hp.init_range)) {
      throw fail("bad hyperparameter line");
    }
  }
  std::size_t n_users = 0, n_items = 0;
  if (!std::getline(in, line)) throw fail("missing counts");
  {
    const auto f = text::split(line, "\t");
    if (f.size() != 3 || f[0] != "counts" || !parse_int(f[1], n_users) || !parse_int(f[2], n_items)) {
      throw fail("bad counts line");
    }
  }
  if (n_items != universe->size()) throw fail("item count differs from the catalog");
  std::vector<double> item_factors(n_items * hp.dim), bias(n_items), popularity(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    if (!std::getline(in, line)) throw fail("truncated item block");
    const auto f = text::split(line, "\t");
    if (f.size() != 4 + hp.dim || f[0] != "I" || text::unescape_field(f[1]) != universe->id(i).value) {
      throw fail(fmt::format("item row {} does not match the catalog", i));
    }
    if (!parse_double(f[2], bias[i]) || !parse_double(f[3], popularity[i])) throw fail("bad item bias");
    for (std::size_t k = 0; k < hp.dim; ++k) {
      if (!parse_double(f[4 + k], item_factors[i * hp.dim + k])) throw fail("bad item factor");
    }
  }
  std::vector<UserId> users(n_users);
  std::vector<double> user_factors(n_users * hp.dim);
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!std::getline(in, line)) throw fail("truncated user block");
    const auto f = text::split(line, "\t");
    if (f.size() != 2 + hp.dim || f[0] != "U") throw fail(fmt::format("bad user row {}", u));
    users[u] = text::unescape_field(f[1]);
    for (std::size_t k = 0; k < hp.dim; ++k) {
      if (!parse_double(f[2 + k], user_factors[u * hp.dim + k])) throw fail("bad user factor");
    }
  }
  return BprMfModel(std::move(universe), hp, std::move(users), std::move(user_factors), std::move(item_factors),
                    std::move(bias), std::move(popularity));
}

BprMfModel train_bprmf(std::shared_ptr<const ItemUniverse> universe, const TrainSet& train, const BprHyperparams& hp,
                       const EpochCallback& on_epoch) {
  if (train.interactions() == 0) throw BprTrainingError("BPR-MF needs a non-empty training set");
  if (hp.dim == 0) throw BprTrainingError("BPR-MF dimension must be at least 1");
  if (!(hp.learning_rate > 0.0)) throw BprTrainingError("BPR-MF learning rate must be positive");

  const std::size_t n_users = train.users.size();
  const std::size_t n_items = universe->size();
  const std::size_t d = hp.dim;
  SplitMix64 rng(hp.seed);
  auto init = [&] { return (2.0 * uniform_unit(rng) - 1.0) * hp.init_range; };

  std::vector<double> P(n_users * d), Q(n_items * d), bias(n_items, 0.0);
  for (auto& v : P) v = init();
  for (auto& v : Q) v = init();

  std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;
  positives.reserve(train.interactions());
  std::vector<std::vector<std::uint32_t>> owned(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    owned[u] = train.items[u];
    std::sort(owned[u].begin(), owned[u].end());
    if (owned[u].size() >= n_items) continue;  // no negative exists
    for (auto i : train.items[u]) positives.emplace_back(static_cast<std::uint32_t>(u), i);
  }
  if (positives.empty()) throw BprTrainingError("BPR-MF: every user owns every item; no negatives to sample");

  const double lr = hp.learning_rate;
  const double reg = hp.l2;
  const std::size_t steps = train.interactions();
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    double log_likelihood = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto [u, i] = positives[uniform_below(rng, positives.size())];
      std::uint32_t j = 0;
      do {
        j = static_cast<std::uint32_t>(uniform_below(rng, n_items));
      } while (std::binary_search(owned[u].begin(), owned[u].end(), j));

      double* pu = P.data() + static_cast<std::size_t>(u) * d;
      double* qi = Q.data() + static_cast<std::size_t>(i) * d;
      double* qj = Q.data() + static_cast<std::size_t>(j) * d;
      double x = bias[i] - bias[j];
      for (std::size_t f = 0; f < d; ++f) x += pu[f] * (qi[f] - qj[f]);
      // d/dx ln sigma(x) = sigma(-x)
      const double g = 1.0 / (1.0 + std::exp(x));
      log_likelihood -= std::log1p(std::exp(-x));
      for (std::size_t f = 0; f < d; ++f) {
        const double p = pu[f], a = qi[f], b = qj[f];
        pu[f] += lr * (g * (a - b) - reg * p);
        qi[f] += lr * (g * p - reg * a);
        qj[f] += lr * (-g * p - reg * b);
      }
      bias[i] += lr * (g - reg * bias[i]);
      bias[j] += lr * (-g - reg * bias[j]);
    }
    const auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(P) || !finite(Q) || !finite(bias)) {
      throw BprTrainingError(fmt::format(
          "BPR-MF diverged at epoch {} (learning rate {}, l2 {}): non-finite parameters; lower the learning rate",
          epoch + 1, lr, reg));
    }
    if (on_epoch) on_epoch(epoch + 1, log_likelihood / static_cast<double>(steps));
  }

  return BprMfModel(universe, hp, train.users, std::move(P), std::move(Q), std::move(bias),
                    train_frequency(n_items, train));
}

// ---------------------------------------------------------------------------

CandidateSet top_k(const Retriever& model, const UserQuery& query, std::size_t k, std::span<const ItemId> exclude) {
  if (k == 0) throw Error("top_k needs k >= 1");
  const auto& universe = model.universe();
  ScoreVector scores = model.score(query);
  std::vector<bool> excluded(universe.size(), false);
  for (const auto& item : exclude) {
    if (const auto index = universe.index_of(item)) excluded[*index] = true;
  }
  std::vector<std::uint32_t> order;
  order.reserve(universe.size());
  for (std::uint32_t i = 0; i < universe.size(); ++i) {
    if (excluded[i]) continue;
    if (std::isnan(scores.values[i])) scores.values[i] = -std::numeric_limits<double>::infinity();
    order.push_back(i);
  }
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores.values[a] != scores.values[b]) return scores.values[a] > scores.values[b];
    return a < b;
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

  CandidateSet out;
  out.user = query.user;
  out.source = model.source();
  out.fallback = scores.fallback;
  out.entries.reserve(take);
  for (std::size_t r = 0; r < take; ++r) out.entries.push_back({universe.id(order[r]), scores.values[order[r]]});
  return out;
}

std::map<UserId, CandidateSet> import_candidates(std::istream& in, const ItemCatalog& catalog) {
  std::map<UserId, CandidateSet> out;
  std::vector<std::string> unknown;
  std::size_t unknown_count = 0;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CandidateImportError(fmt::format("candidate file line {}: expected user<TAB>items", number));
    }
    const UserId user(text::trim(std::string_view(line).substr(0, tab)));
    if (user.empty()) throw CandidateImportError(fmt::format("candidate file line {}: empty user id", number));
    if (out.contains(user)) throw CandidateImportError(fmt::format("candidate file: user {} listed twice", user));

    std::vector<std::pair<ItemId, std::optional<double>>> parsed;
    std::unordered_set<ItemId> seen;
    for (auto token : text::split(std::string_view(line).substr(tab + 1), ",")) {
      token = text::trim(token);
      if (token.empty()) continue;
      std::optional<double> score;
      if (const auto colon = token.rfind(':'); colon != std::string_view::npos) {
        double value = 0;
        if (parse_double(token.substr(colon + 1), value)) {
          score = value;
          token = text::trim(token.substr(0, colon));
        }
      }
      ItemId item(token);
      if (!seen.insert(item).second) {
        throw CandidateImportError(fmt::format("candidate file: user {} lists item {} twice", user, item.value));
      }
      if (!catalog.contains(item)) {
        if (unknown.size() < 20) unknown.push_back(fmt::format("{}:{}", user, item.value));
        ++unknown_count;
      }
      parsed.emplace_back(std::move(item), score);
    }

    const bool explicit_scores = !parsed.empty() && parsed.front().second.has_value();
    CandidateSet set;
    set.user = user;
    set.source = CandidateSource::Imported;
    const auto n = parsed.size();
    for (std::size_t r = 0; r < n; ++r) {
      if (parsed[r].second.has_value() != explicit_scores) {
        throw CandidateImportError(fmt::format("candidate file: user {} mixes scored and unscored items", user));
      }
      const double score = explicit_scores ? *parsed[r].second : static_cast<double>(n - r);
      if (!set.entries.empty() && score > set.entries.back().score) {
        throw CandidateImportError(fmt::format("candidate file: user {} has increasing scores", user));
      }
      set.entries.push_back({parsed[r].first, score});
    }
    out.emplace(user, std::move(set));
  }
  if (unknown_count > 0) {
    std::string listing;
    for (const auto& u : unknown) listing += "\n  " + u;
    throw CandidateImportError(
        fmt::format("candidate file references {} unknown item id(s):{}", unknown_count, listing));
  }
  if (out.empty()) spdlog::warn("candidate file has no rows");
  return out;
}

UserQuery test_query(const UserSplit& split) { return UserQuery{split.user, split.visible()}; }

std::vector<ItemId> test_exclusions(const UserSplit& split, ExclusionPolicy policy) {
  if (policy == ExclusionPolicy::None) return {};
  return split.visible();
}

}  // namespace recrank
