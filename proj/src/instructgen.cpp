#include "recrank/instructgen.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <ostream>
#include <set>
#include <tuple>

#include "json.hpp"
#include "recrank/io.hpp"
#include "recrank/rng.hpp"
#include "recrank/text.hpp"

namespace recrank {

namespace {

std::string quote_with(std::string_view s, char q) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back(q);
  for (char c : s) {
    if (c == q) out.push_back(q);
    out.push_back(c);
  }
  out.push_back(q);
  return out;
}

const std::vector<UserId> kNoUsers;
const std::vector<ItemId> kNoItems;

}  // namespace

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::MovieLens ? "movielens-1m" : "amazon-beauty";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "movielens-1m" || name == "movielens" || name == "ml-1m") return DatasetKind::MovieLens;
  if (name == "amazon-beauty" || name == "amazon" || name == "beauty") return DatasetKind::Amazon;
  throw Error(fmt::format("unknown dataset '{}'", name));
}

std::string_view to_string(TaskKind task) {
  return task == TaskKind::Recommend ? "Recommend" : "Recommend_Retrieval";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "Recommend") return TaskKind::Recommend;
  if (name == "Recommend_Retrieval") return TaskKind::RecommendRetrieval;
  throw Error(fmt::format("unknown task '{}'", name));
}

RenderStyle RenderStyle::for_dataset(DatasetKind kind) {
  RenderStyle style;
  style.mode = kind == DatasetKind::Amazon ? Mode::IdAndTitle : Mode::TitleOnly;
  return style;
}

std::string render_item(const Item& item, const RenderStyle& style) {
  if (style.mode == RenderStyle::Mode::IdAndTitle) {
    return quote_with(item.id.value + " (" + item.title + ")", style.quote);
  }
  return quote_with(item.title, style.quote);
}

Renderer::Renderer(const ItemCatalog& catalog, RenderStyle style, DatasetKind dataset, std::size_t list_size)
    : catalog_(&catalog), style_(std::move(style)), dataset_(dataset), list_size_(list_size) {}

std::string Renderer::render(const ItemId& id) const { return render_item(catalog_->at(id), style_); }

std::string Renderer::render_list(std::span<const ItemId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += style_.separator;
    out += render(ids[i]);
  }
  return out;
}

std::string Renderer::instruction(TaskKind task) const {
  const std::string_view suffix = task == TaskKind::RecommendRetrieval ? " from the candidate list." : ".";
  if (dataset_ == DatasetKind::MovieLens) {
    return fmt::format("Recommend {} other movies based on user's watching history{}", list_size_, suffix);
  }
  return fmt::format("Recommend {} other items based on user's history{}", list_size_, suffix);
}

std::string Renderer::history_sentence(std::span<const ItemId> history) const {
  const std::string_view lead =
      dataset_ == DatasetKind::MovieLens ? "User watched movies " : "User has purchased the following products ";
  return fmt::format("{}{}.", lead, render_list(history));
}

std::string Renderer::candidates_sentence(std::span<const ItemId> candidates) const {
  return fmt::format("{}{}.", kCandidatesLead, render_list(candidates));
}

void render_example(InstructionExample& example, const Renderer& renderer) {
  example.instruction = renderer.instruction(example.task);
  example.input = renderer.history_sentence(example.history);
  if (example.task == TaskKind::RecommendRetrieval) {
    example.input += ' ';
    example.input += renderer.candidates_sentence(example.candidates);
  }
  example.output = renderer.render_list(example.targets);
}

InstructionExample make_recommend(const UserSequence& seq, std::size_t cut, std::size_t n_targets,
                                  const Renderer& renderer) {
  const auto len = seq.items.size();
  if (n_targets == 0) throw InstructionError("n_targets must be at least 1");
  if (cut < 1 || cut >= len) {
    throw InstructionError(
        fmt::format("user {}: cut {} leaves no history or no targets in a sequence of {}", seq.user, cut, len));
  }
  InstructionExample ex;
  ex.task = TaskKind::Recommend;
  ex.user = seq.user;
  ex.provenance.cut = cut;
  const auto first = cut > kMaxHistoryItems ? cut - kMaxHistoryItems : 0;
  ex.history.assign(seq.items.begin() + static_cast<std::ptrdiff_t>(first),
                    seq.items.begin() + static_cast<std::ptrdiff_t>(cut));
  const auto count = std::min(n_targets, len - cut);
  ex.targets.assign(seq.items.begin() + static_cast<std::ptrdiff_t>(cut),
                    seq.items.begin() + static_cast<std::ptrdiff_t>(cut + count));
  render_example(ex, renderer);
  return ex;
}

NegativeSelection select_negatives(std::span<const ItemId> targets, const CoocModel& cooc,
                                   const ItemCatalog& catalog, std::size_t n_neg,
                                   const std::unordered_set<ItemId>& forbidden) {
  NegativeSelection out;
  if (n_neg == 0) return out;

  const std::unordered_set<ItemId> target_set(targets.begin(), targets.end());
  struct PoolItem {
    const Item* item;
    std::optional<std::uint32_t> index;
  };
  std::vector<PoolItem> pool;
  for (const auto& [id, item] : catalog.items()) {
    if (forbidden.contains(id) || target_set.contains(id)) continue;
    pool.push_back({&item, cooc.universe().index_of(id)});
  }
  if (pool.empty() || targets.empty()) {
    out.exhausted = true;
    spdlog::warn("negative selection: no eligible items (wanted {})", n_neg);
    return out;
  }

  const std::size_t depth = std::min(pool.size(), 2 * n_neg);
  std::vector<std::vector<const Item*>> ranked;
  ranked.reserve(targets.size());
  for (const auto& target : targets) {
    const Item* t = catalog.find(target);
    const auto t_index = cooc.universe().index_of(target);
    using Key = std::tuple<bool, std::uint32_t, const Item*>;
    std::vector<Key> keys;
    keys.reserve(pool.size());
    for (const auto& p : pool) {
      bool shares = false;
      if (t != nullptr) {
        for (const auto& a : p.item->attributes) {
          if (std::find(t->attributes.begin(), t->attributes.end(), a) != t->attributes.end()) {
            shares = true;
            break;
          }
        }
      }
      const std::uint32_t c = (t_index && p.index) ? cooc.count(*t_index, *p.index) : 0;
      keys.emplace_back(shares, c, p.item);
    }
    // Pool is in ascending id order, so comparing Item pointers by id keeps the tie rule.
    const auto before = [](const Key& a, const Key& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a);
      if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
      return std::get<2>(a)->id < std::get<2>(b)->id;
    };
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(depth), keys.end(), before);
    std::vector<const Item*> list;
    list.reserve(depth);
    for (std::size_t r = 0; r < depth; ++r) list.push_back(std::get<2>(keys[r]));
    ranked.push_back(std::move(list));
  }

  std::unordered_set<ItemId> chosen;
  std::vector<std::size_t> cursor(ranked.size(), 0);
  while (out.items.size() < n_neg) {
    bool progress = false;
    for (std::size_t t = 0; t < ranked.size() && out.items.size() < n_neg; ++t) {
      auto& pos = cursor[t];
      while (pos < ranked[t].size() && chosen.contains(ranked[t][pos]->id)) ++pos;
      if (pos == ranked[t].size()) continue;
      chosen.insert(ranked[t][pos]->id);
      out.items.push_back(ranked[t][pos]->id);
      ++pos;
      progress = true;
    }
    if (!progress) break;
  }
  if (out.items.size() < n_neg) {
    out.exhausted = true;
    spdlog::warn("negative selection: only {} of {} negatives available", out.items.size(), n_neg);
  }
  return out;
}

InstructionExample make_recommend_retrieval(const UserSequence& seq, std::size_t cut, std::size_t n_targets,
                                            std::size_t n_neg, const CoocModel& cooc, const Renderer& renderer,
                                            std::uint64_t shuffle_seed,
                                            const std::unordered_set<ItemId>& extra_forbidden) {
  InstructionExample ex = make_recommend(seq, cut, n_targets, renderer);
  ex.task = TaskKind::RecommendRetrieval;
  ex.provenance.seed = shuffle_seed;
  std::unordered_set<ItemId> forbidden(seq.items.begin(), seq.items.end());
  forbidden.insert(extra_forbidden.begin(), extra_forbidden.end());
  auto negatives = select_negatives(ex.targets, cooc, renderer.catalog(), n_neg, forbidden);
  ex.candidates = ex.targets;
  ex.candidates.insert(ex.candidates.end(), negatives.items.begin(), negatives.items.end());
  SplitMix64 rng(shuffle_seed);
  shuffle(std::span<ItemId>(ex.candidates), rng);
  render_example(ex, renderer);
  return ex;
}

AffinityGraph::AffinityGraph(const InteractionLog& log) {
  for (const auto& row : log.interactions()) add(row.user, row.item);
}

AffinityGraph::AffinityGraph(const std::map<UserId, std::vector<ItemId>>& histories) {
  for (const auto& [user, items] : histories) {
    for (const auto& item : items) add(user, item);
  }
}

void AffinityGraph::add(const UserId& user, const ItemId& item) {
  item_users_[item].push_back(user);
  user_items_[user].push_back(item);
}

const std::vector<UserId>& AffinityGraph::users_of(const ItemId& item) const {
  const auto it = item_users_.find(item);
  return it == item_users_.end() ? kNoUsers : it->second;
}

const std::vector<ItemId>& AffinityGraph::items_of(const UserId& user) const {
  const auto it = user_items_.find(user);
  return it == user_items_.end() ? kNoItems : it->second;
}

EnrichedSequence enrich_3hop(const UserSequence& seq, const AffinityGraph& graph, std::size_t min_len,
                             std::size_t budget, const std::unordered_set<ItemId>& exclude) {
  EnrichedSequence out{seq, 0};
  if (seq.items.size() >= min_len || budget == 0) return out;

  const std::unordered_set<ItemId> in_seq(seq.items.begin(), seq.items.end());
  std::set<UserId> co_users;
  for (const auto& item : seq.items) {
    for (const auto& v : graph.users_of(item)) {
      if (v != seq.user) co_users.insert(v);
    }
  }
  std::unordered_map<ItemId, std::size_t> reach;
  for (const auto& v : co_users) {
    std::unordered_set<ItemId> counted;
    for (const auto& x : graph.items_of(v)) {
      if (in_seq.contains(x) || exclude.contains(x) || !counted.insert(x).second) continue;
      ++reach[x];
    }
  }
  std::vector<std::pair<ItemId, std::size_t>> ranked(reach.begin(), reach.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const auto take = std::min(budget, ranked.size());
  for (std::size_t r = 0; r < take; ++r) out.sequence.items.push_back(ranked[r].first);
  out.synthetic = take;
  return out;
}

InstructionExample swap_augment(const InstructionExample& example, double p, std::uint64_t seed,
                                const Renderer& renderer) {
  if (!(p >= 0.0 && p <= 1.0)) throw InstructionError(fmt::format("swap probability {} outside [0, 1]", p));
  InstructionExample out = example;
  out.provenance.swap_seed = seed;
  if (out.history.empty() || out.targets.empty() || p == 0.0) return out;
  SplitMix64 rng(seed);
  for (auto& h : out.history) {
    if (!(uniform_unit(rng) < p)) continue;
    auto& t = out.targets[uniform_below(rng, out.targets.size())];
    if (out.task == TaskKind::RecommendRetrieval) {
      // The outgoing target's candidate slot now holds the incoming one.
      auto slot = std::find(out.candidates.begin(), out.candidates.end(), t);
      if (slot != out.candidates.end()) *slot = h;
    }
    std::swap(h, t);
    ++out.provenance.swaps;
  }
  render_example(out, renderer);
  return out;
}

CorpusResult build_corpus(const EvalSplit& split, const UserSample& sample, const CorpusConfig& config,
                          const Renderer& renderer, const CoocModel& cooc, const AffinityGraph& graph,
                          std::size_t jobs) {
  std::vector<const UserSplit*> users;
  for (const auto& [user, s] : split.users) {
    if (sample.contains(user)) users.push_back(&s);
  }
  struct Slot {
    std::vector<InstructionExample> examples;
    std::optional<RejectedUser> error;
  };
  std::vector<Slot> slots(users.size());
  const auto n_targets = config.n_targets;

  io::parallel_for(users.size(), jobs, [&](std::size_t idx) {
    const UserSplit& s = *users[idx];
    try {
      UserSequence seq{s.user, s.visible()};
      const std::unordered_set<ItemId> held_out{s.test};
      std::size_t synthetic = 0;
      if (config.enrich && seq.items.size() < config.min_len) {
        auto enriched = enrich_3hop(seq, graph, config.min_len, config.min_len - seq.items.size(), held_out);
        seq = std::move(enriched.sequence);
        synthetic = enriched.synthetic;
      }
      const auto len = seq.items.size();
      const std::size_t cut = len > n_targets ? len - n_targets : 1;
      if (config.recommend) {
        auto ex = make_recommend(seq, cut, n_targets, renderer);
        ex.provenance.synthetic_items = synthetic;
        slots[idx].examples.push_back(
            swap_augment(ex, config.p_swap, derive_seed(config.seed, s.user + "/Recommend/swap"), renderer));
      }
      if (config.recommend_retrieval) {
        const auto targets = std::min(n_targets, len - cut);
        const auto n_neg = config.pool_size > targets ? config.pool_size - targets : 0;
        auto ex = make_recommend_retrieval(seq, cut, n_targets, n_neg, cooc, renderer,
                                           derive_seed(config.seed, s.user + "/Recommend_Retrieval/shuffle"),
                                           held_out);
        ex.provenance.synthetic_items = synthetic;
        slots[idx].examples.push_back(swap_augment(
            ex, config.p_swap, derive_seed(config.seed, s.user + "/Recommend_Retrieval/swap"), renderer));
      }
    } catch (const Error& e) {
      slots[idx].examples.clear();
      slots[idx].error = RejectedUser{s.user, e.what()};
    }
  });

  CorpusResult out;
  for (auto& slot : slots) {
    for (auto& ex : slot.examples) out.examples.push_back(std::move(ex));
    if (slot.error) out.errors.push_back(std::move(*slot.error));
  }
  return out;
}

void write_corpus(std::ostream& out, std::span<const InstructionExample> examples) {
  for (const auto& ex : examples) {
    nlohmann::ordered_json record;
    record["task"] = to_string(ex.task);
    record["instruction"] = ex.instruction;
    record["input"] = ex.input;
    record["output"] = ex.output;
    record["user"] = ex.user;
    record["meta"] = {{"cut", ex.provenance.cut},
                      {"shuffle_seed", ex.provenance.seed},
                      {"swap_seed", ex.provenance.swap_seed},
                      {"swaps", ex.provenance.swaps},
                      {"synthetic_items", ex.provenance.synthetic_items}};
    out << record.dump() << '\n';
  }
}

ParsedInput parse_instruction_input(std::string_view input) {
  ParsedInput out;
  const auto spans = text::quoted_spans(input);
  const auto segments = text::quoted_segments(input);
  std::size_t gap_start = 0;
  bool in_candidates = false;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto span_start = static_cast<std::size_t>(spans[i].data() - input.data());
    if (!in_candidates && input.substr(gap_start, span_start - gap_start).find(kCandidatesLead) != std::string_view::npos) {
      in_candidates = true;
    }
    (in_candidates ? out.candidates : out.history).push_back(segments[i]);
    gap_start = span_start + spans[i].size();
  }
  return out;
}

}  // namespace recrank
