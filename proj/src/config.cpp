#include "recrank/config.hpp"

#include <fmt/core.h>

#include <set>

#include "recrank/text.hpp"

namespace recrank {

namespace {

using nlohmann::json;

std::string_view to_string(ExclusionPolicy p) { return p == ExclusionPolicy::SeenExcluded ? "seen" : "none"; }
std::string_view to_string(GroundingScope s) { return s == GroundingScope::Candidates ? "candidates" : "catalog"; }

// Reads keys of one JSON object and complains about any it did not consume.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("config: '{}' must be an object", path_));
  }

  template <typename T>
  void read(const char* key, T& into) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      into = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("config: '{}{}' has the wrong type", prefix(), key));
    }
  }

  template <typename Fn>
  void read_with(const char* key, Fn&& apply) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      apply(*it);
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("config: '{}{}' has the wrong type", prefix(), key));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(fmt::format("config: '{}{}': {}", prefix(), key, e.what()));
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, prefix() + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("config: unknown key '{}{}'", prefix(), key));
    }
  }

 private:
  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["dataset"] = std::string(to_string(c.dataset));
  j["ratings_path"] = c.ratings_path;
  j["movies_path"] = c.movies_path;
  j["reviews_path"] = c.reviews_path;
  j["meta_path"] = c.meta_path;
  j["min_count"] = c.min_count;
  j["sample"] = {{"fraction", c.sample_fraction}, {"seed", c.sample_seed}};
  j["retrieval"] = {
      {"model", std::string(to_string(c.retrieval))},
      {"bpr",
       {{"dim", c.bpr.dim},
        {"learning_rate", c.bpr.learning_rate},
        {"l2", c.bpr.l2},
        {"epochs", c.bpr.epochs},
        {"seed", c.bpr.seed},
        {"init_range", c.bpr.init_range}}},
      {"candidates_path", c.candidates_path},
      {"exclusion", std::string(to_string(c.exclusion))},
  };
  j["corpus"] = {
      {"recommend", c.corpus.recommend},     {"recommend_retrieval", c.corpus.recommend_retrieval},
      {"n_targets", c.corpus.n_targets},     {"pool_size", c.corpus.pool_size},
      {"p_swap", c.corpus.p_swap},           {"enrich", c.corpus.enrich},
      {"min_len", c.corpus.min_len},         {"seed", c.corpus.seed},
  };
  // Credentials stay out of the config file; they come from the environment.
  j["llm"] = {
      {"kind", c.llm},
      {"script_path", c.script_path},
      {"transcript", c.transcript},
      {"max_tokens", c.ranker.params.max_tokens},
      {"temperature", c.ranker.params.temperature},
      {"endpoint",
       {{"base_url", c.endpoint.base_url},
        {"timeout_seconds", c.endpoint.timeout_seconds},
        {"max_retries", c.endpoint.max_retries},
        {"max_in_flight", c.endpoint.max_in_flight},
        {"initial_backoff_seconds", c.endpoint.initial_backoff_seconds},
        {"prompt_field", c.endpoint.prompt_field},
        {"max_tokens_field", c.endpoint.max_tokens_field},
        {"temperature_field", c.endpoint.temperature_field},
        {"text_field", c.endpoint.text_field}}},
  };
  j["profile"] = {{"max_items", c.profile_max_items}};
  j["ranker"] = {
      {"k", c.ranker.k},
      {"pool_size", c.ranker.pool_size},
      {"use_profile", c.ranker.use_profile},
      {"scope", std::string(to_string(c.ranker.scope))},
      {"fuzzy_threshold", c.ranker.fuzzy_threshold},
  };
  j["eval"] = {{"ks", c.ks}};
  j["out_dir"] = c.out_dir;
  j["jobs"] = c.jobs;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "");
  top.read_with("dataset", [&](const json& v) { c.dataset = parse_dataset_kind(v.get<std::string>()); });
  top.read("ratings_path", c.ratings_path);
  top.read("movies_path", c.movies_path);
  top.read("reviews_path", c.reviews_path);
  top.read("meta_path", c.meta_path);
  top.read("min_count", c.min_count);
  if (auto s = top.child("sample")) {
    s->read("fraction", c.sample_fraction);
    s->read("seed", c.sample_seed);
    s->finish();
  }
  if (auto s = top.child("retrieval")) {
    s->read_with("model", [&](const json& v) { c.retrieval = parse_candidate_source(v.get<std::string>()); });
    if (auto b = s->child("bpr")) {
      b->read("dim", c.bpr.dim);
      b->read("learning_rate", c.bpr.learning_rate);
      b->read("l2", c.bpr.l2);
      b->read("epochs", c.bpr.epochs);
      b->read("seed", c.bpr.seed);
      b->read("init_range", c.bpr.init_range);
      b->finish();
    }
    s->read("candidates_path", c.candidates_path);
    s->read_with("exclusion", [&](const json& v) {
      const auto name = v.get<std::string>();
      if (name == "seen") c.exclusion = ExclusionPolicy::SeenExcluded;
      else if (name == "none") c.exclusion = ExclusionPolicy::None;
      else throw ConfigError(fmt::format("config: retrieval.exclusion must be 'seen' or 'none', got '{}'", name));
    });
    s->finish();
  }
  if (auto s = top.child("corpus")) {
    s->read("recommend", c.corpus.recommend);
    s->read("recommend_retrieval", c.corpus.recommend_retrieval);
    s->read("n_targets", c.corpus.n_targets);
    s->read("pool_size", c.corpus.pool_size);
    s->read("p_swap", c.corpus.p_swap);
    s->read("enrich", c.corpus.enrich);
    s->read("min_len", c.corpus.min_len);
    s->read("seed", c.corpus.seed);
    s->finish();
  }
  if (auto s = top.child("llm")) {
    s->read("kind", c.llm);
    s->read("script_path", c.script_path);
    s->read("transcript", c.transcript);
    s->read("max_tokens", c.ranker.params.max_tokens);
    s->read("temperature", c.ranker.params.temperature);
    if (auto e = s->child("endpoint")) {
      e->read("base_url", c.endpoint.base_url);
      e->read("timeout_seconds", c.endpoint.timeout_seconds);
      e->read("max_retries", c.endpoint.max_retries);
      e->read("max_in_flight", c.endpoint.max_in_flight);
      e->read("initial_backoff_seconds", c.endpoint.initial_backoff_seconds);
      e->read("prompt_field", c.endpoint.prompt_field);
      e->read("max_tokens_field", c.endpoint.max_tokens_field);
      e->read("temperature_field", c.endpoint.temperature_field);
      e->read("text_field", c.endpoint.text_field);
      e->finish();
    }
    s->finish();
  }
  c.endpoint.params = c.ranker.params;
  if (auto s = top.child("profile")) {
    s->read("max_items", c.profile_max_items);
    s->finish();
  }
  if (auto s = top.child("ranker")) {
    s->read("k", c.ranker.k);
    s->read("pool_size", c.ranker.pool_size);
    s->read("use_profile", c.ranker.use_profile);
    s->read_with("scope", [&](const json& v) {
      const auto name = v.get<std::string>();
      if (name == "candidates") c.ranker.scope = GroundingScope::Candidates;
      else if (name == "catalog") c.ranker.scope = GroundingScope::Catalog;
      else throw ConfigError(fmt::format("config: ranker.scope must be 'candidates' or 'catalog', got '{}'", name));
    });
    s->read("fuzzy_threshold", c.ranker.fuzzy_threshold);
    s->finish();
  }
  if (auto s = top.child("eval")) {
    s->read("ks", c.ks);
    s->finish();
  }
  top.read("out_dir", c.out_dir);
  top.read("jobs", c.jobs);
  top.finish();

  if (c.llm != "mock-echo" && c.llm != "mock-scripted" && c.llm != "http") {
    throw ConfigError(fmt::format("config: llm.kind must be mock-echo, mock-scripted or http, got '{}'", c.llm));
  }
  if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0)) throw ConfigError("config: sample.fraction must be in (0, 1]");
  if (c.ks.empty()) throw ConfigError("config: eval.ks must not be empty");
  for (const auto k : c.ks) {
    if (k == 0) throw ConfigError("config: eval.ks entries must be >= 1");
  }
  if (c.ranker.k == 0 || c.ranker.pool_size == 0) throw ConfigError("config: ranker.k and ranker.pool_size must be >= 1");
  if (c.jobs == 0) c.jobs = 1;
  return c;
}

std::string canonical_json(const RunConfig& config) { return to_json(config).dump(); }

std::string config_hash(const RunConfig& config) { return text::sha256_hex(canonical_json(config)); }

}  // namespace recrank
