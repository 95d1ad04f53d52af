#include "modeldx/explainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "modeldx/hashing.hpp"

namespace modeldx {

std::size_t FeatureSetHash::operator()(const FeatureSet& set) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ set.size();
  for (auto f : set) {
    h ^= f + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

ScoreCache::ScoreCache(std::size_t shards) : shards_(std::max<std::size_t>(shards, 1)) {}

ScoreCache::Shard& ScoreCache::shard_for(const FeatureSet& key) const {
  return shards_[FeatureSetHash{}(key) % shards_.size()];
}

std::optional<double> ScoreCache::find(const FeatureSet& key) const {
  auto& shard = shard_for(key);
  std::shared_lock lock(shard.mutex);
  auto it = shard.entries.find(key);
  if (it == shard.entries.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(const FeatureSet& key, double score) {
  auto& shard = shard_for(key);
  std::unique_lock lock(shard.mutex);
  shard.entries.insert_or_assign(key, score);
}

std::size_t ScoreCache::size() const {
  std::size_t n = 0;
  for (auto& shard : shards_) {
    std::shared_lock lock(shard.mutex);
    n += shard.entries.size();
  }
  return n;
}

namespace {

/// Scores sets through the optional cache, batching the misses.
class CachedScorer {
 public:
  CachedScorer(const ScoredModel& model, ScoreCache* cache) : model_(model), cache_(cache) {}

  std::vector<double> score(const std::vector<FeatureSet>& sets) {
    queries_ += sets.size();
    std::vector<double> out(sets.size());
    std::vector<FeatureSet> misses;
    std::vector<std::size_t> miss_slots;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (cache_) {
        if (auto hit = cache_->find(sets[i])) {
          out[i] = *hit;
          continue;
        }
      }
      misses.push_back(sets[i]);
      miss_slots.push_back(i);
    }
    if (!misses.empty()) {
      const auto scores = model_.score_batch(misses);
      model_calls_ += misses.size();
      for (std::size_t m = 0; m < misses.size(); ++m) {
        out[miss_slots[m]] = scores[m];
        if (cache_) cache_->insert(misses[m], scores[m]);
      }
    }
    return out;
  }

  double score_one(const FeatureSet& set) { return score(std::vector<FeatureSet>{set}).front(); }

  std::uint64_t queries() const noexcept { return queries_; }
  std::uint64_t model_calls() const noexcept { return model_calls_; }
  void reset_queries() noexcept { queries_ = 0; }

 private:
  const ScoredModel& model_;
  ScoreCache* cache_;
  std::uint64_t queries_ = 0;
  std::uint64_t model_calls_ = 0;
};

FeatureSet without(const FeatureSet& set, FeatureIndex f) {
  FeatureSet out;
  out.reserve(set.size());
  for (auto g : set)
    if (g != f) out.push_back(g);
  return out;
}

FeatureSet set_difference(const FeatureSet& a, const FeatureSet& b_sorted) {
  FeatureSet out;
  std::set_difference(a.begin(), a.end(), b_sorted.begin(), b_sorted.end(), std::back_inserter(out));
  return out;
}

Explanation explain_with(CachedScorer& scorer, const ScoredModel& model, const Item& item,
                         std::uint64_t seed, double epsilon) {
  Explanation result;
  result.item = item.id;
  result.score = scorer.score_one(item.active);
  scorer.reset_queries();
  const bool original = model.is_positive(result.score);

  // Greedy removal: at each step drop the feature whose removal moves the
  // score furthest toward the other side of the threshold.
  FeatureSet current = item.active;
  double current_score = result.score;
  std::vector<FeatureIndex> removal_order;
  std::mt19937_64 rng(seed);
  bool flipped = false;

  while (!current.empty()) {
    std::vector<FeatureSet> candidates;
    candidates.reserve(current.size());
    for (auto f : current) candidates.push_back(without(current, f));
    const auto scores = scorer.score(candidates);

    bool plateau = true;
    std::size_t pick = 0;
    double best_progress = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (std::abs(scores[i] - current_score) > epsilon) plateau = false;
      const double progress = original ? current_score - scores[i] : scores[i] - current_score;
      if (progress > best_progress) {
        best_progress = progress;
        pick = i;
      }
    }
    if (plateau) pick = std::uniform_int_distribution<std::size_t>(0, current.size() - 1)(rng);

    removal_order.push_back(current[pick]);
    current = std::move(candidates[pick]);
    current_score = scores[pick];
    if (model.is_positive(current_score) != original) {
      flipped = true;
      break;
    }
  }

  if (!flipped) {
    result.removed = item.active;
    result.flipped = false;
    result.queries = scorer.queries();
    return result;
  }

  // Clean-up: try putting features back, most recently removed first. A
  // feature stays out only if the flip needs it. Passes repeat until none
  // changes anything, which leaves every remaining feature necessary.
  std::vector<FeatureIndex> kept = removal_order;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = kept.size(); k-- > 0;) {
      if (kept.size() == 1) break;  // re-adding the last one restores the item
      std::vector<FeatureIndex> trial;
      trial.reserve(kept.size() - 1);
      for (std::size_t j = 0; j < kept.size(); ++j)
        if (j != k) trial.push_back(kept[j]);
      FeatureSet trial_sorted(trial.begin(), trial.end());
      std::sort(trial_sorted.begin(), trial_sorted.end());
      const double s = scorer.score_one(set_difference(item.active, trial_sorted));
      if (model.is_positive(s) != original) {
        kept = std::move(trial);
        changed = true;
      }
    }
  }

  result.removed.assign(kept.begin(), kept.end());
  std::sort(result.removed.begin(), result.removed.end());
  result.flipped = true;
  result.queries = scorer.queries();
  return result;
}

}  // namespace

Explanation explain_item(const ScoredModel& model, const Item& item, ScoreCache* cache, std::uint64_t seed,
                         double plateau_epsilon) {
  if (model.num_features != 0 && !item.active.empty() && item.active.back() >= model.num_features)
    throw ModelError("item " + std::to_string(item.id) + " does not fit the model's feature space");
  CachedScorer scorer(model, cache);
  return explain_with(scorer, model, item, seed, plateau_epsilon);
}

std::uint64_t item_seed(std::uint64_t run_seed, ItemId item) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(item));
}

ExplainRun explain_all(const ScoredModel& model, const SparseDataset& dataset, const ExplainConfig& config) {
  if (model.num_features != 0 && model.num_features != dataset.num_features())
    throw ModelError("model feature space (" + std::to_string(model.num_features) +
                     ") does not match dataset (" + std::to_string(dataset.num_features()) + ")");
  const auto started = std::chrono::steady_clock::now();
  const auto& items = dataset.items();
  std::vector<std::optional<Explanation>> slots(items.size());
  std::vector<std::optional<std::string>> errors(items.size());
  ScoreCache cache;
  ScoreCache* shared = config.use_cache ? &cache : nullptr;

  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> queries{0}, calls{0};
  auto worker = [&] {
    std::uint64_t local_queries = 0, local_calls = 0;
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      CachedScorer scorer(model, shared);
      try {
        slots[i] = explain_with(scorer, model, items[i], item_seed(config.seed, items[i].id), config.plateau_epsilon);
        local_queries += slots[i]->queries;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      local_calls += scorer.model_calls();
    }
    queries += local_queries;
    calls += local_calls;
  };

  const auto threads = std::max<std::size_t>(1, std::min(config.parallelism, items.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExplainRun run;
  run.explanations.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (slots[i]) run.explanations.push_back(std::move(*slots[i]));
    if (errors[i]) run.failures.push_back({items[i].id, std::move(*errors[i])});
  }
  run.total_queries = queries.load();
  run.model_calls = calls.load();
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

std::optional<FeatureSet> brute_force_min_explanation(const ScoredModel& model, const Item& item) {
  const auto n = item.active.size();
  if (n > kBruteForceLimit)
    throw std::invalid_argument("brute-force explanation refuses items with more than " +
                                std::to_string(kBruteForceLimit) + " active features (got " + std::to_string(n) +
                                ")");
  const bool original = model.label(item.active);
  for (std::size_t size = 1; size <= n; ++size) {
    // Enumerate size-subsets of positions in lexicographic order.
    std::vector<std::size_t> pick(size);
    for (std::size_t i = 0; i < size; ++i) pick[i] = i;
    while (true) {
      FeatureSet rest;
      std::size_t p = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (p < size && pick[p] == i) {
          ++p;
          continue;
        }
        rest.push_back(item.active[i]);
      }
      if (model.label(rest) != original) {
        FeatureSet removed;
        for (auto i : pick) removed.push_back(item.active[i]);
        return removed;
      }
      std::size_t k = size;
      while (k > 0 && pick[k - 1] == n - size + (k - 1)) --k;
      if (k == 0) break;
      ++pick[k - 1];
      for (std::size_t j = k; j < size; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return std::nullopt;
}

std::string explanation_line(const Explanation& e) {
  nlohmann::ordered_json j;
  j["item"] = e.item;
  j["removed"] = e.removed;
  j["flipped"] = e.flipped;
  j["score"] = e.score;
  j["queries"] = e.queries;
  return j.dump();
}

void write_explanations(std::ostream& out, std::span<const Explanation> explanations) {
  for (const auto& e : explanations) out << explanation_line(e) << '\n';
}

std::vector<Explanation> read_explanations(std::istream& in) {
  std::vector<Explanation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Explanation e;
      e.item = j.at("item").get<ItemId>();
      e.removed = j.at("removed").get<FeatureSet>();
      e.flipped = j.at("flipped").get<bool>();
      e.score = j.at("score").get<double>();
      e.queries = j.at("queries").get<std::uint64_t>();
      if (!is_canonical(e.removed)) throw DataError("removed set is not sorted and unique", line_no);
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("malformed explanation: ") + ex.what(), line_no);
    }
  }
  return out;
}

RunManifest make_manifest(const ScoredModel& model, const SparseDataset& dataset, const ExplainConfig& config,
                          const ExplainRun& run) {
  RunManifest m;
  m.model_name = model.name;
  m.model_hash = model_hash(model);
  m.dataset_hash = dataset_hash(dataset);
  m.threshold = model.threshold;
  m.seed = config.seed;
  m.num_items = dataset.size();
  m.parallelism = config.parallelism;
  m.cache = config.use_cache;
  m.total_queries = run.total_queries;
  m.model_calls = run.model_calls;
  m.wall_seconds = run.wall_seconds;
  m.failures = run.failures;
  return m;
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : m.failures) failures.push_back({{"item", f.item}, {"message", f.message}});
  return {{"model", m.model_name},       {"model_hash", m.model_hash},
          {"dataset_hash", m.dataset_hash}, {"threshold", m.threshold},
          {"seed", m.seed},               {"num_items", m.num_items},
          {"parallelism", m.parallelism}, {"cache", m.cache},
          {"total_queries", m.total_queries}, {"model_calls", m.model_calls},
          {"wall_seconds", m.wall_seconds}, {"failures", std::move(failures)}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.model_name = j.at("model").get<std::string>();
    m.model_hash = j.at("model_hash").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    m.threshold = j.at("threshold").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.num_items = j.at("num_items").get<std::size_t>();
    m.parallelism = j.value("parallelism", std::size_t{1});
    m.cache = j.value("cache", true);
    m.total_queries = j.value("total_queries", std::uint64_t{0});
    m.model_calls = j.value("model_calls", std::uint64_t{0});
    m.wall_seconds = j.value("wall_seconds", 0.0);
    for (const auto& f : j.value("failures", nlohmann::json::array()))
      m.failures.push_back({f.at("item").get<ItemId>(), f.at("message").get<std::string>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
}

}  // namespace modeldx
