#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "modeldx/model.hpp"
#include "modeldx/sparse_data.hpp"

namespace modeldx {

/// The features whose removal changes an item's predicted label.
///
/// When `flipped` is true, removing `removed` from the item changes its label
/// and putting back any single feature of `removed` restores the original
/// label. When no removal sequence flips the label, `removed` is the item's
/// full active set and `flipped` is false.
struct Explanation {
  ItemId item = 0;
  FeatureSet removed;
  bool flipped = false;
  /// Score of the unmodified item.
  double score = 0.0;
  /// Score lookups issued by the search, cached or not. Independent of cache
  /// state and scheduling.
  std::uint64_t queries = 0;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

struct FeatureSetHash {
  std::size_t operator()(const FeatureSet& set) const noexcept;
};

/// Concurrent memo of model scores keyed by canonical active set. Entries are
/// idempotent, so racing inserts of the same key are harmless.
class ScoreCache {
 public:
  explicit ScoreCache(std::size_t shards = 64);

  std::optional<double> find(const FeatureSet& key) const;
  void insert(const FeatureSet& key, double score);
  std::size_t size() const;

 private:
  struct Shard {
    mutable std::shared_mutex mutex;
    std::unordered_map<FeatureSet, double, FeatureSetHash> entries;
  };
  Shard& shard_for(const FeatureSet& key) const;

  mutable std::vector<Shard> shards_;
};

struct ExplainConfig {
  std::uint64_t seed = 0;
  /// Score deltas at or below this count as "no change" when detecting a
  /// plateau.
  double plateau_epsilon = 1e-12;
  bool use_cache = true;
  std::size_t parallelism = 1;
};

/// Explains one item. `cache` may be null. `item_seed` drives the random
/// removals taken on plateaus.
Explanation explain_item(const ScoredModel& model, const Item& item, ScoreCache* cache, std::uint64_t item_seed,
                         double plateau_epsilon = 1e-12);

/// Seed used for `item` within a run; depends only on the run seed and the
/// item id.
std::uint64_t item_seed(std::uint64_t run_seed, ItemId item);

struct ExplainFailure {
  ItemId item = 0;
  std::string message;
};

struct ExplainRun {
  /// Dataset order; items that failed are absent.
  std::vector<Explanation> explanations;
  std::vector<ExplainFailure> failures;
  std::uint64_t total_queries = 0;
  /// Sets actually sent to the model (cache misses).
  std::uint64_t model_calls = 0;
  double wall_seconds = 0.0;
};

ExplainRun explain_all(const ScoredModel& model, const SparseDataset& dataset, const ExplainConfig& config);

/// Smallest set of features whose removal flips the item's label, by
/// exhaustive search in order of increasing size (lexicographic within a
/// size). Returns nullopt when no subset flips. Refuses items with more than
/// kBruteForceLimit active features.
inline constexpr std::size_t kBruteForceLimit = 20;
std::optional<FeatureSet> brute_force_min_explanation(const ScoredModel& model, const Item& item);

/// Line format: {"item":..,"removed":[..],"flipped":..,"score":..,"queries":..}
std::string explanation_line(const Explanation& e);
void write_explanations(std::ostream& out, std::span<const Explanation> explanations);
std::vector<Explanation> read_explanations(std::istream& in);

/// Run manifest tying an explanation file to the dataset and model that
/// produced it.
struct RunManifest {
  std::string model_name;
  std::string model_hash;
  std::string dataset_hash;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  std::size_t num_items = 0;
  std::size_t parallelism = 1;
  bool cache = true;
  std::uint64_t total_queries = 0;
  std::uint64_t model_calls = 0;
  double wall_seconds = 0.0;
  std::vector<ExplainFailure> failures;
};

RunManifest make_manifest(const ScoredModel& model, const SparseDataset& dataset, const ExplainConfig& config,
                          const ExplainRun& run);
nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

}  // namespace modeldx
