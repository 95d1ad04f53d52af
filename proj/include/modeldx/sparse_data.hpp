#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace modeldx {

using FeatureIndex = std::uint32_t;
using ItemId = std::int64_t;

/// Bag of active features: sorted ascending, no duplicates.
using FeatureSet = std::vector<FeatureIndex>;
using FeatureView = std::span<const FeatureIndex>;

struct Feature {
  FeatureIndex index = 0;
  std::string name;
};

struct Item {
  ItemId id = 0;
  FeatureSet active;
  bool label = false;
};

enum class Split : std::uint8_t { train, test };

enum class DataFormat { sparse_text, dense_csv };

/// Raised for malformed input. `line()` is 1-based, or 0 when the problem is
/// not tied to a single line.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

bool is_canonical(FeatureView set) noexcept;

/// Immutable after construction. Every item starts tagged `train` until
/// split_dataset assigns a partition.
class SparseDataset {
 public:
  SparseDataset() = default;
  /// Validates all invariants; throws DataError on violation.
  SparseDataset(std::vector<Feature> features, std::vector<Item> items);

  std::size_t num_features() const noexcept { return features_.size(); }
  std::size_t size() const noexcept { return items_.size(); }
  const std::vector<Feature>& features() const noexcept { return features_; }
  const std::vector<Item>& items() const noexcept { return items_; }
  const std::vector<Split>& splits() const noexcept { return splits_; }

  const Item* find(ItemId id) const;
  std::optional<FeatureIndex> feature_by_name(std::string_view name) const;
  const std::string& feature_name(FeatureIndex index) const { return features_.at(index).name; }

  /// Indices into items() that carry the given tag.
  std::vector<std::size_t> indices_of(Split split) const;
  /// Fraction of positive labels on a split; NaN when the split is empty.
  double positive_rate(Split split) const;
  double positive_rate() const;

  SparseDataset with_splits(std::vector<Split> splits) const;

 private:
  std::vector<Feature> features_;
  std::vector<Item> items_;
  std::vector<Split> splits_;
  std::unordered_map<ItemId, std::size_t> by_id_;
  std::unordered_map<std::string, FeatureIndex> by_name_;
};

SparseDataset parse_sparse_text(std::string_view text);
SparseDataset parse_dense_csv(std::string_view text);
SparseDataset load_dataset(const std::filesystem::path& path, DataFormat format);
DataFormat parse_format(std::string_view name);

/// Canonical sparse text form. parse_sparse_text(serialize(d)) reproduces d.
std::string serialize(const SparseDataset& dataset);

/// Stable content hash of the canonical form (split tags excluded).
std::string dataset_hash(const SparseDataset& dataset);

/// Unstratified random partition. The train side receives
/// round(train_fraction * size) items.
SparseDataset split_dataset(const SparseDataset& dataset, double train_fraction, std::uint64_t seed);

}  // namespace modeldx
