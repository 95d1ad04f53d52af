#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "modeldx/sparse_data.hpp"

namespace modeldx {

/// Sparse items with labels drawn from a known logistic model. Feature
/// popularity is Zipf-like so explanation sets recur. Optional planted
/// features occupy the last indices.
struct SyntheticConfig {
  std::size_t items = 5000;
  std::size_t features = 400;
  double mean_active = 10.0;
  double weight_scale = 1.0;
  double bias = -1.5;
  std::uint64_t seed = 1;
  /// Present in this fraction of items, independent of everything else.
  double frequent_noise_rate = 0.0;
  /// Present in this fraction of items with weight `strong_weight`.
  double strong_rate = 0.0;
  double strong_weight = 5.0;
};

struct SyntheticData {
  SparseDataset dataset;
  /// Generating weights; zero for the frequent-noise feature.
  std::vector<double> weights;
  double bias = 0.0;
  std::optional<FeatureIndex> frequent_noise;
  std::optional<FeatureIndex> strong;
};

SyntheticData make_planted_logistic(const SyntheticConfig& config);

/// Random sparse items with exactly round(positive_rate * items) positive
/// labels, placed at random.
SparseDataset make_fixed_rate(std::size_t items, std::size_t features, double mean_active, double positive_rate,
                              std::uint64_t seed);

}  // namespace modeldx
