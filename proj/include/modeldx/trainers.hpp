#pragma once

#include <cstdint>
#include <span>

#include "modeldx/model.hpp"
#include "modeldx/sparse_data.hpp"

namespace modeldx {

struct LogisticConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
};

/// Plain SGD on log loss. Rows are visited in item-id order shuffled by
/// `seed`, so the result does not depend on the order rows are passed in.
/// The returned model's threshold is calibrated on the same rows.
ScoredModel train_logistic(const SparseDataset& dataset, std::span<const std::size_t> rows,
                           const LogisticConfig& config);
ScoredModel train_logistic(const SparseDataset& dataset, const LogisticConfig& config);

/// Bernoulli naive Bayes with Laplace-style `smoothing` (> 0). Throws
/// ModelError when either class is absent from the rows.
ScoredModel train_naive_bayes(const SparseDataset& dataset, std::span<const std::size_t> rows, double smoothing);
ScoredModel train_naive_bayes(const SparseDataset& dataset, double smoothing);

}  // namespace modeldx
